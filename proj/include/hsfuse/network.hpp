#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hsfuse/adam.hpp"
#include "hsfuse/tape.hpp"
#include "hsfuse/tensor.hpp"

namespace hsfuse {

// Architecture of the coupled unmixing network. One instance describes both
// encoder branches, the shared-abundance decoders, the cross-attention block
// and the learnable degradation layers; it is serialized verbatim into weight
// checkpoints so a saved model can be rebuilt without the original config.
struct NetworkConfig {
  int k = 4;         // abundance channels
  int hs_bands = 31;  // spectral bands of X (L)
  int ms_bands = 3;   // spectral bands of Y (l)
  int ratio = 8;      // spatial super-resolution factor r
  int height = 8;     // rows of X; Y has ratio*height rows
  int width = 8;      // cols of X; Y has ratio*width cols
  // Conv+LReLU block widths; the final projection to k channels is appended
  // implicitly, so the stage widths are hidden + [k].
  std::vector<int> hidden = {64, 32};
  // one kernel size per MSI-branch conv, final projection included; the
  // HSI branch uses 1x1 kernels throughout (its spatial detail is unreliable)
  std::vector<int> msi_kernels = {7, 5, 3};
  double leaky_slope = 0.01;
  int attention_p = 3;   // local filter size of the spatial statistic
  bool use_clamp = true;  // clamp01 abundance activation; else channel softmax
  bool use_ssc = true;    // learnable degradation layers + consistency outputs
  bool use_ca = true;     // cross-attention between the encoder branches

  int msi_height() const { return ratio * height; }
  int msi_width() const { return ratio * width; }
  void validate() const;  // throws on inconsistent settings

  bool operator==(const NetworkConfig&) const = default;
};

template <typename T>
struct ParamEntry {
  std::string name;
  typename Tape<T>::Id id = -1;
  bool nonneg = false;  // projected onto [0,inf) after every optimizer step
  // incoming connections per output unit; 0 for biases (initialized to zero)
  // and for the nonnegative weights (initialized uniform positive)
  int fan_in = 0;
};

// The full forward graph: two encoders (optionally exchanging attention
// statistics), two linear decoders whose 1x1 kernels hold the endmember
// matrices, and the degradation layers that close the loop between the
// fused product and the observations. The graph is built once; training
// re-runs forward/backward with updated leaf values.
//
// With inject_abundances=true the encoders are replaced by plain leaves so
// tests can drive the decoder/degradation half with known abundances.
template <typename T>
class Network {
 public:
  using Id = typename Tape<T>::Id;

  explicit Network(const NetworkConfig& cfg, bool inject_abundances = false);

  void forward() { tape_.forward(); }

  void set_inputs(const Tensor<T>& x, const Tensor<T>& y);
  // inject mode only: assigns the abundance leaves directly
  void set_abundances(const Tensor<T>& s_hs, const Tensor<T>& s_ms);

  // named parameter access (names as listed in params())
  Tensor<T>& param(const std::string& name);
  const Tensor<T>& param(const std::string& name) const;
  const std::vector<ParamEntry<T>>& params() const { return params_; }
  std::vector<ParamRef<T>> param_refs();  // update handles for the optimizer

  // endmember views of the decoder kernels: rows are endmembers, so the HSI
  // decoder holds a k x L matrix and the MSI decoder k x ms_bands
  void set_hsi_endmembers(const Mat<T>& a);
  Mat<T> hsi_endmembers() const;
  void set_msi_endmembers(const Mat<T>& a);
  Mat<T> msi_endmembers() const;

  // degradation layers (only when use_ssc): raw weights are stored
  // unnormalized; the forward pass renormalizes rows/kernel to unit sum
  void set_srf(const Mat<T>& srf);  // hs_bands x ms_bands
  Mat<T> srf_raw() const;
  Mat<T> srf_normalized() const;  // unit-sum columns, as used in the forward
  void set_psf(const Tensor<T>& kernel);  // (1, ratio, ratio)
  Tensor<T> psf_raw() const;
  Tensor<T> psf_normalized() const;

  Tape<T>& tape() { return tape_; }
  const Tape<T>& tape() const { return tape_; }

  Id x() const { return x_; }
  Id y() const { return y_; }
  Id abund_hsi() const { return s_hs_; }  // (k, height, width)
  Id abund_msi() const { return s_ms_; }  // (k, H, W)
  Id recon_hsi() const { return recon_hs_; }  // f(X)
  Id recon_msi() const { return recon_ms_; }  // g(Y)
  Id fused() const { return fused_; }         // HSI decoder on MSI abundances
  // consistency set; -1 when use_ssc is off
  Id x_hat() const { return x_hat_; }  // blur+decimate of the fused cube
  Id y_hat() const { return y_hat_; }  // band-integration of the fused cube
  Id u_hs() const { return u_hs_; }    // band-integration of X
  Id u_ms() const { return u_ms_; }    // blur+decimate of Y

  const NetworkConfig& config() const { return cfg_; }
  bool injected() const { return injected_; }

 private:
  Id add_param(const std::string& name, Shape s, bool nonneg, int fan_in);
  Id param_id(const std::string& name) const;
  // one encoder branch up to the penultimate features (before attention)
  Id encoder_features(Id input, const std::string& prefix,
                      const std::vector<int>& kernels);
  Id encoder_head(Id feats, const std::string& prefix, int kernel);

  NetworkConfig cfg_;
  bool injected_ = false;
  Tape<T> tape_;
  std::vector<ParamEntry<T>> params_;

  Id x_ = -1, y_ = -1;
  Id s_hs_ = -1, s_ms_ = -1;
  Id recon_hs_ = -1, recon_ms_ = -1, fused_ = -1;
  Id x_hat_ = -1, y_hat_ = -1, u_hs_ = -1, u_ms_ = -1;
  Id f_de_w_ = -1, g_de_w_ = -1, srf_w_ = -1, psf_w_ = -1;
};

extern template class Network<float>;
extern template class Network<double>;

// Checkpoints: framed file with the config, the step counter and the named
// parameter shapes in the JSON header, followed by the raw float32 payloads
// in declared parameter order (optimizer moments appended when present, all
// first moments then all second moments). Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const Network<float>& net,
                     const Adam<float>* opt = nullptr);
// Reads only the header; used to rebuild the Network before loading.
NetworkConfig checkpoint_config(const std::string& path);
// step counter of the checkpoint is returned; if opt is non-null the file
// must contain optimizer moments
std::uint64_t load_checkpoint(const std::string& path, Network<float>& net,
                              Adam<float>* opt = nullptr);

}  // namespace hsfuse
