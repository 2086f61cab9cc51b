#include "hsfuse/network.hpp"

#include <cstring>
#include <utility>

#include "json.hpp"

#include "hsfuse/format.hpp"

namespace hsfuse {

void NetworkConfig::validate() const {
  check(k >= 1, "config: abundance channel count must be positive");
  check(hs_bands >= 1 && ms_bands >= 1, "config: band counts must be positive");
  check(ratio >= 1, "config: ratio must be positive");
  check(height >= 1 && width >= 1, "config: spatial extents must be positive");
  check(!hidden.empty(), "config: need at least one encoder block");
  for (int c : hidden) check(c >= 1, "config: encoder widths must be positive");
  check(msi_kernels.size() == hidden.size() + 1,
        "config: one MSI kernel size per conv, final projection included");
  int prev = msi_kernels.front();
  for (int ks : msi_kernels) {
    check(ks >= 1 && ks % 2 == 1,
          "config: kernel sizes must be odd for same-padding");
    check(ks <= prev, "config: MSI kernel sizes must be non-increasing");
    prev = ks;
  }
  check(attention_p >= 1 && attention_p % 2 == 1,
        "config: attention filter size must be odd");
  check(leaky_slope >= 0.0 && leaky_slope < 1.0,
        "config: leaky slope must lie in [0, 1)");
}

template <typename T>
typename Network<T>::Id Network<T>::add_param(const std::string& name, Shape s,
                                              bool nonneg, int fan_in) {
  const Id id = tape_.leaf(s, true);
  params_.push_back(ParamEntry<T>{name, id, nonneg, fan_in});
  return id;
}

template <typename T>
typename Network<T>::Id Network<T>::encoder_features(
    Id input, const std::string& prefix, const std::vector<int>& kernels) {
  Id cur = input;
  for (std::size_t i = 0; i < cfg_.hidden.size(); ++i) {
    const std::string stage = prefix + "." + std::to_string(i);
    const int kk = kernels[i];
    cur = tape_.conv2d(cur, param_id(stage + ".w"), cfg_.hidden[i], kk, 1,
                       (kk - 1) / 2);
    cur = tape_.add_bias(cur, param_id(stage + ".b"));
    cur = tape_.leaky_relu(cur, static_cast<T>(cfg_.leaky_slope));
  }
  return cur;
}

template <typename T>
typename Network<T>::Id Network<T>::encoder_head(Id feats,
                                                 const std::string& prefix,
                                                 int kernel) {
  Id cur = tape_.conv2d(feats, param_id(prefix + ".proj.w"), cfg_.k, kernel, 1,
                        (kernel - 1) / 2);
  cur = tape_.add_bias(cur, param_id(prefix + ".proj.b"));
  return cfg_.use_clamp ? tape_.clamp01(cur) : tape_.softmax_channels(cur);
}

template <typename T>
Network<T>::Network(const NetworkConfig& cfg, bool inject_abundances)
    : cfg_(cfg), injected_(inject_abundances) {
  cfg_.validate();
  const int L = cfg_.hs_bands, l = cfg_.ms_bands, K = cfg_.k;
  const int h = cfg_.height, w = cfg_.width;
  const int H = cfg_.msi_height(), W = cfg_.msi_width();
  const int C = cfg_.hidden.back();
  const int proj_in = cfg_.use_ca ? 2 * C : C;
  const int p = cfg_.attention_p;

  // All parameters are declared up front; the declaration order fixes both
  // the optimizer state layout and the checkpoint payload order.
  if (!injected_) {
    int in_c = L;
    for (std::size_t i = 0; i < cfg_.hidden.size(); ++i) {
      const std::string stage = "f_en." + std::to_string(i);
      add_param(stage + ".w", Shape{cfg_.hidden[i] * in_c, 1, 1}, false, in_c);
      add_param(stage + ".b", Shape{cfg_.hidden[i], 1, 1}, false, 0);
      in_c = cfg_.hidden[i];
    }
    add_param("f_en.proj.w", Shape{K * proj_in, 1, 1}, false, proj_in);
    add_param("f_en.proj.b", Shape{K, 1, 1}, false, 0);

    in_c = l;
    for (std::size_t i = 0; i < cfg_.hidden.size(); ++i) {
      const std::string stage = "g_en." + std::to_string(i);
      const int kk = cfg_.msi_kernels[i];
      add_param(stage + ".w", Shape{cfg_.hidden[i] * in_c, kk, kk}, false,
                in_c * kk * kk);
      add_param(stage + ".b", Shape{cfg_.hidden[i], 1, 1}, false, 0);
      in_c = cfg_.hidden[i];
    }
    const int kp = cfg_.msi_kernels.back();
    add_param("g_en.proj.w", Shape{K * proj_in, kp, kp}, false,
              proj_in * kp * kp);
    add_param("g_en.proj.b", Shape{K, 1, 1}, false, 0);

    if (cfg_.use_ca) {
      add_param("attn.u", Shape{C, h, w}, false, h * w);
      add_param("attn.v", Shape{C, p, p}, false, C * p * p);
    }
  }

  f_de_w_ = add_param("f_de.w", Shape{L * K, 1, 1}, true, 0);
  g_de_w_ = add_param("g_de.w", Shape{l * K, 1, 1}, true, 0);
  if (cfg_.use_ssc) {
    srf_w_ = add_param("srf.w", Shape{l, 1, L}, true, 0);
    psf_w_ = add_param("psf.w", Shape{1, cfg_.ratio, cfg_.ratio}, true, 0);
    // uniform positive start keeps the unit-sum normalizations well defined
    // even before any proper initialization
    for (auto& v : tape_.val(srf_w_).data) v = T(1);
    for (auto& v : tape_.val(psf_w_).data) v = T(1);
  }

  x_ = tape_.leaf(Shape{L, h, w}, false);
  y_ = tape_.leaf(Shape{l, H, W}, false);

  if (injected_) {
    s_hs_ = tape_.leaf(Shape{K, h, w}, true);
    s_ms_ = tape_.leaf(Shape{K, H, W}, true);
  } else {
    std::vector<int> hsi_kernels(cfg_.hidden.size(), 1);
    Id f_feats = encoder_features(x_, "f_en", hsi_kernels);
    Id g_feats = encoder_features(y_, "g_en", cfg_.msi_kernels);
    Id f_in = f_feats, g_in = g_feats;
    if (cfg_.use_ca) {
      // channel statistics come from the spectrally reliable branch, spatial
      // statistics from the spatially reliable one; each branch is modulated
      // by the other's map
      Id chan = tape_.softmax_channels(
          tape_.global_filter(f_feats, param_id("attn.u")));
      Id smap = tape_.conv2d(g_feats, param_id("attn.v"), 1, p, 1, (p - 1) / 2);
      Id spat = tape_.softmax_spatial(smap);
      // the spatial map lives at MSI resolution; block-average it and scale
      // by r^2 so it stays a distribution over the coarse grid
      Id pooled = tape_.scale(tape_.avg_pool(spat, cfg_.ratio),
                              static_cast<T>(cfg_.ratio * cfg_.ratio));
      f_in = tape_.concat_channels(f_feats, tape_.mul(f_feats, pooled));
      g_in = tape_.concat_channels(g_feats, tape_.mul(g_feats, chan));
    }
    s_hs_ = encoder_head(f_in, "f_en", 1);
    s_ms_ = encoder_head(g_in, "g_en", cfg_.msi_kernels.back());
  }

  recon_hs_ = tape_.conv2d(s_hs_, f_de_w_, L, 1, 1, 0);
  recon_ms_ = tape_.conv2d(s_ms_, g_de_w_, l, 1, 1, 0);
  fused_ = tape_.conv2d(s_ms_, f_de_w_, L, 1, 1, 0);
  if (cfg_.use_ssc) {
    x_hat_ = tape_.psf_apply(fused_, psf_w_, cfg_.ratio);
    y_hat_ = tape_.srf_apply(fused_, srf_w_);
    u_hs_ = tape_.srf_apply(x_, srf_w_);
    u_ms_ = tape_.psf_apply(y_, psf_w_, cfg_.ratio);
  }
}

template <typename T>
typename Network<T>::Id Network<T>::param_id(const std::string& name) const {
  for (const auto& e : params_)
    if (e.name == name) return e.id;
  check(false, "network: no parameter named " + name);
  return -1;
}

template <typename T>
Tensor<T>& Network<T>::param(const std::string& name) {
  return tape_.val(param_id(name));
}

template <typename T>
const Tensor<T>& Network<T>::param(const std::string& name) const {
  return tape_.val(param_id(name));
}

template <typename T>
std::vector<ParamRef<T>> Network<T>::param_refs() {
  std::vector<ParamRef<T>> refs;
  refs.reserve(params_.size());
  for (const auto& e : params_)
    refs.push_back(ParamRef<T>{&tape_.val(e.id), &tape_.grad(e.id), e.nonneg});
  return refs;
}

template <typename T>
void Network<T>::set_inputs(const Tensor<T>& x, const Tensor<T>& y) {
  check(x.shape == tape_.shape(x_),
        "network: X shape " + x.shape.str() + " does not match config " +
            tape_.shape(x_).str());
  check(y.shape == tape_.shape(y_),
        "network: Y shape " + y.shape.str() + " does not match config " +
            tape_.shape(y_).str());
  tape_.val(x_) = x;
  tape_.val(y_) = y;
}

template <typename T>
void Network<T>::set_abundances(const Tensor<T>& s_hs, const Tensor<T>& s_ms) {
  check(injected_, "network: abundances can only be set in inject mode");
  check(s_hs.shape == tape_.shape(s_hs_) && s_ms.shape == tape_.shape(s_ms_),
        "network: abundance shape mismatch");
  tape_.val(s_hs_) = s_hs;
  tape_.val(s_ms_) = s_ms;
}

// Decoder kernels are (out_bands*k, 1, 1) with the input channel minor, so
// entry (band b, endmember j) sits at plane b*k + j. The endmember view is
// rows-as-spectra: a k x bands matrix.
template <typename T>
void Network<T>::set_hsi_endmembers(const Mat<T>& a) {
  check(a.rows == cfg_.k && a.cols == cfg_.hs_bands,
        "network: HSI endmember matrix must be k x hs_bands");
  Tensor<T>& w = tape_.val(f_de_w_);
  for (int b = 0; b < cfg_.hs_bands; ++b)
    for (int j = 0; j < cfg_.k; ++j) w.data[b * cfg_.k + j] = a(j, b);
}

template <typename T>
Mat<T> Network<T>::hsi_endmembers() const {
  Mat<T> a(cfg_.k, cfg_.hs_bands);
  const Tensor<T>& w = tape_.val(f_de_w_);
  for (int b = 0; b < cfg_.hs_bands; ++b)
    for (int j = 0; j < cfg_.k; ++j) a(j, b) = w.data[b * cfg_.k + j];
  return a;
}

template <typename T>
void Network<T>::set_msi_endmembers(const Mat<T>& a) {
  check(a.rows == cfg_.k && a.cols == cfg_.ms_bands,
        "network: MSI endmember matrix must be k x ms_bands");
  Tensor<T>& w = tape_.val(g_de_w_);
  for (int b = 0; b < cfg_.ms_bands; ++b)
    for (int j = 0; j < cfg_.k; ++j) w.data[b * cfg_.k + j] = a(j, b);
}

template <typename T>
Mat<T> Network<T>::msi_endmembers() const {
  Mat<T> a(cfg_.k, cfg_.ms_bands);
  const Tensor<T>& w = tape_.val(g_de_w_);
  for (int b = 0; b < cfg_.ms_bands; ++b)
    for (int j = 0; j < cfg_.k; ++j) a(j, b) = w.data[b * cfg_.k + j];
  return a;
}

template <typename T>
void Network<T>::set_srf(const Mat<T>& srf) {
  check(cfg_.use_ssc, "network: degradation layers are disabled");
  check(srf.rows == cfg_.hs_bands && srf.cols == cfg_.ms_bands,
        "network: SRF must be hs_bands x ms_bands");
  Tensor<T>& w = tape_.val(srf_w_);
  for (int j = 0; j < cfg_.ms_bands; ++j)
    for (int mu = 0; mu < cfg_.hs_bands; ++mu)
      w.at(j, 0, mu) = srf(mu, j);
}

template <typename T>
Mat<T> Network<T>::srf_raw() const {
  check(cfg_.use_ssc, "network: degradation layers are disabled");
  Mat<T> srf(cfg_.hs_bands, cfg_.ms_bands);
  const Tensor<T>& w = tape_.val(srf_w_);
  for (int j = 0; j < cfg_.ms_bands; ++j)
    for (int mu = 0; mu < cfg_.hs_bands; ++mu)
      srf(mu, j) = w.at(j, 0, mu);
  return srf;
}

template <typename T>
Mat<T> Network<T>::srf_normalized() const {
  Mat<T> srf = srf_raw();
  for (int j = 0; j < srf.cols; ++j) {
    double s = 0.0;
    for (int mu = 0; mu < srf.rows; ++mu) s += srf(mu, j);
    check(s > 1e-12, "network: response column " + std::to_string(j) +
                         " sums to (near) zero");
    for (int mu = 0; mu < srf.rows; ++mu)
      srf(mu, j) = static_cast<T>(srf(mu, j) / s);
  }
  return srf;
}

template <typename T>
void Network<T>::set_psf(const Tensor<T>& kernel) {
  check(cfg_.use_ssc, "network: degradation layers are disabled");
  check(kernel.shape == Shape{1, cfg_.ratio, cfg_.ratio},
        "network: PSF kernel must be (1, ratio, ratio)");
  tape_.val(psf_w_) = kernel;
}

template <typename T>
Tensor<T> Network<T>::psf_raw() const {
  check(cfg_.use_ssc, "network: degradation layers are disabled");
  return tape_.val(psf_w_);
}

template <typename T>
Tensor<T> Network<T>::psf_normalized() const {
  Tensor<T> k = psf_raw();
  double s = 0.0;
  for (T v : k.data) s += v;
  check(s > 1e-12, "network: blur kernel sums to (near) zero");
  for (auto& v : k.data) v = static_cast<T>(v / s);
  return k;
}

template class Network<float>;
template class Network<double>;

namespace {

nlohmann::ordered_json config_to_json(const NetworkConfig& c) {
  nlohmann::ordered_json j;
  j["k"] = c.k;
  j["hs_bands"] = c.hs_bands;
  j["ms_bands"] = c.ms_bands;
  j["ratio"] = c.ratio;
  j["height"] = c.height;
  j["width"] = c.width;
  j["hidden"] = c.hidden;
  j["msi_kernels"] = c.msi_kernels;
  j["leaky_slope"] = c.leaky_slope;
  j["attention_p"] = c.attention_p;
  j["use_clamp"] = c.use_clamp;
  j["use_ssc"] = c.use_ssc;
  j["use_ca"] = c.use_ca;
  return j;
}

NetworkConfig config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.k = j.at("k").get<int>();
  c.hs_bands = j.at("hs_bands").get<int>();
  c.ms_bands = j.at("ms_bands").get<int>();
  c.ratio = j.at("ratio").get<int>();
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.msi_kernels = j.at("msi_kernels").get<std::vector<int>>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.attention_p = j.at("attention_p").get<int>();
  c.use_clamp = j.at("use_clamp").get<bool>();
  c.use_ssc = j.at("use_ssc").get<bool>();
  c.use_ca = j.at("use_ca").get<bool>();
  c.validate();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Network<float>& net,
                     const Adam<float>* opt) {
  nlohmann::ordered_json header;
  header["format"] = "coupled-unmixing-weights";
  header["config"] = config_to_json(net.config());
  header["step"] = opt ? opt->steps() : 0;
  nlohmann::ordered_json plist = nlohmann::ordered_json::array();
  std::size_t total = 0;
  for (const auto& e : net.params()) {
    const Shape s = net.tape().shape(e.id);
    plist.push_back({{"name", e.name},
                     {"shape", {s.c, s.h, s.w}},
                     {"nonneg", e.nonneg}});
    total += s.numel();
  }
  header["params"] = plist;
  header["adam"] = opt != nullptr;
  if (opt) {
    check(opt->m().size() == net.params().size(),
          "checkpoint: optimizer state does not cover the parameter list");
    total *= 3;  // weights + first and second moments
  }

  std::vector<float> payload;
  payload.reserve(total);
  for (const auto& e : net.params()) {
    const auto& d = net.tape().val(e.id).data;
    payload.insert(payload.end(), d.begin(), d.end());
  }
  if (opt) {
    for (const auto& m : opt->m()) payload.insert(payload.end(), m.begin(), m.end());
    for (const auto& v : opt->v()) payload.insert(payload.end(), v.begin(), v.end());
  }
  io::write_framed(path, io::kCheckpointMagic, header, payload.data(),
                   payload.size() * sizeof(float));
}

NetworkConfig checkpoint_config(const std::string& path) {
  const io::Framed f = io::read_framed(path, io::kCheckpointMagic);
  return config_from_json(f.header.at("config"));
}

std::uint64_t load_checkpoint(const std::string& path, Network<float>& net,
                              Adam<float>* opt) {
  const io::Framed f = io::read_framed(path, io::kCheckpointMagic);
  const NetworkConfig stored = config_from_json(f.header.at("config"));
  check(stored == net.config(),
        "checkpoint: stored architecture does not match this network");

  const auto& plist = f.header.at("params");
  check(plist.size() == net.params().size(),
        "checkpoint: parameter count mismatch");
  std::size_t n_weights = 0;
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const auto& e = net.params()[i];
    const auto& pj = plist.at(i);
    check(pj.at("name").get<std::string>() == e.name,
          "checkpoint: parameter order mismatch at " + e.name);
    const Shape s = net.tape().shape(e.id);
    const auto sj = pj.at("shape").get<std::vector<int>>();
    check(sj.size() == 3 && sj[0] == s.c && sj[1] == s.h && sj[2] == s.w,
          "checkpoint: shape mismatch for " + e.name);
    n_weights += s.numel();
  }

  const bool has_adam = f.header.at("adam").get<bool>();
  check(!opt || has_adam,
        "checkpoint: file carries no optimizer state to resume from");
  const std::size_t expect =
      n_weights * (has_adam ? 3 : 1) * sizeof(float);
  check(f.payload.size() == expect, "checkpoint: payload size mismatch");

  const float* src = reinterpret_cast<const float*>(f.payload.data());
  for (const auto& e : net.params()) {
    auto& d = net.tape().val(e.id).data;
    std::memcpy(d.data(), src, d.size() * sizeof(float));
    src += d.size();
  }
  if (opt) {
    check(opt->m().size() == net.params().size(),
          "checkpoint: optimizer must be initialized before loading");
    for (auto& m : opt->m()) {
      std::memcpy(m.data(), src, m.size() * sizeof(float));
      src += m.size();
    }
    for (auto& v : opt->v()) {
      std::memcpy(v.data(), src, v.size() * sizeof(float));
      src += v.size();
    }
    opt->set_steps(f.header.at("step").get<std::uint64_t>());
  }
  return f.header.at("step").get<std::uint64_t>();
}

}  // namespace hsfuse
