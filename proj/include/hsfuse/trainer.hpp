#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hsfuse/losses.hpp"
#include "hsfuse/metrics.hpp"
#include "hsfuse/network.hpp"
#include "hsfuse/tensor.hpp"

namespace hsfuse {

// Everything a reproducible run depends on. Two runs with equal configs and
// equal inputs produce bit-identical weights, logs and fused cubes.
struct TrainConfig {
  NetworkConfig net;
  LossWeights loss;
  int max_epochs = 10000;
  double lr0 = 0.005;
  // piecewise-constant decay: full rate before decay_start, then one linear
  // step down every decay_step epochs until decay_floor*lr0 at decay_end
  int decay_start = 2000;
  int decay_end = 10000;
  int decay_step = 1000;
  double decay_floor = 0.1;
  int patience = 500;       // early-stop window on the validation loss
  double min_delta = 1e-5;  // improvement below this does not reset patience
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  void validate() const;
};

struct LogRow {
  int epoch = 0;
  double l_r = 0.0, l_asc = 0.0, l_s = 0.0, l_c = 0.0;
  double total = 0.0;
  double lr = 0.0;
  double val = 0.0;  // tracked for early stopping; not part of the CSV
};

// Side channels of a run. state_dir enables crash-safe resumption: the
// latest parameters+optimizer state, the best-so-far snapshot and the log
// history are persisted there every checkpoint_every epochs.
struct TrainIO {
  std::string state_dir;
  int checkpoint_every = 500;
  bool resume = false;
  std::ostream* progress = nullptr;  // human-readable lines, never data
  int progress_every = 500;
};

struct TrainResult {
  Network<float> net;    // carries the best-validation weights
  Tensor<float> fused;   // forward of those weights
  std::vector<LogRow> log;
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val = 0.0;
  double seconds = 0.0;
  bool early_stopped = false;
};

// Convolution kernels get Kaiming fan-in draws adjusted for the leaky slope,
// biases start at zero, and the nonnegative parameter groups (decoders,
// response rows, blur kernel) start uniform positive. Each parameter draws
// from its own named substream, so the result is independent of enumeration
// order elsewhere.
template <typename T>
void init_weights(Network<T>& net, std::uint64_t seed);

double lr_at(int epoch, const TrainConfig& cfg);

// 0/1 mask with round(fraction*h*w) ones placed by a seeded shuffle.
template <typename T>
Tensor<T> make_pixel_mask(int h, int w, double fraction, std::uint64_t seed);

TrainResult train(const Tensor<float>& x, const Tensor<float>& y,
                  const TrainConfig& cfg, const TrainIO& io = {});

// epoch,L_R,L_ASC,L_S,L_C,total,lr — one row per epoch run
void write_log_csv(const std::string& path, const std::vector<LogRow>& log);

struct GridRow {
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
  double best_val = 0.0;
  int epochs_run = 0;
};

struct GridResult {
  std::vector<GridRow> rows;  // in grid enumeration order
  LossWeights best;           // lowest validation loss, first on ties
};

GridResult grid_search(const Tensor<float>& x, const Tensor<float>& y,
                       const TrainConfig& base,
                       const std::vector<double>& alphas = {0.01, 0.1, 1.0},
                       const std::vector<double>& betas = {1e-5, 1e-4, 1e-3},
                       const std::vector<double>& gammas = {0.1, 1.0, 10.0},
                       std::ostream* progress = nullptr);

void write_grid_csv(const std::string& path, const GridResult& grid);

// One trained arm (or the classical baseline) scored against ground truth.
struct AblationRow {
  std::string name;
  bool use_clamp = true, use_ssc = true, use_ca = true;
  bool is_baseline = false;  // classical joint-unmixing row
  metrics::Report report;
  int epochs_run = 0;
};

// Arms: none, ssc, ca, full, noclamp, plus the classical coupled-unmixing
// baseline run with the true operators.
std::vector<AblationRow> run_ablation(const Tensor<float>& x,
                                      const Tensor<float>& y,
                                      const Tensor<float>& z_gt,
                                      const Mat<float>& srf,
                                      const Tensor<float>& psf,
                                      const TrainConfig& base,
                                      std::ostream* progress = nullptr);

void write_ablation_csv(const std::string& path,
                        const std::vector<AblationRow>& rows);

}  // namespace hsfuse
