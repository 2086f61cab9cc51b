#include "hsfuse/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <utility>

#include "json.hpp"

#include "hsfuse/cnmf.hpp"
#include "hsfuse/format.hpp"
#include "hsfuse/rng.hpp"

namespace hsfuse {

void TrainConfig::validate() const {
  net.validate();
  loss.validate();
  check(max_epochs >= 1, "trainer: max_epochs must be positive");
  check(lr0 > 0.0, "trainer: learning rate must be positive");
  check(decay_start >= 0 && decay_end > decay_start && decay_step >= 1,
        "trainer: decay window is inconsistent");
  check(max_epochs > decay_start,
        "trainer: epoch budget ends before the decay starts");
  check(decay_floor > 0.0 && decay_floor <= 1.0,
        "trainer: decay floor must lie in (0, 1]");
  check(patience >= 1 && patience < max_epochs,
        "trainer: patience must lie in [1, max_epochs)");
  check(min_delta >= 0.0, "trainer: min_delta must be nonnegative");
  check(val_fraction > 0.0 && val_fraction < 1.0,
        "trainer: validation fraction must lie in (0, 1)");
}

template <typename T>
void init_weights(Network<T>& net, std::uint64_t seed) {
  const double slope = net.config().leaky_slope;
  for (const auto& e : net.params()) {
    Rng rng(Rng::derive(seed, e.name));
    Tensor<T>& w = net.tape().val(e.id);
    if (e.nonneg) {
      for (auto& v : w.data) v = static_cast<T>(rng.uniform());
    } else if (e.fan_in > 0) {
      const double std =
          std::sqrt(2.0 / ((1.0 + slope * slope) * e.fan_in));
      for (auto& v : w.data) v = static_cast<T>(std * rng.normal());
    } else {
      for (auto& v : w.data) v = T(0);
    }
  }
}

template void init_weights(Network<float>&, std::uint64_t);
template void init_weights(Network<double>&, std::uint64_t);

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < cfg.decay_start) return cfg.lr0;
  const int steps_taken = (epoch - cfg.decay_start) / cfg.decay_step;
  const double span = static_cast<double>(cfg.decay_end - cfg.decay_start);
  const double frac =
      std::min(1.0, static_cast<double>(steps_taken) * cfg.decay_step / span);
  return cfg.lr0 * (1.0 - (1.0 - cfg.decay_floor) * frac);
}

template <typename T>
Tensor<T> make_pixel_mask(int h, int w, double fraction, std::uint64_t seed) {
  check(h >= 1 && w >= 1, "mask: empty plane");
  check(fraction > 0.0 && fraction < 1.0, "mask: fraction must lie in (0,1)");
  const int n = h * w;
  int count = static_cast<int>(std::lround(fraction * n));
  count = std::max(1, std::min(n - 1, count));
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  Tensor<T> mask(Shape{1, h, w});
  for (int i = 0; i < count; ++i) {
    const int j = i + rng.uniform_int(n - i);
    std::swap(idx[i], idx[j]);
    mask.data[idx[i]] = T(1);
  }
  return mask;
}

template Tensor<float> make_pixel_mask(int, int, double, std::uint64_t);
template Tensor<double> make_pixel_mask(int, int, double, std::uint64_t);

namespace {

template <typename T>
Tensor<T> complement(const Tensor<T>& mask) {
  Tensor<T> out(mask.shape);
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    out.data[i] = T(1) - mask.data[i];
  return out;
}

std::vector<std::vector<float>> snapshot_params(const Network<float>& net) {
  std::vector<std::vector<float>> snap;
  snap.reserve(net.params().size());
  for (const auto& e : net.params())
    snap.push_back(net.tape().val(e.id).data);
  return snap;
}

void restore_params(Network<float>& net,
                    const std::vector<std::vector<float>>& snap) {
  check(snap.size() == net.params().size(),
        "trainer: parameter snapshot does not match the network");
  for (std::size_t i = 0; i < snap.size(); ++i)
    net.tape().val(net.params()[i].id).data = snap[i];
}

struct StatePaths {
  std::string latest, best, progress;
  explicit StatePaths(const std::string& dir)
      : latest(dir + "/state.ckpt"),
        best(dir + "/best.ckpt"),
        progress(dir + "/progress.json") {}
};

// Persists the rolling run state: latest weights+moments, the best-so-far
// snapshot, and the scalar history needed to rebuild the log on resume.
void write_state(const StatePaths& paths, Network<float>& net,
                 const Adam<float>& opt,
                 const std::vector<std::vector<float>>& best_snap,
                 int next_epoch, int best_epoch, double best_val,
                 const std::vector<LogRow>& log) {
  save_checkpoint(paths.latest, net, &opt);
  const auto current = snapshot_params(net);
  restore_params(net, best_snap);
  save_checkpoint(paths.best, net);
  restore_params(net, current);

  nlohmann::ordered_json j;
  j["epoch"] = next_epoch;
  j["best_epoch"] = best_epoch;
  j["best_val"] = best_val;
  auto rows = nlohmann::ordered_json::array();
  for (const LogRow& r : log)
    rows.push_back({r.epoch, r.l_r, r.l_asc, r.l_s, r.l_c, r.total, r.lr,
                    r.val});
  j["log"] = rows;
  io::write_text_file(paths.progress, j.dump());
}

std::string format_row(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace

TrainResult train(const Tensor<float>& x, const Tensor<float>& y,
                  const TrainConfig& cfg, const TrainIO& io) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult res{Network<float>(cfg.net)};
  init_weights(res.net, cfg.seed);
  res.net.set_inputs(x, y);

  const auto val_hs = make_pixel_mask<float>(
      cfg.net.height, cfg.net.width, cfg.val_fraction,
      Rng::derive(cfg.seed, "val-mask-hs"));
  const auto val_ms = make_pixel_mask<float>(
      cfg.net.msi_height(), cfg.net.msi_width(), cfg.val_fraction,
      Rng::derive(cfg.seed, "val-mask-ms"));
  const auto fit_hs = complement(val_hs);
  const auto fit_ms = complement(val_ms);

  // the fitting head comes first so backward() from its root never touches
  // the validation head's nodes
  const auto fit_head = attach_losses(res.net, cfg.loss, &fit_hs, &fit_ms);
  const auto val_head = attach_losses(res.net, cfg.loss, &val_hs, &val_ms);

  Adam<float> opt;
  const auto refs = res.net.param_refs();
  opt.init(refs);

  int start_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  std::vector<std::vector<float>> best_snap = snapshot_params(res.net);
  std::vector<LogRow> log;

  const bool keep_state = !io.state_dir.empty();
  if (keep_state) std::filesystem::create_directories(io.state_dir);
  const StatePaths paths(io.state_dir.empty() ? "." : io.state_dir);

  if (io.resume) {
    check(keep_state, "trainer: resume needs a state directory");
    load_checkpoint(paths.latest, res.net, &opt);
    Network<float> best_net(cfg.net);
    load_checkpoint(paths.best, best_net);
    best_snap = snapshot_params(best_net);
    const auto j = nlohmann::json::parse(io::read_text_file(paths.progress));
    start_epoch = j.at("epoch").get<int>();
    best_epoch = j.at("best_epoch").get<int>();
    best_val = j.at("best_val").get<double>();
    for (const auto& r : j.at("log")) {
      LogRow row;
      row.epoch = r.at(0).get<int>();
      row.l_r = r.at(1).get<double>();
      row.l_asc = r.at(2).get<double>();
      row.l_s = r.at(3).get<double>();
      row.l_c = r.at(4).get<double>();
      row.total = r.at(5).get<double>();
      row.lr = r.at(6).get<double>();
      row.val = r.at(7).get<double>();
      log.push_back(row);
    }
    check(static_cast<int>(log.size()) == start_epoch,
          "trainer: state log does not cover the resumed epochs");
    check(opt.steps() == static_cast<std::uint64_t>(start_epoch),
          "trainer: optimizer step count disagrees with the state epoch");
  }

  res.epochs_run = start_epoch;
  for (int e = start_epoch; e < cfg.max_epochs; ++e) {
    res.net.forward();
    const LossParts parts = fit_head.parts(res.net.tape());
    const double total = fit_head.value(res.net.tape());
    const double val = val_head.value(res.net.tape());
    if (!std::isfinite(total) || !std::isfinite(val)) {
      std::ostringstream msg;
      msg << "training diverged at epoch " << e << ": total=" << total
          << " val=" << val << " recon=" << parts.recon
          << " asc=" << parts.asc << " sparsity=" << parts.sparsity
          << " consistency=" << parts.consistency;
      const auto bad = res.net.tape().first_nonfinite();
      if (bad >= 0)
        msg << "; first non-finite node: " << res.net.tape().describe(bad);
      throw std::runtime_error(msg.str());
    }

    const double lr = lr_at(e, cfg);
    log.push_back(LogRow{e, parts.recon, parts.asc, parts.sparsity,
                         parts.consistency, total, lr, val});

    if (val < best_val - cfg.min_delta) {
      best_val = val;
      best_epoch = e;
      best_snap = snapshot_params(res.net);
    }

    if (io.progress && io.progress_every > 0 &&
        (e % io.progress_every == 0 || e == cfg.max_epochs - 1)) {
      *io.progress << "epoch " << e << " fit " << format_row("%.6g", total)
                   << " val " << format_row("%.6g", val) << " lr "
                   << format_row("%.4g", lr) << '\n';
    }

    res.epochs_run = e + 1;
    if (e - best_epoch >= cfg.patience) {
      res.early_stopped = true;
      break;
    }

    res.net.tape().backward(fit_head.total);
    opt.step(lr, refs);

    if (keep_state && io.checkpoint_every > 0 &&
        (e + 1) % io.checkpoint_every == 0) {
      write_state(paths, res.net, opt, best_snap, e + 1, best_epoch, best_val,
                  log);
    }
  }

  if (keep_state)
    write_state(paths, res.net, opt, best_snap, res.epochs_run, best_epoch,
                best_val, log);

  restore_params(res.net, best_snap);
  res.net.forward();
  res.fused = res.net.tape().val(res.net.fused());
  res.log = std::move(log);
  res.best_epoch = best_epoch;
  res.best_val = best_val;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t0)
                    .count();
  return res;
}

void write_log_csv(const std::string& path, const std::vector<LogRow>& log) {
  std::string out = "epoch,L_R,L_ASC,L_S,L_C,total,lr\n";
  char buf[256];
  for (const LogRow& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  r.epoch, r.l_r, r.l_asc, r.l_s, r.l_c, r.total, r.lr);
    out += buf;
  }
  io::write_text_file(path, out);
}

GridResult grid_search(const Tensor<float>& x, const Tensor<float>& y,
                       const TrainConfig& base,
                       const std::vector<double>& alphas,
                       const std::vector<double>& betas,
                       const std::vector<double>& gammas,
                       std::ostream* progress) {
  check(!alphas.empty() && !betas.empty() && !gammas.empty(),
        "grid_search: empty axis");
  GridResult out;
  double best = std::numeric_limits<double>::infinity();
  for (double a : alphas)
    for (double b : betas)
      for (double g : gammas) {
        TrainConfig cfg = base;
        cfg.loss.alpha = a;
        cfg.loss.beta = b;
        cfg.loss.gamma = g;
        const TrainResult r = train(x, y, cfg);
        out.rows.push_back(GridRow{a, b, g, r.best_val, r.epochs_run});
        if (progress)
          *progress << "grid alpha=" << a << " beta=" << b << " gamma=" << g
                    << " val " << r.best_val << " (" << r.epochs_run
                    << " epochs)\n";
        if (r.best_val < best) {
          best = r.best_val;
          out.best = cfg.loss;
        }
      }
  return out;
}

void write_grid_csv(const std::string& path, const GridResult& grid) {
  std::string out = "alpha,beta,gamma,val,epochs\n";
  char buf[160];
  for (const GridRow& r : grid.rows) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%d\n", r.alpha,
                  r.beta, r.gamma, r.best_val, r.epochs_run);
    out += buf;
  }
  io::write_text_file(path, out);
}

std::vector<AblationRow> run_ablation(const Tensor<float>& x,
                                      const Tensor<float>& y,
                                      const Tensor<float>& z_gt,
                                      const Mat<float>& srf,
                                      const Tensor<float>& psf,
                                      const TrainConfig& base,
                                      std::ostream* progress) {
  struct ArmSpec {
    const char* name;
    bool clamp, ssc, ca;
  };
  constexpr ArmSpec arms[] = {{"none", true, false, false},
                              {"ssc", true, true, false},
                              {"ca", true, false, true},
                              {"full", true, true, true},
                              {"noclamp", false, true, true}};

  std::vector<AblationRow> rows;
  for (const ArmSpec& arm : arms) {
    TrainConfig cfg = base;
    cfg.net.use_clamp = arm.clamp;
    cfg.net.use_ssc = arm.ssc;
    cfg.net.use_ca = arm.ca;
    const TrainResult r = train(x, y, cfg);
    AblationRow row;
    row.name = arm.name;
    row.use_clamp = arm.clamp;
    row.use_ssc = arm.ssc;
    row.use_ca = arm.ca;
    row.report = metrics::evaluate(z_gt, r.fused, base.net.ratio);
    row.epochs_run = r.epochs_run;
    rows.push_back(std::move(row));
    if (progress)
      *progress << "arm " << arm.name << " psnr " << rows.back().report.psnr
                << " sam " << rows.back().report.sam << '\n';
  }

  cnmf::CnmfConfig cc;
  cc.k = base.net.k;
  const auto baseline = cnmf::cnmf_fuse(x, y, srf, psf, base.net.ratio, cc);
  AblationRow row;
  row.name = "cnmf";
  row.is_baseline = true;
  row.report = metrics::evaluate(z_gt, baseline.z, base.net.ratio);
  rows.push_back(std::move(row));
  if (progress)
    *progress << "arm cnmf psnr " << rows.back().report.psnr << " sam "
              << rows.back().report.sam << '\n';
  return rows;
}

void write_ablation_csv(const std::string& path,
                        const std::vector<AblationRow>& rows) {
  std::string out = "name,use_clamp,use_ssc,use_ca,psnr,sam,ergas,ssim,uiqi,epochs\n";
  char buf[256];
  for (const AblationRow& r : rows) {
    std::string flags = r.is_baseline
                            ? ",,,"
                            : std::string(r.use_clamp ? "1," : "0,") +
                                  (r.use_ssc ? "1," : "0,") +
                                  (r.use_ca ? "1," : "0,");
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g,%d\n",
                  r.report.psnr, r.report.sam, r.report.ergas, r.report.ssim,
                  r.report.uiqi, r.epochs_run);
    out += r.name + "," + flags + buf;
  }
  io::write_text_file(path, out);
}

}  // namespace hsfuse
