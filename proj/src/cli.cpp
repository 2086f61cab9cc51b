#include "hsfuse/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"

#include "hsfuse/cnmf.hpp"
#include "hsfuse/format.hpp"
#include "hsfuse/metrics.hpp"
#include "hsfuse/network.hpp"
#include "hsfuse/rng.hpp"

namespace hsfuse::cli {
namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string one_line(std::string msg) {
  std::replace(msg.begin(), msg.end(), '\n', ';');
  return msg;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& v,
                            const char* want) {
  throw std::runtime_error("config: key '" + key + "' needs " + want +
                           ", got '" + v + "'");
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long val = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return static_cast<int>(val);
  } catch (...) {
    bad_value(key, v, "an integer");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const auto val = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return val;
  } catch (...) {
    bad_value(key, v, "an unsigned integer");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double val = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return val;
  } catch (...) {
    bad_value(key, v, "a number");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto piece = trim(v.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start));
    if (piece.empty()) bad_value(key, v, "a comma-separated integer list");
    out.push_back(parse_int(key, piece));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) bad_value(key, v, "a comma-separated integer list");
  return out;
}

std::string fmt_double(double v) { return nlohmann::json(v).dump(); }
std::string fmt_bool(bool b) { return b ? "true" : "false"; }

std::string fmt_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string path_join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// Writes the resolved configuration into the output directory; every command
// calls this before producing anything else there.
void prepare_out(const RunConfig& cfg) {
  check(!cfg.paths.out.empty(),
        "an output directory is required (--out or paths.out)");
  fs::create_directories(cfg.paths.out);
  io::write_text_file(path_join(cfg.paths.out, "config.txt"),
                      echo_config(cfg));
}

io::LoadedCube require_cube(const std::string& path, const char* what) {
  check(!path.empty(),
        std::string("missing input: ") + what + " cube path is not set");
  return io::load_cube(path);
}

// nominal band centers (nm) when a cube carries no wavelength grid
std::vector<double> band_grid(int l) {
  std::vector<double> g(static_cast<std::size_t>(l));
  if (l == 1) {
    g[0] = 550.0;
    return g;
  }
  for (int i = 0; i < l; ++i)
    g[static_cast<std::size_t>(i)] = 400.0 + 300.0 * i / (l - 1);
  return g;
}

Mat<float> load_operator_srf(const RunConfig& cfg,
                             const io::LoadedCube& x) {
  check(!cfg.paths.srf.empty(), "missing input: paths.srf is not set");
  const auto grid = x.wavelengths.empty() ? band_grid(x.data.shape.c)
                                          : x.wavelengths;
  return datasim::load_srf_csv(cfg.paths.srf, grid);
}

Tensor<float> load_operator_psf(const RunConfig& cfg) {
  check(!cfg.paths.psf.empty(), "missing input: paths.psf is not set");
  const auto psf = io::load_cube(cfg.paths.psf).data;
  const int r = cfg.train.net.ratio;
  check(psf.shape == Shape{1, r, r},
        "blur kernel shape " + psf.shape.str() + " does not match ratio " +
            std::to_string(r));
  return psf;
}

// Fills the network shape fields from the loaded observation pair.
void infer_net_shape(NetworkConfig& net, const Tensor<float>& x,
                     const Tensor<float>& y) {
  net.hs_bands = x.shape.c;
  net.height = x.shape.h;
  net.width = x.shape.w;
  net.ms_bands = y.shape.c;
  check(y.shape.h == net.ratio * net.height &&
            y.shape.w == net.ratio * net.width,
        "observation extents " + x.shape.str() + " and " + y.shape.str() +
            " disagree with ratio " + std::to_string(net.ratio));
}

}  // namespace

void apply_key(RunConfig& c, const std::string& key, const std::string& v) {
  NetworkConfig& n = c.train.net;
  if (key == "seed") c.seed = parse_u64(key, v);
  else if (key == "snr_db") c.snr_db = parse_double(key, v);
  else if (key == "scene.k") c.scene.k = parse_int(key, v);
  else if (key == "scene.bands") c.scene.hs_bands = parse_int(key, v);
  else if (key == "scene.height") c.scene.height = parse_int(key, v);
  else if (key == "scene.width") c.scene.width = parse_int(key, v);
  else if (key == "scene.eta") c.scene.dirichlet_eta = parse_double(key, v);
  else if (key == "scene.smooth") c.scene.smooth_passes = parse_int(key, v);
  else if (key == "scene.ms_bands") c.scene_ms_bands = parse_int(key, v);
  else if (key == "net.k") n.k = parse_int(key, v);
  else if (key == "net.bands") n.hs_bands = parse_int(key, v);
  else if (key == "net.ms_bands") n.ms_bands = parse_int(key, v);
  else if (key == "net.ratio") n.ratio = parse_int(key, v);
  else if (key == "net.height") n.height = parse_int(key, v);
  else if (key == "net.width") n.width = parse_int(key, v);
  else if (key == "net.hidden") n.hidden = parse_int_list(key, v);
  else if (key == "net.kernels") n.msi_kernels = parse_int_list(key, v);
  else if (key == "net.slope") n.leaky_slope = parse_double(key, v);
  else if (key == "net.attention_p") n.attention_p = parse_int(key, v);
  else if (key == "net.clamp") n.use_clamp = parse_bool(key, v);
  else if (key == "net.ssc") n.use_ssc = parse_bool(key, v);
  else if (key == "net.ca") n.use_ca = parse_bool(key, v);
  else if (key == "train.epochs") c.train.max_epochs = parse_int(key, v);
  else if (key == "train.lr0") c.train.lr0 = parse_double(key, v);
  else if (key == "train.decay_start") c.train.decay_start = parse_int(key, v);
  else if (key == "train.decay_end") c.train.decay_end = parse_int(key, v);
  else if (key == "train.decay_step") c.train.decay_step = parse_int(key, v);
  else if (key == "train.decay_floor")
    c.train.decay_floor = parse_double(key, v);
  else if (key == "train.patience") c.train.patience = parse_int(key, v);
  else if (key == "train.min_delta") c.train.min_delta = parse_double(key, v);
  else if (key == "train.val_fraction")
    c.train.val_fraction = parse_double(key, v);
  else if (key == "train.checkpoint_every")
    c.checkpoint_every = parse_int(key, v);
  else if (key == "train.resume") c.resume = parse_bool(key, v);
  else if (key == "loss.alpha") c.train.loss.alpha = parse_double(key, v);
  else if (key == "loss.beta") c.train.loss.beta = parse_double(key, v);
  else if (key == "loss.gamma") c.train.loss.gamma = parse_double(key, v);
  else if (key == "loss.epsilon") c.train.loss.epsilon = parse_double(key, v);
  else if (key == "paths.x") c.paths.x = v;
  else if (key == "paths.y") c.paths.y = v;
  else if (key == "paths.z") c.paths.z = v;
  else if (key == "paths.ref") c.paths.ref = v;
  else if (key == "paths.est") c.paths.est = v;
  else if (key == "paths.weights") c.paths.weights = v;
  else if (key == "paths.srf") c.paths.srf = v;
  else if (key == "paths.psf") c.paths.psf = v;
  else if (key == "paths.state") c.paths.state = v;
  else if (key == "paths.out") c.paths.out = v;
  else
    throw std::runtime_error("config: unknown key '" + key + "'");
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::size_t pos = 0;
  int lineno = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw =
        text.substr(pos, nl == std::string::npos ? std::string::npos
                                                 : nl - pos);
    ++lineno;
    const auto line = trim(raw);
    if (!line.empty() && line[0] != '#') {
      const auto eq = line.find('=');
      check(eq != std::string::npos,
            "config line " + std::to_string(lineno) +
                " is not a key=value assignment: '" + line + "'");
      apply_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  apply_config_text(cfg, io::read_text_file(path));
}

std::string echo_config(const RunConfig& c) {
  const NetworkConfig& n = c.train.net;
  std::string out;
  auto kv = [&out](const char* key, const std::string& value) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  };
  kv("seed", std::to_string(c.seed));
  kv("snr_db", fmt_double(c.snr_db));
  kv("scene.k", std::to_string(c.scene.k));
  kv("scene.bands", std::to_string(c.scene.hs_bands));
  kv("scene.height", std::to_string(c.scene.height));
  kv("scene.width", std::to_string(c.scene.width));
  kv("scene.eta", fmt_double(c.scene.dirichlet_eta));
  kv("scene.smooth", std::to_string(c.scene.smooth_passes));
  kv("scene.ms_bands", std::to_string(c.scene_ms_bands));
  kv("net.k", std::to_string(n.k));
  kv("net.bands", std::to_string(n.hs_bands));
  kv("net.ms_bands", std::to_string(n.ms_bands));
  kv("net.ratio", std::to_string(n.ratio));
  kv("net.height", std::to_string(n.height));
  kv("net.width", std::to_string(n.width));
  kv("net.hidden", fmt_list(n.hidden));
  kv("net.kernels", fmt_list(n.msi_kernels));
  kv("net.slope", fmt_double(n.leaky_slope));
  kv("net.attention_p", std::to_string(n.attention_p));
  kv("net.clamp", fmt_bool(n.use_clamp));
  kv("net.ssc", fmt_bool(n.use_ssc));
  kv("net.ca", fmt_bool(n.use_ca));
  kv("train.epochs", std::to_string(c.train.max_epochs));
  kv("train.lr0", fmt_double(c.train.lr0));
  kv("train.decay_start", std::to_string(c.train.decay_start));
  kv("train.decay_end", std::to_string(c.train.decay_end));
  kv("train.decay_step", std::to_string(c.train.decay_step));
  kv("train.decay_floor", fmt_double(c.train.decay_floor));
  kv("train.patience", std::to_string(c.train.patience));
  kv("train.min_delta", fmt_double(c.train.min_delta));
  kv("train.val_fraction", fmt_double(c.train.val_fraction));
  kv("train.checkpoint_every", std::to_string(c.checkpoint_every));
  kv("train.resume", fmt_bool(c.resume));
  kv("loss.alpha", fmt_double(c.train.loss.alpha));
  kv("loss.beta", fmt_double(c.train.loss.beta));
  kv("loss.gamma", fmt_double(c.train.loss.gamma));
  kv("loss.epsilon", fmt_double(c.train.loss.epsilon));
  kv("paths.x", c.paths.x);
  kv("paths.y", c.paths.y);
  kv("paths.z", c.paths.z);
  kv("paths.ref", c.paths.ref);
  kv("paths.est", c.paths.est);
  kv("paths.weights", c.paths.weights);
  kv("paths.srf", c.paths.srf);
  kv("paths.psf", c.paths.psf);
  kv("paths.state", c.paths.state);
  kv("paths.out", c.paths.out);
  return out;
}

int cmd_simulate(const RunConfig& cfg) {
  const int ratio = cfg.train.net.ratio;
  check(ratio >= 1, "ratio must be positive");
  check(cfg.scene.height % ratio == 0 && cfg.scene.width % ratio == 0,
        "scene extent " + std::to_string(cfg.scene.height) + "x" +
            std::to_string(cfg.scene.width) +
            " is not divisible by ratio " + std::to_string(ratio));
  check(cfg.scene_ms_bands >= 1 && cfg.scene_ms_bands <= cfg.scene.hs_bands,
        "scene.ms_bands must lie in [1, scene.bands]");
  prepare_out(cfg);

  datasim::SceneSpec spec = cfg.scene;
  spec.seed = cfg.seed;
  const auto scene = datasim::synth_scene(spec);
  const auto srf =
      datasim::gaussian_srf_matrix(spec.hs_bands, cfg.scene_ms_bands);
  const auto psf = datasim::gaussian_psf_kernel(ratio).cast<float>();
  const auto pair =
      datasim::simulate_pair(scene.z, srf, psf, ratio, cfg.snr_db,
                             Rng::derive(cfg.seed, "observation-noise"));
  const auto grid = band_grid(spec.hs_bands);

  const std::string& out = cfg.paths.out;
  io::save_cube(path_join(out, "z.cube"), scene.z, grid);
  io::save_cube(path_join(out, "x.cube"), pair.x, grid);
  io::save_cube(path_join(out, "y.cube"), pair.y);
  io::save_cube(path_join(out, "s_gt.cube"), scene.abund);
  // one endmember spectrum per channel plane, band index along the width
  Tensor<float> a_gt(Shape{spec.k, 1, spec.hs_bands});
  for (int k = 0; k < spec.k; ++k)
    for (int mu = 0; mu < spec.hs_bands; ++mu)
      a_gt.at(k, 0, mu) = scene.endmembers(k, mu);
  io::save_cube(path_join(out, "a_gt.cube"), a_gt);

  std::string csv = "wavelength_nm";
  for (int j = 0; j < cfg.scene_ms_bands; ++j)
    csv += ",ch" + std::to_string(j);
  csv += '\n';
  char buf[64];
  for (int mu = 0; mu < spec.hs_bands; ++mu) {
    csv += fmt_double(grid[static_cast<std::size_t>(mu)]);
    for (int j = 0; j < cfg.scene_ms_bands; ++j) {
      std::snprintf(buf, sizeof(buf), ",%.9g",
                    static_cast<double>(srf(mu, j)));
      csv += buf;
    }
    csv += '\n';
  }
  io::write_text_file(path_join(out, "srf.csv"), csv);
  io::save_cube(path_join(out, "psf.cube"), psf);

  auto shape_of = [](const Tensor<float>& t) {
    return nlohmann::ordered_json{t.shape.c, t.shape.h, t.shape.w};
  };
  nlohmann::ordered_json m;
  m["seed"] = cfg.seed;
  m["ratio"] = ratio;
  m["snr_db"] = cfg.snr_db;
  m["cubes"] = nlohmann::ordered_json{{"z", {{"path", "z.cube"}, {"shape", shape_of(scene.z)}}},
                                      {"x", {{"path", "x.cube"}, {"shape", shape_of(pair.x)}}},
                                      {"y", {{"path", "y.cube"}, {"shape", shape_of(pair.y)}}},
                                      {"s_gt", {{"path", "s_gt.cube"}, {"shape", shape_of(scene.abund)}}},
                                      {"a_gt", {{"path", "a_gt.cube"}, {"shape", shape_of(a_gt)}}}};
  m["operators"] = nlohmann::ordered_json{{"srf", "srf.csv"},
                                          {"psf", "psf.cube"}};
  const std::string text = m.dump(2) + "\n";
  io::write_text_file(path_join(out, "manifest.json"), text);
  std::cout << text;
  std::cerr << "simulated " << scene.z.shape.str() << " scene into " << out
            << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const auto xc = require_cube(cfg.paths.x, "paths.x (low-res hyperspectral)");
  const auto yc =
      require_cube(cfg.paths.y, "paths.y (high-res multispectral)");
  RunConfig rc = cfg;
  infer_net_shape(rc.train.net, xc.data, yc.data);
  rc.train.seed = cfg.seed;
  prepare_out(rc);

  TrainIO tio;
  tio.state_dir = rc.paths.state.empty() ? path_join(rc.paths.out, "state")
                                         : rc.paths.state;
  tio.checkpoint_every = rc.checkpoint_every;
  tio.resume = rc.resume;
  tio.progress = &std::cerr;
  const auto res = train(xc.data, yc.data, rc.train, tio);

  save_checkpoint(path_join(rc.paths.out, "weights.ckpt"), res.net);
  io::save_cube(path_join(rc.paths.out, "fused.cube"), res.fused,
                xc.wavelengths);
  write_log_csv(path_join(rc.paths.out, "log.csv"), res.log);

  nlohmann::ordered_json j;
  j["epochs_run"] = res.epochs_run;
  j["best_epoch"] = res.best_epoch;
  j["best_val"] = res.best_val;
  j["early_stopped"] = res.early_stopped;
  j["seconds"] = res.seconds;
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_fuse(const RunConfig& cfg) {
  check(!cfg.paths.weights.empty(), "missing input: paths.weights is not set");
  const auto ncfg = checkpoint_config(cfg.paths.weights);
  Network<float> net(ncfg);
  load_checkpoint(cfg.paths.weights, net);

  const auto yc =
      require_cube(cfg.paths.y, "paths.y (high-res multispectral)");
  const Shape want_y{ncfg.ms_bands, ncfg.msi_height(), ncfg.msi_width()};
  check(yc.data.shape == want_y, "multispectral input " +
                                     yc.data.shape.str() +
                                     " does not match the checkpoint (wants " +
                                     want_y.str() + ")");

  Tensor<float> x(Shape{ncfg.hs_bands, ncfg.height, ncfg.width});
  std::vector<double> wl;
  if (!cfg.paths.x.empty()) {
    const auto xc = io::load_cube(cfg.paths.x);
    check(xc.data.shape == x.shape,
          "hyperspectral input " + xc.data.shape.str() +
              " does not match the checkpoint (wants " + x.shape.str() + ")");
    x = xc.data;
    wl = xc.wavelengths;
  } else {
    // without attention the fused product depends on Y alone, so a zero X
    // only feeds the unused consistency outputs
    check(!ncfg.use_ca,
          "this checkpoint exchanges cross-attention statistics with the "
          "low-res cube; provide paths.x");
  }

  prepare_out(cfg);
  net.set_inputs(x, yc.data);
  net.forward();
  const auto& fused = net.tape().val(net.fused());
  io::save_cube(path_join(cfg.paths.out, "fused.cube"), fused, wl);

  nlohmann::ordered_json j;
  j["bands"] = fused.shape.c;
  j["height"] = fused.shape.h;
  j["width"] = fused.shape.w;
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
  const auto ref = require_cube(cfg.paths.ref, "paths.ref (ground truth)");
  const auto est = require_cube(cfg.paths.est, "paths.est (estimate)");
  check(ref.data.shape == est.data.shape,
        "reference " + ref.data.shape.str() + " and estimate " +
            est.data.shape.str() + " shapes differ");
  prepare_out(cfg);

  const auto rep =
      metrics::evaluate(ref.data, est.data, cfg.train.net.ratio);
  nlohmann::ordered_json j;
  j["psnr"] = rep.psnr;
  j["sam"] = rep.sam;
  j["ergas"] = rep.ergas;
  j["ssim"] = rep.ssim;
  j["uiqi"] = rep.uiqi;
  j["sam_skipped_pixels"] = rep.sam_skipped_pixels;
  j["uiqi_skipped_windows"] = rep.uiqi_skipped_windows;
  j["psnr_band"] = rep.psnr_band;
  j["ssim_band"] = rep.ssim_band;
  j["uiqi_band"] = rep.uiqi_band;
  const std::string text = j.dump(2) + "\n";
  io::write_text_file(path_join(cfg.paths.out, "metrics.json"), text);
  std::cout << text;

  const int bands = ref.data.shape.c;
  const int h = ref.data.shape.h, w = ref.data.shape.w;
  const std::size_t plane = ref.data.shape.plane();
  std::string csv = "band,rmse,psnr,ssim,uiqi\n";
  char buf[160];
  std::vector<float> residual(plane);
  std::vector<double> sq(plane, 0.0);
  char name[64];
  for (int b = 0; b < bands; ++b) {
    const float* rp = ref.data.plane_ptr(b);
    const float* ep = est.data.plane_ptr(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = static_cast<double>(rp[i]) - ep[i];
      residual[i] = static_cast<float>(std::abs(d));
      sq[i] += d * d;
      acc += d * d;
    }
    const double rmse = std::sqrt(acc / static_cast<double>(plane));
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g\n", b, rmse,
                  rep.psnr_band[static_cast<std::size_t>(b)],
                  rep.ssim_band[static_cast<std::size_t>(b)],
                  rep.uiqi_band[static_cast<std::size_t>(b)]);
    csv += buf;
    std::snprintf(name, sizeof(name), "residual_band_%03d.pgm", b);
    io::save_pgm(path_join(cfg.paths.out, name), residual.data(), h, w, 0.0,
                 0.1);
  }
  io::write_text_file(path_join(cfg.paths.out, "per_band.csv"), csv);

  // per-pixel spectral root-mean-square error on the shared color scale
  for (std::size_t i = 0; i < plane; ++i)
    residual[i] =
        static_cast<float>(std::sqrt(sq[i] / static_cast<double>(bands)));
  io::save_pgm(path_join(cfg.paths.out, "residual_rmse.pgm"), residual.data(),
               h, w, 0.0, 0.1);

  std::cerr << "psnr " << rep.psnr << " dB, sam " << rep.sam << " deg, ergas "
            << rep.ergas << ", ssim " << rep.ssim << ", uiqi " << rep.uiqi
            << "\n";
  return 0;
}

int cmd_baseline(const RunConfig& cfg) {
  const auto xc = require_cube(cfg.paths.x, "paths.x (low-res hyperspectral)");
  const auto yc =
      require_cube(cfg.paths.y, "paths.y (high-res multispectral)");
  const int ratio = cfg.train.net.ratio;
  check(yc.data.shape.h == ratio * xc.data.shape.h &&
            yc.data.shape.w == ratio * xc.data.shape.w,
        "observation extents disagree with ratio " + std::to_string(ratio));
  const auto srf = load_operator_srf(cfg, xc);
  const auto psf = load_operator_psf(cfg);
  check(srf.rows == xc.data.shape.c && srf.cols == yc.data.shape.c,
        "response matrix shape does not match the observations");
  prepare_out(cfg);

  cnmf::CnmfConfig cc;
  cc.k = cfg.train.net.k;
  const auto res = cnmf::cnmf_fuse(xc.data, yc.data, srf, psf, ratio, cc);

  io::save_cube(path_join(cfg.paths.out, "fused.cube"), res.z,
                xc.wavelengths);
  Tensor<float> endm(Shape{cc.k, 1, xc.data.shape.c});
  for (int k = 0; k < cc.k; ++k)
    for (int mu = 0; mu < xc.data.shape.c; ++mu)
      endm.at(k, 0, mu) = res.endmembers(k, mu);
  io::save_cube(path_join(cfg.paths.out, "endmembers.cube"), endm);
  io::save_cube(path_join(cfg.paths.out, "abundances.cube"), res.abund);

  nlohmann::ordered_json j;
  j["objective"] = res.objective;
  j["converged"] = res.converged;
  j["warning"] = res.warning;
  const std::string text = j.dump(2) + "\n";
  io::write_text_file(path_join(cfg.paths.out, "baseline.json"), text);
  std::cout << text;
  return 0;
}

int cmd_ablate(const RunConfig& cfg) {
  const auto xc = require_cube(cfg.paths.x, "paths.x (low-res hyperspectral)");
  const auto yc =
      require_cube(cfg.paths.y, "paths.y (high-res multispectral)");
  const auto zc = require_cube(cfg.paths.z, "paths.z (ground truth)");
  RunConfig rc = cfg;
  infer_net_shape(rc.train.net, xc.data, yc.data);
  rc.train.seed = cfg.seed;
  check(zc.data.shape == Shape{rc.train.net.hs_bands,
                               rc.train.net.msi_height(),
                               rc.train.net.msi_width()},
        "ground truth " + zc.data.shape.str() +
            " does not match the observation pair");
  const auto srf = load_operator_srf(rc, xc);
  const auto psf = load_operator_psf(rc);
  prepare_out(rc);

  const auto rows = run_ablation(xc.data, yc.data, zc.data, srf, psf,
                                 rc.train, &std::cerr);
  const std::string csv_path = path_join(rc.paths.out, "ablation.csv");
  write_ablation_csv(csv_path, rows);
  std::cout << io::read_text_file(csv_path);
  return 0;
}

int run_cli(int argc, const char* const* argv) {
#ifdef _OPENMP
  if (const char* t = std::getenv("HSFUSE_THREADS")) {
    const int n = std::atoi(t);
    if (n < 1) {
      std::cerr << "error: HSFUSE_THREADS must be a positive integer\n";
      return 1;
    }
    omp_set_num_threads(n);
  }
#endif

  CLI::App app{
      "Unsupervised fusion of a low-resolution hyperspectral cube with a "
      "high-resolution multispectral image"};
  app.name("hsfuse");
  app.require_subcommand(1);

  std::string config_path;
  auto* oconfig =
      app.add_option("--config", config_path, "key=value config file");
  std::uint64_t seed = 0;
  auto* oseed = app.add_option("--seed", seed, "master random seed");
  std::string out;
  auto* oout = app.add_option("--out", out, "output directory");
  int ratio = 0;
  auto* oratio =
      app.add_option("--ratio", ratio, "spatial resolution ratio");
  int k = 0;
  auto* ok = app.add_option("--k", k, "endmember count");
  int epochs = 0;
  auto* oepochs = app.add_option("--epochs", epochs, "training epoch budget");
  double alpha = 0, beta = 0, gamma = 0, epsilon = 0;
  auto* oalpha = app.add_option("--alpha", alpha, "sum-to-one weight");
  auto* obeta = app.add_option("--beta", beta, "sparsity weight");
  auto* ogamma = app.add_option("--gamma", gamma, "consistency weight");
  auto* oepsilon = app.add_option("--epsilon", epsilon, "sparsity target");
  double snr = 0;
  auto* osnr = app.add_option("--snr", snr, "observation SNR in dB; 0 = none");
  int height = 0, width = 0, bands = 0, ms_bands = 0;
  auto* oheight = app.add_option("--height", height, "scene height (high-res)");
  auto* owidth = app.add_option("--width", width, "scene width (high-res)");
  auto* obands = app.add_option("--bands", bands, "hyperspectral band count");
  auto* oms =
      app.add_option("--ms-bands", ms_bands, "multispectral band count");
  std::string px, py, pz, pref, pest, pweights, psrf, ppsf, pstate;
  auto* ox = app.add_option("--x", px, "low-res hyperspectral cube");
  auto* oy = app.add_option("--y", py, "high-res multispectral cube");
  auto* oz = app.add_option("--z", pz, "ground-truth cube");
  auto* oref = app.add_option("--ref", pref, "reference cube");
  auto* oest = app.add_option("--est", pest, "estimate cube");
  auto* oweights = app.add_option("--weights", pweights, "weight checkpoint");
  auto* osrf = app.add_option("--srf", psrf, "spectral response CSV");
  auto* opsf = app.add_option("--psf", ppsf, "blur kernel cube");
  auto* ostate = app.add_option("--state", pstate, "training state directory");
  bool resume = false;
  auto* oresume =
      app.add_flag("--resume", resume, "continue from the saved state");

  auto* c_simulate = app.add_subcommand(
      "simulate", "synthesize a scene and its degraded observation pair");
  auto* c_train = app.add_subcommand(
      "train", "fit the fusion network to an observation pair");
  auto* c_fuse =
      app.add_subcommand("fuse", "apply trained weights to observations");
  auto* c_evaluate = app.add_subcommand(
      "evaluate", "score an estimate against a reference cube");
  auto* c_baseline = app.add_subcommand(
      "baseline",
      "classical coupled-factorization fusion with known operators");
  auto* c_ablate = app.add_subcommand(
      "ablate", "train every module arm plus the classical baseline");
  for (auto* sub :
       {c_simulate, c_train, c_fuse, c_evaluate, c_baseline, c_ablate})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }

  try {
    RunConfig cfg;
    if (oconfig->count()) apply_config_file(cfg, config_path);
    if (oseed->count()) cfg.seed = seed;
    if (oout->count()) cfg.paths.out = out;
    if (oratio->count()) cfg.train.net.ratio = ratio;
    if (ok->count()) {
      cfg.scene.k = k;
      cfg.train.net.k = k;
    }
    if (oepochs->count()) cfg.train.max_epochs = epochs;
    if (oalpha->count()) cfg.train.loss.alpha = alpha;
    if (obeta->count()) cfg.train.loss.beta = beta;
    if (ogamma->count()) cfg.train.loss.gamma = gamma;
    if (oepsilon->count()) cfg.train.loss.epsilon = epsilon;
    if (osnr->count()) cfg.snr_db = snr;
    if (oheight->count()) cfg.scene.height = height;
    if (owidth->count()) cfg.scene.width = width;
    if (obands->count()) cfg.scene.hs_bands = bands;
    if (oms->count()) cfg.scene_ms_bands = ms_bands;
    if (ox->count()) cfg.paths.x = px;
    if (oy->count()) cfg.paths.y = py;
    if (oz->count()) cfg.paths.z = pz;
    if (oref->count()) cfg.paths.ref = pref;
    if (oest->count()) cfg.paths.est = pest;
    if (oweights->count()) cfg.paths.weights = pweights;
    if (osrf->count()) cfg.paths.srf = psrf;
    if (opsf->count()) cfg.paths.psf = ppsf;
    if (ostate->count()) cfg.paths.state = pstate;
    if (oresume->count()) cfg.resume = true;

    if (*c_simulate) return cmd_simulate(cfg);
    if (*c_train) return cmd_train(cfg);
    if (*c_fuse) return cmd_fuse(cfg);
    if (*c_evaluate) return cmd_evaluate(cfg);
    if (*c_baseline) return cmd_baseline(cfg);
    if (*c_ablate) return cmd_ablate(cfg);
    std::cerr << "error: no command selected\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
}

}  // namespace hsfuse::cli
