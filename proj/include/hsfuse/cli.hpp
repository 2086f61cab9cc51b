#pragma once

#include <cstdint>
#include <string>

#include "hsfuse/datasim.hpp"
#include "hsfuse/trainer.hpp"

namespace hsfuse::cli {

struct Paths {
  std::string x, y, z;          // observation cubes and ground truth
  std::string ref, est;         // evaluation inputs
  std::string weights;          // checkpoint for fuse
  std::string srf, psf;         // known operators (baseline, ablation)
  std::string state;            // training state dir; defaults to <out>/state
  std::string out;              // output directory
};

// Fully resolved run settings. Populated from defaults, then a key=value
// config file, then command-line flags; unknown config keys are errors. The
// resolved form is echoed into every output directory as config.txt so a
// finished directory can be reproduced from that file alone.
struct RunConfig {
  std::uint64_t seed = 0;  // master seed: scene synthesis and training
  double snr_db = 0.0;     // observation noise; 0 keeps the pair exact
  datasim::SceneSpec scene;
  int scene_ms_bands = 3;  // multispectral channels of the simulated Y
  TrainConfig train;       // carries the network and loss settings
  int checkpoint_every = 500;
  bool resume = false;
  Paths paths;
};

// One key=value assignment; throws on unknown keys or unparsable values.
void apply_key(RunConfig& cfg, const std::string& key,
               const std::string& value);
// Whole config text: one assignment per line, '#' comments and blank lines
// are skipped.
void apply_config_text(RunConfig& cfg, const std::string& text);
void apply_config_file(RunConfig& cfg, const std::string& path);
// Canonical serialization; applying the result onto defaults reproduces cfg.
std::string echo_config(const RunConfig& cfg);

int cmd_simulate(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_fuse(const RunConfig& cfg);
int cmd_evaluate(const RunConfig& cfg);
int cmd_baseline(const RunConfig& cfg);
int cmd_ablate(const RunConfig& cfg);

// Full argument parsing and dispatch; returns the process exit code and
// reports failures as a single "error: ..." line on stderr. Machine-readable
// results go to stdout and the output directory, human progress to stderr.
int run_cli(int argc, const char* const* argv);

}  // namespace hsfuse::cli
