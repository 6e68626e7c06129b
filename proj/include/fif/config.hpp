#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fif/data.hpp"
#include "fif/losses.hpp"
#include "fif/nets.hpp"
#include "fif/trainer.hpp"

namespace fif {

struct DataSpec {
  std::string kind = "sinusoid";  // sinusoid | gaussian | gaussian_mixture | csv
  Eigen::Index n = 10000;
  double noise_std = 0.1;            // sinusoid
  std::vector<double> sigma_diag;    // gaussian
  std::vector<std::vector<double>> means;  // gaussian_mixture
  double component_std = 0.1;        // gaussian_mixture
  std::string path;                  // csv
  bool header = false;
  bool standardize = true;
  SplitFractions split;
  std::optional<std::uint64_t> seed;  // unset: the experiment seed
};

struct PhaseSpec {
  std::string dataset = "sinusoid";  // sinusoid | linear_gaussian
  std::vector<double> betas;
  int runs = 1;
};

/// A whole experiment. Every field has a key in the INI form, so to_ini()
/// followed by parse_config() reproduces the same config.
struct RunConfig {
  std::string kind = "train";  // train | phase_transition
  std::uint64_t seed = 0;
  DataSpec data;
  ArchSpec arch;
  Objective objective = Objective::Fif;
  LossConfig loss;
  OptimHyper opt;
  int epochs = 1;
  int batch_size = 128;
  std::int64_t max_steps = 0;
  int log_every = 1;
  std::int64_t checkpoint_every = 0;  // steps; 0 only writes the final checkpoint
  PhaseSpec phase;

  /// Applies the experiment seed to the architecture.
  void finalize();
};

/// Throws ConfigError naming the offending key on unknown keys or bad values.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);
std::string to_ini(const RunConfig& c);

Dataset make_dataset(const DataSpec& spec, std::uint64_t experiment_seed);
TrainConfig make_train_config(const RunConfig& c);

}  // namespace fif
