#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fif/config.hpp"
#include "fif/hutchinson.hpp"

namespace fif {

struct CliOptions {
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  bool resume = false;
  int jobs = 1;
};

/// Worker count: the requested --jobs value capped by FIF_NUM_THREADS.
int effective_jobs(int requested);

/// Creates `dir`, refusing a directory that already holds run artifacts
/// unless `force` is set, in which case those artifacts are removed.
void prepare_output_dir(const std::string& dir, bool force);

/// Trains from a resolved config and writes config.ini, dataset.json,
/// metrics.csv, checkpoint.bin and summary.json into out_dir. Returns the
/// summary.
nlohmann::json run_train(const RunConfig& cfg, const std::string& out_dir);

/// Continues a run in out_dir from its checkpoint and config copy.
nlohmann::json resume_train(const std::string& out_dir);

int cmd_train(const std::string& config_path, const CliOptions& opts);

struct VarianceStudyOptions {
  int d = 8;
  int D = 32;
  std::vector<ProbeKind> kinds = {ProbeKind::Rademacher, ProbeKind::Gaussian,
                                  ProbeKind::ScaledGaussian, ProbeKind::Orthogonalized};
  std::vector<int> ks = {1, 2, 4, 8};
  long samples = 100000;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {32};
  int batch = 8;
  int grad_seeds = 8;
};

struct VarianceRow {
  ProbeKind kind;
  int d;
  int k;
  double analytic;
  double empirical;
  long samples;
};

/// Random symmetric d x d matrix with standard-normal upper triangle.
Matrix random_symmetric(int d, Rng& rng);

/// Empirical variance of `samples` independent k-probe trace estimates.
double empirical_variance(ProbeKind kind, int k, const Matrix& a, long samples, Rng& rng);

std::vector<VarianceRow> variance_study(const VarianceStudyOptions& o);

struct DistanceRow {
  TraceSpace space;
  int k;
  double mean_distance;
  int seeds;
};

/// Relative gradient distance of the encoder-target estimator in both trace
/// spaces, averaged over probe seeds, on a random MLP.
std::vector<DistanceRow> gradient_distance_study(const VarianceStudyOptions& o);

int cmd_variance_study(const VarianceStudyOptions& o, const CliOptions& cli);

struct PhaseRow {
  double beta;
  int run;
  std::uint64_t seed;
  double recon;
  double nll_prior;
  double corr_curve = 0.0;       // sinusoid
  double corr_noise = 0.0;       // sinusoid
  double angle_deg = 0.0;        // linear_gaussian: decoder column vs oracle subspace
  double oracle_lambda = 0.0;    // linear_gaussian
  double sigma2 = 0.0;           // linear_gaussian: 1/(2 beta)
};

/// One training run of a phase-transition sweep.
PhaseRow phase_run(const RunConfig& cfg, double beta, int run);

int cmd_phase_transition(const std::string& config_path, const CliOptions& cli);

}  // namespace fif
