#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fif/data.hpp"
#include "fif/losses.hpp"
#include "fif/nets.hpp"

namespace fif {

enum class Schedule { Constant, OneCycle };

std::string to_string(Schedule s);
Schedule schedule_from_string(const std::string& s);

struct OptimHyper {
  double lr = 1e-3;  // peak rate for the one-cycle schedule
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
  Schedule schedule = Schedule::Constant;
  double warmup_frac = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  double clip_norm = 0.0;  // global gradient norm cap; 0 disables
};

/// Learning rate at 0-based `step` of `total` steps.
double lr_at(const OptimHyper& h, std::int64_t step, std::int64_t total);

struct AdamMoments {
  Vector m;
  Vector v;
};

/// One decoupled-weight-decay Adam update. `t` is the 1-based step count used
/// for bias correction.
void adam_step(Vector& params, const Vector& grad, AdamMoments& mom, std::int64_t t, double lr,
               const OptimHyper& h);

struct OptimState {
  std::int64_t step = 0;
  AdamMoments phi;
  AdamMoments theta;
};

struct TrainConfig {
  Objective objective = Objective::Fif;
  LossConfig loss;
  OptimHyper opt;
  int epochs = 1;
  int batch_size = 128;
  std::int64_t max_steps = 0;  // 0: epochs * batches per epoch
  std::uint64_t seed = 0;
  int log_every = 1;
  bool shuffle = true;
};

struct MetricRow {
  std::int64_t step;
  std::string metric;
  double value;
};

/// Append-only metric log; rows are (run_id, step, metric, value).
class MetricsLog {
 public:
  explicit MetricsLog(std::string run_id = "run") : run_id_(std::move(run_id)) {}

  void add(std::int64_t step, const std::string& metric, double value);
  const std::vector<MetricRow>& rows() const { return rows_; }
  const std::string& run_id() const { return run_id_; }
  /// Last value of a metric, or NaN.
  double last(const std::string& metric) const;
  std::vector<double> series(const std::string& metric) const;

  void write_csv(std::ostream& os) const;
  static std::string csv_header();
  std::string csv_row(const MetricRow& r) const;
  void truncate(std::size_t rows);

 private:
  std::string run_id_;
  std::vector<MetricRow> rows_;
};

/// Everything needed to continue a run exactly where it stopped.
struct Checkpoint {
  ArchSpec arch;
  Vector phi;
  Vector theta;
  OptimState opt;
  std::int64_t epoch = 0;
  std::int64_t batch = 0;  // next batch within the epoch
  std::uint64_t seed = 0;
  std::string config_hash;
  std::int64_t metrics_cursor = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(const std::string& bytes);
/// Atomic: writes a temporary file and renames it over `path`.
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

/// Human-readable list of fields that differ; empty when equal.
std::string arch_diff(const ArchSpec& expected, const ArchSpec& found);

nlohmann::json arch_to_json(const ArchSpec& a);
ArchSpec arch_from_json(const nlohmann::json& j);

/// FNV-1a 64-bit, as 16 hex digits.
std::string fnv1a_hex(const std::string& s);

struct StepInfo {
  std::int64_t step;
  std::int64_t epoch;
  LossBreakdown loss;
  double lr;
};

class Trainer {
 public:
  Trainer(NetworkPair np, const Dataset& ds, TrainConfig cfg, std::string run_id = "run");

  /// One optimizer step. Returns false once the run is complete.
  bool step();
  void run();

  std::int64_t total_steps() const { return total_steps_; }
  std::int64_t steps_done() const { return opt_.step; }
  bool done() const { return opt_.step >= total_steps_; }

  const NetworkPair& pair() const { return np_; }
  NetworkPair& pair() { return np_; }
  MetricsLog& log() { return log_; }
  const MetricsLog& log() const { return log_; }

  Checkpoint checkpoint(const std::string& config_hash = {}) const;
  /// Refuses a checkpoint whose architecture differs, listing the differences.
  void restore(const Checkpoint& c);

  std::function<void(const StepInfo&)> on_step;
  std::function<void(std::int64_t epoch)> on_epoch_end;

 private:
  std::vector<Eigen::Index> permutation(std::int64_t epoch) const;
  void validate_epoch(std::int64_t epoch);

  NetworkPair np_;
  const Dataset* ds_;
  TrainConfig cfg_;
  MetricsLog log_;
  OptimState opt_;
  std::int64_t epoch_ = 0;
  std::int64_t batch_ = 0;
  std::int64_t batches_per_epoch_ = 0;
  std::int64_t total_steps_ = 0;
  std::vector<Eigen::Index> perm_;
  std::int64_t perm_epoch_ = -1;
};

}  // namespace fif
