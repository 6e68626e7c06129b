#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fif/linalg.hpp"

namespace fif {

/// Half-open row range [begin, end).
struct RowRange {
  Eigen::Index begin = 0;
  Eigen::Index end = 0;
  Eigen::Index size() const { return end - begin; }
};

/// Rows are stored train, then val, then test, so splits are contiguous,
/// disjoint and cover all rows.
struct Dataset {
  Matrix x;
  RowRange train;
  RowRange val;
  RowRange test;
  Vector mean;                 // applied standardization, empty if none
  Vector std;
  std::vector<int> kept_columns;  // source columns retained, in order
  std::string name;
  nlohmann::json meta;         // generation parameters and seed

  Eigen::Index n() const { return x.rows(); }
  int dim() const { return static_cast<int>(x.cols()); }
  Matrix split(const RowRange& r) const { return x.middleRows(r.begin, r.size()); }
  Matrix train_x() const { return split(train); }
  Matrix val_x() const { return split(val); }
  Matrix test_x() const { return split(test); }
};

/// Fractions of rows for (train, val); test takes the rest.
struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
};

/// x ~ N(0, 1), y = sin(pi x / 2), plus isotropic noise of the given std.
Dataset gen_sinusoid(Eigen::Index n, double noise_std, std::uint64_t seed,
                     SplitFractions split = {});

/// n samples of N(0, sigma).
Dataset gen_gaussian(Eigen::Index n, const Matrix& sigma, std::uint64_t seed,
                     SplitFractions split = {});

/// Equal-weight mixture of Gaussians with the given means and a shared
/// isotropic std.
Dataset gen_gaussian_mixture(Eigen::Index n, const Matrix& means, double std_dev,
                             std::uint64_t seed, SplitFractions split = {});

/// Unbiased sample covariance; nullopt for fewer than two rows.
std::optional<Matrix> sample_covariance(const Matrix& x);

/// Explicit split assignment for load_csv: row indices of the source file.
/// Rows listed nowhere are dropped.
struct SplitSpec {
  std::optional<SplitFractions> fractions;  // used when no indices are given
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> val;
  std::vector<Eigen::Index> test;
};

struct CsvOptions {
  bool header = false;
  bool standardize = true;
  double dequant_noise = 0.0;
  std::uint64_t seed = 0;
  char delimiter = ',';
};

/// Parses a rectangular numeric CSV. Standardization statistics come from the
/// train split only. Columns constant on the train split are dropped with a
/// warning on stderr. Throws ParseError for ragged rows and bad cells.
Dataset load_csv(const std::string& path, const SplitSpec& split, const CsvOptions& opts = {});

/// Sidecar metadata: name, seed, split sizes, standardization.
nlohmann::json dataset_sidecar(const Dataset& ds);

}  // namespace fif
