#include "fif/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "fif/errors.hpp"
#include "fif/rng.hpp"

namespace fif {

namespace {

void assign_splits(Dataset& ds, SplitFractions f) {
  if (f.train < 0.0 || f.val < 0.0 || f.train + f.val > 1.0) {
    throw std::invalid_argument("split fractions must be nonnegative and sum to at most 1");
  }
  const Eigen::Index n = ds.x.rows();
  const auto n_train = static_cast<Eigen::Index>(std::floor(f.train * static_cast<double>(n)));
  const auto n_val = static_cast<Eigen::Index>(std::floor(f.val * static_cast<double>(n)));
  ds.train = {0, n_train};
  ds.val = {n_train, n_train + n_val};
  ds.test = {n_train + n_val, n};
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, delim)) cells.push_back(cell);
  if (!line.empty() && line.back() == delim) cells.emplace_back();
  return cells;
}

double parse_cell(std::string cell, long row, long col) {
  const auto first = cell.find_first_not_of(" \t\r");
  const auto last = cell.find_last_not_of(" \t\r");
  if (first == std::string::npos) throw ParseError("empty cell", row, col);
  cell = cell.substr(first, last - first + 1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw ParseError("non-numeric cell '" + cell + "'", row, col);
  }
  return v;
}

}  // namespace

Dataset gen_sinusoid(Eigen::Index n, double noise_std, std::uint64_t seed, SplitFractions split) {
  if (n < 1) throw std::invalid_argument("gen_sinusoid: n must be >= 1");
  if (noise_std < 0.0) throw std::invalid_argument("gen_sinusoid: noise_std must be >= 0");
  Rng base_rng(seed, {0x73696e});
  Rng t_rng = base_rng.split({0});
  Rng noise_rng = base_rng.split({1});
  Dataset ds;
  ds.x.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = t_rng.normal();
    ds.x(i, 0) = t;
    ds.x(i, 1) = std::sin(std::numbers::pi * t / 2.0);
  }
  if (noise_std > 0.0) ds.x += noise_std * noise_rng.normal_matrix(n, 2);
  ds.name = "sinusoid";
  ds.kept_columns = {0, 1};
  ds.meta = {{"generator", "sinusoid"}, {"n", n}, {"noise_std", noise_std}, {"seed", seed}};
  assign_splits(ds, split);
  return ds;
}

Dataset gen_gaussian(Eigen::Index n, const Matrix& sigma, std::uint64_t seed,
                     SplitFractions split) {
  if (n < 1) throw std::invalid_argument("gen_gaussian: n must be >= 1");
  if (sigma.rows() != sigma.cols()) throw DimensionError("gen_gaussian: Sigma must be square");
  const Matrix root = linalg::sqrtm_psd(sigma);
  Rng rng(seed, {0x676175});
  Dataset ds;
  ds.x = rng.normal_matrix(n, sigma.rows()) * root;
  ds.name = "gaussian";
  for (int i = 0; i < sigma.rows(); ++i) ds.kept_columns.push_back(i);
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(sigma.rows()));
  for (Eigen::Index i = 0; i < sigma.rows(); ++i) {
    for (Eigen::Index j = 0; j < sigma.cols(); ++j) rows[i].push_back(sigma(i, j));
  }
  ds.meta = {{"generator", "gaussian"}, {"n", n}, {"sigma", rows}, {"seed", seed}};
  assign_splits(ds, split);
  return ds;
}

Dataset gen_gaussian_mixture(Eigen::Index n, const Matrix& means, double std_dev,
                             std::uint64_t seed, SplitFractions split) {
  if (n < 1) throw std::invalid_argument("gen_gaussian_mixture: n must be >= 1");
  if (means.rows() < 1) throw std::invalid_argument("gen_gaussian_mixture: need a component");
  Rng rng(seed, {0x676d6d});
  Dataset ds;
  ds.x = std_dev * rng.normal_matrix(n, means.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, means.rows() - 1);
  for (Eigen::Index i = 0; i < n; ++i) ds.x.row(i) += means.row(pick(rng.engine()));
  ds.name = "gaussian_mixture";
  for (int i = 0; i < means.cols(); ++i) ds.kept_columns.push_back(i);
  ds.meta = {{"generator", "gaussian_mixture"},
             {"n", n},
             {"components", means.rows()},
             {"std", std_dev},
             {"seed", seed}};
  assign_splits(ds, split);
  return ds;
}

std::optional<Matrix> sample_covariance(const Matrix& x) {
  if (x.rows() < 2) return std::nullopt;
  const Matrix c = x.rowwise() - x.colwise().mean();
  return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

Dataset load_csv(const std::string& path, const SplitSpec& split, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  long row = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++row;
    if (opts.header && row == 1) continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_line(line, opts.delimiter);
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      throw ParseError("ragged row with " + std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(width),
                       row, static_cast<long>(std::min(cells.size(), width)) + 1);
    }
    std::vector<double> vals;
    vals.reserve(width);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      vals.push_back(parse_cell(cells[c], row, static_cast<long>(c) + 1));
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw ParseError("no data rows", row, 0);
  const auto n_src = static_cast<Eigen::Index>(rows.size());

  std::vector<Eigen::Index> tr = split.train, va = split.val, te = split.test;
  if (tr.empty() && va.empty() && te.empty()) {
    const SplitFractions f = split.fractions.value_or(SplitFractions{});
    const auto n_train = static_cast<Eigen::Index>(std::floor(f.train * static_cast<double>(n_src)));
    const auto n_val = static_cast<Eigen::Index>(std::floor(f.val * static_cast<double>(n_src)));
    for (Eigen::Index i = 0; i < n_src; ++i) {
      (i < n_train ? tr : i < n_train + n_val ? va : te).push_back(i);
    }
  }
  std::vector<bool> used(static_cast<std::size_t>(n_src), false);
  for (const auto* part : {&tr, &va, &te}) {
    for (Eigen::Index i : *part) {
      if (i < 0 || i >= n_src) throw std::out_of_range("load_csv: split index out of range");
      if (used[static_cast<std::size_t>(i)]) {
        throw std::invalid_argument("load_csv: row " + std::to_string(i) + " is in two splits");
      }
      used[static_cast<std::size_t>(i)] = true;
    }
  }

  const auto width_i = static_cast<Eigen::Index>(width);
  Matrix all(static_cast<Eigen::Index>(tr.size() + va.size() + te.size()), width_i);
  Eigen::Index r = 0;
  for (const auto* part : {&tr, &va, &te}) {
    for (Eigen::Index i : *part) {
      for (Eigen::Index c = 0; c < width_i; ++c) all(r, c) = rows[static_cast<std::size_t>(i)][c];
      ++r;
    }
  }
  Dataset ds;
  ds.train = {0, static_cast<Eigen::Index>(tr.size())};
  ds.val = {ds.train.end, ds.train.end + static_cast<Eigen::Index>(va.size())};
  ds.test = {ds.val.end, all.rows()};
  if (ds.train.size() < 2) throw std::invalid_argument("load_csv: train split needs >= 2 rows");

  const Matrix train = all.middleRows(0, ds.train.size());
  const Vector mean = train.colwise().mean().transpose();
  const Vector sd =
      ((train.rowwise() - mean.transpose()).colwise().squaredNorm() /
       static_cast<double>(train.rows() - 1))
          .cwiseSqrt()
          .transpose();
  for (Eigen::Index c = 0; c < width_i; ++c) {
    if (sd(c) > 0.0) {
      ds.kept_columns.push_back(static_cast<int>(c));
    } else {
      std::cerr << "warning: load_csv: dropping constant column " << c + 1 << " of '" << path
                << "'\n";
    }
  }
  const auto kept = static_cast<Eigen::Index>(ds.kept_columns.size());
  if (kept == 0) throw std::invalid_argument("load_csv: every column is constant");
  ds.x.resize(all.rows(), kept);
  ds.mean.resize(kept);
  ds.std.resize(kept);
  for (Eigen::Index j = 0; j < kept; ++j) {
    const int c = ds.kept_columns[static_cast<std::size_t>(j)];
    ds.x.col(j) = all.col(c);
    ds.mean(j) = opts.standardize ? mean(c) : 0.0;
    ds.std(j) = opts.standardize ? sd(c) : 1.0;
  }
  if (opts.standardize) {
    ds.x = (ds.x.rowwise() - ds.mean.transpose()).array().rowwise() / ds.std.transpose().array();
  } else {
    ds.mean.resize(0);
    ds.std.resize(0);
  }
  if (opts.dequant_noise > 0.0) {
    Rng rng(opts.seed, {0x637376});
    ds.x += opts.dequant_noise * rng.normal_matrix(ds.x.rows(), ds.x.cols());
  }
  ds.name = path;
  ds.meta = {{"generator", "csv"},
             {"path", path},
             {"standardize", opts.standardize},
             {"dequant_noise", opts.dequant_noise},
             {"seed", opts.seed}};
  return ds;
}

nlohmann::json dataset_sidecar(const Dataset& ds) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"name", ds.name},
          {"meta", ds.meta},
          {"rows", ds.n()},
          {"dim", ds.dim()},
          {"splits",
           {{"train", {ds.train.begin, ds.train.end}},
            {"val", {ds.val.begin, ds.val.end}},
            {"test", {ds.test.begin, ds.test.end}}}},
          {"kept_columns", ds.kept_columns},
          {"standardization", {{"mean", vec(ds.mean)}, {"std", vec(ds.std)}}}};
}

}  // namespace fif
