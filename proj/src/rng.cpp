#include "fif/rng.hpp"

namespace fif {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::uint64_t derive(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t k = mix64(base);
  for (std::uint64_t p : path) {
    k = mix64(k ^ mix64(p + 0x632be59bd9b4e019ULL));
  }
  return k;
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path)
    : key_(derive(seed, path)), engine_(key_) {}

Rng Rng::split(std::initializer_list<std::uint64_t> path) const {
  Rng child(0);
  child.key_ = derive(key_, path);
  child.engine_.seed(child.key_);
  return child;
}

Eigen::MatrixXd Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = normal();
    }
  }
  return m;
}

}  // namespace fif
