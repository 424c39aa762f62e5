#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecgan {

// Row-major so that one sample is one contiguous row; matches the checkpoint layout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using Rng = std::mt19937_64;

/// Thrown for malformed arguments: dimension mismatches, out-of-range labels,
/// invalid distributions, unknown names.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when reading or writing an artifact fails.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown by the trainer when a loss becomes non-finite.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::uint64_t batch_seed, std::int64_t step)
      : std::runtime_error(what), batch_seed_(batch_seed), step_(step) {}

  std::uint64_t batch_seed() const noexcept { return batch_seed_; }
  std::int64_t step() const noexcept { return step_; }

 private:
  std::uint64_t batch_seed_;
  std::int64_t step_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidInput(msg);
}

/// Derives an independent stream seed from a base seed and a tag path.
/// SplitMix64 finalizer applied per component.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (auto t : tags) h = mix(h ^ mix(t));
  return h;
}

inline Matrix randn(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * nd(rng);
  return m;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace ecgan
