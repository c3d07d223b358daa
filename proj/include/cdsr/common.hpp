#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace cdsr {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Rng = std::mt19937_64;

enum class Domain : uint8_t { X = 0, Y = 1 };

inline char domain_letter(Domain d) { return d == Domain::X ? 'X' : 'Y'; }

inline Domain other_domain(Domain d) {
  return d == Domain::X ? Domain::Y : Domain::X;
}

// Thrown for unrecoverable input/shape problems; the CLI maps it to exit codes.
class FatalError : public std::runtime_error {
 public:
  explicit FatalError(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw FatalError(msg); }

#define CDSR_CHECK(cond, msg)          \
  do {                                 \
    if (!(cond)) ::cdsr::fail((msg));  \
  } while (0)

// splitmix64 finalizer; used to derive independent seed streams so that
// every stochastic component is a pure function of (run seed, stream id).
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Standard-normal matrix draw with a fixed traversal order.
inline Mat randn(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

// Zero-mean normal draw with magnitudes beyond three standard deviations
// redrawn; used for embedding-table initialisation.
inline Mat trunc_normal(int rows, int cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      double v = dist(rng);
      while (std::abs(v) > 3.0 * stddev) v = dist(rng);
      m(i, j) = v;
    }
  return m;
}

}  // namespace cdsr
