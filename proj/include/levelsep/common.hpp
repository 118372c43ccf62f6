// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef LEVELSEP_COMMON_HPP
#define LEVELSEP_COMMON_HPP

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace levelsep {

// Error taxonomy mirrored by the CLI exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. All spectrogram-shaped data in the
// project (F rows x T columns) uses this.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// C = A * B
Mat matmul(const Mat& a, const Mat& b);

// Deterministic uniform helpers on top of a caller-owned engine. The
// standard distributions are implementation-defined, so every random draw
// in the project goes through these.
inline double uniform01(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

template <class Rng>
double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng());
}

template <class Rng>
std::size_t uniform_index(Rng& rng, std::size_t n) {
  // n is small everywhere this is used; modulo bias is immaterial.
  return static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n));
}

// In-place Fisher-Yates driven by the caller's engine (std::shuffle is
// implementation-defined).
template <class T, class Rng>
void deterministic_shuffle(std::vector<T>& xs, Rng& rng) {
  if (xs.size() < 2) return;
  for (std::size_t i = xs.size() - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(xs[i], xs[j]);
  }
}

}  // namespace levelsep

#endif  // LEVELSEP_COMMON_HPP
