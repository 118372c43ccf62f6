// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "levelsep/common.hpp"

namespace levelsep {

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw NumericalError("matmul: shape mismatch");
  Mat c(a.rows, b.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = &a.v[i * a.cols];
    double* crow = &c.v[i * b.cols];
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = &b.v[k * b.cols];
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

}  // namespace levelsep
