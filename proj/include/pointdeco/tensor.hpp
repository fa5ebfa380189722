#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pointdeco/common.hpp"

namespace pointdeco {

// Dense row-major matrix of doubles. All network math runs in double;
// persistence casts through float (see checkpoint format in io.hpp).
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> d;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), d(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

  double& at(int r, int c) { return d[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return d[static_cast<std::size_t>(r) * cols + c]; }

  std::size_t size() const { return d.size(); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  void zero() { std::fill(d.begin(), d.end(), 0.0); }
};

inline bool operator==(const Mat& a, const Mat& b) {
  return a.rows == b.rows && a.cols == b.cols && a.d == b.d;
}

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

// Fills with uniform values in [-bound, bound], rounded through float so the
// matrix survives a 32-bit checkpoint bit-exactly.
inline Mat random_mat(int rows, int cols, double bound, Rng& rng) {
  Mat m(rows, cols);
  for (auto& v : m.d) v = to_f32(uniform_in(rng, -bound, bound));
  return m;
}

}  // namespace pointdeco
