#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace chronokey {

// Small dense row-major matrix of doubles. All CTD math runs in 64-bit so
// the finite-difference gradient checks have headroom.
struct Mat {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(size_t r, size_t c) { return data[r * cols + c]; }
  double operator()(size_t r, size_t c) const { return data[r * cols + c]; }

  double* row(size_t r) { return data.data() + r * cols; }
  const double* row(size_t r) const { return data.data() + r * cols; }

  size_t size() const { return data.size(); }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// out = a * b
inline Mat matmul(const Mat& a, const Mat& b) {
  assert(a.cols == b.rows);
  Mat out(a.rows, b.cols);
  for (size_t i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* oi = out.row(i);
    for (size_t k = 0; k < a.cols; ++k) {
      double v = ai[k];
      if (v == 0.0) continue;
      const double* bk = b.row(k);
      for (size_t j = 0; j < b.cols; ++j) oi[j] += v * bk[j];
    }
  }
  return out;
}

// out = a * b^T
inline Mat matmul_nt(const Mat& a, const Mat& b) {
  assert(a.cols == b.cols);
  Mat out(a.rows, b.rows);
  for (size_t i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    for (size_t j = 0; j < b.rows; ++j) {
      const double* bj = b.row(j);
      double s = 0.0;
      for (size_t k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
      out(i, j) = s;
    }
  }
  return out;
}

// out = a^T * b
inline Mat matmul_tn(const Mat& a, const Mat& b) {
  assert(a.rows == b.rows);
  Mat out(a.cols, b.cols);
  for (size_t k = 0; k < a.rows; ++k) {
    const double* ak = a.row(k);
    const double* bk = b.row(k);
    for (size_t i = 0; i < a.cols; ++i) {
      double v = ak[i];
      if (v == 0.0) continue;
      double* oi = out.row(i);
      for (size_t j = 0; j < b.cols; ++j) oi[j] += v * bk[j];
    }
  }
  return out;
}

inline void add_inplace(Mat& a, const Mat& b, double scale = 1.0) {
  assert(a.rows == b.rows && a.cols == b.cols);
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += scale * b.data[i];
}

// Row-wise softmax in place.
inline void softmax_rows(Mat& m) {
  for (size_t i = 0; i < m.rows; ++i) {
    double* r = m.row(i);
    double mx = r[0];
    for (size_t j = 1; j < m.cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (size_t j = 0; j < m.cols; ++j) {
      r[j] = std::exp(r[j] - mx);
      sum += r[j];
    }
    for (size_t j = 0; j < m.cols; ++j) r[j] /= sum;
  }
}

}  // namespace chronokey
