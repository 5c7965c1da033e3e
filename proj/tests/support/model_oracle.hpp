#pragma once

// Independent plain-double reference of the attention encoder equations,
// used as the hand-computation oracle for teacher/student forward tests.
// No tensors, no autodiff: just the formulas.

#include <cmath>
#include <vector>

namespace testsupport {

using Mat = std::vector<std::vector<double>>;

inline Mat mat_mul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline std::vector<double> softmax_vec(const std::vector<double>& x) {
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  std::vector<double> e(x.size());
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(x[i] - m);
    s += e[i];
  }
  for (auto& v : e) v /= s;
  return e;
}

// The two-line attention recurrence: A = (1/sqrt(d)) HWk (HWq)^T,
// H <- softmax_rows(A) H, repeated `layers` times.
inline Mat attend(Mat h, const Mat& wk, const Mat& wq, int layers) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(h[0].size()));
  for (int l = 0; l < layers; ++l) {
    const Mat hk = mat_mul(h, wk);
    const Mat hq = mat_mul(h, wq);
    Mat scores(h.size(), std::vector<double>(h.size(), 0.0));
    for (std::size_t i = 0; i < h.size(); ++i)
      for (std::size_t j = 0; j < h.size(); ++j) {
        double acc = 0;
        for (std::size_t d = 0; d < h[0].size(); ++d) acc += hk[i][d] * hq[j][d];
        scores[i][j] = acc * inv_sqrt_d;
      }
    Mat next(h.size(), std::vector<double>(h[0].size(), 0.0));
    for (std::size_t i = 0; i < h.size(); ++i) {
      const auto w = softmax_vec(scores[i]);
      for (std::size_t j = 0; j < h.size(); ++j)
        for (std::size_t d = 0; d < h[0].size(); ++d) next[i][d] += w[j] * h[j][d];
    }
    h = next;
  }
  return h;
}

inline std::vector<double> mean_rows(const Mat& h) {
  std::vector<double> out(h[0].size(), 0.0);
  for (const auto& row : h)
    for (std::size_t d = 0; d < row.size(); ++d) out[d] += row[d];
  for (auto& v : out) v /= static_cast<double>(h.size());
  return out;
}

inline std::vector<double> encode_rows(const Mat& rows, const Mat& wk,
                                       const Mat& wq, int layers) {
  return mean_rows(attend(rows, wk, wq, layers));
}

inline std::vector<double> score_against(const std::vector<double>& e,
                                         const Mat& items) {
  std::vector<double> out(items.size(), 0.0);
  for (std::size_t i = 0; i < items.size(); ++i)
    for (std::size_t d = 0; d < e.size(); ++d) out[i] += e[d] * items[i][d];
  return out;
}

}  // namespace testsupport
