#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "bundleforge/errors.hpp"
#include "bundleforge/kernels.hpp"
#include "bundleforge/rng.hpp"

namespace bundleforge::num {

// Reverse-mode autodiff over dense row-major 2-D tensors. The graph is
// define-by-run: every tracked op appends a node holding its parents and a
// backprop closure; backward() replays nodes in reverse creation order,
// which is a valid topological order because inputs always exist before the
// op that consumes them. Production code instantiates T = float; T = double
// exists for the 64-bit gradient-check replay in the tests.

inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_enabled_flag(); }

struct NoGradGuard {
  NoGradGuard() : prev(grad_enabled_flag()) { grad_enabled_flag() = false; }
  ~NoGradGuard() { grad_enabled_flag() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  bool prev;
};

inline std::uint64_t next_node_id() {
  thread_local std::uint64_t counter = 0;
  return ++counter;
}

template <class T>
class Tensor {
 public:
  struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<T> val;
    std::vector<T> grad;  // empty until backward touches this node
    bool requires_grad = false;
    std::uint64_t id = 0;
    std::vector<Tensor> parents;
    std::function<void(Node&)> backprop;  // reads grad, accumulates parents

    bool is_leaf() const { return !backprop; }
    void ensure_grad() {
      if (grad.empty()) grad.assign(val.size(), T(0));
    }
  };

  Tensor() = default;

  Tensor(int rows, int cols, bool requires_grad = false) {
    if (rows < 0 || cols < 0)
      throw ShapeError("tensor: negative dimension " + shape_str(rows, cols));
    n_ = std::make_shared<Node>();
    n_->rows = rows;
    n_->cols = cols;
    n_->val.assign(static_cast<std::size_t>(rows) * cols, T(0));
    n_->requires_grad = requires_grad;
    n_->id = next_node_id();
  }

  static Tensor from_values(int rows, int cols, std::vector<T> vals,
                            bool requires_grad = false) {
    Tensor t(rows, cols, requires_grad);
    if (vals.size() != t.size())
      throw ShapeError("tensor: value count " + std::to_string(vals.size()) +
                       " does not fill " + shape_str(rows, cols));
    t.n_->val = std::move(vals);
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from_values(1, 1, {v}, requires_grad);
  }

  bool defined() const { return n_ != nullptr; }
  int rows() const { return n_ ? n_->rows : 0; }
  int cols() const { return n_ ? n_->cols : 0; }
  std::size_t size() const { return n_ ? n_->val.size() : 0; }
  std::string shape() const { return shape_str(rows(), cols()); }

  T at(int r, int c) const { return n_->val[static_cast<std::size_t>(r) * cols() + c]; }
  void set(int r, int c, T v) { n_->val[static_cast<std::size_t>(r) * cols() + c] = v; }
  T item() const {
    if (size() != 1) throw ContractError("item: tensor is " + shape() + ", not 1x1");
    return n_->val[0];
  }

  const std::vector<T>& values() const { return n_->val; }
  // Mutating values of a tensor that already participates in a graph is not
  // meaningful; leaves are mutated between graphs (optimizer steps).
  std::vector<T>& raw_values() { return n_->val; }
  const T* row_ptr(int r) const { return n_->val.data() + static_cast<std::size_t>(r) * cols(); }

  bool requires_grad() const { return n_ && n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }
  bool has_grad() const { return n_ && !n_->grad.empty(); }
  const std::vector<T>& grad() const {
    if (!has_grad()) throw ContractError("grad: no gradient populated");
    return n_->grad;
  }
  void zero_grad() {
    if (n_) n_->grad.clear();
  }

  std::uint64_t node_id() const { return n_ ? n_->id : 0; }
  Node* node() const { return n_.get(); }

  static std::string shape_str(int r, int c) {
    return std::to_string(r) + "x" + std::to_string(c);
  }

 private:
  std::shared_ptr<Node> n_;
};

namespace detail {

template <class T>
bool track(std::initializer_list<const Tensor<T>*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor<T>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <class T>
void attach(Tensor<T>& out, std::vector<Tensor<T>> parents,
            std::function<void(typename Tensor<T>::Node&)> backprop) {
  auto* n = out.node();
  n->requires_grad = true;
  n->parents = std::move(parents);
  n->backprop = std::move(backprop);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions do not match, lhs " + a.shape() +
                     " vs rhs " + b.shape());
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<T> out(m, n);
  kern::gemm_nn(out.raw_values().data(), a.values().data(), b.values().data(),
                m, k, n);
  if (detail::track<T>({&a, &b})) {
    detail::attach<T>(out, {a, b}, [m, k, n](typename Tensor<T>::Node& o) {
      const Tensor<T>& pa = o.parents[0];
      const Tensor<T>& pb = o.parents[1];
      if (pa.requires_grad()) {
        pa.node()->ensure_grad();
        kern::gemm_nt(pa.node()->grad.data(), o.grad.data(),
                      pb.values().data(), m, n, k);
      }
      if (pb.requires_grad()) {
        pb.node()->ensure_grad();
        kern::gemm_tn(pb.node()->grad.data(), pa.values().data(),
                      o.grad.data(), m, k, n);
      }
    });
  }
  return out;
}

// a (m x d) times b (n x d) transposed -> (m x n).
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: widths do not match, lhs " + a.shape() +
                     " vs rhs " + b.shape());
  const int m = a.rows(), d = a.cols(), n = b.rows();
  Tensor<T> out(m, n);
  kern::gemm_nt(out.raw_values().data(), a.values().data(), b.values().data(),
                m, d, n);
  if (detail::track<T>({&a, &b})) {
    detail::attach<T>(out, {a, b}, [m, d, n](typename Tensor<T>::Node& o) {
      const Tensor<T>& pa = o.parents[0];
      const Tensor<T>& pb = o.parents[1];
      if (pa.requires_grad()) {
        pa.node()->ensure_grad();
        kern::gemm_nn(pa.node()->grad.data(), o.grad.data(),
                      pb.values().data(), m, n, d);
      }
      if (pb.requires_grad()) {
        pb.node()->ensure_grad();
        kern::gemm_tn(pb.node()->grad.data(), o.grad.data(),
                      pa.values().data(), m, n, d);
      }
    });
  }
  return out;
}

namespace detail {
template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shapes differ, " + a.shape() +
                     " vs " + b.shape());
}
}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<T> out(a.rows(), a.cols());
  kern::add(out.raw_values().data(), a.values().data(), b.values().data(),
            a.size());
  if (detail::track<T>({&a, &b})) {
    detail::attach<T>(out, {a, b}, [](typename Tensor<T>::Node& o) {
      for (int side = 0; side < 2; ++side) {
        const Tensor<T>& p = o.parents[side];
        if (!p.requires_grad()) continue;
        p.node()->ensure_grad();
        kern::axpy(p.node()->grad.data(), T(1), o.grad.data(), o.grad.size());
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<T> out(a.rows(), a.cols());
  kern::sub(out.raw_values().data(), a.values().data(), b.values().data(),
            a.size());
  if (detail::track<T>({&a, &b})) {
    detail::attach<T>(out, {a, b}, [](typename Tensor<T>::Node& o) {
      const Tensor<T>& pa = o.parents[0];
      const Tensor<T>& pb = o.parents[1];
      if (pa.requires_grad()) {
        pa.node()->ensure_grad();
        kern::axpy(pa.node()->grad.data(), T(1), o.grad.data(), o.grad.size());
      }
      if (pb.requires_grad()) {
        pb.node()->ensure_grad();
        kern::axpy(pb.node()->grad.data(), T(-1), o.grad.data(), o.grad.size());
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<T> out(a.rows(), a.cols());
  kern::mul(out.raw_values().data(), a.values().data(), b.values().data(),
            a.size());
  if (detail::track<T>({&a, &b})) {
    detail::attach<T>(out, {a, b}, [](typename Tensor<T>::Node& o) {
      const Tensor<T>& pa = o.parents[0];
      const Tensor<T>& pb = o.parents[1];
      if (pa.requires_grad()) {
        pa.node()->ensure_grad();
        T* g = pa.node()->grad.data();
        const T* ob = pb.values().data();
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * ob[i];
      }
      if (pb.requires_grad()) {
        pb.node()->ensure_grad();
        T* g = pb.node()->grad.data();
        const T* oa = pa.values().data();
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * oa[i];
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  Tensor<T> out(a.rows(), a.cols());
  kern::scale(out.raw_values().data(), c, a.values().data(), a.size());
  if (detail::track<T>({&a})) {
    detail::attach<T>(out, {a}, [c](typename Tensor<T>::Node& o) {
      const Tensor<T>& pa = o.parents[0];
      if (!pa.requires_grad()) return;
      pa.node()->ensure_grad();
      kern::axpy(pa.node()->grad.data(), c, o.grad.data(), o.grad.size());
    });
  }
  return out;
}

template <class T>
Tensor<T> mean_rows(const Tensor<T>& a) {
  if (a.rows() < 1) throw ContractError("mean_rows: empty input " + a.shape());
  const int r = a.rows(), d = a.cols();
  Tensor<T> out(1, d);
  T* o = out.raw_values().data();
  for (int i = 0; i < r; ++i) kern::axpy(o, T(1), a.row_ptr(i), d);
  kern::div_const(o, o, T(r), d);
  if (detail::track<T>({&a})) {
    detail::attach<T>(out, {a}, [r, d](typename Tensor<T>::Node& o2) {
      const Tensor<T>& pa = o2.parents[0];
      if (!pa.requires_grad()) return;
      pa.node()->ensure_grad();
      std::vector<T> gr(d);
      kern::div_const(gr.data(), o2.grad.data(), T(r), d);
      for (int i = 0; i < r; ++i)
        kern::axpy(pa.node()->grad.data() + static_cast<std::size_t>(i) * d,
                   T(1), gr.data(), d);
    });
  }
  return out;
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& vs) {
  if (vs.empty()) throw ContractError("concat_rows: no inputs");
  const int d = vs[0].cols();
  int total = 0;
  for (const auto& v : vs) {
    if (v.cols() != d)
      throw ShapeError("concat_rows: width mismatch, " + vs[0].shape() +
                       " vs " + v.shape());
    total += v.rows();
  }
  Tensor<T> out(total, d);
  std::vector<int> offsets(vs.size());
  int row = 0;
  for (std::size_t s = 0; s < vs.size(); ++s) {
    offsets[s] = row;
    std::copy(vs[s].values().begin(), vs[s].values().end(),
              out.raw_values().begin() + static_cast<std::size_t>(row) * d);
    row += vs[s].rows();
  }
  bool tracked = false;
  if (grad_enabled())
    for (const auto& v : vs)
      if (v.requires_grad()) tracked = true;
  if (tracked) {
    detail::attach<T>(out, vs, [offsets, d](typename Tensor<T>::Node& o) {
      for (std::size_t s = 0; s < o.parents.size(); ++s) {
        const Tensor<T>& p = o.parents[s];
        if (!p.requires_grad()) continue;
        p.node()->ensure_grad();
        const T* g = o.grad.data() + static_cast<std::size_t>(offsets[s]) * d;
        kern::axpy(p.node()->grad.data(), T(1), g, p.size());
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> take_rows(const Tensor<T>& a, const std::vector<int>& idx) {
  const int d = a.cols();
  for (int i : idx)
    if (i < 0 || i >= a.rows())
      throw ContractError("take_rows: index " + std::to_string(i) +
                          " out of range for " + a.shape());
  Tensor<T> out(static_cast<int>(idx.size()), d);
  for (std::size_t t = 0; t < idx.size(); ++t)
    std::copy(a.row_ptr(idx[t]), a.row_ptr(idx[t]) + d,
              out.raw_values().begin() + t * d);
  if (detail::track<T>({&a})) {
    detail::attach<T>(out, {a}, [idx, d](typename Tensor<T>::Node& o) {
      const Tensor<T>& pa = o.parents[0];
      if (!pa.requires_grad()) return;
      pa.node()->ensure_grad();
      for (std::size_t t = 0; t < idx.size(); ++t)
        kern::axpy(pa.node()->grad.data() + static_cast<std::size_t>(idx[t]) * d,
                   T(1), o.grad.data() + t * d, d);
    });
  }
  return out;
}

template <class T>
Tensor<T> row(const Tensor<T>& a, int i) {
  return take_rows(a, std::vector<int>{i});
}

// Row-wise softmax with per-row max subtraction.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  const int r = x.rows(), n = x.cols();
  if (n < 1 || r < 1) throw ContractError("softmax_rows: empty input " + x.shape());
  Tensor<T> out(r, n);
  for (int i = 0; i < r; ++i) {
    const T* xi = x.row_ptr(i);
    T* oi = out.raw_values().data() + static_cast<std::size_t>(i) * n;
    const T m = kern::maxv(xi, n);
    for (int j = 0; j < n; ++j) oi[j] = std::exp(xi[j] - m);
    const T s = kern::sum(oi, static_cast<std::size_t>(n));
    kern::div_const(oi, oi, s, n);
  }
  if (detail::track<T>({&x})) {
    detail::attach<T>(out, {x}, [r, n](typename Tensor<T>::Node& o) {
      const Tensor<T>& px = o.parents[0];
      if (!px.requires_grad()) return;
      px.node()->ensure_grad();
      for (int i = 0; i < r; ++i) {
        const T* y = o.val.data() + static_cast<std::size_t>(i) * n;
        const T* g = o.grad.data() + static_cast<std::size_t>(i) * n;
        T* gx = px.node()->grad.data() + static_cast<std::size_t>(i) * n;
        const T dotgy = kern::dot(g, y, static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) gx[j] += y[j] * (g[j] - dotgy);
      }
    });
  }
  return out;
}

// Row-wise log-softmax in the stable form x - max - log(sum exp(x - max)).
template <class T>
Tensor<T> log_softmax_rows(const Tensor<T>& x) {
  const int r = x.rows(), n = x.cols();
  if (n < 1 || r < 1)
    throw ContractError("log_softmax_rows: empty input " + x.shape());
  Tensor<T> out(r, n);
  std::vector<T> e(static_cast<std::size_t>(n));
  for (int i = 0; i < r; ++i) {
    const T* xi = x.row_ptr(i);
    T* oi = out.raw_values().data() + static_cast<std::size_t>(i) * n;
    const T m = kern::maxv(xi, n);
    for (int j = 0; j < n; ++j) e[j] = std::exp(xi[j] - m);
    const T s = kern::sum(e.data(), static_cast<std::size_t>(n));
    const T c = m + std::log(s);
    kern::sub_const(oi, xi, c, n);
  }
  if (detail::track<T>({&x})) {
    detail::attach<T>(out, {x}, [r, n](typename Tensor<T>::Node& o) {
      const Tensor<T>& px = o.parents[0];
      if (!px.requires_grad()) return;
      px.node()->ensure_grad();
      for (int i = 0; i < r; ++i) {
        const T* lo = o.val.data() + static_cast<std::size_t>(i) * n;
        const T* g = o.grad.data() + static_cast<std::size_t>(i) * n;
        T* gx = px.node()->grad.data() + static_cast<std::size_t>(i) * n;
        const T gs = kern::sum(g, static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) gx[j] += g[j] - std::exp(lo[j]) * gs;
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  Tensor<T> out(1, 1);
  out.raw_values()[0] = kern::sum(a.values().data(), a.size());
  if (detail::track<T>({&a})) {
    detail::attach<T>(out, {a}, [](typename Tensor<T>::Node& o) {
      const Tensor<T>& pa = o.parents[0];
      if (!pa.requires_grad()) return;
      pa.node()->ensure_grad();
      const T g = o.grad[0];
      T* gx = pa.node()->grad.data();
      for (std::size_t i = 0; i < pa.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

template <class T>
Tensor<T> sumsq(const Tensor<T>& a) {
  Tensor<T> out(1, 1);
  out.raw_values()[0] = kern::dot(a.values().data(), a.values().data(), a.size());
  if (detail::track<T>({&a})) {
    detail::attach<T>(out, {a}, [](typename Tensor<T>::Node& o) {
      const Tensor<T>& pa = o.parents[0];
      if (!pa.requires_grad()) return;
      pa.node()->ensure_grad();
      const T g2 = T(2) * o.grad[0];
      T* gx = pa.node()->grad.data();
      const T* x = pa.values().data();
      for (std::size_t i = 0; i < pa.size(); ++i) gx[i] += g2 * x[i];
    });
  }
  return out;
}

namespace detail {
template <class T>
void check_normalized_rows(const Tensor<T>& t, bool is_log, const char* name) {
  for (int i = 0; i < t.rows(); ++i) {
    T s = 0;
    const T* p = t.row_ptr(i);
    for (int j = 0; j < t.cols(); ++j) s += is_log ? std::exp(p[j]) : p[j];
    if (std::abs(s - T(1)) > T(1e-5))
      throw ContractError(std::string("kl_div: ") + name + " row " +
                          std::to_string(i) + " sums to " + std::to_string(double(s)) +
                          ", not 1 within 1e-5");
  }
}
}  // namespace detail

// KL divergence sum_i q_i (ln q_i - log_p_i), with 0 ln 0 := 0, summed over
// rows when given matrices. Gradient flows to log_p only; q is a constant
// target by contract.
template <class T>
Tensor<T> kl_div(const Tensor<T>& log_p, const Tensor<T>& q) {
  detail::check_same_shape(log_p, q, "kl_div");
  detail::check_normalized_rows(log_p, true, "log_p");
  detail::check_normalized_rows(q, false, "q");
  T total = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const T qi = q.values()[i];
    if (qi < 0)
      throw ContractError("kl_div: negative probability in q");
    if (qi > 0) total += qi * (std::log(qi) - log_p.values()[i]);
  }
  Tensor<T> out = Tensor<T>::scalar(total);
  if (detail::track<T>({&log_p})) {
    detail::attach<T>(out, {log_p, q}, [](typename Tensor<T>::Node& o) {
      const Tensor<T>& plp = o.parents[0];
      const Tensor<T>& pq = o.parents[1];
      if (!plp.requires_grad()) return;
      plp.node()->ensure_grad();
      const T g = o.grad[0];
      T* gx = plp.node()->grad.data();
      const T* qv = pq.values().data();
      for (std::size_t i = 0; i < pq.size(); ++i) gx[i] -= g * qv[i];
    });
  }
  return out;
}

// sum_i exp(log_p_i) (log_p_i - log_q_i): KL of the tracked distribution
// from a constant reference given both sides in log space. Used by the
// literal-notation distillation direction.
template <class T>
Tensor<T> kl_div_from_log(const Tensor<T>& log_p, const Tensor<T>& log_q) {
  detail::check_same_shape(log_p, log_q, "kl_div_from_log");
  detail::check_normalized_rows(log_p, true, "log_p");
  detail::check_normalized_rows(log_q, true, "log_q");
  T total = 0;
  for (std::size_t i = 0; i < log_p.size(); ++i)
    total += std::exp(log_p.values()[i]) * (log_p.values()[i] - log_q.values()[i]);
  Tensor<T> out = Tensor<T>::scalar(total);
  if (detail::track<T>({&log_p})) {
    detail::attach<T>(out, {log_p, log_q}, [](typename Tensor<T>::Node& o) {
      const Tensor<T>& plp = o.parents[0];
      const Tensor<T>& plq = o.parents[1];
      if (!plp.requires_grad()) return;
      plp.node()->ensure_grad();
      const T g = o.grad[0];
      T* gx = plp.node()->grad.data();
      for (std::size_t i = 0; i < plp.size(); ++i) {
        const T lp = plp.values()[i];
        gx[i] += g * std::exp(lp) * (lp - plq.values()[i] + T(1));
      }
    });
  }
  return out;
}

// Elementwise ln(sigmoid(x)), stable on both tails.
template <class T>
Tensor<T> logsigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x.values()[i];
    out.raw_values()[i] =
        v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
  }
  if (detail::track<T>({&x})) {
    detail::attach<T>(out, {x}, [](typename Tensor<T>::Node& o) {
      const Tensor<T>& px = o.parents[0];
      if (!px.requires_grad()) return;
      px.node()->ensure_grad();
      T* gx = px.node()->grad.data();
      for (std::size_t i = 0; i < px.size(); ++i) {
        const T v = px.values()[i];
        T s;  // sigmoid(-v) = 1 / (1 + exp(v))
        if (v >= 0) {
          const T e = std::exp(-v);
          s = e / (T(1) + e);
        } else {
          s = T(1) / (T(1) + std::exp(v));
        }
        gx[i] += o.grad[i] * s;
      }
    });
  }
  return out;
}

// Per-row inner products of two equally shaped matrices -> m x 1.
template <class T>
Tensor<T> rowwise_dot(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "rowwise_dot");
  const int m = a.rows(), d = a.cols();
  Tensor<T> out(m, 1);
  for (int i = 0; i < m; ++i)
    out.raw_values()[i] = kern::dot(a.row_ptr(i), b.row_ptr(i), d);
  if (detail::track<T>({&a, &b})) {
    detail::attach<T>(out, {a, b}, [m, d](typename Tensor<T>::Node& o) {
      const Tensor<T>& pa = o.parents[0];
      const Tensor<T>& pb = o.parents[1];
      for (int side = 0; side < 2; ++side) {
        const Tensor<T>& self = side == 0 ? pa : pb;
        const Tensor<T>& other = side == 0 ? pb : pa;
        if (!self.requires_grad()) continue;
        self.node()->ensure_grad();
        for (int i = 0; i < m; ++i)
          kern::axpy(self.node()->grad.data() + static_cast<std::size_t>(i) * d,
                     o.grad[i], other.row_ptr(i), d);
      }
    });
  }
  return out;
}

// Cosine similarity of two 1 x d vectors. A zero-norm input yields
// similarity 0 with a warning and no gradient.
template <class T>
Tensor<T> cosine_sim(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "cosine_sim");
  if (a.rows() != 1)
    throw ShapeError("cosine_sim: expected row vectors, got " + a.shape());
  const std::size_t d = a.size();
  const T na = std::sqrt(kern::dot(a.values().data(), a.values().data(), d));
  const T nb = std::sqrt(kern::dot(b.values().data(), b.values().data(), d));
  if (na == T(0) || nb == T(0)) {
    std::cerr << "warning: cosine_sim on zero-norm vector, similarity set to 0\n";
    return Tensor<T>::scalar(T(0));
  }
  const T ab = kern::dot(a.values().data(), b.values().data(), d);
  const T cosv = ab / (na * nb);
  Tensor<T> out = Tensor<T>::scalar(cosv);
  if (detail::track<T>({&a, &b})) {
    detail::attach<T>(out, {a, b}, [na, nb, ab, cosv](typename Tensor<T>::Node& o) {
      const Tensor<T>& pa = o.parents[0];
      const Tensor<T>& pb = o.parents[1];
      const T g = o.grad[0];
      if (pa.requires_grad()) {
        pa.node()->ensure_grad();
        T* gx = pa.node()->grad.data();
        const T* av = pa.values().data();
        const T* bv = pb.values().data();
        const T inv = T(1) / (na * nb);
        const T k = cosv / (na * na);
        for (std::size_t i = 0; i < pa.size(); ++i)
          gx[i] += g * (bv[i] * inv - k * av[i]);
      }
      if (pb.requires_grad()) {
        pb.node()->ensure_grad();
        T* gx = pb.node()->grad.data();
        const T* av = pa.values().data();
        const T* bv = pb.values().data();
        const T inv = T(1) / (na * nb);
        const T k = cosv / (nb * nb);
        for (std::size_t i = 0; i < pb.size(); ++i)
          gx[i] += g * (av[i] * inv - k * bv[i]);
      }
    });
  }
  return out;
}

// Compressed sparse rows over a square node set; used for graph propagation.
template <class T>
struct Csr {
  int n = 0;
  std::vector<int> row_ptr;  // size n + 1
  std::vector<int> col;
  std::vector<T> val;
};

// out = A * x for a square sparse A (n x n) and dense x (n x d). The
// backward pass reuses A, so A must be symmetric for gradients to be
// correct; the normalized bipartite adjacency used here is.
template <class T>
Tensor<T> spmm(const std::shared_ptr<const Csr<T>>& a, const Tensor<T>& x) {
  if (x.rows() != a->n)
    throw ShapeError("spmm: adjacency is " + std::to_string(a->n) +
                     " nodes but input is " + x.shape());
  const int d = x.cols();
  Tensor<T> out(a->n, d);
  T* o = out.raw_values().data();
  for (int i = 0; i < a->n; ++i)
    for (int e = a->row_ptr[i]; e < a->row_ptr[i + 1]; ++e)
      kern::axpy(o + static_cast<std::size_t>(i) * d, a->val[e],
                 x.row_ptr(a->col[e]), d);
  if (detail::track<T>({&x})) {
    detail::attach<T>(out, {x}, [a, d](typename Tensor<T>::Node& o2) {
      const Tensor<T>& px = o2.parents[0];
      if (!px.requires_grad()) return;
      px.node()->ensure_grad();
      T* gx = px.node()->grad.data();
      for (int i = 0; i < a->n; ++i)
        for (int e = a->row_ptr[i]; e < a->row_ptr[i + 1]; ++e)
          kern::axpy(gx + static_cast<std::size_t>(a->col[e]) * d, a->val[e],
                     o2.grad.data() + static_cast<std::size_t>(i) * d, d);
    });
  }
  return out;
}

// Copy of the values with no graph history.
template <class T>
Tensor<T> detach(const Tensor<T>& a) {
  return Tensor<T>::from_values(a.rows(), a.cols(), a.values());
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <class T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward: loss must be a 1x1 tensor, got " +
                        loss.shape());
  using Node = typename Tensor<T>::Node;
  std::vector<Node*> nodes;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.node()};
  seen.insert(loss.node());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const Tensor<T>& p : n->parents)
      if (seen.insert(p.node()).second) stack.push_back(p.node());
  }
  // Interior gradients are scratch per call; leaves accumulate across calls.
  for (Node* n : nodes)
    if (!n->is_leaf()) n->grad.clear();
  std::sort(nodes.begin(), nodes.end(),
            [](const Node* a, const Node* b) { return a->id > b->id; });
  loss.node()->ensure_grad();
  loss.node()->grad[0] += T(1);
  for (Node* n : nodes)
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

// Uniform on +-sqrt(6 / (rows + cols)), bit-reproducible per seed.
template <class T>
Tensor<T> xavier_init(int rows, int cols, std::uint64_t seed) {
  if (rows < 1 || cols < 1)
    throw ContractError("xavier_init: dimensions must be positive, got " +
                        Tensor<T>::shape_str(rows, cols));
  Rng rng(seed);
  const double bound = std::sqrt(6.0 / (rows + cols));
  Tensor<T> t(rows, cols, true);
  for (auto& v : t.raw_values())
    v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  return t;
}

}  // namespace bundleforge::num
