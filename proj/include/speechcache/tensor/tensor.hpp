/* Copyright 2026 The SpeechCache Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SPEECHCACHE_TENSOR_TENSOR_HPP_
#define SPEECHCACHE_TENSOR_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "speechcache/error.hpp"
#include "speechcache/types.hpp"

namespace speechcache::ad {

namespace detail {

inline thread_local bool grad_enabled = true;

template <typename S>
struct Node {
  std::vector<std::size_t> shape;
  std::vector<S> value;
  std::vector<S> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Pushes this node's grad into its parents' grads.
  std::function<void(Node&)> backward;

  std::size_t numel() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

inline std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace detail

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dense row-major tensor handle. Copies share storage (and graph position);
// use clone() for a deep copy.
template <typename S>
class Tensor {
 public:
  using Node = detail::Node<S>;

  Tensor() = default;

  static Tensor from(std::vector<std::size_t> shape, std::vector<S> data,
                     bool requires_grad = false) {
    SC_CHECK(detail::product(shape) == data.size(), ErrorCode::kShapeError,
             "payload does not match shape " + detail::shape_str(shape));
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    const std::size_t n = detail::product(shape);
    return from(std::move(shape), std::vector<S>(n, S(0)), requires_grad);
  }

  static Tensor scalar(S v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  template <typename Derived>
  static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m, bool requires_grad = false) {
    std::vector<S> data(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        data[static_cast<std::size_t>(r * m.cols() + c)] = static_cast<S>(m(r, c));
      }
    }
    return from({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                std::move(data), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->numel(); }
  // Matrix view: 1-D tensors are a single row.
  std::size_t rows() const { return shape().size() == 1 ? 1 : shape()[0]; }
  std::size_t cols() const { return shape().back(); }

  std::span<const S> data() const { return node_->value; }
  // Direct write access, for optimizers and initialization. Not recorded.
  std::span<S> mutable_data() { return node_->value; }
  std::span<const S> grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), S(0)); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  S item() const {
    SC_CHECK(numel() == 1, ErrorCode::kShapeError, "item() on a non-scalar tensor");
    return node_->value[0];
  }
  S at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  Eigen::Map<const RowMatrix<S>> matrix() const {
    return {node_->value.data(), static_cast<Eigen::Index>(rows()),
            static_cast<Eigen::Index>(cols())};
  }

  Tensor detach() const { return from(shape(), node_->value, false); }
  Tensor clone() const { return from(shape(), node_->value, requires_grad()); }

  std::shared_ptr<Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

template <typename S>
using MatMap = Eigen::Map<RowMatrix<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMatrix<S>>;

template <typename S>
MatMap<S> as_mat(std::vector<S>& v, std::size_t r, std::size_t c) {
  return {v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}
template <typename S>
ConstMatMap<S> as_mat(const std::vector<S>& v, std::size_t r, std::size_t c) {
  return {v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}

// Wraps a computed value as an op output; records the graph edge when any
// input requires grad and recording is enabled.
template <typename S>
Tensor<S> make_result(std::vector<std::size_t> shape, std::vector<S> value,
                      std::vector<std::shared_ptr<Node<S>>> parents,
                      std::function<void(Node<S>&)> backward, const char* op) {
  for (const S& v : value) {
    SC_CHECK(std::isfinite(v), ErrorCode::kNumeric,
             std::string("non-finite value produced by ") + op);
  }
  auto node = std::make_shared<Node<S>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  const bool needs = grad_enabled &&
                     std::any_of(parents.begin(), parents.end(),
                                 [](const auto& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor<S>(std::move(node));
}

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  SC_CHECK(a.shape() == b.shape(), ErrorCode::kShapeError,
           std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
               shape_str(b.shape()));
}

template <typename S, typename F>
Tensor<S> unary(const Tensor<S>& a, F f, const char* op,
                std::function<void(Node<S>&)> backward) {
  std::vector<S> out(a.numel());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result<S>(a.shape(), std::move(out), {a.node()}, std::move(backward), op);
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<S> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_result<S>(a.shape(), std::move(out), {a.node(), b.node()},
                                [](detail::Node<S>& self) {
                                  for (auto& p : self.parents) {
                                    if (!p->requires_grad) continue;
                                    p->ensure_grad();
                                    for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
                                  }
                                },
                                "add");
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<S> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return detail::make_result<S>(a.shape(), std::move(out), {a.node(), b.node()},
                                [](detail::Node<S>& self) {
                                  for (std::size_t k = 0; k < 2; ++k) {
                                    auto& p = self.parents[k];
                                    if (!p->requires_grad) continue;
                                    p->ensure_grad();
                                    const S sign = k == 0 ? S(1) : S(-1);
                                    for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += sign * self.grad[i];
                                  }
                                },
                                "sub");
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<S> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_result<S>(a.shape(), std::move(out), {a.node(), b.node()},
                                [](detail::Node<S>& self) {
                                  auto& pa = self.parents[0];
                                  auto& pb = self.parents[1];
                                  if (pa->requires_grad) {
                                    pa->ensure_grad();
                                    for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->value[i];
                                  }
                                  if (pb->requires_grad) {
                                    pb->ensure_grad();
                                    for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->value[i];
                                  }
                                },
                                "mul");
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
  return detail::unary<S>(a, [factor](S v) { return v * factor; }, "scale",
                          [factor](detail::Node<S>& self) {
                            auto& p = self.parents[0];
                            p->ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += factor * self.grad[i];
                          });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  return detail::unary<S>(a, [](S v) { return S(1) / (S(1) + std::exp(-v)); }, "sigmoid",
                          [](detail::Node<S>& self) {
                            auto& p = self.parents[0];
                            p->ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                              const S y = self.value[i];
                              p->grad[i] += self.grad[i] * y * (S(1) - y);
                            }
                          });
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& a) {
  return detail::unary<S>(a, [](S v) { return std::tanh(v); }, "tanh",
                          [](detail::Node<S>& self) {
                            auto& p = self.parents[0];
                            p->ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                              const S y = self.value[i];
                              p->grad[i] += self.grad[i] * (S(1) - y * y);
                            }
                          });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  return detail::unary<S>(a, [](S v) { return v > S(0) ? v : S(0); }, "relu",
                          [](detail::Node<S>& self) {
                            auto& p = self.parents[0];
                            p->ensure_grad();
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                              if (p->value[i] > S(0)) p->grad[i] += self.grad[i];
                            }
                          });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  S total = 0;
  for (S v : a.data()) total += v;
  return detail::make_result<S>({1}, {total}, {a.node()},
                                [](detail::Node<S>& self) {
                                  auto& p = self.parents[0];
                                  p->ensure_grad();
                                  for (auto& g : p->grad) g += self.grad[0];
                                },
                                "sum");
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  return scale(sum(a), S(1) / static_cast<S>(a.numel()));
}

template <typename S>
Tensor<S> dot(const Tensor<S>& a, const Tensor<S>& b) {
  SC_CHECK(a.numel() == b.numel(), ErrorCode::kShapeError, "dot: size mismatch");
  S total = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) total += a.data()[i] * b.data()[i];
  return detail::make_result<S>({1}, {total}, {a.node(), b.node()},
                                [](detail::Node<S>& self) {
                                  auto& pa = self.parents[0];
                                  auto& pb = self.parents[1];
                                  const S g = self.grad[0];
                                  if (pa->requires_grad) {
                                    pa->ensure_grad();
                                    for (std::size_t i = 0; i < pa->value.size(); ++i) pa->grad[i] += g * pb->value[i];
                                  }
                                  if (pb->requires_grad) {
                                    pb->ensure_grad();
                                    for (std::size_t i = 0; i < pb->value.size(); ++i) pb->grad[i] += g * pa->value[i];
                                  }
                                },
                                "dot");
}

// (m x k) . (k x n)
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  SC_CHECK(b.rows() == k, ErrorCode::kShapeError,
           "matmul: inner dimensions differ " + detail::shape_str(a.shape()) + " x " +
               detail::shape_str(b.shape()));
  std::vector<S> out(m * n);
  detail::as_mat(out, m, n).noalias() = a.matrix() * b.matrix();
  return detail::make_result<S>({m, n}, std::move(out), {a.node(), b.node()},
                                [m, k, n](detail::Node<S>& self) {
                                  auto& pa = self.parents[0];
                                  auto& pb = self.parents[1];
                                  const auto g = detail::as_mat(std::as_const(self.grad), m, n);
                                  if (pa->requires_grad) {
                                    pa->ensure_grad();
                                    detail::as_mat(pa->grad, m, k).noalias() +=
                                        g * detail::as_mat(std::as_const(pb->value), k, n).transpose();
                                  }
                                  if (pb->requires_grad) {
                                    pb->ensure_grad();
                                    detail::as_mat(pb->grad, k, n).noalias() +=
                                        detail::as_mat(std::as_const(pa->value), m, k).transpose() * g;
                                  }
                                },
                                "matmul");
}

// x (T x in) . W^T (in x out) + bias (out); bias may be undefined.
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  const std::size_t t = x.rows(), in = x.cols(), out_dim = weight.rows();
  SC_CHECK(weight.cols() == in, ErrorCode::kShapeError,
           "linear: input dim " + std::to_string(in) + " vs weight " +
               detail::shape_str(weight.shape()));
  SC_CHECK(!bias.defined() || bias.numel() == out_dim, ErrorCode::kShapeError,
           "linear: bias size mismatch");
  std::vector<S> out(t * out_dim);
  auto o = detail::as_mat(out, t, out_dim);
  o.noalias() = x.matrix() * weight.matrix().transpose();
  if (bias.defined()) {
    Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> b(bias.data().data(),
                                                            static_cast<Eigen::Index>(out_dim));
    o.rowwise() += b;
  }
  std::vector<std::shared_ptr<detail::Node<S>>> parents{x.node(), weight.node()};
  if (bias.defined()) parents.push_back(bias.node());
  return detail::make_result<S>(
      {t, out_dim}, std::move(out), std::move(parents),
      [t, in, out_dim](detail::Node<S>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        const auto g = detail::as_mat(std::as_const(self.grad), t, out_dim);
        if (px->requires_grad) {
          px->ensure_grad();
          detail::as_mat(px->grad, t, in).noalias() +=
              g * detail::as_mat(std::as_const(pw->value), out_dim, in);
        }
        if (pw->requires_grad) {
          pw->ensure_grad();
          detail::as_mat(pw->grad, out_dim, in).noalias() +=
              g.transpose() * detail::as_mat(std::as_const(px->value), t, in);
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          auto& pb = self.parents[2];
          pb->ensure_grad();
          Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> gb(pb->grad.data(),
                                                             static_cast<Eigen::Index>(out_dim));
          gb += g.colwise().sum();
        }
      },
      "linear");
}

// Row-broadcast add: a (T x n) + b (n).
template <typename S>
Tensor<S> add_row(const Tensor<S>& a, const Tensor<S>& b) {
  const std::size_t t = a.rows(), n = a.cols();
  SC_CHECK(b.numel() == n, ErrorCode::kShapeError, "add_row: size mismatch");
  std::vector<S> out(a.data().begin(), a.data().end());
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += b.data()[c];
  }
  return detail::make_result<S>(a.shape(), std::move(out), {a.node(), b.node()},
                                [t, n](detail::Node<S>& self) {
                                  auto& pa = self.parents[0];
                                  auto& pb = self.parents[1];
                                  if (pa->requires_grad) {
                                    pa->ensure_grad();
                                    for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
                                  }
                                  if (pb->requires_grad) {
                                    pb->ensure_grad();
                                    for (std::size_t r = 0; r < t; ++r)
                                      for (std::size_t c = 0; c < n; ++c) pb->grad[c] += self.grad[r * n + c];
                                  }
                                },
                                "add_row");
}

// [a | b] along columns.
template <typename S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
  const std::size_t t = a.rows(), p = a.cols(), q = b.cols();
  SC_CHECK(b.rows() == t, ErrorCode::kShapeError, "concat_cols: row count mismatch");
  std::vector<S> out(t * (p + q));
  for (std::size_t r = 0; r < t; ++r) {
    std::copy_n(a.data().data() + r * p, p, out.data() + r * (p + q));
    std::copy_n(b.data().data() + r * q, q, out.data() + r * (p + q) + p);
  }
  return detail::make_result<S>({t, p + q}, std::move(out), {a.node(), b.node()},
                                [t, p, q](detail::Node<S>& self) {
                                  auto& pa = self.parents[0];
                                  auto& pb = self.parents[1];
                                  if (pa->requires_grad) pa->ensure_grad();
                                  if (pb->requires_grad) pb->ensure_grad();
                                  for (std::size_t r = 0; r < t; ++r) {
                                    const S* g = self.grad.data() + r * (p + q);
                                    if (pa->requires_grad)
                                      for (std::size_t c = 0; c < p; ++c) pa->grad[r * p + c] += g[c];
                                    if (pb->requires_grad)
                                      for (std::size_t c = 0; c < q; ++c) pb->grad[r * q + c] += g[p + c];
                                  }
                                },
                                "concat_cols");
}

// Row-wise log-softmax.
template <typename S>
Tensor<S> log_softmax_rows(const Tensor<S>& a) {
  const std::size_t t = a.rows(), n = a.cols();
  std::vector<S> out(t * n);
  for (std::size_t r = 0; r < t; ++r) {
    const S* in = a.data().data() + r * n;
    const S mx = *std::max_element(in, in + n);
    S acc = 0;
    for (std::size_t c = 0; c < n; ++c) acc += std::exp(in[c] - mx);
    const S lse = mx + std::log(acc);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = in[c] - lse;
  }
  return detail::make_result<S>(a.shape(), std::move(out), {a.node()},
                                [t, n](detail::Node<S>& self) {
                                  auto& p = self.parents[0];
                                  p->ensure_grad();
                                  for (std::size_t r = 0; r < t; ++r) {
                                    const S* g = self.grad.data() + r * n;
                                    const S* y = self.value.data() + r * n;
                                    S gs = 0;
                                    for (std::size_t c = 0; c < n; ++c) gs += g[c];
                                    for (std::size_t c = 0; c < n; ++c)
                                      p->grad[r * n + c] += g[c] - std::exp(y[c]) * gs;
                                  }
                                },
                                "log_softmax_rows");
}

// One direction of a gated recurrent layer over a whole sequence, h0 = 0.
// `xproj` (T x 3H) holds the input projections W_ih x_t + b_ih with gate
// blocks ordered [reset | update | candidate]:
//   r = sigmoid(xr + Whr h + bhr)
//   z = sigmoid(xz + Whz h + bhz)
//   n = tanh(xn + r * (Whn h + bhn))
//   h' = (1 - z) * n + z * h
// With `reverse`, time runs from T-1 down to 0; outputs stay time-aligned.
template <typename S>
Tensor<S> gru_sequence(const Tensor<S>& xproj, const Tensor<S>& w_hh,
                       const Tensor<S>& b_hh, bool reverse) {
  const std::size_t t_len = xproj.rows();
  const std::size_t h = w_hh.cols();
  SC_CHECK(w_hh.rows() == 3 * h && xproj.cols() == 3 * h && b_hh.numel() == 3 * h,
           ErrorCode::kShapeError, "gru_sequence: inconsistent gate shapes");
  using Vec = Vector<S>;
  const auto whh = w_hh.matrix();
  Eigen::Map<const Vec> bhh(b_hh.data().data(), static_cast<Eigen::Index>(3 * h));
  const auto H = static_cast<Eigen::Index>(h);

  std::vector<S> out(t_len * h);
  // Per-step caches, step-major: r, z, n, (Whn h + bhn).
  std::vector<S> cache(t_len * 4 * h);
  Vec h_prev = Vec::Zero(H);
  Vec gh(3 * H);
  for (std::size_t s = 0; s < t_len; ++s) {
    const std::size_t t = reverse ? t_len - 1 - s : s;
    gh.noalias() = whh * h_prev;
    gh += bhh;
    const S* xp = xproj.data().data() + t * 3 * h;
    S* c = cache.data() + s * 4 * h;
    S* ho = out.data() + t * h;
    for (std::size_t i = 0; i < h; ++i) {
      const S r = S(1) / (S(1) + std::exp(-(xp[i] + gh[static_cast<Eigen::Index>(i)])));
      const S z = S(1) / (S(1) + std::exp(-(xp[h + i] + gh[static_cast<Eigen::Index>(h + i)])));
      const S ghn = gh[static_cast<Eigen::Index>(2 * h + i)];
      const S n = std::tanh(xp[2 * h + i] + r * ghn);
      c[i] = r;
      c[h + i] = z;
      c[2 * h + i] = n;
      c[3 * h + i] = ghn;
      ho[i] = (S(1) - z) * n + z * h_prev[static_cast<Eigen::Index>(i)];
    }
    h_prev = Eigen::Map<const Vec>(ho, H);
  }

  return detail::make_result<S>(
      {t_len, h}, std::move(out), {xproj.node(), w_hh.node(), b_hh.node()},
      [t_len, h, reverse, cache = std::move(cache)](detail::Node<S>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        const auto H = static_cast<Eigen::Index>(h);
        const auto whh = detail::as_mat(std::as_const(pw->value), 3 * h, h);
        if (px->requires_grad) px->ensure_grad();
        if (pw->requires_grad) pw->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        Vec dh_next = Vec::Zero(H);
        Vec dgh(3 * H);
        Vec h_prev(H);
        for (std::size_t s = t_len; s-- > 0;) {
          const std::size_t t = reverse ? t_len - 1 - s : s;
          const S* c = cache.data() + s * 4 * h;
          if (s == 0) {
            h_prev.setZero();
          } else {
            const std::size_t tp = reverse ? t + 1 : t - 1;
            h_prev = Eigen::Map<const Vec>(self.value.data() + tp * h, H);
          }
          const S* g_out = self.grad.data() + t * h;
          for (std::size_t i = 0; i < h; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const S dh = g_out[i] + dh_next[ii];
            const S r = c[i], z = c[h + i], n = c[2 * h + i], ghn = c[3 * h + i];
            const S dn_pre = dh * (S(1) - z) * (S(1) - n * n);
            const S dz_pre = dh * (h_prev[ii] - n) * z * (S(1) - z);
            const S dr_pre = dn_pre * ghn * r * (S(1) - r);
            dgh[ii] = dr_pre;
            dgh[H + ii] = dz_pre;
            dgh[2 * H + ii] = dn_pre * r;
            dh_next[ii] = dh * z;
            if (px->requires_grad) {
              S* gx = px->grad.data() + t * 3 * h;
              gx[i] += dr_pre;
              gx[h + i] += dz_pre;
              gx[2 * h + i] += dn_pre;
            }
          }
          dh_next.noalias() += whh.transpose() * dgh;
          if (pw->requires_grad) {
            detail::as_mat(pw->grad, 3 * h, h).noalias() += dgh * h_prev.transpose();
          }
          if (pb->requires_grad) {
            Eigen::Map<Vec>(pb->grad.data(), 3 * H) += dgh;
          }
        }
      },
      "gru_sequence");
}

// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls
// until zero_grad(); intermediate gradients are recomputed each time.
template <typename S>
void backward(const Tensor<S>& loss) {
  SC_CHECK(loss.defined() && loss.numel() == 1, ErrorCode::kShapeError,
           "backward() needs a scalar loss");
  SC_CHECK(loss.requires_grad(), ErrorCode::kNoGraph,
           "loss is detached from any parameter requiring grad");
  using NodePtr = std::shared_ptr<detail::Node<S>>;
  std::vector<detail::Node<S>*> order;
  std::unordered_set<detail::Node<S>*> seen;
  std::vector<std::pair<detail::Node<S>*, bool>> stack{{loss.node().get(), false}};
  while (!stack.empty()) {
    auto [node, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      order.push_back(node);
      continue;
    }
    if (!seen.insert(node).second) continue;
    stack.push_back({node, true});
    for (const NodePtr& p : node->parents) {
      if (p->requires_grad && !seen.count(p.get())) stack.push_back({p.get(), false});
    }
  }
  for (auto* node : order) {
    if (node->backward) node->grad.assign(node->value.size(), S(0));
  }
  auto* root = loss.node().get();
  root->ensure_grad();
  root->grad[0] += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

}  // namespace speechcache::ad

#endif  // SPEECHCACHE_TENSOR_TENSOR_HPP_
