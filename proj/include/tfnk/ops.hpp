#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tfnk/kernels.hpp"
#include "tfnk/tensor.hpp"

namespace tfnk::ops {

namespace detail {

template <typename S>
inline void check_finite(const char* op, const std::vector<S>& v) {
  for (size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw numeric_error(std::string(op) + ": non-finite output at flat index " +
                          std::to_string(i));
    }
  }
}

template <typename S>
inline std::vector<S>& grad_of(const std::shared_ptr<TensorNode<S>>& n) {
  if (n->grad.empty()) n->grad.assign(n->value.size(), S(0));
  return n->grad;
}

// Finite-check the result, then register the backward closure if a tape is
// active and any input needs gradients.
template <typename S, typename F>
inline void finish(const char* op, Tensor<S>& out, bool needs_grad, F&& bwd) {
  check_finite(op, out.data());
  auto* tape = Tape<S>::active();
  if (tape && needs_grad) {
    out.set_requires_grad(true);
    tape->record(op, std::forward<F>(bwd));
  }
}

template <typename S>
inline void require_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) {
    throw config_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
  }
}

template <typename S, typename F, typename DF>
Tensor<S> unary_ew(const char* op, const Tensor<S>& x, F f, DF df) {
  Tensor<S> y(x.shape());
  const auto& xv = x.data();
  auto& yv = y.data();
  const int64_t n = x.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) yv[i] = f(xv[i]);
  finish(op, y, x.requires_grad(), [xn = x.node(), yn = y.node(), df]() {
    if (!xn->requires_grad || yn->grad.empty()) return;
    auto& gx = grad_of(xn);
    const auto& gy = yn->grad;
    const int64_t m = static_cast<int64_t>(gy.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) gx[i] += gy[i] * df(xn->value[i], yn->value[i]);
  });
  return y;
}

template <typename S, typename F, typename DA, typename DB>
Tensor<S> binary_ew(const char* op, const Tensor<S>& a, const Tensor<S>& b, F f, DA dfa, DB dfb) {
  require_same_shape(op, a, b);
  Tensor<S> y(a.shape());
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& yv = y.data();
  const int64_t n = a.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) yv[i] = f(av[i], bv[i]);
  finish(op, y, a.requires_grad() || b.requires_grad(),
         [an = a.node(), bn = b.node(), yn = y.node(), dfa, dfb]() {
           if (yn->grad.empty()) return;
           const auto& gy = yn->grad;
           const int64_t m = static_cast<int64_t>(gy.size());
           if (an->requires_grad) {
             auto& ga = grad_of(an);
#pragma omp parallel for schedule(static)
             for (int64_t i = 0; i < m; ++i) ga[i] += gy[i] * dfa(an->value[i], bn->value[i]);
           }
           if (bn->requires_grad) {
             auto& gb = grad_of(bn);
#pragma omp parallel for schedule(static)
             for (int64_t i = 0; i < m; ++i) gb[i] += gy[i] * dfb(an->value[i], bn->value[i]);
           }
         });
  return y;
}

template <typename S>
inline S stable_sigmoid(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

}  // namespace detail

template <typename S>
Tensor<S> constant(std::vector<int> shape, std::vector<S> data) {
  return Tensor<S>(std::move(shape), std::move(data));
}

// Value copy outside the autodiff graph.
template <typename S>
Tensor<S> detach(const Tensor<S>& x) {
  return Tensor<S>(x.shape(), x.data());
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_ew<S>(
      "add", a, b, [](S x, S y) { return x + y; }, [](S, S) { return S(1); },
      [](S, S) { return S(1); });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_ew<S>(
      "sub", a, b, [](S x, S y) { return x - y; }, [](S, S) { return S(1); },
      [](S, S) { return S(-1); });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_ew<S>(
      "mul", a, b, [](S x, S y) { return x * y; }, [](S, S y) { return y; },
      [](S x, S) { return x; });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_ew<S>(
      "div", a, b, [](S x, S y) { return x / y; }, [](S, S y) { return S(1) / y; },
      [](S x, S y) { return -x / (y * y); });
}

// Ties route the gradient to the first argument.
template <typename S>
Tensor<S> minimum(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_ew<S>(
      "minimum", a, b, [](S x, S y) { return x <= y ? x : y; },
      [](S x, S y) { return x <= y ? S(1) : S(0); }, [](S x, S y) { return y < x ? S(1) : S(0); });
}

template <typename S>
Tensor<S> maximum(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_ew<S>(
      "maximum", a, b, [](S x, S y) { return x >= y ? x : y; },
      [](S x, S y) { return x >= y ? S(1) : S(0); }, [](S x, S y) { return y > x ? S(1) : S(0); });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return detail::unary_ew<S>(
      "sigmoid", x, [](S v) { return detail::stable_sigmoid(v); },
      [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Tensor<S> silu(const Tensor<S>& x) {
  return detail::unary_ew<S>(
      "silu", x, [](S v) { return v * detail::stable_sigmoid(v); },
      [](S v, S) {
        const S s = detail::stable_sigmoid(v);
        return s * (S(1) + v * (S(1) - s));
      });
}

// Derivative at exactly 0 is 1 (the non-negative branch).
template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, S slope) {
  return detail::unary_ew<S>(
      "leaky_relu", x, [slope](S v) { return v >= S(0) ? v : slope * v; },
      [slope](S v, S) { return v >= S(0) ? S(1) : slope; });
}

// Subgradient 0 at x == 0.
template <typename S>
Tensor<S> abs(const Tensor<S>& x) {
  return detail::unary_ew<S>(
      "abs", x, [](S v) { return std::fabs(v); },
      [](S v, S) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); });
}

template <typename S>
Tensor<S> sqrt(const Tensor<S>& x) {
  return detail::unary_ew<S>(
      "sqrt", x, [](S v) { return std::sqrt(v); }, [](S, S y) { return S(1) / (S(2) * y); });
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
  return detail::unary_ew<S>(
      "log", x, [](S v) { return std::log(v); }, [](S v, S) { return S(1) / v; });
}

template <typename S>
Tensor<S> atan(const Tensor<S>& x) {
  return detail::unary_ew<S>(
      "atan", x, [](S v) { return std::atan(v); },
      [](S v, S) { return S(1) / (S(1) + v * v); });
}

// Gradient passes only strictly inside (lo, hi).
template <typename S>
Tensor<S> clamp(const Tensor<S>& x, S lo, S hi) {
  if (!(lo <= hi)) throw config_error("clamp: lo must not exceed hi");
  return detail::unary_ew<S>(
      "clamp", x, [lo, hi](S v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](S v, S) { return (v > lo && v < hi) ? S(1) : S(0); });
}

template <typename S>
Tensor<S> affine(const Tensor<S>& x, S scale, S shift) {
  return detail::unary_ew<S>(
      "affine", x, [scale, shift](S v) { return scale * v + shift; },
      [scale](S, S) { return scale; });
}

// Elementwise multiply / add by a constant vector of matching flat size.
template <typename S>
Tensor<S> mul_const(const Tensor<S>& x, std::vector<S> c) {
  if (static_cast<int64_t>(c.size()) != x.numel()) {
    throw config_error("mul_const: constant size " + std::to_string(c.size()) +
                       " does not match tensor " + shape_str(x.shape()));
  }
  Tensor<S> y(x.shape());
  const auto& xv = x.data();
  auto& yv = y.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) yv[i] = xv[i] * c[i];
  detail::finish("mul_const", y, x.requires_grad(),
                 [xn = x.node(), yn = y.node(), c = std::move(c)]() {
                   if (!xn->requires_grad || yn->grad.empty()) return;
                   auto& gx = detail::grad_of(xn);
                   for (size_t i = 0; i < c.size(); ++i) gx[i] += yn->grad[i] * c[i];
                 });
  return y;
}

template <typename S>
Tensor<S> add_const(const Tensor<S>& x, std::vector<S> c) {
  if (static_cast<int64_t>(c.size()) != x.numel()) {
    throw config_error("add_const: constant size " + std::to_string(c.size()) +
                       " does not match tensor " + shape_str(x.shape()));
  }
  Tensor<S> y(x.shape());
  const auto& xv = x.data();
  auto& yv = y.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) yv[i] = xv[i] + c[i];
  detail::finish("add_const", y, x.requires_grad(), [xn = x.node(), yn = y.node()]() {
    if (!xn->requires_grad || yn->grad.empty()) return;
    auto& gx = detail::grad_of(xn);
    for (size_t i = 0; i < yn->grad.size(); ++i) gx[i] += yn->grad[i];
  });
  return y;
}

// Serial reduction: summation order is fixed regardless of thread count.
template <typename S>
Tensor<S> reduce_sum(const Tensor<S>& x) {
  S acc = S(0);
  for (const S v : x.data()) acc += v;
  Tensor<S> y = Tensor<S>::scalar(acc);
  detail::finish("reduce_sum", y, x.requires_grad(), [xn = x.node(), yn = y.node()]() {
    if (!xn->requires_grad || yn->grad.empty()) return;
    auto& gx = detail::grad_of(xn);
    const S g = yn->grad[0];
    for (auto& v : gx) v += g;
  });
  return y;
}

template <typename S>
Tensor<S> reduce_mean(const Tensor<S>& x) {
  S acc = S(0);
  for (const S v : x.data()) acc += v;
  const S inv = S(1) / static_cast<S>(x.numel());
  Tensor<S> y = Tensor<S>::scalar(acc * inv);
  detail::finish("reduce_mean", y, x.requires_grad(), [xn = x.node(), yn = y.node(), inv]() {
    if (!xn->requires_grad || yn->grad.empty()) return;
    auto& gx = detail::grad_of(xn);
    const S g = yn->grad[0] * inv;
    for (auto& v : gx) v += g;
  });
  return y;
}

// Flat-index gather into a 1-D tensor. Backward is a serial scatter-add so
// duplicate indices accumulate in a fixed order.
template <typename S>
Tensor<S> gather(const Tensor<S>& x, std::vector<int64_t> idx) {
  if (idx.empty()) throw config_error("gather: empty index list");
  const int64_t n = x.numel();
  for (int64_t i : idx) {
    if (i < 0 || i >= n) {
      throw config_error("gather: index " + std::to_string(i) + " out of range for " +
                         std::to_string(n) + " elements");
    }
  }
  Tensor<S> y({static_cast<int>(idx.size())});
  const auto& xv = x.data();
  auto& yv = y.data();
  for (size_t j = 0; j < idx.size(); ++j) yv[j] = xv[static_cast<size_t>(idx[j])];
  detail::finish("gather", y, x.requires_grad(),
                 [xn = x.node(), yn = y.node(), idx = std::move(idx)]() {
                   if (!xn->requires_grad || yn->grad.empty()) return;
                   auto& gx = detail::grad_of(xn);
                   for (size_t j = 0; j < idx.size(); ++j) {
                     gx[static_cast<size_t>(idx[j])] += yn->grad[j];
                   }
                 });
  return y;
}

// NCHW channel concatenation.
template <typename S>
Tensor<S> channel_concat(const std::vector<Tensor<S>>& xs) {
  if (xs.empty()) throw config_error("concat: no inputs");
  for (const auto& x : xs) {
    if (x.rank() != 4) throw config_error("concat: inputs must be NCHW, got " + shape_str(x.shape()));
    if (x.dim(0) != xs[0].dim(0) || x.dim(2) != xs[0].dim(2) || x.dim(3) != xs[0].dim(3)) {
      throw config_error("concat: mismatched batch or spatial dims " + shape_str(x.shape()) +
                         " vs " + shape_str(xs[0].shape()));
    }
  }
  const int n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
  int ctot = 0;
  for (const auto& x : xs) ctot += x.dim(1);
  Tensor<S> y({n, ctot, h, w});
  auto& yv = y.data();
  const int64_t hw = static_cast<int64_t>(h) * w;
  bool needs = false;
  for (int ni = 0; ni < n; ++ni) {
    int64_t coff = 0;
    for (const auto& x : xs) {
      const int64_t cnt = static_cast<int64_t>(x.dim(1)) * hw;
      const S* src = x.data().data() + static_cast<int64_t>(ni) * cnt;
      S* dst = yv.data() + (static_cast<int64_t>(ni) * ctot + coff) * hw;
      std::copy(src, src + cnt, dst);
      coff += x.dim(1);
    }
  }
  std::vector<std::shared_ptr<TensorNode<S>>> in_nodes;
  for (const auto& x : xs) {
    in_nodes.push_back(x.node());
    needs = needs || x.requires_grad();
  }
  detail::finish("concat", y, needs, [in_nodes, yn = y.node(), n, ctot, hw]() {
    if (yn->grad.empty()) return;
    for (int ni = 0; ni < n; ++ni) {
      int64_t coff = 0;
      for (const auto& xn : in_nodes) {
        const int64_t cnt = static_cast<int64_t>(xn->value.size()) / n;
        if (xn->requires_grad) {
          auto& gx = detail::grad_of(xn);
          const S* src = yn->grad.data() + (static_cast<int64_t>(ni) * ctot + coff) * hw;
          S* dst = gx.data() + static_cast<int64_t>(ni) * cnt;
          for (int64_t i = 0; i < cnt; ++i) dst[i] += src[i];
        }
        coff += cnt / hw;
      }
    }
  });
  return y;
}

// Symmetric zero padding. bias may be an undefined tensor for none.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias, int stride,
                 int padding) {
  if (x.rank() != 4) throw config_error("conv2d: input must be NCHW, got " + shape_str(x.shape()));
  if (w.rank() != 4 || w.dim(2) != w.dim(3)) {
    throw config_error("conv2d: weight must be [Cout,Cin,K,K], got " + shape_str(w.shape()));
  }
  if (x.dim(1) != w.dim(1)) {
    throw config_error("conv2d: input has " + std::to_string(x.dim(1)) +
                       " channels but weight expects " + std::to_string(w.dim(1)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != w.dim(0))) {
    throw config_error("conv2d: bias must be [Cout]=[" + std::to_string(w.dim(0)) + "], got " +
                       shape_str(bias.shape()));
  }
  if (stride < 1) throw config_error("conv2d: stride must be >= 1");
  if (padding < 0) throw config_error("conv2d: padding must be >= 0");
  kernels::ConvShape cs{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, padding};
  if (cs.out_h() < 1 || cs.out_w() < 1) {
    throw config_error("conv2d: empty output for input " + shape_str(x.shape()) + ", k=" +
                       std::to_string(cs.k) + ", stride=" + std::to_string(stride) + ", pad=" +
                       std::to_string(padding));
  }
  Tensor<S> y({cs.n, cs.cout, cs.out_h(), cs.out_w()});
  kernels::conv2d_forward<S>(cs, x.data().data(), w.data().data(),
                             bias.defined() ? bias.data().data() : nullptr, y.data().data());
  const bool needs = x.requires_grad() || w.requires_grad() || (bias.defined() && bias.requires_grad());
  detail::finish("conv2d", y, needs,
                 [xn = x.node(), wn = w.node(), bn = bias.defined() ? bias.node() : nullptr,
                  yn = y.node(), cs]() {
                   if (yn->grad.empty()) return;
                   if (xn->requires_grad) {
                     kernels::conv2d_backward_input<S>(cs, yn->grad.data(), wn->value.data(),
                                                       detail::grad_of(xn).data());
                   }
                   if (wn->requires_grad) {
                     kernels::conv2d_backward_weight<S>(cs, xn->value.data(), yn->grad.data(),
                                                        detail::grad_of(wn).data());
                   }
                   if (bn && bn->requires_grad) {
                     kernels::conv2d_backward_bias<S>(cs, yn->grad.data(),
                                                      detail::grad_of(bn).data());
                   }
                 });
  return y;
}

// Padded cells are -inf; ties pick the first window index. Default padding k/2.
template <typename S>
Tensor<S> max_pool2d(const Tensor<S>& x, int k, int stride = 1, int padding = -1) {
  if (x.rank() != 4) throw config_error("max_pool2d: input must be NCHW");
  if (k < 1 || stride < 1) throw config_error("max_pool2d: k and stride must be >= 1");
  if (padding < 0) padding = k / 2;
  kernels::PoolShape ps{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k, stride, padding};
  if (ps.out_h() < 1 || ps.out_w() < 1) throw config_error("max_pool2d: empty output");
  Tensor<S> y({ps.n, ps.c, ps.out_h(), ps.out_w()});
  auto argmax = std::make_shared<std::vector<int64_t>>(y.numel());
  kernels::maxpool2d_forward<S>(ps, x.data().data(), y.data().data(), argmax->data());
  detail::finish("max_pool2d", y, x.requires_grad(), [xn = x.node(), yn = y.node(), argmax, ps]() {
    if (!xn->requires_grad || yn->grad.empty()) return;
    kernels::maxpool2d_backward<S>(ps, yn->grad.data(), argmax->data(),
                                   detail::grad_of(xn).data());
  });
  return y;
}

template <typename S>
Tensor<S> upsample_nearest2x(const Tensor<S>& x) {
  if (x.rank() != 4) throw config_error("upsample2x: input must be NCHW");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<S> y({n, c, 2 * h, 2 * w});
  kernels::upsample2x_forward<S>(n, c, h, w, x.data().data(), y.data().data());
  detail::finish("upsample2x", y, x.requires_grad(), [xn = x.node(), yn = y.node(), n, c, h, w]() {
    if (!xn->requires_grad || yn->grad.empty()) return;
    kernels::upsample2x_backward<S>(n, c, h, w, yn->grad.data(), detail::grad_of(xn).data());
  });
  return y;
}

template <typename S>
Tensor<S> space_to_depth2(const Tensor<S>& x) {
  if (x.rank() != 4) throw config_error("space_to_depth: input must be NCHW");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw config_error("space_to_depth: spatial dims must be even, got " + shape_str(x.shape()));
  }
  Tensor<S> y({n, 4 * c, h / 2, w / 2});
  kernels::space_to_depth2_forward<S>(n, c, h, w, x.data().data(), y.data().data());
  detail::finish("space_to_depth", y, x.requires_grad(), [xn = x.node(), yn = y.node(), n, c, h, w]() {
    if (!xn->requires_grad || yn->grad.empty()) return;
    kernels::space_to_depth2_backward<S>(n, c, h, w, yn->grad.data(), detail::grad_of(xn).data());
  });
  return y;
}

// Numerically stable binary cross-entropy on logits:
//   max(x, 0) - x*t + log1p(exp(-|x|))
// Targets are treated as constants; no gradient flows into them.
template <typename S>
Tensor<S> bce_with_logits(const Tensor<S>& x, const Tensor<S>& targets) {
  detail::require_same_shape("bce_with_logits", x, targets);
  Tensor<S> y(x.shape());
  const auto& xv = x.data();
  const auto& tv = targets.data();
  auto& yv = y.data();
  const int64_t n = x.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const S v = xv[i];
    yv[i] = (v > S(0) ? v : S(0)) - v * tv[i] + std::log1p(std::exp(-std::fabs(v)));
  }
  detail::finish("bce_with_logits", y, x.requires_grad(),
                 [xn = x.node(), tn = targets.node(), yn = y.node()]() {
                   if (!xn->requires_grad || yn->grad.empty()) return;
                   auto& gx = detail::grad_of(xn);
                   const int64_t m = static_cast<int64_t>(yn->grad.size());
#pragma omp parallel for schedule(static)
                   for (int64_t i = 0; i < m; ++i) {
                     gx[i] += yn->grad[i] * (detail::stable_sigmoid(xn->value[i]) - tn->value[i]);
                   }
                 });
  return y;
}

// Batch normalization over N,H,W per channel. In training mode batch
// statistics normalize and running buffers are updated in place (biased batch
// variance normalizes, unbiased updates the buffer); in eval mode the running
// buffers normalize. The backward pass differentiates through the batch
// statistics.
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     Tensor<S>& running_mean, Tensor<S>& running_var, bool training,
                     S momentum = S(0.03), S eps = S(1e-5)) {
  if (x.rank() != 4) throw config_error("batch_norm: input must be NCHW");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::initializer_list<const Tensor<S>*> bn_params = {&gamma, &beta, &running_mean,
                                                             &running_var};
  for (const Tensor<S>* t : bn_params) {
    if (t->rank() != 1 || t->dim(0) != c) {
      throw config_error("batch_norm: parameter shape " + shape_str(t->shape()) +
                         " does not match channels C=" + std::to_string(c));
    }
  }
  const int64_t hw = static_cast<int64_t>(h) * w;
  const int64_t count = static_cast<int64_t>(n) * hw;
  Tensor<S> y(x.shape());
  auto xhat = std::make_shared<std::vector<S>>(x.numel());
  auto inv_std = std::make_shared<std::vector<S>>(c);
  const auto& xv = x.data();
  auto& yv = y.data();

#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < c; ++ci) {
    S mean, var;
    if (training) {
      S sum = S(0);
      for (int ni = 0; ni < n; ++ni) {
        const S* p = xv.data() + (static_cast<int64_t>(ni) * c + ci) * hw;
        for (int64_t i = 0; i < hw; ++i) sum += p[i];
      }
      mean = sum / static_cast<S>(count);
      S sq = S(0);
      for (int ni = 0; ni < n; ++ni) {
        const S* p = xv.data() + (static_cast<int64_t>(ni) * c + ci) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const S d = p[i] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<S>(count);
      const S unbiased = count > 1 ? sq / static_cast<S>(count - 1) : var;
      running_mean.data()[ci] = (S(1) - momentum) * running_mean.data()[ci] + momentum * mean;
      running_var.data()[ci] = (S(1) - momentum) * running_var.data()[ci] + momentum * unbiased;
    } else {
      mean = running_mean.data()[ci];
      var = running_var.data()[ci];
    }
    const S is = S(1) / std::sqrt(var + eps);
    (*inv_std)[ci] = is;
    const S g = gamma.data()[ci], b = beta.data()[ci];
    for (int ni = 0; ni < n; ++ni) {
      const int64_t off = (static_cast<int64_t>(ni) * c + ci) * hw;
      for (int64_t i = 0; i < hw; ++i) {
        const S xh = (xv[off + i] - mean) * is;
        (*xhat)[off + i] = xh;
        yv[off + i] = g * xh + b;
      }
    }
  }

  const bool needs = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  detail::finish("batch_norm", y, needs,
                 [xn = x.node(), gn = gamma.node(), bn = beta.node(), yn = y.node(), xhat, inv_std,
                  n, c, hw, count, training]() {
                   if (yn->grad.empty()) return;
                   const auto& gy = yn->grad;
#pragma omp parallel for schedule(static)
                   for (int ci = 0; ci < c; ++ci) {
                     S sum_gy = S(0), sum_gyx = S(0);
                     for (int ni = 0; ni < n; ++ni) {
                       const int64_t off = (static_cast<int64_t>(ni) * c + ci) * hw;
                       for (int64_t i = 0; i < hw; ++i) {
                         sum_gy += gy[off + i];
                         sum_gyx += gy[off + i] * (*xhat)[off + i];
                       }
                     }
                     if (gn->requires_grad) detail::grad_of(gn)[ci] += sum_gyx;
                     if (bn->requires_grad) detail::grad_of(bn)[ci] += sum_gy;
                     if (xn->requires_grad) {
                       auto& gx = detail::grad_of(xn);
                       const S g = gn->value[ci] * (*inv_std)[ci];
                       const S mg = sum_gy / static_cast<S>(count);
                       const S mgx = sum_gyx / static_cast<S>(count);
                       for (int ni = 0; ni < n; ++ni) {
                         const int64_t off = (static_cast<int64_t>(ni) * c + ci) * hw;
                         for (int64_t i = 0; i < hw; ++i) {
                           if (training) {
                             gx[off + i] += g * (gy[off + i] - mg - (*xhat)[off + i] * mgx);
                           } else {
                             gx[off + i] += g * gy[off + i];
                           }
                         }
                       }
                     }
                   }
                 });
  return y;
}

}  // namespace tfnk::ops
