#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace ossem {

inline constexpr double kLeakyReluSlope = 0.01;
inline constexpr double kLayerNormEps = 1e-5;
// Pre-softmax surrogate for -inf on masked attention positions. exp() of any
// score this far below the row max underflows to exactly +0.
inline constexpr double kAttnMaskValue = -1e9;

namespace detail {

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

}  // namespace detail

template <class S>
struct TensorData {
  std::vector<int> shape;
  std::vector<S> values;
  std::vector<S> grad;  // empty until backward first touches this node
  bool requires_grad = false;
};

// Value-semantic handle onto a shared dense buffer. Rank 0 is a scalar.
template <class S>
class Tensor {
 public:
  Tensor() : d_(std::make_shared<TensorData<S>>()) { d_->values.assign(1, S(0)); }

  explicit Tensor(std::vector<int> shape, bool requires_grad = false)
      : d_(std::make_shared<TensorData<S>>()) {
    const int64_t n = checked_numel(shape);
    d_->shape = std::move(shape);
    d_->values.assign(static_cast<size_t>(n), S(0));
    d_->requires_grad = requires_grad;
  }

  static Tensor scalar(S v) {
    Tensor t;
    t.d_->values[0] = v;
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<S> values, bool requires_grad = false) {
    const int64_t n = checked_numel(shape);
    if (n != static_cast<int64_t>(values.size()))
      throw std::invalid_argument("tensor: value count " + std::to_string(values.size()) +
                                  " does not match shape " + detail::shape_str(shape));
    Tensor t;
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(values);
    t.d_->requires_grad = requires_grad;
    return t;
  }

  const std::vector<int>& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int dim(int i) const { return d_->shape.at(static_cast<size_t>(i)); }
  int64_t numel() const { return static_cast<int64_t>(d_->values.size()); }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool v) { d_->requires_grad = v; }

  std::span<S> data() { return {d_->values.data(), d_->values.size()}; }
  std::span<const S> data() const { return {d_->values.data(), d_->values.size()}; }

  bool has_grad() const { return !d_->grad.empty(); }
  std::span<S> grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), S(0));
    return {d_->grad.data(), d_->grad.size()};
  }
  std::span<const S> grad_view() const { return {d_->grad.data(), d_->grad.size()}; }
  void clear_grad() { d_->grad.clear(); }

  S item() const {
    if (numel() != 1) throw std::invalid_argument("tensor: item() requires a single element");
    return d_->values[0];
  }

  S& operator()(int i) { return d_->values[static_cast<size_t>(i)]; }
  S operator()(int i) const { return d_->values[static_cast<size_t>(i)]; }
  S& operator()(int i, int j) {
    return d_->values[static_cast<size_t>(i) * static_cast<size_t>(d_->shape[1]) + static_cast<size_t>(j)];
  }
  S operator()(int i, int j) const {
    return d_->values[static_cast<size_t>(i) * static_cast<size_t>(d_->shape[1]) + static_cast<size_t>(j)];
  }

  // Fresh node with copied values; grad is not carried over.
  Tensor deep_copy() const {
    Tensor t;
    t.d_->shape = d_->shape;
    t.d_->values = d_->values;
    t.d_->requires_grad = d_->requires_grad;
    return t;
  }

  void copy_values_from(const Tensor& o) {
    if (o.d_->values.size() != d_->values.size())
      throw std::invalid_argument("tensor: copy_values_from size mismatch");
    d_->values = o.d_->values;
  }

  std::shared_ptr<TensorData<S>> node() const { return d_; }

 private:
  static int64_t checked_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor: dimensions must be positive, got " + detail::shape_str(shape));
      n *= d;
    }
    return n;
  }

  std::shared_ptr<TensorData<S>> d_;
};

template <class S>
void check_finite(const char* op, std::span<S> v) {
  for (const auto& x : v)
    if (!std::isfinite(static_cast<double>(x)))
      throw std::runtime_error(std::string(op) + ": non-finite value produced");
}

template <class S>
void require_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + detail::shape_str(a.shape()) +
                                " vs " + detail::shape_str(b.shape()));
}

// Plain matrix product kernel. C must be zero-initialized; every C[i][j]
// accumulates its k terms in ascending order, which the streaming enhancer
// relies on for bitwise parity with per-frame dot products.
template <class S>
void matmul_kernel(const S* __restrict a, const S* __restrict b, S* __restrict c,
                   int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<size_t>(i) * k;
    S* crow = c + static_cast<size_t>(i) * n;
    for (int t = 0; t < k; ++t) {
      const S av = arow[t];
      const S* brow = b + static_cast<size_t>(t) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// Records primitive ops in execution order (inputs always precede users, so
// the record is topological by construction) and replays them in reverse for
// reverse-mode differentiation. A tape constructed with recording=false only
// computes values, which is the inference / finite-difference path.
template <class S>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  size_t num_entries() const { return entries_.size(); }

  // Smallest distance to a non-differentiable point seen on this tape:
  // |pred - target| in l1_mean and |x| at relu / leaky_relu inputs. The
  // gradient checker skips evaluations that sit too close to a kink, where
  // central differences straddle the slope change.
  double min_kink_gap() const { return min_kink_gap_; }

  // Hash over the signs of every kink-site argument, folded in execution
  // order. Two evaluations of the same graph share this value exactly when
  // every relu / leaky_relu input and every l1 residual kept its sign, i.e.
  // the function stayed on one linear piece between them.
  uint64_t kink_sign_hash() const { return kink_hash_; }

  // ---- elementwise -------------------------------------------------------

  Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape("add", a, b);
    Tensor<S> out(a.shape());
    auto ov = out.data();
    auto av = a.data(), bv = b.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    check_finite("add", out.data());
    if (track(out, {&a, &b})) {
      push([an = a.node(), bn = b.node(), on = out.node()] {
        if (on->grad.empty()) return;
        if (an->requires_grad) {
          ensure_grad(an);
          for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
          ensure_grad(bn);
          for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
        }
      });
    }
    return out;
  }

  Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape("sub", a, b);
    Tensor<S> out(a.shape());
    auto ov = out.data();
    auto av = a.data(), bv = b.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
    check_finite("sub", out.data());
    if (track(out, {&a, &b})) {
      push([an = a.node(), bn = b.node(), on = out.node()] {
        if (on->grad.empty()) return;
        if (an->requires_grad) {
          ensure_grad(an);
          for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
          ensure_grad(bn);
          for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
        }
      });
    }
    return out;
  }

  Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape("mul", a, b);
    Tensor<S> out(a.shape());
    auto ov = out.data();
    auto av = a.data(), bv = b.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    check_finite("mul", out.data());
    if (track(out, {&a, &b})) {
      push([an = a.node(), bn = b.node(), on = out.node()] {
        if (on->grad.empty()) return;
        if (an->requires_grad) {
          ensure_grad(an);
          for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->values[i];
        }
        if (bn->requires_grad) {
          ensure_grad(bn);
          for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->values[i];
        }
      });
    }
    return out;
  }

  Tensor<S> scalar_mul(const Tensor<S>& a, S c) {
    Tensor<S> out(a.shape());
    auto ov = out.data();
    auto av = a.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
    check_finite("scalar_mul", out.data());
    if (track(out, {&a})) {
      push([an = a.node(), on = out.node(), c] {
        if (on->grad.empty() || !an->requires_grad) return;
        ensure_grad(an);
        for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * c;
      });
    }
    return out;
  }

  // x: [T x C], v: [C]; broadcast add along rows (bias add).
  Tensor<S> add_rowvec(const Tensor<S>& x, const Tensor<S>& v) {
    require_rowvec("add_rowvec", x, v);
    const int t = x.dim(0), c = x.dim(1);
    Tensor<S> out(x.shape());
    auto ov = out.data();
    auto xv = x.data(), vv = v.data();
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < c; ++j) ov[static_cast<size_t>(i) * c + j] = xv[static_cast<size_t>(i) * c + j] + vv[j];
    check_finite("add_rowvec", out.data());
    if (track(out, {&x, &v})) {
      push([xn = x.node(), vn = v.node(), on = out.node(), t, c] {
        if (on->grad.empty()) return;
        if (xn->requires_grad) {
          ensure_grad(xn);
          for (size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
        }
        if (vn->requires_grad) {
          ensure_grad(vn);
          for (int i = 0; i < t; ++i)
            for (int j = 0; j < c; ++j) vn->grad[j] += on->grad[static_cast<size_t>(i) * c + j];
        }
      });
    }
    return out;
  }

  // x: [T x C], v: [C]; broadcast multiply along rows (per-frequency mask).
  Tensor<S> mul_rowvec(const Tensor<S>& x, const Tensor<S>& v) {
    require_rowvec("mul_rowvec", x, v);
    const int t = x.dim(0), c = x.dim(1);
    Tensor<S> out(x.shape());
    auto ov = out.data();
    auto xv = x.data(), vv = v.data();
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < c; ++j) ov[static_cast<size_t>(i) * c + j] = xv[static_cast<size_t>(i) * c + j] * vv[j];
    check_finite("mul_rowvec", out.data());
    if (track(out, {&x, &v})) {
      push([xn = x.node(), vn = v.node(), on = out.node(), t, c] {
        if (on->grad.empty()) return;
        if (xn->requires_grad) {
          ensure_grad(xn);
          for (int i = 0; i < t; ++i)
            for (int j = 0; j < c; ++j)
              xn->grad[static_cast<size_t>(i) * c + j] += on->grad[static_cast<size_t>(i) * c + j] * vn->values[j];
        }
        if (vn->requires_grad) {
          ensure_grad(vn);
          for (int i = 0; i < t; ++i)
            for (int j = 0; j < c; ++j)
              vn->grad[j] += on->grad[static_cast<size_t>(i) * c + j] * xn->values[static_cast<size_t>(i) * c + j];
        }
      });
    }
    return out;
  }

  Tensor<S> leaky_relu(const Tensor<S>& a, S slope = S(kLeakyReluSlope)) {
    Tensor<S> out(a.shape());
    auto ov = out.data();
    auto av = a.data();
    for (size_t i = 0; i < ov.size(); ++i) {
      note_kink(static_cast<double>(av[i]));
      ov[i] = av[i] > S(0) ? av[i] : av[i] * slope;
    }
    check_finite("leaky_relu", out.data());
    if (track(out, {&a})) {
      push([an = a.node(), on = out.node(), slope] {
        if (on->grad.empty() || !an->requires_grad) return;
        ensure_grad(an);
        for (size_t i = 0; i < on->grad.size(); ++i)
          an->grad[i] += on->grad[i] * (an->values[i] > S(0) ? S(1) : slope);
      });
    }
    return out;
  }

  Tensor<S> relu(const Tensor<S>& a) {
    Tensor<S> out(a.shape());
    auto ov = out.data();
    auto av = a.data();
    for (size_t i = 0; i < ov.size(); ++i) {
      note_kink(static_cast<double>(av[i]));
      ov[i] = av[i] > S(0) ? av[i] : S(0);
    }
    check_finite("relu", out.data());
    if (track(out, {&a})) {
      push([an = a.node(), on = out.node()] {
        if (on->grad.empty() || !an->requires_grad) return;
        ensure_grad(an);
        for (size_t i = 0; i < on->grad.size(); ++i)
          an->grad[i] += an->values[i] > S(0) ? on->grad[i] : S(0);
      });
    }
    return out;
  }

  Tensor<S> sigmoid(const Tensor<S>& a) {
    Tensor<S> out(a.shape());
    auto ov = out.data();
    auto av = a.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = S(1) / (S(1) + std::exp(-av[i]));
    check_finite("sigmoid", out.data());
    if (track(out, {&a})) {
      push([an = a.node(), on = out.node()] {
        if (on->grad.empty() || !an->requires_grad) return;
        ensure_grad(an);
        for (size_t i = 0; i < on->grad.size(); ++i) {
          const S y = on->values[i];
          an->grad[i] += on->grad[i] * y * (S(1) - y);
        }
      });
    }
    return out;
  }

  // ---- linear algebra ----------------------------------------------------

  Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 2 || b.rank() != 2)
      throw std::invalid_argument("matmul: rank-2 tensors required");
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
      throw std::invalid_argument("matmul: inner dimensions disagree " + detail::shape_str(a.shape()) +
                                  " vs " + detail::shape_str(b.shape()));
    Tensor<S> out(std::vector<int>{m, n});
    matmul_kernel(a.data().data(), b.data().data(), out.data().data(), m, k, n);
    check_finite("matmul", out.data());
    if (track(out, {&a, &b})) {
      push([an = a.node(), bn = b.node(), on = out.node(), m, k, n] {
        if (on->grad.empty()) return;
        const S* g = on->grad.data();
        if (an->requires_grad) {
          ensure_grad(an);
          // dA[i][t] = sum_j g[i][j] * B[t][j]
          for (int i = 0; i < m; ++i)
            for (int t = 0; t < k; ++t) {
              S acc = S(0);
              const S* grow = g + static_cast<size_t>(i) * n;
              const S* brow = bn->values.data() + static_cast<size_t>(t) * n;
              for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
              an->grad[static_cast<size_t>(i) * k + t] += acc;
            }
        }
        if (bn->requires_grad) {
          ensure_grad(bn);
          // dB[t][j] = sum_i A[i][t] * g[i][j]
          for (int i = 0; i < m; ++i) {
            const S* arow = an->values.data() + static_cast<size_t>(i) * k;
            const S* grow = g + static_cast<size_t>(i) * n;
            for (int t = 0; t < k; ++t) {
              const S av = arow[t];
              S* brow = bn->grad.data() + static_cast<size_t>(t) * n;
              for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
            }
          }
        }
      });
    }
    return out;
  }

  Tensor<S> transpose(const Tensor<S>& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 tensor required");
    const int m = a.dim(0), n = a.dim(1);
    Tensor<S> out(std::vector<int>{n, m});
    auto ov = out.data();
    auto av = a.data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ov[static_cast<size_t>(j) * m + i] = av[static_cast<size_t>(i) * n + j];
    if (track(out, {&a})) {
      push([an = a.node(), on = out.node(), m, n] {
        if (on->grad.empty() || !an->requires_grad) return;
        ensure_grad(an);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            an->grad[static_cast<size_t>(i) * n + j] += on->grad[static_cast<size_t>(j) * m + i];
      });
    }
    return out;
  }

  // x: [T x Cin], w: [K x Cin x Cout], b: [Cout] -> [T x Cout].
  // Left zero padding of K-1 frames; output frame t sees inputs t-K+1 .. t.
  // Per output element the terms accumulate with k ascending then cin
  // ascending, and the bias is added last (mirrored by the streaming path).
  Tensor<S> causal_conv1d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    if (x.rank() != 2 || w.rank() != 3 || b.rank() != 1)
      throw std::invalid_argument("causal_conv1d: expected x rank 2, w rank 3, b rank 1");
    const int t_len = x.dim(0), cin = x.dim(1);
    const int k_len = w.dim(0), w_cin = w.dim(1), cout = w.dim(2);
    if (k_len < 1) throw std::invalid_argument("causal_conv1d: kernel length must be >= 1");
    if (w_cin != cin)
      throw std::invalid_argument("causal_conv1d: channel mismatch, input has " + std::to_string(cin) +
                                  " channels but kernel expects " + std::to_string(w_cin));
    if (b.dim(0) != cout) throw std::invalid_argument("causal_conv1d: bias width mismatch");
    Tensor<S> out(std::vector<int>{t_len, cout});
    auto ov = out.data();
    auto xv = x.data(), wv = w.data(), bv = b.data();
    for (int t = 0; t < t_len; ++t) {
      S* orow = ov.data() + static_cast<size_t>(t) * cout;
      for (int k = 0; k < k_len; ++k) {
        const int src = t - (k_len - 1) + k;
        if (src < 0) continue;
        const S* xrow = xv.data() + static_cast<size_t>(src) * cin;
        for (int ci = 0; ci < cin; ++ci) {
          const S xval = xrow[ci];
          const S* wrow = wv.data() + (static_cast<size_t>(k) * cin + ci) * cout;
          for (int co = 0; co < cout; ++co) orow[co] += xval * wrow[co];
        }
      }
      for (int co = 0; co < cout; ++co) orow[co] += bv[co];
    }
    check_finite("causal_conv1d", out.data());
    if (track(out, {&x, &w, &b})) {
      push([xn = x.node(), wn = w.node(), bn = b.node(), on = out.node(), t_len, cin, k_len, cout] {
        if (on->grad.empty()) return;
        const S* g = on->grad.data();
        if (bn->requires_grad) {
          ensure_grad(bn);
          for (int t = 0; t < t_len; ++t)
            for (int co = 0; co < cout; ++co) bn->grad[co] += g[static_cast<size_t>(t) * cout + co];
        }
        if (wn->requires_grad) {
          ensure_grad(wn);
          for (int t = 0; t < t_len; ++t) {
            const S* grow = g + static_cast<size_t>(t) * cout;
            for (int k = 0; k < k_len; ++k) {
              const int src = t - (k_len - 1) + k;
              if (src < 0) continue;
              const S* xrow = xn->values.data() + static_cast<size_t>(src) * cin;
              for (int ci = 0; ci < cin; ++ci) {
                S* wrow = wn->grad.data() + (static_cast<size_t>(k) * cin + ci) * cout;
                const S xval = xrow[ci];
                for (int co = 0; co < cout; ++co) wrow[co] += xval * grow[co];
              }
            }
          }
        }
        if (xn->requires_grad) {
          ensure_grad(xn);
          for (int t = 0; t < t_len; ++t) {
            const S* grow = g + static_cast<size_t>(t) * cout;
            for (int k = 0; k < k_len; ++k) {
              const int src = t - (k_len - 1) + k;
              if (src < 0) continue;
              S* xgrow = xn->grad.data() + static_cast<size_t>(src) * cin;
              for (int ci = 0; ci < cin; ++ci) {
                const S* wrow = wn->values.data() + (static_cast<size_t>(k) * cin + ci) * cout;
                S acc = S(0);
                for (int co = 0; co < cout; ++co) acc += wrow[co] * grow[co];
                xgrow[ci] += acc;
              }
            }
          }
        }
      });
    }
    return out;
  }

  // Per-frame normalization over the feature dimension, then affine.
  Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias,
                       S eps = S(kLayerNormEps)) {
    if (x.rank() != 2 || gain.rank() != 1 || bias.rank() != 1)
      throw std::invalid_argument("layer_norm: expected x rank 2, gain/bias rank 1");
    const int t_len = x.dim(0), d = x.dim(1);
    if (gain.dim(0) != d || bias.dim(0) != d)
      throw std::invalid_argument("layer_norm: gain/bias width mismatch");
    if (!(eps > S(0))) throw std::invalid_argument("layer_norm: eps must be positive");
    Tensor<S> out(x.shape());
    auto ov = out.data();
    auto xv = x.data();
    auto gv = gain.data(), bv = bias.data();
    for (int t = 0; t < t_len; ++t) {
      const S* row = xv.data() + static_cast<size_t>(t) * d;
      S* orow = ov.data() + static_cast<size_t>(t) * d;
      S mean = S(0);
      for (int j = 0; j < d; ++j) mean += row[j];
      mean /= S(d);
      S var = S(0);
      for (int j = 0; j < d; ++j) {
        const S c = row[j] - mean;
        var += c * c;
      }
      var /= S(d);
      const S inv = S(1) / std::sqrt(var + eps);
      for (int j = 0; j < d; ++j) orow[j] = (row[j] - mean) * inv * gv[j] + bv[j];
    }
    check_finite("layer_norm", out.data());
    if (track(out, {&x, &gain, &bias})) {
      push([xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node(), t_len, d, eps] {
        if (on->grad.empty()) return;
        for (int t = 0; t < t_len; ++t) {
          const S* row = xn->values.data() + static_cast<size_t>(t) * d;
          const S* grow = on->grad.data() + static_cast<size_t>(t) * d;
          S mean = S(0);
          for (int j = 0; j < d; ++j) mean += row[j];
          mean /= S(d);
          S var = S(0);
          for (int j = 0; j < d; ++j) {
            const S c = row[j] - mean;
            var += c * c;
          }
          var /= S(d);
          const S inv = S(1) / std::sqrt(var + eps);
          if (gn->requires_grad) {
            ensure_grad(gn);
            for (int j = 0; j < d; ++j) gn->grad[j] += grow[j] * (row[j] - mean) * inv;
          }
          if (bn->requires_grad) {
            ensure_grad(bn);
            for (int j = 0; j < d; ++j) bn->grad[j] += grow[j];
          }
          if (xn->requires_grad) {
            ensure_grad(xn);
            S m1 = S(0), m2 = S(0);
            for (int j = 0; j < d; ++j) {
              const S gg = grow[j] * gn->values[j];
              const S xh = (row[j] - mean) * inv;
              m1 += gg;
              m2 += gg * xh;
            }
            m1 /= S(d);
            m2 /= S(d);
            S* xgrow = xn->grad.data() + static_cast<size_t>(t) * d;
            for (int j = 0; j < d; ++j) {
              const S gg = grow[j] * gn->values[j];
              const S xh = (row[j] - mean) * inv;
              xgrow[j] += (gg - m1 - xh * m2) * inv;
            }
          }
        }
      });
    }
    return out;
  }

  // Row softmax over scores [Tq x Tk]. With causal=true, positions j > i are
  // replaced by the -1e9 surrogate before the softmax; their exp underflows
  // to exactly +0, so masked weights come out as exact zeros.
  Tensor<S> softmax_causal(const Tensor<S>& scores, bool causal) {
    if (scores.rank() != 2) throw std::invalid_argument("softmax_causal: rank-2 tensor required");
    const int tq = scores.dim(0), tk = scores.dim(1);
    Tensor<S> out(scores.shape());
    auto ov = out.data();
    auto sv = scores.data();
    const S neg = S(kAttnMaskValue);
    for (int i = 0; i < tq; ++i) {
      const S* row = sv.data() + static_cast<size_t>(i) * tk;
      S* orow = ov.data() + static_cast<size_t>(i) * tk;
      S mx = -std::numeric_limits<S>::infinity();
      for (int j = 0; j < tk; ++j) {
        const S v = (causal && j > i) ? neg : row[j];
        if (v > mx) mx = v;
      }
      S sum = S(0);
      for (int j = 0; j < tk; ++j) {
        const S v = (causal && j > i) ? neg : row[j];
        const S e = std::exp(v - mx);
        orow[j] = e;
        sum += e;
      }
      for (int j = 0; j < tk; ++j) orow[j] /= sum;
    }
    check_finite("softmax_causal", out.data());
    if (track(out, {&scores})) {
      push([sn = scores.node(), on = out.node(), tq, tk, causal] {
        if (on->grad.empty() || !sn->requires_grad) return;
        ensure_grad(sn);
        for (int i = 0; i < tq; ++i) {
          const S* p = on->values.data() + static_cast<size_t>(i) * tk;
          const S* g = on->grad.data() + static_cast<size_t>(i) * tk;
          S dot = S(0);
          for (int j = 0; j < tk; ++j) dot += g[j] * p[j];
          S* sg = sn->grad.data() + static_cast<size_t>(i) * tk;
          const int limit = causal ? i : tk - 1;
          for (int j = 0; j <= limit; ++j) sg[j] += p[j] * (g[j] - dot);
        }
      });
    }
    return out;
  }

  // ---- shape plumbing ----------------------------------------------------

  Tensor<S> reshape(const Tensor<S>& a, std::vector<int> shape) {
    Tensor<S> out(shape);
    if (out.numel() != a.numel())
      throw std::invalid_argument("reshape: element count mismatch " + detail::shape_str(a.shape()) +
                                  " -> " + detail::shape_str(shape));
    auto ov = out.data();
    auto av = a.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i];
    if (track(out, {&a})) {
      push([an = a.node(), on = out.node()] {
        if (on->grad.empty() || !an->requires_grad) return;
        ensure_grad(an);
        for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      });
    }
    return out;
  }

  Tensor<S> slice_cols(const Tensor<S>& a, int c0, int c1) {
    if (a.rank() != 2) throw std::invalid_argument("slice_cols: rank-2 tensor required");
    const int m = a.dim(0), n = a.dim(1);
    if (c0 < 0 || c1 <= c0 || c1 > n) throw std::invalid_argument("slice_cols: bad column range");
    const int w = c1 - c0;
    Tensor<S> out(std::vector<int>{m, w});
    auto ov = out.data();
    auto av = a.data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        ov[static_cast<size_t>(i) * w + j] = av[static_cast<size_t>(i) * n + c0 + j];
    if (track(out, {&a})) {
      push([an = a.node(), on = out.node(), m, n, w, c0] {
        if (on->grad.empty() || !an->requires_grad) return;
        ensure_grad(an);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < w; ++j)
            an->grad[static_cast<size_t>(i) * n + c0 + j] += on->grad[static_cast<size_t>(i) * w + j];
      });
    }
    return out;
  }

  Tensor<S> concat_cols(std::span<const Tensor<S>> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const int m = parts[0].dim(0);
    int n = 0;
    for (const auto& p : parts) {
      if (p.rank() != 2 || p.dim(0) != m) throw std::invalid_argument("concat_cols: row mismatch");
      n += p.dim(1);
    }
    Tensor<S> out(std::vector<int>{m, n});
    auto ov = out.data();
    int off = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
      const int w = p.dim(1);
      auto pv = p.data();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) ov[static_cast<size_t>(i) * n + off + j] = pv[static_cast<size_t>(i) * w + j];
      off += w;
      any_grad = any_grad || p.requires_grad();
    }
    if (recording_ && any_grad) {
      out.set_requires_grad(true);
      produced_.insert(out.node().get());
      std::vector<std::shared_ptr<TensorData<S>>> nodes;
      std::vector<int> widths;
      for (const auto& p : parts) {
        nodes.push_back(p.node());
        widths.push_back(p.dim(1));
      }
      push([nodes = std::move(nodes), widths = std::move(widths), on = out.node(), m, n] {
        if (on->grad.empty()) return;
        int off2 = 0;
        for (size_t pi = 0; pi < nodes.size(); ++pi) {
          const int w = widths[pi];
          if (nodes[pi]->requires_grad) {
            ensure_grad(nodes[pi]);
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < w; ++j)
                nodes[pi]->grad[static_cast<size_t>(i) * w + j] += on->grad[static_cast<size_t>(i) * n + off2 + j];
          }
          off2 += w;
        }
      });
    }
    return out;
  }

  // ---- reductions and losses ---------------------------------------------

  Tensor<S> sum(const Tensor<S>& a) {
    S acc = S(0);
    for (const S& v : a.data()) acc += v;
    Tensor<S> out = Tensor<S>::scalar(acc);
    check_finite("sum", out.data());
    if (track(out, {&a})) {
      push([an = a.node(), on = out.node()] {
        if (on->grad.empty() || !an->requires_grad) return;
        ensure_grad(an);
        const S g = on->grad[0];
        for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
      });
    }
    return out;
  }

  // Mean absolute difference over all elements of one utterance. The
  // subgradient at zero difference is 0.
  Tensor<S> l1_mean(const Tensor<S>& pred, const Tensor<S>& target) {
    require_same_shape("l1_mean", pred, target);
    auto pv = pred.data();
    auto tv = target.data();
    const S inv_n = S(1) / S(static_cast<double>(pv.size()));
    S acc = S(0);
    for (size_t i = 0; i < pv.size(); ++i) {
      const S d = pv[i] - tv[i];
      note_kink(static_cast<double>(d));
      acc += d >= S(0) ? d : -d;
    }
    Tensor<S> out = Tensor<S>::scalar(acc * inv_n);
    check_finite("l1_mean", out.data());
    if (track(out, {&pred, &target})) {
      push([pn = pred.node(), tn = target.node(), on = out.node(), inv_n] {
        if (on->grad.empty()) return;
        const S g = on->grad[0] * inv_n;
        for (size_t i = 0; i < pn->values.size(); ++i) {
          const S d = pn->values[i] - tn->values[i];
          const S s = d > S(0) ? g : (d < S(0) ? -g : S(0));
          if (pn->requires_grad) {
            ensure_grad(pn);
            pn->grad[i] += s;
          }
          if (tn->requires_grad) {
            ensure_grad(tn);
            tn->grad[i] -= s;
          }
        }
      });
    }
    return out;
  }

  // Mean of scalar losses: per-utterance means averaged over the set.
  Tensor<S> mean_of(std::span<const Tensor<S>> scalars) {
    if (scalars.empty()) throw std::invalid_argument("mean_of: empty set");
    S acc = S(0);
    bool any_grad = false;
    for (const auto& s : scalars) {
      if (s.numel() != 1) throw std::invalid_argument("mean_of: inputs must be scalars");
      acc += s.data()[0];
      any_grad = any_grad || s.requires_grad();
    }
    const S inv_n = S(1) / S(static_cast<double>(scalars.size()));
    Tensor<S> out = Tensor<S>::scalar(acc * inv_n);
    check_finite("mean_of", out.data());
    if (recording_ && any_grad) {
      out.set_requires_grad(true);
      produced_.insert(out.node().get());
      std::vector<std::shared_ptr<TensorData<S>>> nodes;
      for (const auto& s : scalars) nodes.push_back(s.node());
      push([nodes = std::move(nodes), on = out.node(), inv_n] {
        if (on->grad.empty()) return;
        const S g = on->grad[0] * inv_n;
        for (auto& n : nodes)
          if (n->requires_grad) {
            ensure_grad(n);
            n->grad[0] += g;
          }
      });
    }
    return out;
  }

  // ---- reverse pass ------------------------------------------------------

  void backward(const Tensor<S>& loss) {
    if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be a scalar");
    if (!produced_.count(loss.node().get()))
      throw std::invalid_argument("backward: loss was not produced on this tape");
    ensure_grad(loss.node());
    loss.node()->grad[0] = S(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    reset();
  }

  void reset() {
    entries_.clear();
    produced_.clear();
    min_kink_gap_ = std::numeric_limits<double>::infinity();
    kink_hash_ = 0xCBF29CE484222325ull;
  }

 private:
  bool track(Tensor<S>& out, std::initializer_list<const Tensor<S>*> ins) {
    if (!recording_) return false;
    bool need = false;
    for (const Tensor<S>* p : ins) need = need || p->requires_grad();
    if (!need) return false;
    out.set_requires_grad(true);
    produced_.insert(out.node().get());
    return true;
  }

  void push(std::function<void()> fn) { entries_.push_back(std::move(fn)); }

  void note_kink(double x) {
    const double gap = std::abs(x);
    if (gap < min_kink_gap_) min_kink_gap_ = gap;
    kink_hash_ = (kink_hash_ ^ (x > 0.0 ? 0x9E3779B97F4A7C15ull : 0x2545F4914F6CDD1Dull)) *
                 0x100000001B3ull;
  }

  static void ensure_grad(const std::shared_ptr<TensorData<S>>& n) {
    if (n->grad.empty()) n->grad.assign(n->values.size(), S(0));
  }

  static void require_rowvec(const char* op, const Tensor<S>& x, const Tensor<S>& v) {
    if (x.rank() != 2 || v.rank() != 1)
      throw std::invalid_argument(std::string(op) + ": expected [T x C] and [C]");
    if (v.dim(0) != x.dim(1))
      throw std::invalid_argument(std::string(op) + ": width mismatch " + detail::shape_str(x.shape()) +
                                  " vs " + detail::shape_str(v.shape()));
  }

  std::vector<std::function<void()>> entries_;
  std::unordered_set<const TensorData<S>*> produced_;
  bool recording_ = true;
  double min_kink_gap_ = std::numeric_limits<double>::infinity();
  uint64_t kink_hash_ = 0xCBF29CE484222325ull;
};

// Scaled dot-product attention with per-head column slices. q, k, v: [T x d];
// d must divide into `heads` equal slices.
template <class S>
Tensor<S> causal_softmax_attention(Tape<S>& tape, const Tensor<S>& q, const Tensor<S>& k,
                                   const Tensor<S>& v, int heads, bool causal) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw std::invalid_argument("attention: rank-2 tensors required");
  const int d = q.dim(1);
  if (heads < 1 || d % heads != 0)
    throw std::invalid_argument("attention: width " + std::to_string(d) + " not divisible by " +
                                std::to_string(heads) + " heads");
  require_same_shape("attention", q, k);
  require_same_shape("attention", q, v);
  const int dh = d / heads;
  const S scale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(dh)));
  std::vector<Tensor<S>> ctx;
  ctx.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const int c0 = h * dh, c1 = (h + 1) * dh;
    Tensor<S> qh = tape.slice_cols(q, c0, c1);
    Tensor<S> kh = tape.slice_cols(k, c0, c1);
    Tensor<S> vh = tape.slice_cols(v, c0, c1);
    Tensor<S> scores = tape.scalar_mul(tape.matmul(qh, tape.transpose(kh)), scale);
    Tensor<S> probs = tape.softmax_causal(scores, causal);
    ctx.push_back(tape.matmul(probs, vh));
  }
  return tape.concat_cols(std::span<const Tensor<S>>(ctx.data(), ctx.size()));
}

// ---- gradient checking -----------------------------------------------------

struct GradCheckParam {
  std::string name;
  double max_rel_err = 0.0;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  int64_t skipped_elements = 0;  // perturbed evals that landed near a kink
  bool nonfinite = false;
};

struct GradCheckReport {
  std::vector<GradCheckParam> params;
  double h = 0.0;
  double tol = 0.0;
  bool skipped_nondiff = false;  // evaluation sat within 10h of an L1 kink
  bool pass = false;
  double worst = 0.0;
  std::string worst_name;

  std::string summary() const {
    std::ostringstream os;
    if (skipped_nondiff) {
      os << "skipped: non-differentiable point";
      return os.str();
    }
    os << (pass ? "pass" : "FAIL") << " (worst rel err " << worst << " on " << worst_name
       << ", tol " << tol << ")";
    return os.str();
  }
};

// Central-difference check of reverse-mode gradients. `f` must rebuild the
// taped computation from the current parameter values on every call. Intended
// for S = double; f32 checks drown in rounding noise.
template <class S>
GradCheckReport grad_check(const std::function<Tensor<S>(Tape<S>&)>& f,
                           std::span<const std::pair<std::string, Tensor<S>>> params,
                           double h = 1e-5, double tol = 1e-5) {
  GradCheckReport report;
  report.h = h;
  report.tol = tol;

  for (const auto& [name, p] : params) p.node()->grad.clear();
  Tape<S> tape;
  Tensor<S> loss = f(tape);
  const double gap = tape.min_kink_gap();
  const uint64_t base_signs = tape.kink_sign_hash();
  if (gap <= 10.0 * h) {
    report.skipped_nondiff = true;
    return report;
  }
  tape.backward(loss);

  std::vector<std::vector<S>> analytic;
  analytic.reserve(params.size());
  for (const auto& [name, p] : params) {
    if (p.has_grad())
      analytic.emplace_back(p.grad_view().begin(), p.grad_view().end());
    else
      analytic.emplace_back(static_cast<size_t>(p.numel()), S(0));
  }

  auto eval = [&](double& kink_gap, uint64_t& signs) -> double {
    Tape<S> t(false);
    const double v = static_cast<double>(f(t).item());
    kink_gap = t.min_kink_gap();
    signs = t.kink_sign_hash();
    return v;
  };

  bool all_ok = true;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    const auto& [name, p] = params[pi];
    GradCheckParam item;
    item.name = name;
    Tensor<S> ph = p;  // handle copy; shares the underlying buffer
    auto vals = ph.data();
    for (int64_t i = 0; i < p.numel(); ++i) {
      const S v0 = vals[static_cast<size_t>(i)];
      bool crossed = false;
      auto diff_at = [&](double step) -> double {
        double gap_p = 0.0, gap_m = 0.0;
        uint64_t signs_p = 0, signs_m = 0;
        vals[static_cast<size_t>(i)] = v0 + S(step);
        const double lp = eval(gap_p, signs_p);
        vals[static_cast<size_t>(i)] = v0 - S(step);
        const double lm = eval(gap_m, signs_m);
        vals[static_cast<size_t>(i)] = v0;
        // A perturbed evaluation can step across a kink (some relu input or
        // L1 residual changes sign), which biases the difference with a
        // spurious slope-change term. Near-kink distances are treated the
        // same since the sign at ~0 is noise.
        crossed = crossed || signs_p != base_signs || signs_m != base_signs ||
                  gap_p <= 10.0 * h || gap_m <= 10.0 * h;
        return (lp - lm) / (2.0 * step);
      };
      // Richardson-extrapolated central differences: the h^2 truncation term
      // cancels between steps h and h/2, leaving O(h^4). Plain h=1e-5 central
      // differences carry curvature error near 1e-5 through layer_norm, which
      // would drown the tolerance.
      const double d1 = diff_at(h);
      const double d2 = diff_at(h / 2.0);
      if (crossed) {
        ++item.skipped_elements;
        continue;
      }
      const double num = (4.0 * d2 - d1) / 3.0;
      const double ana = static_cast<double>(analytic[pi][static_cast<size_t>(i)]);
      if (!std::isfinite(num) || !std::isfinite(ana)) {
        item.nonfinite = true;
        item.worst_index = i;
        all_ok = false;
        break;
      }
      // Floor keeps finite-difference roundoff (~1e-11 absolute here) from
      // registering as relative error on near-zero gradients; mismatches
      // below tol * floor are indistinguishable from evaluation noise.
      const double denom = std::max({std::abs(num), std::abs(ana), 1e-3});
      const double rel = std::abs(num - ana) / denom;
      if (rel > item.max_rel_err) {
        item.max_rel_err = rel;
        item.worst_index = i;
        item.analytic = ana;
        item.numeric = num;
      }
    }
    if (item.max_rel_err > report.worst) {
      report.worst = item.max_rel_err;
      report.worst_name = item.name;
    }
    if (item.nonfinite || item.max_rel_err > tol) all_ok = false;
    report.params.push_back(std::move(item));
  }
  report.pass = all_ok;
  return report;
}

// One plain gradient-descent step: p -= lr * p.grad for every tensor that has
// an accumulated gradient. lr == 0 is an exact no-op.
template <class S>
void sgd_update(std::span<const Tensor<S>> params, S lr) {
  if (lr == S(0)) return;
  for (const Tensor<S>& p : params) {
    if (!p.has_grad()) continue;
    auto n = p.node();
    for (size_t i = 0; i < n->values.size(); ++i) {
      if (!std::isfinite(static_cast<double>(n->grad[i])))
        throw std::runtime_error("sgd_update: non-finite gradient");
      n->values[i] -= lr * n->grad[i];
    }
  }
}

}  // namespace ossem
