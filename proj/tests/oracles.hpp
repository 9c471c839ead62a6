#pragma once

// Independent reference implementations used to cross-check the production
// code. Everything here is written with plain loops and a *different*
// algorithm or loop order than the library (direct DFT instead of a radix-2
// FFT, jki matmul instead of ikj, per-head explicit softmax, two-pass
// moments), so a shared bug is unlikely to cancel out.

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

namespace oracle {

// C = A(m x k) * B(k x n), jki order, accumulating in long double.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  int m, int k, int n) {
  std::vector<double> c(static_cast<size_t>(m) * n, 0.0);
  for (int j = 0; j < n; ++j)
    for (int kk = 0; kk < k; ++kk)
      for (int i = 0; i < m; ++i) {
        long double acc = static_cast<long double>(c[static_cast<size_t>(i) * n + j]);
        acc += static_cast<long double>(a[static_cast<size_t>(i) * k + kk]) *
               static_cast<long double>(b[static_cast<size_t>(kk) * n + j]);
        c[static_cast<size_t>(i) * n + j] = static_cast<double>(acc);
      }
  return c;
}

// Causal 1-D convolution over time. Kernel taps are stored oldest-first, so
// tap K-1 reads the current frame: out[t, co] = b[co] +
// sum_{dt=0..K-1} sum_ci w[K-1-dt, ci, co] * x[t - dt, ci], x padded with
// zeros on the left. Direct four-deep loop.
inline std::vector<double> conv1d_causal(const std::vector<double>& x, int t_len, int cin,
                                         const std::vector<double>& w, int kernel, int cout,
                                         const std::vector<double>& b) {
  std::vector<double> out(static_cast<size_t>(t_len) * cout, 0.0);
  for (int t = 0; t < t_len; ++t)
    for (int co = 0; co < cout; ++co) {
      double acc = b[static_cast<size_t>(co)];
      for (int dt = 0; dt < kernel; ++dt) {
        const int src = t - dt;
        if (src < 0) continue;
        const size_t tap = static_cast<size_t>(kernel - 1 - dt);
        for (int ci = 0; ci < cin; ++ci)
          acc += w[(tap * cin + ci) * cout + co] * x[static_cast<size_t>(src) * cin + ci];
      }
      out[static_cast<size_t>(t) * cout + co] = acc;
    }
  return out;
}

// Multi-head scaled dot-product attention with optional causal masking.
// Heads are processed one at a time with explicit probability vectors;
// masked positions are simply excluded from the softmax sum.
inline std::vector<double> attention(const std::vector<double>& q, const std::vector<double>& k,
                                     const std::vector<double>& v, int t_len, int d, int heads,
                                     bool causal) {
  const int hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> out(static_cast<size_t>(t_len) * d, 0.0);
  for (int h = 0; h < heads; ++h) {
    const int c0 = h * hd;
    for (int i = 0; i < t_len; ++i) {
      const int last = causal ? i : t_len - 1;
      std::vector<double> logits(static_cast<size_t>(last) + 1);
      double mx = -1e300;
      for (int j = 0; j <= last; ++j) {
        double s = 0.0;
        for (int c = 0; c < hd; ++c)
          s += q[static_cast<size_t>(i) * d + c0 + c] * k[static_cast<size_t>(j) * d + c0 + c];
        logits[static_cast<size_t>(j)] = s * scale;
        mx = std::max(mx, logits[static_cast<size_t>(j)]);
      }
      double z = 0.0;
      for (double& l : logits) {
        l = std::exp(l - mx);
        z += l;
      }
      for (int j = 0; j <= last; ++j) {
        const double p = logits[static_cast<size_t>(j)] / z;
        for (int c = 0; c < hd; ++c)
          out[static_cast<size_t>(i) * d + c0 + c] += p * v[static_cast<size_t>(j) * d + c0 + c];
      }
    }
  }
  return out;
}

// Per-row normalization with two-pass mean/variance, then affine.
inline std::vector<double> layer_norm(const std::vector<double>& x, int rows, int cols,
                                      const std::vector<double>& gain,
                                      const std::vector<double>& bias, double eps = 1e-5) {
  std::vector<double> out(x.size());
  for (int r = 0; r < rows; ++r) {
    const double* row = x.data() + static_cast<size_t>(r) * cols;
    double mean = 0.0;
    for (int c = 0; c < cols; ++c) mean += row[c];
    mean /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < cols; ++c)
      out[static_cast<size_t>(r) * cols + c] = (row[c] - mean) * inv * gain[static_cast<size_t>(c)] +
                                               bias[static_cast<size_t>(c)];
  }
  return out;
}

// Direct O(n^2) discrete Fourier transform.
inline std::vector<std::complex<double>> dft(const std::vector<std::complex<double>>& x) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<long double> acc = 0;
    for (size_t t = 0; t < n; ++t) {
      const long double ang = -2.0L * 3.14159265358979323846264338327950288L *
                              static_cast<long double>(k) * static_cast<long double>(t) /
                              static_cast<long double>(n);
      acc += std::complex<long double>(x[t].real(), x[t].imag()) *
             std::complex<long double>(std::cos(ang), std::sin(ang));
    }
    out[k] = std::complex<double>(static_cast<double>(acc.real()), static_cast<double>(acc.imag()));
  }
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace oracle
