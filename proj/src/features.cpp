#include "ossem/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ossem {

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

Window window_from_string(const std::string& s) {
  if (s == "hann") return Window::Hann;
  if (s == "rect") return Window::Rect;
  throw std::invalid_argument("window: unknown kind '" + s + "' (expected hann or rect)");
}

std::string window_to_string(Window w) { return w == Window::Hann ? "hann" : "rect"; }

void validate_stft_config(const StftConfig& cfg) {
  if (!is_pow2(cfg.frame_len)) throw std::invalid_argument("stft: frame_len must be a power of two");
  if (cfg.hop < 1) throw std::invalid_argument("stft: hop must be >= 1");
  if (cfg.hop > cfg.frame_len) throw std::invalid_argument("stft: hop must not exceed frame_len");
  if (cfg.frame_len % cfg.hop != 0)
    throw std::invalid_argument("stft: hop must divide frame_len for overlap-add reconstruction");
  if (cfg.window == Window::Hann && cfg.hop > cfg.frame_len / 2)
    throw std::invalid_argument("stft: hann window requires hop <= frame_len/2");
  if (cfg.sample_rate < 1) throw std::invalid_argument("stft: sample_rate must be positive");
}

void fft_inplace(std::span<std::complex<double>> a, bool inverse) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    const double s = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= s;
  }
}

std::vector<double> make_window(Window w, int n) {
  if (n < 1) throw std::invalid_argument("window: length must be positive");
  std::vector<double> out(static_cast<size_t>(n), 1.0);
  if (w == Window::Hann) {
    for (int i = 0; i < n; ++i)
      out[static_cast<size_t>(i)] =
          0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n)));
  }
  return out;
}

int frame_count(size_t wave_len, int hop) {
  if (wave_len == 0) return 0;
  return static_cast<int>((wave_len + static_cast<size_t>(hop) - 1) / static_cast<size_t>(hop));
}

void analyze_frame(std::span<const double> wave, size_t start, const StftConfig& cfg,
                   std::span<const double> window, std::span<double> mag_out,
                   std::span<double> phase_out) {
  const int n = cfg.frame_len;
  const int bins = cfg.bins();
  if (static_cast<int>(mag_out.size()) != bins || static_cast<int>(phase_out.size()) != bins)
    throw std::invalid_argument("stft: output row width does not match frame geometry");
  std::vector<std::complex<double>> buf(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const size_t idx = start + static_cast<size_t>(i);
    const double s = idx < wave.size() ? wave[idx] : 0.0;
    buf[static_cast<size_t>(i)] = {s * window[static_cast<size_t>(i)], 0.0};
  }
  fft_inplace(buf, false);
  for (int k = 0; k < bins; ++k) {
    const double re = buf[static_cast<size_t>(k)].real();
    const double im = buf[static_cast<size_t>(k)].imag();
    double ph = std::atan2(im, re);
    if (ph <= -std::numbers::pi) ph = std::numbers::pi;
    mag_out[static_cast<size_t>(k)] = std::hypot(re, im);
    phase_out[static_cast<size_t>(k)] = ph;
  }
}

Spectrogram stft(std::span<const double> wave, const StftConfig& cfg) {
  validate_stft_config(cfg);
  if (wave.empty()) throw std::invalid_argument("stft: empty wave");
  const int bins = cfg.bins();
  const int frames = frame_count(wave.size(), cfg.hop);
  const std::vector<double> win = make_window(cfg.window, cfg.frame_len);

  Spectrogram spec;
  spec.cfg = cfg;
  spec.frames = frames;
  spec.bins = bins;
  spec.mag.assign(static_cast<size_t>(frames) * bins, 0.0);
  spec.phase.assign(static_cast<size_t>(frames) * bins, 0.0);
  for (int t = 0; t < frames; ++t) {
    const size_t start = static_cast<size_t>(t) * static_cast<size_t>(cfg.hop);
    analyze_frame(wave, start, cfg, win,
                  std::span<double>(spec.mag).subspan(static_cast<size_t>(t) * bins, bins),
                  std::span<double>(spec.phase).subspan(static_cast<size_t>(t) * bins, bins));
  }
  return spec;
}

std::vector<double> synth_frame(std::span<const double> mag_row, std::span<const double> phase_row,
                                const StftConfig& cfg, std::span<const double> window) {
  const int n = cfg.frame_len;
  const int bins = cfg.bins();
  if (static_cast<int>(mag_row.size()) != bins || static_cast<int>(phase_row.size()) != bins)
    throw std::invalid_argument("istft: row width does not match frame geometry");
  std::vector<std::complex<double>> buf(static_cast<size_t>(n));
  for (int k = 0; k < bins; ++k) {
    const double m = mag_row[static_cast<size_t>(k)];
    const double p = phase_row[static_cast<size_t>(k)];
    buf[static_cast<size_t>(k)] = std::polar(m, p);
  }
  for (int k = bins; k < n; ++k) buf[static_cast<size_t>(k)] = std::conj(buf[static_cast<size_t>(n - k)]);
  fft_inplace(buf, true);
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = buf[static_cast<size_t>(i)].real() * window[static_cast<size_t>(i)];
  return out;
}

std::vector<double> wola_denominator(int frames, const StftConfig& cfg,
                                     std::span<const double> window) {
  const int n = cfg.frame_len;
  if (frames < 1) return {};
  const size_t len = static_cast<size_t>(frames - 1) * cfg.hop + static_cast<size_t>(n);
  std::vector<double> den(len, 0.0);
  for (int t = 0; t < frames; ++t) {
    const size_t start = static_cast<size_t>(t) * static_cast<size_t>(cfg.hop);
    for (int i = 0; i < n; ++i) den[start + static_cast<size_t>(i)] += window[static_cast<size_t>(i)] * window[static_cast<size_t>(i)];
  }
  return den;
}

std::vector<double> istft(const Spectrogram& spec, size_t out_len) {
  validate_stft_config(spec.cfg);
  if (spec.frames < 1) throw std::invalid_argument("istft: empty spectrogram");
  if (spec.bins != spec.cfg.bins())
    throw std::invalid_argument("istft: bin count does not match frame geometry");
  if (spec.mag.size() != static_cast<size_t>(spec.frames) * spec.bins ||
      spec.phase.size() != spec.mag.size())
    throw std::invalid_argument("istft: inconsistent mag/phase storage");
  const int n = spec.cfg.frame_len;
  const std::vector<double> win = make_window(spec.cfg.window, n);
  const std::vector<double> den = wola_denominator(spec.frames, spec.cfg, win);
  std::vector<double> acc(den.size(), 0.0);
  for (int t = 0; t < spec.frames; ++t) {
    const std::vector<double> frame =
        synth_frame(std::span<const double>(spec.mag).subspan(static_cast<size_t>(t) * spec.bins, spec.bins),
                    std::span<const double>(spec.phase).subspan(static_cast<size_t>(t) * spec.bins, spec.bins),
                    spec.cfg, win);
    const size_t start = static_cast<size_t>(t) * static_cast<size_t>(spec.cfg.hop);
    for (int i = 0; i < n; ++i) acc[start + static_cast<size_t>(i)] += frame[static_cast<size_t>(i)];
  }
  if (out_len == 0) out_len = static_cast<size_t>(spec.frames) * static_cast<size_t>(spec.cfg.hop);
  std::vector<double> out(out_len, 0.0);
  const size_t lim = std::min(out_len, acc.size());
  for (size_t i = 0; i < lim; ++i) out[i] = acc[i] / std::max(den[i], kWolaDenomFloor);
  return out;
}

double rescale_ratio(const Spectrogram& clean, const Spectrogram& noisy) {
  if (clean.frames != noisy.frames || clean.bins != noisy.bins)
    throw std::invalid_argument("rescale_ratio: shape mismatch");
  return rescale_ratio_span<double>(clean.mag, noisy.mag);
}

}  // namespace ossem
