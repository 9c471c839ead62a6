#pragma once

#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ossem {

enum class Window { Hann, Rect };

Window window_from_string(const std::string& s);
std::string window_to_string(Window w);

struct StftConfig {
  int sample_rate = 16000;
  int frame_len = 512;
  int hop = 256;
  Window window = Window::Hann;

  int bins() const { return frame_len / 2 + 1; }
};

// Frames start at t*hop with no head padding (frame 0 is aligned with sample
// 0); the tail is zero-padded so frame_count = ceil(len / hop).
struct Spectrogram {
  StftConfig cfg;
  int frames = 0;
  int bins = 0;
  std::vector<double> mag;    // frames x bins, row-major, >= 0
  std::vector<double> phase;  // frames x bins, values in (-pi, pi]
};

// Throws on geometry the overlap-add reconstruction cannot invert.
void validate_stft_config(const StftConfig& cfg);

// Radix-2 iterative FFT; size must be a power of two. inverse=true applies
// the conjugate transform and the 1/N scale.
void fft_inplace(std::span<std::complex<double>> a, bool inverse);

std::vector<double> make_window(Window w, int n);

int frame_count(size_t wave_len, int hop);

Spectrogram stft(std::span<const double> wave, const StftConfig& cfg);

// Weighted overlap-add; out_len = 0 reconstructs frames*hop samples.
std::vector<double> istft(const Spectrogram& spec, size_t out_len = 0);

// ---- per-frame helpers shared by stft/istft and the streaming enhancer -----

// Windowed FFT of the frame starting at `start`; samples beyond the end of
// the wave read as zero. Fills `bins()` magnitudes and phases.
void analyze_frame(std::span<const double> wave, size_t start, const StftConfig& cfg,
                   std::span<const double> window, std::span<double> mag_out,
                   std::span<double> phase_out);

// One time-domain synthesis frame: Hermitian spectrum from (mag, phase),
// inverse FFT, multiplied by the synthesis window.
std::vector<double> synth_frame(std::span<const double> mag_row, std::span<const double> phase_row,
                                const StftConfig& cfg, std::span<const double> window);

// Sum of squared window values that covers sample n (the WOLA denominator),
// for samples overlapped by frames 0..frames-1.
std::vector<double> wola_denominator(int frames, const StftConfig& cfg,
                                     std::span<const double> window);

inline constexpr double kWolaDenomFloor = 1e-8;

// Average energy ratio sum(clean^2) / sum(noisy^2) over all elements.
double rescale_ratio(const Spectrogram& clean, const Spectrogram& noisy);

template <class S>
double rescale_ratio_span(std::span<const S> clean, std::span<const S> noisy) {
  if (clean.size() != noisy.size())
    throw std::invalid_argument("rescale_ratio: shape mismatch");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < clean.size(); ++i) {
    num += static_cast<double>(clean[i]) * static_cast<double>(clean[i]);
    den += static_cast<double>(noisy[i]) * static_cast<double>(noisy[i]);
  }
  if (den == 0.0) throw std::invalid_argument("rescale_ratio: zero noisy energy");
  if (num == 0.0) throw std::invalid_argument("rescale_ratio: zero clean energy");
  const double alpha = num / den;
  if (!std::isfinite(alpha) || alpha <= 0.0)
    throw std::runtime_error("rescale_ratio: degenerate ratio");
  return alpha;
}

}  // namespace ossem
