#include "ossem/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ossem {

namespace {

// Projection SNR of `est` against `ref` over one window; -inf/+inf encode the
// degenerate all-residual / zero-residual cases.
double projection_snr_db(std::span<const double> est, std::span<const double> ref) {
  double dot = 0.0, rr = 0.0;
  for (size_t i = 0; i < est.size(); ++i) {
    dot += est[i] * ref[i];
    rr += ref[i] * ref[i];
  }
  const double c = dot / rr;
  double es = 0.0, en = 0.0;
  for (size_t i = 0; i < est.size(); ++i) {
    const double s = c * ref[i];
    const double e = est[i] - s;
    es += s * s;
    en += e * e;
  }
  if (es == 0.0) return -std::numeric_limits<double>::infinity();
  if (en == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(es / en);
}

}  // namespace

double si_sdr(std::span<const double> est, std::span<const double> ref) {
  if (est.size() != ref.size()) throw std::invalid_argument("si_sdr: length mismatch");
  if (est.empty()) throw std::invalid_argument("si_sdr: empty signals");
  double rr = 0.0;
  for (double v : ref) rr += v * v;
  if (rr == 0.0) throw std::invalid_argument("si_sdr: zero reference");
  return std::clamp(projection_snr_db(est, ref), -kSiSdrCapDb, kSiSdrCapDb);
}

double seg_snr(std::span<const double> est, std::span<const double> ref, int frame_len) {
  if (est.size() != ref.size()) throw std::invalid_argument("seg_snr: length mismatch");
  if (frame_len < 1) throw std::invalid_argument("seg_snr: frame_len must be positive");
  double acc = 0.0;
  int used = 0;
  for (size_t start = 0; start + static_cast<size_t>(frame_len) <= est.size();
       start += static_cast<size_t>(frame_len)) {
    const auto e = est.subspan(start, static_cast<size_t>(frame_len));
    const auto r = ref.subspan(start, static_cast<size_t>(frame_len));
    double rr = 0.0;
    for (double v : r) rr += v * v;
    if (rr == 0.0) continue;  // silent reference frame
    acc += std::clamp(projection_snr_db(e, r), -10.0, 35.0);
    ++used;
  }
  if (used == 0) throw std::invalid_argument("seg_snr: all reference frames silent");
  return acc / static_cast<double>(used);
}

double spectral_l1(std::span<const double> est, std::span<const double> ref, const StftConfig& cfg) {
  const Spectrogram a = stft(est, cfg);
  const Spectrogram b = stft(ref, cfg);
  if (a.mag.size() != b.mag.size()) throw std::invalid_argument("spectral_l1: length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.mag.size(); ++i) acc += std::abs(a.mag[i] - b.mag[i]);
  return acc / static_cast<double>(a.mag.size());
}

}  // namespace ossem
