#include <doctest/doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <vector>

#include "ossem/features.hpp"
#include "ossem/rng.hpp"
#include "ossem/wav.hpp"
#include "oracles.hpp"

using namespace ossem;

namespace {

std::vector<double> rand_wave(size_t n, Rng& rng, double scale = 0.3) {
  std::vector<double> w(n);
  for (auto& x : w) x = rng.normal() * scale;
  return w;
}

StftConfig small_cfg() {
  StftConfig cfg;
  cfg.frame_len = 64;
  cfg.hop = 32;
  cfg.sample_rate = 8000;
  cfg.window = Window::Hann;
  return cfg;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("fft matches the direct transform and inverts exactly enough") {
  Rng rng(41);
  for (int n : {8, 64, 256}) {
    std::vector<std::complex<double>> x(static_cast<size_t>(n));
    for (auto& v : x) v = {rng.normal(), rng.normal()};
    auto want = oracle::dft(x);
    auto got = x;
    fft_inplace(got, false);
    for (int i = 0; i < n; ++i) {
      CHECK(got[static_cast<size_t>(i)].real() ==
            doctest::Approx(want[static_cast<size_t>(i)].real()).epsilon(1e-9));
      CHECK(got[static_cast<size_t>(i)].imag() ==
            doctest::Approx(want[static_cast<size_t>(i)].imag()).epsilon(1e-9));
    }
    fft_inplace(got, true);
    for (int i = 0; i < n; ++i)
      CHECK(std::abs(got[static_cast<size_t>(i)] - x[static_cast<size_t>(i)]) < 1e-10);
  }
}

TEST_CASE("zero wave produces an all-zero magnitude") {
  auto cfg = small_cfg();
  std::vector<double> wave(400, 0.0);
  Spectrogram spec = stft(wave, cfg);
  CHECK(spec.frames > 0);
  for (double m : spec.mag) CHECK(m == 0.0);
}

TEST_CASE("a bin-centre sinusoid concentrates frame energy at its bin") {
  auto cfg = small_cfg();
  const int bin = 9;
  const double freq = static_cast<double>(bin) * cfg.sample_rate / cfg.frame_len;
  std::vector<double> wave(1600);
  for (size_t i = 0; i < wave.size(); ++i)
    wave[i] = std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / cfg.sample_rate);

  // rectangular window: the tone lands in exactly one bin
  StftConfig rect = cfg;
  rect.window = Window::Rect;
  rect.hop = rect.frame_len;  // rect satisfies overlap-add at full hop
  Spectrogram rs = stft(wave, rect);
  const int bins = cfg.bins();
  for (int t = 1; t < rs.frames - 2; ++t) {
    double total = 0.0, at_bin = 0.0;
    for (int f = 0; f < bins; ++f) {
      const double e = rs.mag[static_cast<size_t>(t) * bins + f] *
                       rs.mag[static_cast<size_t>(t) * bins + f];
      total += e;
      if (f == bin) at_bin = e;
    }
    CHECK(at_bin >= 0.99 * total);
  }

  // hann window: the main lobe spans the bin and one neighbour either side
  Spectrogram hs = stft(wave, cfg);
  for (int t = 3; t < hs.frames - 3; ++t) {
    double total = 0.0, at_bin = 0.0;
    for (int f = 0; f < bins; ++f) {
      const double e = hs.mag[static_cast<size_t>(t) * bins + f] *
                       hs.mag[static_cast<size_t>(t) * bins + f];
      total += e;
      if (std::abs(f - bin) <= 1) at_bin += e;
    }
    CHECK(at_bin >= 0.90 * total);
  }
}

TEST_CASE("per-frame energy obeys Parseval against a direct DFT") {
  auto cfg = small_cfg();
  Rng rng(43);
  auto wave = rand_wave(1000, rng);
  Spectrogram spec = stft(wave, cfg);
  const int bins = cfg.bins();
  auto win = make_window(cfg.window, cfg.frame_len);
  for (int t = 2; t < spec.frames - 2; ++t) {
    // windowed frame energy, computed directly from the signal
    std::vector<std::complex<double>> frame(static_cast<size_t>(cfg.frame_len), 0.0);
    double time_e = 0.0;
    for (int i = 0; i < cfg.frame_len; ++i) {
      const size_t src = static_cast<size_t>(t) * cfg.hop + static_cast<size_t>(i);
      const double s = src < wave.size() ? wave[src] : 0.0;
      frame[static_cast<size_t>(i)] = s * win[static_cast<size_t>(i)];
      time_e += std::norm(frame[static_cast<size_t>(i)]);
    }
    auto full = oracle::dft(frame);
    double freq_e = 0.0;
    for (const auto& c : full) freq_e += std::norm(c);
    freq_e /= cfg.frame_len;
    if (time_e < 1e-12) continue;
    CHECK(freq_e == doctest::Approx(time_e).epsilon(1e-3));

    // and the stored magnitudes agree with the one-sided spectrum
    for (int f = 0; f < bins; ++f)
      CHECK(spec.mag[static_cast<size_t>(t) * bins + f] ==
            doctest::Approx(std::abs(full[static_cast<size_t>(f)])).epsilon(1e-6));
  }
}

TEST_CASE("stft then istft reconstructs interior samples") {
  Rng rng(47);
  for (auto [frame, hop] : {std::pair{64, 32}, std::pair{128, 64}, std::pair{64, 16}}) {
    StftConfig cfg = small_cfg();
    cfg.frame_len = frame;
    cfg.hop = hop;
    auto wave = rand_wave(1200, rng);
    Spectrogram spec = stft(wave, cfg);
    auto back = istft(spec, wave.size());
    REQUIRE(back.size() == wave.size());
    for (size_t i = static_cast<size_t>(frame); i + frame < wave.size(); ++i)
      CHECK(back[i] == doctest::Approx(wave[i]).epsilon(1e-4));
  }
}

TEST_CASE("istft is linear in the magnitude at fixed phase") {
  auto cfg = small_cfg();
  Rng rng(53);
  auto wave = rand_wave(900, rng);
  Spectrogram spec = stft(wave, cfg);
  auto base = istft(spec, wave.size());
  Spectrogram doubled = spec;
  for (auto& m : doubled.mag) m *= 2.0;
  auto out = istft(doubled, wave.size());
  for (size_t i = 0; i < base.size(); ++i)
    CHECK(out[i] == doctest::Approx(2.0 * base[i]).epsilon(1e-6));

  Spectrogram zero = spec;
  for (auto& m : zero.mag) m = 0.0;
  for (double s : istft(zero, wave.size())) CHECK(s == 0.0);
}

TEST_CASE("stft frames ignore later-sample perturbations") {
  auto cfg = small_cfg();
  Rng rng(59);
  auto wave = rand_wave(800, rng);
  auto wave2 = wave;
  const size_t cut = 500;
  for (size_t i = cut; i < wave2.size(); ++i) wave2[i] += rng.normal();
  Spectrogram a = stft(wave, cfg), b = stft(wave2, cfg);
  const int bins = cfg.bins();
  // frame t reads samples [t*hop, t*hop + frame_len)
  const int safe_frames = (static_cast<int>(cut) - cfg.frame_len) / cfg.hop + 1;
  for (int t = 0; t < safe_frames; ++t)
    for (int f = 0; f < bins; ++f) {
      CHECK(a.mag[static_cast<size_t>(t) * bins + f] == b.mag[static_cast<size_t>(t) * bins + f]);
      CHECK(a.phase[static_cast<size_t>(t) * bins + f] ==
            b.phase[static_cast<size_t>(t) * bins + f]);
    }
}

TEST_CASE("energy ratio covers identity, scaling, and the mixed case") {
  Spectrogram clean, noisy;
  clean.frames = noisy.frames = 2;
  clean.bins = noisy.bins = 2;
  clean.mag = {1, 2, 3, 4};
  noisy.mag = {2, 2, 2, 2};
  clean.phase.assign(4, 0.0);
  noisy.phase.assign(4, 0.0);
  CHECK(rescale_ratio(noisy, noisy) == 1.0);
  Spectrogram twice = noisy;
  for (auto& m : twice.mag) m *= 2.0;
  CHECK(rescale_ratio(twice, noisy) == 4.0);
  CHECK(rescale_ratio(clean, noisy) == doctest::Approx(30.0 / 16.0).epsilon(1e-15));
  CHECK(rescale_ratio(clean, noisy) == 1.875);

  // quadratic scaling as a property
  Rng rng(61);
  Spectrogram y = clean;
  for (auto& m : y.mag) m = std::abs(rng.normal()) + 0.1;
  const double a = 1.7;
  Spectrogram ay = y;
  for (auto& m : ay.mag) m *= a;
  CHECK(rescale_ratio(ay, noisy) ==
        doctest::Approx(a * a * rescale_ratio(y, noisy)).epsilon(1e-12));

  Spectrogram zeroed = noisy;
  for (auto& m : zeroed.mag) m = 0.0;
  CHECK_THROWS_AS((void)rescale_ratio(clean, zeroed), std::invalid_argument);
}

TEST_CASE("stft rejects degenerate configurations") {
  std::vector<double> wave(100, 0.1);
  StftConfig cfg = small_cfg();
  cfg.hop = cfg.frame_len * 2;
  CHECK_THROWS_AS((void)stft(wave, cfg), std::invalid_argument);
  cfg = small_cfg();
  cfg.frame_len = 63;  // not a power of two
  CHECK_THROWS_AS((void)stft(wave, cfg), std::invalid_argument);
  CHECK_THROWS_AS((void)stft(std::vector<double>{}, small_cfg()), std::invalid_argument);
}

TEST_CASE("wav files round-trip within quantization error") {
  namespace fs = std::filesystem;
  Rng rng(67);
  WavData w;
  w.sample_rate = 8000;
  w.samples = rand_wave(500, rng, 0.25);
  for (auto& s : w.samples) s = std::clamp(s, -1.0, 32766.0 / 32768.0);
  w.samples.push_back(1.7);   // clipped to the largest positive code
  w.samples.push_back(-1.7);  // clipped to -1
  const auto path = (fs::temp_directory_path() / "ossem_wav_rt.wav").string();
  write_wav(path, w);
  WavData r = read_wav(path);
  CHECK(r.sample_rate == w.sample_rate);
  REQUIRE(r.samples.size() == w.samples.size());
  const size_t n = r.samples.size();
  for (size_t i = 0; i < n - 2; ++i) {
    CHECK(r.samples[i] >= -1.0);
    CHECK(r.samples[i] < 1.0);
    CHECK(std::abs(r.samples[i] - w.samples[i]) < 1.0 / 32768.0 + 1e-9);
  }
  CHECK(r.samples[n - 2] == 32767.0 / 32768.0);
  CHECK(r.samples[n - 1] == -1.0);
  fs::remove(path);
  CHECK_THROWS(read_wav((fs::temp_directory_path() / "ossem_missing.wav").string()));
}

}  // TEST_SUITE
