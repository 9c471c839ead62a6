#include <doctest/doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <vector>

#include "ossem/corpus.hpp"
#include "ossem/metrics.hpp"
#include "ossem/rng.hpp"
#include "ossem/speaker.hpp"
#include "ossem/wav.hpp"

using namespace ossem;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

CorpusConfig small_corpus_cfg() {
  CorpusConfig cfg;
  cfg.n_train_speakers = 2;
  cfg.n_test_speakers = 2;
  cfg.utts_per_speaker = 4;
  cfg.duration_s = 1.0;
  cfg.sample_rate = 16000;
  cfg.noises = {"white", "pink"};
  cfg.snrs_db = {0.0, 5.0};
  return cfg;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("mixing hits the requested ratio exactly and loops short noise") {
  std::vector<double> clean{0.5, -0.2, 0.8, 0.1, -0.6, 0.3};
  std::vector<double> noise{2.0};  // loops across the whole utterance
  for (double snr : {-5.0, 0.0, 7.5, 20.0}) {
    auto mixed = mix_at_snr(clean, noise, snr);
    REQUIRE(mixed.size() == clean.size());
    double ec = 0.0, en = 0.0;
    for (size_t i = 0; i < clean.size(); ++i) {
      ec += clean[i] * clean[i];
      const double d = mixed[i] - clean[i];
      en += d * d;
    }
    CHECK(10.0 * std::log10(ec / en) == doctest::Approx(snr).epsilon(1e-9));
    // looped constant noise adds the same offset everywhere
    const double off = mixed[0] - clean[0];
    for (size_t i = 1; i < clean.size(); ++i)
      CHECK(mixed[i] - clean[i] == doctest::Approx(off).epsilon(1e-12));
  }

  std::vector<double> longer(32, 0.7);  // cropped to the clean length
  auto mixed = mix_at_snr(clean, longer, 3.0);
  CHECK(mixed.size() == clean.size());

  CHECK_THROWS_AS((void)mix_at_snr(std::vector<double>{}, noise, 0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)mix_at_snr(clean, std::vector<double>{}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)mix_at_snr(std::vector<double>(4, 0.0), noise, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)mix_at_snr(clean, std::vector<double>(4, 0.0), 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)mix_at_snr(clean, noise, std::nan("")), std::invalid_argument);
}

TEST_CASE("synthesized material is deterministic and level-normalized") {
  SyntheticSpeaker spk = make_speaker_profile(0, 42);
  auto a = synth_utterance(spk, 16000, 16000, Rng(9));
  auto b = synth_utterance(spk, 16000, 16000, Rng(9));
  CHECK(a == b);  // bitwise

  for (const char* kind : {"white", "pink", "babble"}) {
    auto n1 = synth_noise(kind, 8000, 16000, Rng(11));
    auto n2 = synth_noise(kind, 8000, 16000, Rng(11));
    CHECK(n1 == n2);
    double ss = 0.0;
    for (double v : n1) ss += v * v;
    const double rms = std::sqrt(ss / static_cast<double>(n1.size()));
    CHECK(rms == doctest::Approx(0.08).epsilon(0.25));  // normalized unless peak-limited
  }
  CHECK_THROWS_AS((void)synth_noise("brown", 8000, 16000, Rng(1)), std::invalid_argument);

  // alternating F0 regimes
  CHECK(make_speaker_profile(0, 42).gender_tag == "low_f0");
  CHECK(make_speaker_profile(1, 42).gender_tag == "high_f0");
  CHECK(make_speaker_profile(2, 42).gender_tag == "low_f0");
  CHECK(make_speaker_profile(0, 42).f0_hi < make_speaker_profile(1, 42).f0_lo);
}

TEST_CASE("generation lays out splits, files, and embeddings as promised") {
  const auto dir = fs::temp_directory_path() / "ossem_corpus_layout";
  fs::remove_all(dir);
  CorpusConfig cfg = small_corpus_cfg();
  CorpusManifest m = gen_corpus(cfg, dir.string(), 2024);

  CHECK(m.sample_rate == 16000);
  REQUIRE(m.speakers.size() == 4);
  REQUIRE(m.utts.size() == 16);

  int enroll = 0, train = 0, test = 0;
  for (const auto& u : m.utts) {
    if (u.split == "enroll") ++enroll;
    else if (u.split == "train") ++train;
    else if (u.split == "test") ++test;
    CHECK(fs::exists(dir / u.clean_path));
    CHECK(fs::exists(dir / u.noisy_path));
    CHECK((u.noise_type == "white" || u.noise_type == "pink"));
    CHECK((u.snr_db == 0.0 || u.snr_db == 5.0));
    // the noisy mixtures actually sit near the labelled ratio after
    // 16-bit quantization
    WavData cw = read_wav((dir / u.clean_path).string());
    WavData nw = read_wav((dir / u.noisy_path).string());
    double ec = 0.0, en = 0.0;
    for (size_t i = 0; i < cw.samples.size(); ++i) {
      ec += cw.samples[i] * cw.samples[i];
      const double d = nw.samples[i] - cw.samples[i];
      en += d * d;
    }
    CHECK(std::abs(10.0 * std::log10(ec / en) - u.snr_db) < 0.2);
  }
  CHECK(enroll == 4);  // one per speaker
  CHECK(train == 6);   // 2 training speakers x 3 remaining utts
  CHECK(test == 6);

  auto embs = load_embeddings((dir / "embeddings.csv").string());
  REQUIRE(embs.size() == 4);
  for (const auto& s : m.speakers) CHECK(embs.count(s.speaker_id) == 1);

  // stored vectors match a fresh pass over the quantized enrollment file
  for (const auto& u : m.utts) {
    if (u.split != "enroll") continue;
    WavData w = read_wav((dir / u.clean_path).string());
    auto fresh = builtin_embed(w.samples, u.speaker_id);
    const auto& stored = embs.at(u.speaker_id);
    for (size_t i = 0; i < fresh.vec.size(); ++i)
      CHECK(stored.vec[i] == doctest::Approx(fresh.vec[i]).epsilon(1e-12));
  }

  CHECK(m.speaker("spk00").speaker_id == "spk00");
  CHECK_THROWS_AS((void)m.speaker("spk99"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("the same seed regenerates the corpus byte for byte") {
  const auto d1 = fs::temp_directory_path() / "ossem_corpus_a";
  const auto d2 = fs::temp_directory_path() / "ossem_corpus_b";
  const auto d3 = fs::temp_directory_path() / "ossem_corpus_c";
  for (const auto& d : {d1, d2, d3}) fs::remove_all(d);
  CorpusConfig cfg = small_corpus_cfg();
  cfg.n_test_speakers = 0;
  cfg.utts_per_speaker = 2;
  CorpusManifest m1 = gen_corpus(cfg, d1.string(), 555);
  CorpusManifest m2 = gen_corpus(cfg, d2.string(), 555);
  CorpusManifest m3 = gen_corpus(cfg, d3.string(), 556);

  CHECK(slurp(d1 / "manifest.json") == slurp(d2 / "manifest.json"));
  CHECK(slurp(d1 / "embeddings.csv") == slurp(d2 / "embeddings.csv"));
  for (const auto& u : m1.utts) {
    CHECK(slurp(d1 / u.clean_path) == slurp(d2 / u.clean_path));
    CHECK(slurp(d1 / u.noisy_path) == slurp(d2 / u.noisy_path));
  }
  bool any_diff = false;
  for (size_t i = 0; i < m1.utts.size(); ++i)
    if (slurp(d1 / m1.utts[i].clean_path) != slurp(d3 / m3.utts[i].clean_path)) any_diff = true;
  CHECK(any_diff);
  for (const auto& d : {d1, d2, d3}) fs::remove_all(d);
}

TEST_CASE("manifests survive a save/load round trip") {
  const auto path = (fs::temp_directory_path() / "ossem_manifest_rt.json").string();
  CorpusManifest m;
  m.sample_rate = 8000;
  m.speakers.push_back(SyntheticSpeaker{"spk00", 95.5, 120.25, {500.0, 1500.0}, {80.0, 120.0},
                                        "low_f0"});
  m.utts.push_back(UttRecord{"spk00_utt00", "spk00", "wav/c.wav", "wav/n.wav", "pink", 5.0,
                             "enroll"});
  save_manifest(path, m);
  CorpusManifest r = load_manifest(path);
  CHECK(r.sample_rate == 8000);
  REQUIRE(r.speakers.size() == 1);
  CHECK(r.speakers[0].speaker_id == "spk00");
  CHECK(r.speakers[0].f0_lo == 95.5);
  CHECK(r.speakers[0].f0_hi == 120.25);
  CHECK(r.speakers[0].formant_freqs == std::vector<double>{500.0, 1500.0});
  CHECK(r.speakers[0].gender_tag == "low_f0");
  REQUIRE(r.utts.size() == 1);
  CHECK(r.utts[0].utt_id == "spk00_utt00");
  CHECK(r.utts[0].noise_type == "pink");
  CHECK(r.utts[0].snr_db == 5.0);
  CHECK(r.utts[0].split == "enroll");
  fs::remove(path);

  CHECK_THROWS_AS((void)load_manifest("/nonexistent/manifest.json"), std::runtime_error);
}

TEST_CASE("configuration validation rejects degenerate corpora") {
  CorpusConfig cfg = small_corpus_cfg();
  cfg.n_train_speakers = 1;
  cfg.n_test_speakers = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // fewer than 2 speakers

  cfg = small_corpus_cfg();
  cfg.n_train_speakers = 0;
  cfg.n_test_speakers = 3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // no training speakers

  cfg = small_corpus_cfg();
  cfg.utts_per_speaker = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = small_corpus_cfg();
  cfg.noises = {"white", "brown"};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = small_corpus_cfg();
  cfg.snrs_db = {5.0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = small_corpus_cfg();
  cfg.duration_s = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

}  // TEST_SUITE

TEST_SUITE("metrics") {

TEST_CASE("distortion ratio is scale invariant and capped at sixty decibels") {
  Rng rng(77);
  std::vector<double> ref(512), est(512);
  for (size_t i = 0; i < ref.size(); ++i) {
    ref[i] = rng.normal();
    est[i] = ref[i] + 0.3 * rng.normal();
  }
  const double base = si_sdr(est, ref);
  std::vector<double> scaled = est;
  for (auto& v : scaled) v *= 3.0;
  CHECK(si_sdr(scaled, ref) == doctest::Approx(base).epsilon(1e-9));

  CHECK(si_sdr(ref, ref) == 60.0);  // zero residual clamps at the cap
  std::vector<double> doubled = ref;
  for (auto& v : doubled) v *= 2.0;
  CHECK(si_sdr(doubled, ref) == 60.0);
  std::vector<double> negated = ref;
  for (auto& v : negated) v = -v;
  CHECK(si_sdr(negated, ref) == 60.0);
}

TEST_CASE("orthogonal residual with matched energy scores zero decibels") {
  std::vector<double> ref{1.0, 1.0, 1.0, 1.0};
  std::vector<double> est{2.0, 0.0, 2.0, 0.0};  // ref + [1,-1,1,-1]
  CHECK(si_sdr(est, ref) == doctest::Approx(0.0).epsilon(1e-12));

  std::vector<double> only_noise{1.0, -1.0, 1.0, -1.0};  // projection is zero
  CHECK(si_sdr(only_noise, ref) == -60.0);

  CHECK_THROWS_AS((void)si_sdr(std::vector<double>{1.0}, ref), std::invalid_argument);
  CHECK_THROWS_AS((void)si_sdr(std::vector<double>{}, std::vector<double>{}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)si_sdr(ref, std::vector<double>(4, 0.0)), std::invalid_argument);
}

TEST_CASE("segmental ratio averages per-frame values inside its clamp band") {
  // two frames of length 4, each ref + orthogonal noise at one tenth the
  // energy: 10*log10(10) = 10 dB per frame
  const double a = std::sqrt(0.1);
  std::vector<double> ref(8, 1.0);
  std::vector<double> est(8);
  for (size_t i = 0; i < est.size(); ++i) est[i] = 1.0 + ((i % 2 == 0) ? a : -a);
  CHECK(seg_snr(est, ref, 4) == doctest::Approx(10.0).epsilon(1e-9));

  CHECK(seg_snr(ref, ref, 4) == 35.0);  // perfect frames clamp high

  std::vector<double> junk(8);
  for (size_t i = 0; i < junk.size(); ++i) junk[i] = (i % 2 == 0) ? 5.0 : -5.0;
  CHECK(seg_snr(junk, ref, 4) == -10.0);  // orthogonal-only frames clamp low

  // a silent reference frame is skipped, not counted as zero
  std::vector<double> ref2(8, 0.0);
  for (size_t i = 4; i < 8; ++i) ref2[i] = 1.0;
  std::vector<double> est2 = ref2;
  CHECK(seg_snr(est2, ref2, 4) == 35.0);

  CHECK_THROWS_AS((void)seg_snr(est, std::vector<double>(4, 0.0), 4), std::invalid_argument);
  CHECK_THROWS_AS((void)seg_snr(std::vector<double>(4, 1.0), std::vector<double>(4, 0.0), 4),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)seg_snr(est, ref, 0), std::invalid_argument);
}

TEST_CASE("spectral distance is zero on identity and positive otherwise") {
  StftConfig cfg;
  cfg.frame_len = 64;
  cfg.hop = 32;
  cfg.sample_rate = 8000;
  Rng rng(83);
  std::vector<double> x(400);
  for (auto& v : x) v = rng.normal() * 0.2;
  CHECK(spectral_l1(x, x, cfg) == 0.0);

  std::vector<double> y(400, 0.0);
  CHECK(spectral_l1(x, y, cfg) > 0.0);
  CHECK(spectral_l1(x, y, cfg) == doctest::Approx(spectral_l1(y, x, cfg)).epsilon(1e-12));
}

}  // TEST_SUITE
