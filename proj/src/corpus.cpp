#include "ossem/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ossem/speaker.hpp"
#include "ossem/wav.hpp"

namespace ossem {

using nlohmann::json;
namespace fs = std::filesystem;

const SyntheticSpeaker& CorpusManifest::speaker(const std::string& id) const {
  for (const auto& s : speakers)
    if (s.speaker_id == id) return s;
  throw std::runtime_error("manifest: unknown speaker '" + id + "'");
}

void CorpusConfig::validate() const {
  if (n_train_speakers + n_test_speakers < 2)
    throw std::invalid_argument("corpus: need at least 2 speakers");
  if (n_train_speakers < 1) throw std::invalid_argument("corpus: need at least 1 training speaker");
  if (utts_per_speaker < 2)
    throw std::invalid_argument("corpus: need at least 2 utterances per speaker (1 enrollment + 1 more)");
  if (duration_s <= 0.0) throw std::invalid_argument("corpus: duration must be positive");
  if (sample_rate < 1000) throw std::invalid_argument("corpus: implausible sample rate");
  if (noises.empty()) throw std::invalid_argument("corpus: noise list is empty");
  for (const auto& n : noises)
    if (n != "white" && n != "pink" && n != "babble")
      throw std::invalid_argument("corpus: unknown noise kind '" + n + "'");
  if (snrs_db.empty()) throw std::invalid_argument("corpus: SNR list is empty");
  for (double s : snrs_db)
    if (!std::isfinite(s)) throw std::invalid_argument("corpus: SNR values must be finite");
}

std::vector<double> mix_at_snr(std::span<const double> clean, std::span<const double> noise,
                               double snr_db) {
  if (!std::isfinite(snr_db)) throw std::invalid_argument("mix: SNR must be finite");
  if (clean.empty()) throw std::invalid_argument("mix: empty clean signal");
  if (noise.empty()) throw std::invalid_argument("mix: empty noise signal");
  std::vector<double> n(clean.size());
  for (size_t i = 0; i < clean.size(); ++i) n[i] = noise[i % noise.size()];
  double ec = 0.0, en = 0.0;
  for (double v : clean) ec += v * v;
  for (double v : n) en += v * v;
  if (ec == 0.0) throw std::invalid_argument("mix: zero-energy clean signal");
  if (en == 0.0) throw std::invalid_argument("mix: zero-energy noise signal");
  // E_clean / (g^2 E_noise) = 10^(snr/10)
  const double g = std::sqrt(ec / (en * std::pow(10.0, snr_db / 10.0)));
  std::vector<double> out(clean.size());
  for (size_t i = 0; i < clean.size(); ++i) out[i] = clean[i] + g * n[i];
  return out;
}

SyntheticSpeaker make_speaker_profile(int index, uint64_t seed) {
  Rng rng = Rng(Rng::mix(seed, 0x5350u)).derive(static_cast<uint64_t>(index));
  SyntheticSpeaker s;
  char buf[16];
  std::snprintf(buf, sizeof buf, "spk%02d", index);
  s.speaker_id = buf;
  const bool low = index % 2 == 0;
  s.gender_tag = low ? "low_f0" : "high_f0";
  if (low) {
    s.f0_lo = rng.uniform(90.0, 110.0);
    s.f0_hi = s.f0_lo + rng.uniform(20.0, 30.0);
  } else {
    s.f0_lo = rng.uniform(180.0, 220.0);
    s.f0_hi = s.f0_lo + rng.uniform(30.0, 40.0);
  }
  const std::vector<double> base = low ? std::vector<double>{500.0, 1500.0, 2500.0, 3500.0}
                                       : std::vector<double>{650.0, 1800.0, 2900.0, 4000.0};
  const std::vector<double> bws = {80.0, 120.0, 160.0, 220.0};
  for (size_t j = 0; j < base.size(); ++j) {
    s.formant_freqs.push_back(base[j] * rng.uniform(0.82, 1.18));
    s.formant_bws.push_back(bws[j] * rng.uniform(0.8, 1.25));
  }
  return s;
}

namespace {

// Lorentzian resonance stack with a gentle 1/f tilt.
double envelope_at(const SyntheticSpeaker& spk, double freq) {
  double e = 0.0;
  for (size_t j = 0; j < spk.formant_freqs.size(); ++j) {
    const double d = (freq - spk.formant_freqs[j]) / spk.formant_bws[j];
    e += 1.0 / (1.0 + d * d);
  }
  return e / (1.0 + freq / 1500.0);
}

void normalize_wave(std::vector<double>& w, double target_rms) {
  double ss = 0.0, peak = 0.0;
  for (double v : w) {
    ss += v * v;
    peak = std::max(peak, std::abs(v));
  }
  const double rms = std::sqrt(ss / static_cast<double>(w.size()));
  if (rms == 0.0) throw std::runtime_error("corpus: synthesized silence");
  double g = target_rms / rms;
  if (peak * g > 0.95) g = 0.95 / peak;
  for (double& v : w) v *= g;
}

}  // namespace

std::vector<double> synth_utterance(const SyntheticSpeaker& spk, int n_samples, int sample_rate,
                                    Rng rng) {
  if (n_samples < 1) throw std::invalid_argument("corpus: utterance length must be positive");
  const double nyquist = sample_rate / 2.0;
  double f0 = rng.uniform(spk.f0_lo, spk.f0_hi);
  double drift = 0.0;
  const double am_rate = rng.uniform(2.0, 5.0);  // syllabic amplitude modulation
  const double am_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  const int max_harm = static_cast<int>(std::floor((nyquist - 100.0) / spk.f0_lo));
  std::vector<double> phase(static_cast<size_t>(max_harm) + 1, 0.0);
  for (auto& p : phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);

  std::vector<double> out(static_cast<size_t>(n_samples), 0.0);
  double ph = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    // slowly wandering F0 inside the speaker's range
    if (i % 160 == 0) {
      drift = 0.95 * drift + 0.05 * rng.uniform(-1.0, 1.0);
      f0 = std::clamp(f0 + drift * 2.0, spk.f0_lo, spk.f0_hi);
    }
    ph += 2.0 * std::numbers::pi * f0 / sample_rate;
    if (ph > 2.0 * std::numbers::pi) ph -= 2.0 * std::numbers::pi;
    double s = 0.0;
    for (int h = 1; h <= max_harm; ++h) {
      const double fh = h * f0;
      if (fh >= nyquist - 50.0) break;
      const double a = envelope_at(spk, fh) / h;
      s += a * std::sin(h * ph + phase[static_cast<size_t>(h)]);
    }
    const double t = static_cast<double>(i) / sample_rate;
    const double am = 0.7 + 0.3 * std::sin(2.0 * std::numbers::pi * am_rate * t + am_phase);
    out[static_cast<size_t>(i)] = s * am;
  }
  normalize_wave(out, 0.08);
  return out;
}

std::vector<double> synth_noise(const std::string& kind, int n_samples, int sample_rate, Rng rng) {
  std::vector<double> out(static_cast<size_t>(n_samples), 0.0);
  if (kind == "white") {
    for (auto& v : out) v = rng.normal();
  } else if (kind == "pink") {
    // three-pole pinking filter over white noise
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    for (auto& v : out) {
      const double w = rng.normal();
      b0 = 0.99765 * b0 + w * 0.0990460;
      b1 = 0.96300 * b1 + w * 0.2965164;
      b2 = 0.57000 * b2 + w * 1.0526913;
      v = b0 + b1 + b2 + w * 0.1848;
    }
  } else if (kind == "babble") {
    // four simultaneous derived speaker profiles
    for (int j = 0; j < 4; ++j) {
      const SyntheticSpeaker spk = make_speaker_profile(j, rng.derive(1000 + static_cast<uint64_t>(j)).next_u64());
      const std::vector<double> talker =
          synth_utterance(spk, n_samples, sample_rate, rng.derive(2000 + static_cast<uint64_t>(j)));
      for (size_t i = 0; i < out.size(); ++i) out[i] += talker[i];
    }
  } else {
    throw std::invalid_argument("corpus: unknown noise kind '" + kind + "'");
  }
  normalize_wave(out, 0.08);
  return out;
}

CorpusManifest gen_corpus(const CorpusConfig& cfg, const std::string& out_dir, uint64_t seed) {
  cfg.validate();
  const fs::path root(out_dir);
  fs::create_directories(root / "wav");

  CorpusManifest m;
  m.sample_rate = cfg.sample_rate;
  const int total = cfg.n_train_speakers + cfg.n_test_speakers;
  const int n_samples = static_cast<int>(std::lround(cfg.duration_s * cfg.sample_rate));
  std::map<std::string, SpeakerEmbedding> embs;

  for (int si = 0; si < total; ++si) {
    SyntheticSpeaker spk = make_speaker_profile(si, seed);
    const bool is_test = si >= cfg.n_train_speakers;
    m.speakers.push_back(spk);
    for (int u = 0; u < cfg.utts_per_speaker; ++u) {
      Rng utt_rng = Rng(Rng::mix(seed, 0x55545400u)).derive(static_cast<uint64_t>(si) * 10000 + static_cast<uint64_t>(u));
      const std::vector<double> clean = synth_utterance(spk, n_samples, cfg.sample_rate, utt_rng.derive(1));
      const std::string noise_kind = cfg.noises[utt_rng.uniform_int(cfg.noises.size())];
      const double snr = cfg.snrs_db[utt_rng.uniform_int(cfg.snrs_db.size())];
      const std::vector<double> noise = synth_noise(noise_kind, n_samples, cfg.sample_rate, utt_rng.derive(2));
      const std::vector<double> noisy = mix_at_snr(clean, noise, snr);

      char id[32];
      std::snprintf(id, sizeof id, "%s_utt%02d", spk.speaker_id.c_str(), u);
      UttRecord rec;
      rec.utt_id = id;
      rec.speaker_id = spk.speaker_id;
      rec.clean_path = std::string("wav/") + id + "_clean.wav";
      rec.noisy_path = std::string("wav/") + id + "_noisy.wav";
      rec.noise_type = noise_kind;
      rec.snr_db = snr;
      rec.split = u == 0 ? "enroll" : (is_test ? "test" : "train");
      write_wav((root / rec.clean_path).string(), {cfg.sample_rate, clean});
      write_wav((root / rec.noisy_path).string(), {cfg.sample_rate, noisy});
      if (u == 0) {
        // Embed the quantized file content so any consumer recomputing from
        // disk sees the identical vector.
        const WavData stored = read_wav((root / rec.clean_path).string());
        embs.emplace(spk.speaker_id, builtin_embed(stored.samples, spk.speaker_id));
      }
      m.utts.push_back(std::move(rec));
    }
  }
  save_manifest((root / "manifest.json").string(), m);
  save_embeddings((root / "embeddings.csv").string(), embs);
  return m;
}

void save_manifest(const std::string& path, const CorpusManifest& m) {
  json j;
  j["sample_rate"] = m.sample_rate;
  j["speakers"] = json::array();
  for (const auto& s : m.speakers)
    j["speakers"].push_back({{"speaker_id", s.speaker_id},
                             {"f0_lo", s.f0_lo},
                             {"f0_hi", s.f0_hi},
                             {"formant_freqs", s.formant_freqs},
                             {"formant_bws", s.formant_bws},
                             {"gender_tag", s.gender_tag}});
  j["utts"] = json::array();
  for (const auto& u : m.utts)
    j["utts"].push_back({{"utt_id", u.utt_id},
                         {"speaker_id", u.speaker_id},
                         {"clean_path", u.clean_path},
                         {"noisy_path", u.noisy_path},
                         {"noise_type", u.noise_type},
                         {"snr_db", u.snr_db},
                         {"split", u.split}});
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("manifest: cannot write " + path);
  f << j.dump(2) << '\n';
  if (!f) throw std::runtime_error("manifest: write failed for " + path);
}

CorpusManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("manifest: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest: malformed JSON in " + path + ": " + e.what());
  }
  CorpusManifest m;
  m.sample_rate = j.at("sample_rate").get<int>();
  for (const json& s : j.at("speakers")) {
    SyntheticSpeaker spk;
    spk.speaker_id = s.at("speaker_id").get<std::string>();
    spk.f0_lo = s.at("f0_lo").get<double>();
    spk.f0_hi = s.at("f0_hi").get<double>();
    spk.formant_freqs = s.at("formant_freqs").get<std::vector<double>>();
    spk.formant_bws = s.at("formant_bws").get<std::vector<double>>();
    spk.gender_tag = s.at("gender_tag").get<std::string>();
    m.speakers.push_back(std::move(spk));
  }
  for (const json& u : j.at("utts")) {
    UttRecord rec;
    rec.utt_id = u.at("utt_id").get<std::string>();
    rec.speaker_id = u.at("speaker_id").get<std::string>();
    rec.clean_path = u.at("clean_path").get<std::string>();
    rec.noisy_path = u.at("noisy_path").get<std::string>();
    rec.noise_type = u.at("noise_type").get<std::string>();
    rec.snr_db = u.at("snr_db").get<double>();
    rec.split = u.at("split").get<std::string>();
    m.utts.push_back(std::move(rec));
  }
  return m;
}

}  // namespace ossem
