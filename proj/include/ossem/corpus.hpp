#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ossem/rng.hpp"

namespace ossem {

struct SyntheticSpeaker {
  std::string speaker_id;
  double f0_lo = 0.0, f0_hi = 0.0;  // Hz
  std::vector<double> formant_freqs;  // resonance centers, Hz
  std::vector<double> formant_bws;    // bandwidths, Hz
  std::string gender_tag;             // "low_f0" | "high_f0"
};

struct UttRecord {
  std::string utt_id;
  std::string speaker_id;
  std::string clean_path;  // relative to the corpus directory
  std::string noisy_path;
  std::string noise_type;
  double snr_db = 0.0;
  std::string split;  // "train" | "enroll" | "test"
};

struct CorpusManifest {
  int sample_rate = 16000;
  std::vector<SyntheticSpeaker> speakers;
  std::vector<UttRecord> utts;

  const SyntheticSpeaker& speaker(const std::string& id) const;
};

struct CorpusConfig {
  int n_train_speakers = 8;
  int n_test_speakers = 2;
  int utts_per_speaker = 22;
  double duration_s = 1.0;
  int sample_rate = 16000;
  std::vector<std::string> noises = {"white", "pink", "babble"};
  std::vector<double> snrs_db = {0.0, 5.0, 10.0};

  void validate() const;
};

// Scales the noise so 10*log10(E_clean / E_noise_scaled) == snr_db exactly.
// Noise is looped or cropped to the clean length first.
std::vector<double> mix_at_snr(std::span<const double> clean, std::span<const double> noise,
                               double snr_db);

// One deterministic clean utterance for a speaker profile.
std::vector<double> synth_utterance(const SyntheticSpeaker& spk, int n_samples, int sample_rate,
                                    Rng rng);

std::vector<double> synth_noise(const std::string& kind, int n_samples, int sample_rate, Rng rng);

// Deterministic speaker profile for index i among n total (alternating F0
// regimes, jittered resonances).
SyntheticSpeaker make_speaker_profile(int index, uint64_t seed);

// Writes WAVs under <out_dir>/wav, a manifest at <out_dir>/manifest.json and
// built-in embeddings (from each speaker's clean enrollment utterance) at
// <out_dir>/embeddings.csv. Utterance 0 of every speaker is its enrollment
// record; the rest are `train` for training speakers and `test` for held-out
// speakers. Byte-identical regeneration from the same seed.
CorpusManifest gen_corpus(const CorpusConfig& cfg, const std::string& out_dir, uint64_t seed);

void save_manifest(const std::string& path, const CorpusManifest& m);
CorpusManifest load_manifest(const std::string& path);

}  // namespace ossem
