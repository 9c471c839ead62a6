#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace ossem {

inline constexpr int kEmbeddingDim = 192;

struct SpeakerEmbedding {
  std::string speaker_id;
  std::vector<double> vec;  // kEmbeddingDim entries, unit L2 norm
};

// Rescales to unit norm; throws on wrong dimension or zero vector.
SpeakerEmbedding make_embedding(std::string speaker_id, std::vector<double> vec);

// CSV rows `speaker_id,v1,...,v192`.
std::map<std::string, SpeakerEmbedding> load_embeddings(const std::string& path);
void save_embeddings(const std::string& path,
                     const std::map<std::string, SpeakerEmbedding>& embs);

// Deterministic substitute extractor: long-term log-magnitude spectrum pooled
// into 96 triangular bands (per-band mean over time + per-band std over
// time), utterance log-mean removed, unit-normalized. Input must be at least
// one second at 16 kHz.
SpeakerEmbedding builtin_embed(std::span<const double> wave, const std::string& speaker_id = "");

double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b);

}  // namespace ossem
