#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ossem/model.hpp"
#include "ossem/speaker.hpp"

namespace ossem {

uint32_t crc32(const void* data, size_t len, uint32_t seed = 0);

struct Provenance {
  std::string config_hash;  // hex digest of the resolved config
  uint64_t seed = 0;
  int epoch = 0;
  std::string stage;  // "init" | "pretrain" | "meta" | "adapted"
};

struct CheckpointData {
  ModelConfig cfg;
  Provenance provenance;
  std::optional<SpeakerEmbedding> speaker;  // present on adapted checkpoints
  ParamSet<float> params;
};

// Wire format: magic "OSSM", u32 version, u64 header length, JSON header
// (hyperparameters, provenance, optional speaker, section directory with
// shapes/partitions/CRCs), then raw little-endian float32 sections in
// directory order.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(std::ostream& os, const CheckpointData& ckpt);
void save_checkpoint(const std::string& path, const CheckpointData& ckpt);

CheckpointData load_checkpoint(std::istream& is);
CheckpointData load_checkpoint(const std::string& path);

// Throws when the stored hyperparameters do not match an expected model
// configuration (e.g. loading into a pipeline with a different F).
void ensure_model_matches(const CheckpointData& ckpt, const ModelConfig& expected);

}  // namespace ossem
