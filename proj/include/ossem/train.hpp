#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ossem/corpus.hpp"
#include "ossem/features.hpp"
#include "ossem/meta_steps.hpp"
#include "ossem/model.hpp"
#include "ossem/rng.hpp"

namespace ossem {

struct Techniques {
  bool speaker_inner_loop = true;  // inner updates touch only the mask network
  bool ilr_schedule = true;        // warmup schedule + pretrained initialization
  bool feature_rescale = true;     // energy-ratio scaling inside the inner loss
};

// Where the inner-loop energy ratio is applied: to the model output (prose
// convention, default) or to the model input.
enum class RescaleApply { Output, Input };

RescaleApply rescale_apply_from_string(const std::string& s);
std::string rescale_apply_to_string(RescaleApply r);

struct TrainConfig {
  int epochs = 100;
  int iterations = 1000;  // tasks per epoch
  double olr = 1e-4;
  double ilr_peak = 1e-3;
  int inner_steps = 1;
  int n_support = 1;
  int n_query = 20;
  Techniques tech;
  RescaleApply rescale_apply = RescaleApply::Output;
  uint64_t seed = 1234;

  void validate() const;
};

// Inner-loop rate warmup: zero for the first five epochs, linear ramp, then
// pinned at the peak for the last twenty. Requires epochs > 25.
double ilr_schedule(int epoch, int epochs, double ilr_peak);

// One utterance as paired magnitude tensors [T x F].
struct UttPair {
  Tensor<float> noisy, clean;
};

Tensor<float> mag_tensor(const Spectrogram& spec);

struct SpeakerData {
  std::string speaker_id;
  Tensor<float> emb;  // [1 x 192]
  std::vector<UttPair> utts;
};

// Training-split utterances of the training speakers, fully materialized.
struct TrainingData {
  std::vector<SpeakerData> speakers;
};

TrainingData load_training_data(const std::string& corpus_dir, const CorpusManifest& manifest,
                                const StftConfig& stft_cfg);

struct MetaTask {
  int speaker = 0;
  std::vector<int> support, query;  // disjoint utterance indices
};

// Uniform speaker choice, then disjoint support/query utterances.
MetaTask make_task(const TrainingData& data, int n_support, int n_query, Rng& rng);

struct InnerResult {
  ParamSet<float> params;
  double support_loss = 0.0;  // first-step (pre-adaptation) loss
};

// Copies theta and runs K support-loss descent steps on the copy; with the
// speaker-inner-loop technique only mask-network parameters move. theta
// itself is never written.
InnerResult inner_adapt(const ParamSet<float>& theta, const Tensor<float>& emb,
                        std::span<const UttPair> support, double ilr, int k_steps,
                        const Techniques& tech, RescaleApply rescale_apply);

// First-order outer update applied to theta from query gradients at the
// adapted parameters. Returns the query loss.
double outer_step(ParamSet<float>& theta, ParamSet<float>& adapted, const Tensor<float>& emb,
                  std::span<const UttPair> query, double olr);

struct EpochStats {
  int epoch = 0;
  double ilr = 0.0;
  double mean_support_loss = 0.0;
  double mean_query_loss = 0.0;
  int64_t wall_ms = 0;
};

std::string epoch_stats_jsonl(const EpochStats& s);

// Plain mini-batch descent on task query batches (no inner loop); the
// initialization stage. Consumes the same seeded task stream as meta_train.
ParamSet<float> supervised_pretrain(const TrainConfig& cfg, const TrainingData& data,
                                    const ParamSet<float>& init, int steps, std::ostream* log,
                                    std::ostream* progress);

// Full meta loop: per task, copy -> inner adaptation -> first-order outer
// update. Deterministic given the seed.
ParamSet<float> meta_train(const TrainConfig& cfg, const TrainingData& data,
                           const ParamSet<float>& init, std::ostream* log, std::ostream* progress);

}  // namespace ossem
