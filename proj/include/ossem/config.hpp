#pragma once

#include <cstdint>
#include <string>

#include "ossem/adapt.hpp"
#include "ossem/corpus.hpp"
#include "ossem/features.hpp"
#include "ossem/model.hpp"
#include "ossem/train.hpp"

namespace ossem {

// Whole-run settings parsed from one JSON file. Every field has a default;
// unknown keys anywhere in the document are errors.
struct Config {
  uint64_t seed = 1234;

  // audio
  int sample_rate = 16000;
  int frame_len = 512;
  int hop = 256;
  std::string window = "hann";

  // model (freq_bins is derived from frame_len, not configurable)
  int model_dim = 64;
  int blocks = 1;
  int heads = 4;
  int conv_kernel = 3;
  int ssm_hidden1 = 256;
  int ssm_hidden2 = 256;
  std::string placement = "Pre";
  bool causal = true;

  // train
  int epochs = 100;
  int iterations = 1000;
  double olr = 1e-4;
  double ilr_peak = 1e-3;
  int inner_steps = 1;
  int n_support = 1;
  int n_query = 20;
  bool tech_speaker_inner_loop = true;
  bool tech_ilr_schedule = true;
  bool tech_feature_rescale = true;
  std::string rescale_apply = "output";
  int pretrain_steps = 500;

  // corpus
  CorpusConfig corpus;

  // adapt
  double adapt_ilr = 1e-3;
  int adapt_steps = 1;
  bool adapt_rescale = false;

  // eval
  int seg_frame_len = 256;

  // ablation scale overrides (the full grid reruns training per row)
  int ablation_epochs = 26;
  int ablation_iterations = 24;
  int ablation_n_query = 4;
  int ablation_pretrain_steps = 50;

  StftConfig stft_config() const;
  ModelConfig model_config() const;
  TrainConfig train_config() const;
  TrainConfig ablation_train_config() const;
  AdaptOptions adapt_options() const;

  void validate() const;
};

// Parse with strict key checking; absent keys keep defaults.
Config parse_config(const std::string& json_text);
Config load_config(const std::string& path);

// Canonical dump of the fully resolved config (all fields, sorted keys).
std::string dump_config(const Config& c);

// Stable hex digest of the resolved config, recorded in checkpoints.
std::string config_hash(const Config& c);

}  // namespace ossem
