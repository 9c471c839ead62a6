#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ossem/eval.hpp"
#include "ossem/train.hpp"

namespace ossem {

struct AblationRow {
  std::string label;
  double si_sdr_unadapted = 0.0;
  double si_sdr_adapted = 0.0;
  double delta = 0.0;
  double seg_snr_adapted = 0.0;
  double spectral_l1_adapted = 0.0;
};

struct AblationReport {
  std::string axis;  // "placement" or "techniques"
  std::vector<AblationRow> rows;
};

struct AblationSetup {
  std::string corpus_dir;
  CorpusManifest manifest;
  StftConfig stft_cfg;
  ModelConfig model_cfg;
  TrainConfig train_cfg;
  EvalOptions eval_opt;
  int pretrain_steps = 0;
  std::function<void(const std::string&)> progress;  // may be empty
};

// Full pipeline (optional pretrain -> meta-train -> one-shot eval) once per
// mask placement, model and data otherwise identical.
AblationReport ablate_placement(const AblationSetup& setup);

// Same pipeline over cumulative technique sets: none, speaker inner loop,
// + ramped inner rate with pretrained init, + enrollment energy rescale.
AblationReport ablate_techniques(const AblationSetup& setup);

std::string ablation_table(const AblationReport& r);
std::string ablation_json(const AblationReport& r);
void save_ablation_report(const std::string& path, const AblationReport& r);

}  // namespace ossem
