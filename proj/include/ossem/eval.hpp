#pragma once

#include <map>
#include <string>
#include <vector>

#include "ossem/adapt.hpp"
#include "ossem/corpus.hpp"
#include "ossem/metrics.hpp"
#include "ossem/stream.hpp"

namespace ossem {

struct MetricTriple {
  double noisy = 0.0;      // unprocessed mixture vs clean
  double unadapted = 0.0;  // shared model
  double adapted = 0.0;    // after one-shot adaptation
};

struct SpeakerReport {
  std::string speaker_id;
  int n_utts = 0;
  MetricTriple si_sdr_db, seg_snr_db, spectral_l1;
  double delta_si_sdr() const { return si_sdr_db.adapted - si_sdr_db.unadapted; }
};

struct EvalReport {
  std::vector<SpeakerReport> speakers;
  MetricTriple si_sdr_db, seg_snr_db, spectral_l1;  // means over speakers
  double mean_delta_si_sdr = 0.0;
  int n_speakers = 0;
};

struct EvalOptions {
  AdaptOptions adapt;
  int seg_frame_len = 256;
};

// Per test speaker: adapt once on the enrollment pair, then score every test
// utterance against its clean reference, both without and with adaptation.
EvalReport eval_adaptation(const ParamSet<float>& theta_meta, const std::string& corpus_dir,
                           const CorpusManifest& manifest, const StftConfig& stft_cfg,
                           const EvalOptions& opt);

std::string eval_report_json(const EvalReport& r);
void save_eval_report(const std::string& path, const EvalReport& r);

// One CSV row per speaker: id, gender tag, raw mask values, then the same
// values smoothed with a centered moving average (window 5).
void export_masks(ParamSet<float>& params, const std::map<std::string, SpeakerEmbedding>& embs,
                  const CorpusManifest* manifest, const std::string& out_path);

// Raw mask for one embedding (inference only).
std::vector<float> mask_for(ParamSet<float>& params, const SpeakerEmbedding& emb);

std::vector<double> moving_average(std::span<const double> x, int window);

}  // namespace ossem
