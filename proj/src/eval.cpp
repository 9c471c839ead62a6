#include "ossem/eval.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ossem/features.hpp"
#include "ossem/train.hpp"
#include "ossem/wav.hpp"

namespace ossem {

namespace {

WavData load_utt(const std::string& corpus_dir, const std::string& rel) {
  return read_wav(corpus_dir + "/" + rel);
}

UttPair make_pair(const WavData& noisy, const WavData& clean, const StftConfig& cfg) {
  return UttPair{mag_tensor(stft(noisy.samples, cfg)), mag_tensor(stft(clean.samples, cfg))};
}

struct Accum {
  double noisy = 0, unadapted = 0, adapted = 0;
  int n = 0;
  void add(double a, double b, double c) {
    noisy += a;
    unadapted += b;
    adapted += c;
    ++n;
  }
  MetricTriple mean() const {
    if (n == 0) throw std::runtime_error("metric accumulator: no samples");
    return {noisy / n, unadapted / n, adapted / n};
  }
};

}  // namespace

EvalReport eval_adaptation(const ParamSet<float>& theta_meta, const std::string& corpus_dir,
                           const CorpusManifest& manifest, const StftConfig& stft_cfg,
                           const EvalOptions& opt) {
  auto embs = load_embeddings(corpus_dir + "/embeddings.csv");

  // Group test-split utterances and find the enrollment pair per speaker.
  std::map<std::string, std::vector<const UttRecord*>> test_utts;
  std::map<std::string, const UttRecord*> enroll;
  for (const auto& u : manifest.utts) {
    if (u.split == "test") test_utts[u.speaker_id].push_back(&u);
    if (u.split == "enroll") enroll[u.speaker_id] = &u;
  }

  EvalReport report;
  Accum tot_si, tot_seg, tot_l1;
  double tot_delta = 0.0;

  for (auto& [spk, utts] : test_utts) {
    auto eit = enroll.find(spk);
    if (eit == enroll.end())
      throw std::runtime_error("eval_adaptation: no enrollment utterance for speaker " + spk);
    auto emb_it = embs.find(spk);
    if (emb_it == embs.end())
      throw std::runtime_error("eval_adaptation: no embedding for speaker " + spk);
    Tensor<float> emb = embedding_tensor<float>(emb_it->second);

    auto enroll_noisy = load_utt(corpus_dir, eit->second->noisy_path);
    auto enroll_clean = load_utt(corpus_dir, eit->second->clean_path);
    UttPair enroll_pair = make_pair(enroll_noisy, enroll_clean, stft_cfg);
    InnerResult ar = one_shot_adapt(theta_meta, emb, {&enroll_pair, 1}, opt.adapt);

    // The shared model still needs the speaker embedding to drive the mask
    // network; adaptation only changes the weights.
    ParamSet<float> base = theta_meta.deep_copy();

    Accum si, seg, l1;
    for (const UttRecord* u : utts) {
      auto noisy = load_utt(corpus_dir, u->noisy_path);
      auto clean = load_utt(corpus_dir, u->clean_path);
      auto est_base = enhance_wave(base, emb, noisy.samples, stft_cfg);
      auto est_adapt = enhance_wave(ar.params, emb, noisy.samples, stft_cfg);

      si.add(si_sdr(noisy.samples, clean.samples), si_sdr(est_base, clean.samples),
             si_sdr(est_adapt, clean.samples));
      seg.add(seg_snr(noisy.samples, clean.samples, opt.seg_frame_len),
              seg_snr(est_base, clean.samples, opt.seg_frame_len),
              seg_snr(est_adapt, clean.samples, opt.seg_frame_len));
      l1.add(spectral_l1(noisy.samples, clean.samples, stft_cfg),
             spectral_l1(est_base, clean.samples, stft_cfg),
             spectral_l1(est_adapt, clean.samples, stft_cfg));
    }

    SpeakerReport sr;
    sr.speaker_id = spk;
    sr.n_utts = si.n;
    sr.si_sdr_db = si.mean();
    sr.seg_snr_db = seg.mean();
    sr.spectral_l1 = l1.mean();
    tot_si.add(sr.si_sdr_db.noisy, sr.si_sdr_db.unadapted, sr.si_sdr_db.adapted);
    tot_seg.add(sr.seg_snr_db.noisy, sr.seg_snr_db.unadapted, sr.seg_snr_db.adapted);
    tot_l1.add(sr.spectral_l1.noisy, sr.spectral_l1.unadapted, sr.spectral_l1.adapted);
    tot_delta += sr.delta_si_sdr();
    report.speakers.push_back(std::move(sr));
  }

  // No test speakers is a valid (empty) result, not an error.
  report.n_speakers = static_cast<int>(report.speakers.size());
  if (report.n_speakers > 0) {
    report.si_sdr_db = tot_si.mean();
    report.seg_snr_db = tot_seg.mean();
    report.spectral_l1 = tot_l1.mean();
    report.mean_delta_si_sdr = tot_delta / report.n_speakers;
  }
  return report;
}

namespace {

nlohmann::json triple_json(const MetricTriple& t) {
  return {{"noisy", t.noisy}, {"unadapted", t.unadapted}, {"adapted", t.adapted}};
}

}  // namespace

std::string eval_report_json(const EvalReport& r) {
  nlohmann::json j;
  j["n_speakers"] = r.n_speakers;
  j["mean"] = {{"si_sdr_db", triple_json(r.si_sdr_db)},
               {"seg_snr_db", triple_json(r.seg_snr_db)},
               {"spectral_l1", triple_json(r.spectral_l1)},
               {"delta_si_sdr_db", r.mean_delta_si_sdr}};
  j["speakers"] = nlohmann::json::array();
  for (const auto& s : r.speakers) {
    j["speakers"].push_back({{"speaker_id", s.speaker_id},
                             {"n_utts", s.n_utts},
                             {"si_sdr_db", triple_json(s.si_sdr_db)},
                             {"seg_snr_db", triple_json(s.seg_snr_db)},
                             {"spectral_l1", triple_json(s.spectral_l1)},
                             {"delta_si_sdr_db", s.delta_si_sdr()}});
  }
  return j.dump(2);
}

void save_eval_report(const std::string& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << eval_report_json(r) << "\n";
}

std::vector<float> mask_for(ParamSet<float>& params, const SpeakerEmbedding& emb) {
  if (params.cfg.placement == Placement::Non)
    throw std::runtime_error("mask_for: model has no mask (placement none)");
  Tape<float> tape(false);
  auto e = embedding_tensor<float>(emb);
  auto m = ssm_forward(tape, params, e);
  auto mv = m.data();
  return std::vector<float>(mv.begin(), mv.end());
}

std::vector<double> moving_average(std::span<const double> x, int window) {
  if (window <= 0) throw std::invalid_argument("moving_average: window must be positive");
  std::vector<double> out(x.size());
  int n = static_cast<int>(x.size());
  int half = window / 2;
  for (int i = 0; i < n; ++i) {
    int lo = std::max(0, i - half);
    int hi = std::min(n - 1, i + half);
    double s = 0.0;
    for (int j = lo; j <= hi; ++j) s += x[j];
    out[i] = s / (hi - lo + 1);
  }
  return out;
}

void export_masks(ParamSet<float>& params, const std::map<std::string, SpeakerEmbedding>& embs,
                  const CorpusManifest* manifest, const std::string& out_path) {
  std::map<std::string, std::string> gender;
  if (manifest)
    for (const auto& s : manifest->speakers) gender[s.speaker_id] = s.gender_tag;

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open for writing: " + out_path);
  out.precision(9);

  int w = params.cfg.mask_width();
  out << "speaker_id,gender_tag";
  for (int i = 0; i < w; ++i) out << ",m" << i;
  for (int i = 0; i < w; ++i) out << ",m" << i << "_smooth";
  out << "\n";

  for (const auto& [spk, emb] : embs) {
    auto mask = mask_for(params, emb);
    std::vector<double> md(mask.begin(), mask.end());
    auto smooth = moving_average(md, 5);
    auto git = gender.find(spk);
    out << spk << "," << (git == gender.end() ? std::string("unknown") : git->second);
    for (float v : mask) out << "," << v;
    for (double v : smooth) out << "," << v;
    out << "\n";
  }
}

}  // namespace ossem
