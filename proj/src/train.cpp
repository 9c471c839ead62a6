#include "ossem/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ossem/speaker.hpp"
#include "ossem/wav.hpp"

namespace ossem {

RescaleApply rescale_apply_from_string(const std::string& s) {
  if (s == "output") return RescaleApply::Output;
  if (s == "input") return RescaleApply::Input;
  throw std::invalid_argument("rescale_apply: expected 'output' or 'input', got '" + s + "'");
}

std::string rescale_apply_to_string(RescaleApply r) {
  return r == RescaleApply::Output ? "output" : "input";
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (iterations < 1) throw std::invalid_argument("train: iterations must be >= 1");
  if (olr < 0.0 || !std::isfinite(olr)) throw std::invalid_argument("train: olr must be finite and >= 0");
  if (ilr_peak < 0.0 || !std::isfinite(ilr_peak))
    throw std::invalid_argument("train: ilr_peak must be finite and >= 0");
  if (inner_steps < 0) throw std::invalid_argument("train: inner_steps must be >= 0");
  if (n_support < 1) throw std::invalid_argument("train: n_support must be >= 1");
  if (n_query < 1) throw std::invalid_argument("train: n_query must be >= 1");
  if (tech.ilr_schedule && epochs != 0 && epochs <= 25)
    throw std::invalid_argument("train: the rate schedule needs epochs > 25 "
                                "(5 warmup-off + ramp + 20 at peak)");
}

double ilr_schedule(int epoch, int epochs, double ilr_peak) {
  if (epochs <= 25)
    throw std::invalid_argument("ilr_schedule: epochs must exceed 25, got " + std::to_string(epochs));
  if (epoch < 1 || epoch > epochs)
    throw std::invalid_argument("ilr_schedule: epoch " + std::to_string(epoch) + " outside 1.." +
                                std::to_string(epochs));
  if (epoch <= 5) return 0.0;
  if (epoch >= epochs - 20) return ilr_peak;
  return ilr_peak * static_cast<double>(epoch - 5) / static_cast<double>(epochs - 25);
}

Tensor<float> mag_tensor(const Spectrogram& spec) {
  std::vector<float> v(spec.mag.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(spec.mag[i]);
  return Tensor<float>::from({spec.frames, spec.bins}, std::move(v));
}

namespace {

constexpr uint64_t kTaskStream = 0x7461736Bu;  // task-sampling substream tag

}  // namespace

TrainingData load_training_data(const std::string& corpus_dir, const CorpusManifest& manifest,
                                const StftConfig& stft_cfg) {
  const auto embs = load_embeddings(corpus_dir + "/embeddings.csv");
  TrainingData data;
  std::map<std::string, size_t> index;
  for (const auto& rec : manifest.utts) {
    if (rec.split != "train") continue;
    auto it = index.find(rec.speaker_id);
    if (it == index.end()) {
      auto e = embs.find(rec.speaker_id);
      if (e == embs.end())
        throw std::runtime_error("train: no embedding for speaker '" + rec.speaker_id + "'");
      SpeakerData sd;
      sd.speaker_id = rec.speaker_id;
      sd.emb = embedding_tensor<float>(e->second);
      index.emplace(rec.speaker_id, data.speakers.size());
      data.speakers.push_back(std::move(sd));
      it = index.find(rec.speaker_id);
    }
    const WavData noisy = read_wav(corpus_dir + "/" + rec.noisy_path);
    const WavData clean = read_wav(corpus_dir + "/" + rec.clean_path);
    data.speakers[it->second].utts.push_back(
        UttPair{mag_tensor(stft(noisy.samples, stft_cfg)), mag_tensor(stft(clean.samples, stft_cfg))});
  }
  if (data.speakers.empty()) throw std::runtime_error("train: manifest has no training utterances");
  return data;
}

MetaTask make_task(const TrainingData& data, int n_support, int n_query, Rng& rng) {
  if (data.speakers.empty()) throw std::invalid_argument("task: no speakers");
  MetaTask task;
  task.speaker = static_cast<int>(rng.uniform_int(data.speakers.size()));
  const auto& utts = data.speakers[static_cast<size_t>(task.speaker)].utts;
  const int need = n_support + n_query;
  if (static_cast<int>(utts.size()) < need)
    throw std::runtime_error("task: speaker '" + data.speakers[static_cast<size_t>(task.speaker)].speaker_id +
                             "' has " + std::to_string(utts.size()) + " training utterances, needs " +
                             std::to_string(need));
  std::vector<int> order(utts.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(i + 1)]);
  task.support.assign(order.begin(), order.begin() + n_support);
  task.query.assign(order.begin() + n_support, order.begin() + need);
  return task;
}

namespace {

// Support loss over one speaker's pairs, with the optional energy-ratio
// rescale applied inside the loss only.
Tensor<float> support_loss_value(Tape<float>& tape, ParamSet<float>& params, const Tensor<float>& emb,
                                 std::span<const UttPair> pairs, bool rescale,
                                 RescaleApply rescale_apply) {
  std::vector<Tensor<float>> losses;
  losses.reserve(pairs.size());
  for (const UttPair& p : pairs) {
    double alpha = 1.0;
    if (rescale)
      alpha = rescale_ratio_span<float>(p.clean.data(), p.noisy.data());
    Tensor<float> input = p.noisy;
    if (rescale && rescale_apply == RescaleApply::Input)
      input = tape.scalar_mul(p.noisy, static_cast<float>(alpha));
    Tensor<float> out = ossem_forward(tape, params, emb, input);
    if (rescale && rescale_apply == RescaleApply::Output)
      out = tape.scalar_mul(out, static_cast<float>(alpha));
    losses.push_back(tape.l1_mean(out, p.clean));
  }
  return tape.mean_of(std::span<const Tensor<float>>(losses.data(), losses.size()));
}

Tensor<float> plain_loss_value(Tape<float>& tape, ParamSet<float>& params, const Tensor<float>& emb,
                               std::span<const UttPair> pairs) {
  std::vector<Tensor<float>> losses;
  losses.reserve(pairs.size());
  for (const UttPair& p : pairs) {
    Tensor<float> out = ossem_forward(tape, params, emb, p.noisy);
    losses.push_back(tape.l1_mean(out, p.clean));
  }
  return tape.mean_of(std::span<const Tensor<float>>(losses.data(), losses.size()));
}

std::vector<bool> adaptable_mask(ParamSet<float>& params, bool ssm_only) {
  std::vector<bool> mask;
  params.for_each([&](const std::string&, Partition p, Tensor<float>&) {
    mask.push_back(!ssm_only || p == Partition::SSM);
  });
  return mask;
}

}  // namespace

InnerResult inner_adapt(const ParamSet<float>& theta, const Tensor<float>& emb,
                        std::span<const UttPair> support, double ilr, int k_steps,
                        const Techniques& tech, RescaleApply rescale_apply) {
  if (support.empty()) throw std::invalid_argument("inner: empty support set");
  InnerResult res;
  res.params = theta.deep_copy();
  std::vector<Tensor<float>> vec = res.params.tensors();
  const std::vector<bool> mask = adaptable_mask(res.params, tech.speaker_inner_loop);
  TapedLoss<float> loss = [&](Tape<float>& tape, std::vector<Tensor<float>>&) {
    return support_loss_value(tape, res.params, emb, support, tech.feature_rescale, rescale_apply);
  };
  res.support_loss = adapt_in_place<float>(vec, mask, loss, ilr, k_steps);
  return res;
}

double outer_step(ParamSet<float>& theta, ParamSet<float>& adapted, const Tensor<float>& emb,
                  std::span<const UttPair> query, double olr) {
  if (query.empty()) throw std::invalid_argument("outer: empty query set");
  std::vector<Tensor<float>> tvec = theta.tensors();
  std::vector<Tensor<float>> avec = adapted.tensors();
  TapedLoss<float> loss = [&](Tape<float>& tape, std::vector<Tensor<float>>&) {
    return plain_loss_value(tape, adapted, emb, query);
  };
  return outer_update<float>(tvec, avec, loss, olr);
}

std::string epoch_stats_jsonl(const EpochStats& s) {
  std::ostringstream os;
  os.precision(10);
  os << "{\"epoch\": " << s.epoch << ", \"ilr\": " << s.ilr
     << ", \"mean_support_loss\": " << s.mean_support_loss
     << ", \"mean_query_loss\": " << s.mean_query_loss << ", \"wall_ms\": " << s.wall_ms << "}";
  return os.str();
}

namespace {

void emit(std::ostream* log, std::ostream* progress, const EpochStats& st, const char* stage) {
  if (log) (*log) << epoch_stats_jsonl(st) << '\n' << std::flush;
  if (progress)
    (*progress) << stage << " epoch " << st.epoch << ": support " << st.mean_support_loss
                << ", query " << st.mean_query_loss << ", ilr " << st.ilr << ", " << st.wall_ms
                << " ms\n"
                << std::flush;
}

}  // namespace

ParamSet<float> supervised_pretrain(const TrainConfig& cfg, const TrainingData& data,
                                    const ParamSet<float>& init, int steps, std::ostream* log,
                                    std::ostream* progress) {
  cfg.validate();
  if (steps < 0) throw std::invalid_argument("pretrain: negative step count");
  ParamSet<float> theta = init.deep_copy();
  if (steps == 0) return theta;
  Rng rng(Rng::mix(cfg.seed, kTaskStream));
  std::vector<Tensor<float>> tvec = theta.tensors();
  for (auto& t : tvec) t.set_requires_grad(true);

  auto t0 = std::chrono::steady_clock::now();
  double loss_acc = 0.0;
  int in_epoch = 0, epoch = 1;
  for (int step = 1; step <= steps; ++step) {
    const MetaTask task = make_task(data, cfg.n_support, cfg.n_query, rng);
    const SpeakerData& spk = data.speakers[static_cast<size_t>(task.speaker)];
    std::vector<UttPair> query;
    for (int qi : task.query) query.push_back(spk.utts[static_cast<size_t>(qi)]);
    try {
      theta.clear_grads();
      Tape<float> tape;
      Tensor<float> loss = plain_loss_value(tape, theta, spk.emb, query);
      const double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv)) throw std::runtime_error("pretrain: loss diverged");
      loss_acc += lv;
      tape.backward(loss);
      sgd_update<float>(std::span<const Tensor<float>>(tvec.data(), tvec.size()),
                        static_cast<float>(cfg.olr));
    } catch (const std::exception& e) {
      throw std::runtime_error("pretrain: step " + std::to_string(step) + ": " + e.what());
    }
    ++in_epoch;
    if (in_epoch == cfg.iterations || step == steps) {
      const auto t1 = std::chrono::steady_clock::now();
      EpochStats st;
      st.epoch = epoch++;
      st.ilr = 0.0;
      st.mean_support_loss = loss_acc / in_epoch;
      st.mean_query_loss = st.mean_support_loss;
      st.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
      emit(log, progress, st, "pretrain");
      t0 = t1;
      loss_acc = 0.0;
      in_epoch = 0;
    }
  }
  theta.clear_grads();
  return theta;
}

ParamSet<float> meta_train(const TrainConfig& cfg, const TrainingData& data,
                           const ParamSet<float>& init, std::ostream* log, std::ostream* progress) {
  cfg.validate();
  ParamSet<float> theta = init.deep_copy();
  Rng rng(Rng::mix(cfg.seed, kTaskStream));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double ilr = cfg.tech.ilr_schedule ? ilr_schedule(epoch, cfg.epochs, cfg.ilr_peak)
                                             : cfg.ilr_peak;
    const auto t0 = std::chrono::steady_clock::now();
    double sup_acc = 0.0, q_acc = 0.0;
    for (int it = 1; it <= cfg.iterations; ++it) {
      try {
        const MetaTask task = make_task(data, cfg.n_support, cfg.n_query, rng);
        const SpeakerData& spk = data.speakers[static_cast<size_t>(task.speaker)];
        std::vector<UttPair> support, query;
        for (int si : task.support) support.push_back(spk.utts[static_cast<size_t>(si)]);
        for (int qi : task.query) query.push_back(spk.utts[static_cast<size_t>(qi)]);
        InnerResult inner = inner_adapt(theta, spk.emb, support, ilr, cfg.inner_steps, cfg.tech,
                                        cfg.rescale_apply);
        const double q = outer_step(theta, inner.params, spk.emb, query, cfg.olr);
        sup_acc += inner.support_loss;
        q_acc += q;
      } catch (const std::exception& e) {
        throw std::runtime_error("meta_train: epoch " + std::to_string(epoch) + " iteration " +
                                 std::to_string(it) + ": " + e.what());
      }
    }
    const auto t1 = std::chrono::steady_clock::now();
    EpochStats st;
    st.epoch = epoch;
    st.ilr = ilr;
    st.mean_support_loss = sup_acc / cfg.iterations;
    st.mean_query_loss = q_acc / cfg.iterations;
    st.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
    emit(log, progress, st, "meta");
  }
  return theta;
}

}  // namespace ossem
