#include "ossem/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ossem/rng.hpp"

namespace ossem {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw std::invalid_argument("config: " + where + ": " + what);
}

// Pull fields out of `j` one by one; finish() flags anything left as a typo.
class Section {
 public:
  Section(const json& j, std::string name) : name_(std::move(name)) {
    if (!j.is_object()) bad(name_, "expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) pending_.emplace(it.key(), &it.value());
  }

  const json* take(const std::string& key) {
    auto it = pending_.find(key);
    if (it == pending_.end()) return nullptr;
    const json* v = it->second;
    pending_.erase(it);
    return v;
  }

  template <class T>
  void get(const std::string& key, T& out) {
    const json* v = take(key);
    if (!v) return;
    try {
      out = v->get<T>();
    } catch (const json::exception&) {
      bad(name_, "key '" + key + "' has the wrong type");
    }
  }

  const json* object(const std::string& key) { return take(key); }

  void finish() const {
    if (!pending_.empty()) bad(name_, "unknown key '" + pending_.begin()->first + "'");
  }

 private:
  std::string name_;
  std::map<std::string, const json*> pending_;
};

}  // namespace

StftConfig Config::stft_config() const {
  StftConfig s;
  s.sample_rate = sample_rate;
  s.frame_len = frame_len;
  s.hop = hop;
  s.window = window_from_string(window);
  return s;
}

ModelConfig Config::model_config() const {
  ModelConfig m;
  m.freq_bins = frame_len / 2 + 1;
  m.model_dim = model_dim;
  m.blocks = blocks;
  m.heads = heads;
  m.conv_kernel = conv_kernel;
  m.ssm_hidden1 = ssm_hidden1;
  m.ssm_hidden2 = ssm_hidden2;
  m.placement = placement_from_string(placement);
  m.causal = causal;
  return m;
}

TrainConfig Config::train_config() const {
  TrainConfig t;
  t.epochs = epochs;
  t.iterations = iterations;
  t.olr = olr;
  t.ilr_peak = ilr_peak;
  t.inner_steps = inner_steps;
  t.n_support = n_support;
  t.n_query = n_query;
  t.tech.speaker_inner_loop = tech_speaker_inner_loop;
  t.tech.ilr_schedule = tech_ilr_schedule;
  t.tech.feature_rescale = tech_feature_rescale;
  t.rescale_apply = rescale_apply_from_string(rescale_apply);
  t.seed = seed;
  return t;
}

TrainConfig Config::ablation_train_config() const {
  TrainConfig t = train_config();
  t.epochs = ablation_epochs;
  t.iterations = ablation_iterations;
  t.n_query = ablation_n_query;
  return t;
}

AdaptOptions Config::adapt_options() const {
  AdaptOptions a;
  a.ilr = adapt_ilr;
  a.steps = adapt_steps;
  a.rescale = adapt_rescale;
  a.rescale_apply = rescale_apply_from_string(rescale_apply);
  return a;
}

void Config::validate() const {
  validate_stft_config(stft_config());
  model_config().validate();
  train_config().validate();
  corpus.validate();
  if (corpus.sample_rate != sample_rate)
    bad("corpus", "sample_rate must match audio.sample_rate");
  if (adapt_steps < 0) bad("adapt", "steps must be >= 0");
  if (adapt_ilr < 0.0) bad("adapt", "ilr must be >= 0");
  if (seg_frame_len < 1) bad("eval", "seg_frame_len must be >= 1");
  if (ablation_epochs < 1 || ablation_iterations < 1 || ablation_n_query < 1 ||
      ablation_pretrain_steps < 0)
    bad("ablation", "scale overrides must be positive (pretrain_steps >= 0)");
}

Config parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
  }

  Config c;
  Section top(root, "top level");
  top.get("seed", c.seed);

  if (const json* ja = top.object("audio")) {
    Section s(*ja, "audio");
    s.get("sample_rate", c.sample_rate);
    s.get("frame_len", c.frame_len);
    s.get("hop", c.hop);
    s.get("window", c.window);
    s.finish();
  }
  if (const json* jm = top.object("model")) {
    Section s(*jm, "model");
    s.get("model_dim", c.model_dim);
    s.get("blocks", c.blocks);
    s.get("heads", c.heads);
    s.get("conv_kernel", c.conv_kernel);
    s.get("ssm_hidden1", c.ssm_hidden1);
    s.get("ssm_hidden2", c.ssm_hidden2);
    s.get("placement", c.placement);
    s.get("causal", c.causal);
    s.finish();
  }
  if (const json* jt = top.object("train")) {
    Section s(*jt, "train");
    s.get("epochs", c.epochs);
    s.get("iterations", c.iterations);
    s.get("olr", c.olr);
    s.get("ilr_peak", c.ilr_peak);
    s.get("inner_steps", c.inner_steps);
    s.get("n_support", c.n_support);
    s.get("n_query", c.n_query);
    s.get("rescale_apply", c.rescale_apply);
    s.get("pretrain_steps", c.pretrain_steps);
    if (const json* jq = s.object("techniques")) {
      Section q(*jq, "train.techniques");
      q.get("speaker_inner_loop", c.tech_speaker_inner_loop);
      q.get("ilr_schedule", c.tech_ilr_schedule);
      q.get("feature_rescale", c.tech_feature_rescale);
      q.finish();
    }
    s.finish();
  }
  bool corpus_rate_set = false;
  if (const json* jc = top.object("corpus")) {
    Section s(*jc, "corpus");
    s.get("n_train_speakers", c.corpus.n_train_speakers);
    s.get("n_test_speakers", c.corpus.n_test_speakers);
    s.get("utts_per_speaker", c.corpus.utts_per_speaker);
    s.get("duration_s", c.corpus.duration_s);
    corpus_rate_set = jc->contains("sample_rate");
    s.get("sample_rate", c.corpus.sample_rate);
    s.get("noises", c.corpus.noises);
    s.get("snrs_db", c.corpus.snrs_db);
    s.finish();
  }
  // Unless pinned explicitly, the corpus follows the audio sample rate.
  if (!corpus_rate_set) c.corpus.sample_rate = c.sample_rate;
  if (const json* jd = top.object("adapt")) {
    Section s(*jd, "adapt");
    s.get("ilr", c.adapt_ilr);
    s.get("steps", c.adapt_steps);
    s.get("rescale", c.adapt_rescale);
    s.finish();
  }
  if (const json* je = top.object("eval")) {
    Section s(*je, "eval");
    s.get("seg_frame_len", c.seg_frame_len);
    s.finish();
  }
  if (const json* jb = top.object("ablation")) {
    Section s(*jb, "ablation");
    s.get("epochs", c.ablation_epochs);
    s.get("iterations", c.ablation_iterations);
    s.get("n_query", c.ablation_n_query);
    s.get("pretrain_steps", c.ablation_pretrain_steps);
    s.finish();
  }
  top.finish();

  c.validate();
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const Config& c) {
  json j;
  j["seed"] = c.seed;
  j["audio"] = {{"sample_rate", c.sample_rate},
                {"frame_len", c.frame_len},
                {"hop", c.hop},
                {"window", c.window}};
  j["model"] = {{"model_dim", c.model_dim},
                {"blocks", c.blocks},
                {"heads", c.heads},
                {"conv_kernel", c.conv_kernel},
                {"ssm_hidden1", c.ssm_hidden1},
                {"ssm_hidden2", c.ssm_hidden2},
                {"placement", c.placement},
                {"causal", c.causal}};
  j["train"] = {{"epochs", c.epochs},
                {"iterations", c.iterations},
                {"olr", c.olr},
                {"ilr_peak", c.ilr_peak},
                {"inner_steps", c.inner_steps},
                {"n_support", c.n_support},
                {"n_query", c.n_query},
                {"techniques",
                 {{"speaker_inner_loop", c.tech_speaker_inner_loop},
                  {"ilr_schedule", c.tech_ilr_schedule},
                  {"feature_rescale", c.tech_feature_rescale}}},
                {"rescale_apply", c.rescale_apply},
                {"pretrain_steps", c.pretrain_steps}};
  j["corpus"] = {{"n_train_speakers", c.corpus.n_train_speakers},
                 {"n_test_speakers", c.corpus.n_test_speakers},
                 {"utts_per_speaker", c.corpus.utts_per_speaker},
                 {"duration_s", c.corpus.duration_s},
                 {"sample_rate", c.corpus.sample_rate},
                 {"noises", c.corpus.noises},
                 {"snrs_db", c.corpus.snrs_db}};
  j["adapt"] = {{"ilr", c.adapt_ilr}, {"steps", c.adapt_steps}, {"rescale", c.adapt_rescale}};
  j["eval"] = {{"seg_frame_len", c.seg_frame_len}};
  j["ablation"] = {{"epochs", c.ablation_epochs},
                   {"iterations", c.ablation_iterations},
                   {"n_query", c.ablation_n_query},
                   {"pretrain_steps", c.ablation_pretrain_steps}};
  return j.dump(2);
}

std::string config_hash(const Config& c) {
  const std::string s = dump_config(c);
  uint64_t h = fnv1a64(s.data(), s.size());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace ossem
