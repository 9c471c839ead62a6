#include "ossem/cli.hpp"

#include <fstream>
#include <iostream>

#include <CLI/CLI.hpp>

#include "ossem/ablate.hpp"
#include "ossem/adapt.hpp"
#include "ossem/checkpoint.hpp"
#include "ossem/config.hpp"
#include "ossem/corpus.hpp"
#include "ossem/eval.hpp"
#include "ossem/grad_suite.hpp"
#include "ossem/stream.hpp"
#include "ossem/train.hpp"
#include "ossem/wav.hpp"

namespace ossem {

namespace {

Config load_or_default(const std::string& path) {
  Config c = path.empty() ? Config{} : load_config(path);
  c.validate();
  return c;
}

void echo_config(const Config& c) {
  std::cout << "resolved config (hash " << config_hash(c) << ", seed " << c.seed << "):\n"
            << dump_config(c) << "\n";
}

Provenance make_provenance(const Config& c, int epoch, const std::string& stage) {
  Provenance p;
  p.config_hash = config_hash(c);
  p.seed = c.seed;
  p.epoch = epoch;
  p.stage = stage;
  return p;
}

CorpusManifest manifest_of(const std::string& corpus_dir) {
  return load_manifest(corpus_dir + "/manifest.json");
}

std::ofstream open_out(const std::string& path, const char* what) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(std::string(what) + ": cannot open for writing: " + path);
  return out;
}

AblationSetup make_ablation_setup(const Config& cfg, const std::string& corpus_dir) {
  AblationSetup setup;
  setup.corpus_dir = corpus_dir;
  setup.manifest = manifest_of(corpus_dir);
  setup.stft_cfg = cfg.stft_config();
  setup.model_cfg = cfg.model_config();
  setup.train_cfg = cfg.ablation_train_config();
  setup.eval_opt.adapt = cfg.adapt_options();
  setup.eval_opt.seg_frame_len = cfg.seg_frame_len;
  setup.pretrain_steps = cfg.ablation_pretrain_steps;
  setup.progress = [](const std::string& line) { std::cout << line << "\n" << std::flush; };
  return setup;
}

int cmd_gen_corpus(const Config& cfg, const std::string& out_dir) {
  echo_config(cfg);
  CorpusManifest m = gen_corpus(cfg.corpus, out_dir, cfg.seed);
  std::cout << "corpus: " << m.speakers.size() << " speakers, " << m.utts.size()
            << " utterances -> " << out_dir << "\n";
  return 0;
}

int cmd_pretrain(const Config& cfg, const std::string& corpus_dir, const std::string& out_path,
                 const std::string& log_path) {
  echo_config(cfg);
  CorpusManifest manifest = manifest_of(corpus_dir);
  TrainingData data = load_training_data(corpus_dir, manifest, cfg.stft_config());
  ParamSet<float> init = init_params<float>(cfg.model_config(), cfg.seed);

  std::ofstream log;
  if (!log_path.empty()) log = open_out(log_path, "pretrain log");
  TrainConfig tcfg = cfg.train_config();
  ParamSet<float> trained = supervised_pretrain(tcfg, data, init, cfg.pretrain_steps,
                                                log_path.empty() ? nullptr : &log, &std::cout);

  CheckpointData ckpt{cfg.model_config(), make_provenance(cfg, 0, "pretrain"), std::nullopt,
                      std::move(trained)};
  save_checkpoint(out_path, ckpt);
  std::cout << "pretrain: saved " << out_path << "\n";
  return 0;
}

int cmd_meta_train(const Config& cfg, const std::string& corpus_dir, const std::string& out_path,
                   const std::string& init_path, const std::string& log_path) {
  echo_config(cfg);
  CorpusManifest manifest = manifest_of(corpus_dir);
  TrainingData data = load_training_data(corpus_dir, manifest, cfg.stft_config());

  ParamSet<float> init = init_params<float>(cfg.model_config(), cfg.seed);
  if (!init_path.empty()) {
    CheckpointData start = load_checkpoint(init_path);
    ensure_model_matches(start, cfg.model_config());
    init = std::move(start.params);
    std::cout << "meta-train: starting from " << init_path << " (stage "
              << start.provenance.stage << ")\n";
  }

  std::ofstream log;
  if (!log_path.empty()) log = open_out(log_path, "meta-train log");
  TrainConfig tcfg = cfg.train_config();
  ParamSet<float> trained =
      meta_train(tcfg, data, init, log_path.empty() ? nullptr : &log, &std::cout);

  CheckpointData ckpt{cfg.model_config(), make_provenance(cfg, tcfg.epochs, "meta"), std::nullopt,
                      std::move(trained)};
  save_checkpoint(out_path, ckpt);
  std::cout << "meta-train: saved " << out_path << "\n";
  return 0;
}

int cmd_adapt(const Config& cfg, const std::string& ckpt_path, const std::string& corpus_dir,
              const std::string& speaker, const std::string& out_path) {
  echo_config(cfg);
  CheckpointData ckpt = load_checkpoint(ckpt_path);
  if (ckpt.cfg.freq_bins != cfg.stft_config().bins())
    throw std::runtime_error("adapt: checkpoint expects " + std::to_string(ckpt.cfg.freq_bins) +
                             " frequency bins but the configured frame length gives " +
                             std::to_string(cfg.stft_config().bins()));

  CorpusManifest manifest = manifest_of(corpus_dir);
  auto embs = load_embeddings(corpus_dir + "/embeddings.csv");
  auto eit = embs.find(speaker);
  if (eit == embs.end()) throw std::runtime_error("adapt: no embedding for speaker " + speaker);

  const UttRecord* enroll = nullptr;
  for (const auto& u : manifest.utts)
    if (u.speaker_id == speaker && u.split == "enroll") enroll = &u;
  if (!enroll)
    throw std::runtime_error("adapt: no enrollment utterance for speaker " + speaker);

  const StftConfig stft_cfg = cfg.stft_config();
  WavData noisy = read_wav(corpus_dir + "/" + enroll->noisy_path);
  WavData clean = read_wav(corpus_dir + "/" + enroll->clean_path);
  UttPair pair{mag_tensor(stft(noisy.samples, stft_cfg)), mag_tensor(stft(clean.samples, stft_cfg))};

  Tensor<float> emb = embedding_tensor<float>(eit->second);
  InnerResult res = one_shot_adapt(ckpt.params, emb, {&pair, 1}, cfg.adapt_options());
  std::cout << "adapt: enrollment loss " << res.support_loss << " (speaker " << speaker << ")\n";

  CheckpointData out{ckpt.cfg, make_provenance(cfg, ckpt.provenance.epoch, "adapted"),
                     eit->second, std::move(res.params)};
  out.provenance.seed = ckpt.provenance.seed;
  save_checkpoint(out_path, out);
  std::cout << "adapt: saved " << out_path << " (source checkpoint untouched)\n";
  return 0;
}

int cmd_enhance(const Config& cfg, const std::string& ckpt_path, const std::string& in_path,
                const std::string& out_path, const std::string& emb_path,
                const std::string& speaker, bool streaming) {
  echo_config(cfg);
  CheckpointData ckpt = load_checkpoint(ckpt_path);

  SpeakerEmbedding emb;
  if (ckpt.speaker) {
    emb = *ckpt.speaker;
    std::cout << "enhance: using embedded speaker " << emb.speaker_id << "\n";
  } else {
    if (emb_path.empty() || speaker.empty())
      throw std::runtime_error(
          "enhance: checkpoint carries no speaker; pass --embeddings and --speaker");
    auto embs = load_embeddings(emb_path);
    auto it = embs.find(speaker);
    if (it == embs.end()) throw std::runtime_error("enhance: no embedding for speaker " + speaker);
    emb = it->second;
  }

  StftConfig stft_cfg = cfg.stft_config();
  if (ckpt.cfg.freq_bins != stft_cfg.bins())
    throw std::runtime_error("enhance: checkpoint expects " + std::to_string(ckpt.cfg.freq_bins) +
                             " frequency bins but the configured frame length gives " +
                             std::to_string(stft_cfg.bins()));

  WavData in = read_wav(in_path);
  if (in.sample_rate != stft_cfg.sample_rate)
    std::cerr << "enhance: warning: input sample rate " << in.sample_rate
              << " differs from configured " << stft_cfg.sample_rate << "\n";

  Tensor<float> emb_t = embedding_tensor<float>(emb);
  std::vector<double> est;
  if (streaming) {
    StreamingEnhancer enh(ckpt.params, emb_t, stft_cfg);
    est = enh.push(in.samples);
    auto tail = enh.finish();
    est.insert(est.end(), tail.begin(), tail.end());
  } else {
    est = enhance_wave(ckpt.params, emb_t, in.samples, stft_cfg);
  }

  write_wav(out_path, WavData{in.sample_rate, std::move(est)});
  std::cout << "enhance: wrote " << out_path << " (" << in.samples.size() << " samples)\n";
  return 0;
}

int cmd_eval(const Config& cfg, const std::string& ckpt_path, const std::string& corpus_dir,
             const std::string& out_path) {
  echo_config(cfg);
  CheckpointData ckpt = load_checkpoint(ckpt_path);
  if (ckpt.cfg.freq_bins != cfg.stft_config().bins())
    throw std::runtime_error("eval: checkpoint expects " + std::to_string(ckpt.cfg.freq_bins) +
                             " frequency bins but the configured frame length gives " +
                             std::to_string(cfg.stft_config().bins()));

  EvalOptions opt;
  opt.adapt = cfg.adapt_options();
  opt.seg_frame_len = cfg.seg_frame_len;
  EvalReport report =
      eval_adaptation(ckpt.params, corpus_dir, manifest_of(corpus_dir), cfg.stft_config(), opt);

  std::cout << "eval: " << report.n_speakers << " test speakers\n";
  std::cout << "  si-sdr (dB):   noisy " << report.si_sdr_db.noisy << "  unadapted "
            << report.si_sdr_db.unadapted << "  adapted " << report.si_sdr_db.adapted << "\n";
  std::cout << "  seg-snr (dB):  noisy " << report.seg_snr_db.noisy << "  unadapted "
            << report.seg_snr_db.unadapted << "  adapted " << report.seg_snr_db.adapted << "\n";
  std::cout << "  spectral l1:   noisy " << report.spectral_l1.noisy << "  unadapted "
            << report.spectral_l1.unadapted << "  adapted " << report.spectral_l1.adapted << "\n";
  std::cout << "  mean delta si-sdr (adapted - unadapted): " << report.mean_delta_si_sdr
            << " dB\n";
  if (!out_path.empty()) {
    save_eval_report(out_path, report);
    std::cout << "eval: wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_ablate(const Config& cfg, const std::string& corpus_dir, const std::string& out_path,
               bool placement_axis) {
  echo_config(cfg);
  AblationSetup setup = make_ablation_setup(cfg, corpus_dir);
  AblationReport report = placement_axis ? ablate_placement(setup) : ablate_techniques(setup);
  std::cout << "\n" << ablation_table(report);
  if (!out_path.empty()) {
    save_ablation_report(out_path, report);
    std::cout << "ablation: wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_export_masks(const Config& cfg, const std::string& ckpt_path, const std::string& emb_path,
                     const std::string& corpus_dir, const std::string& out_path) {
  echo_config(cfg);
  CheckpointData ckpt = load_checkpoint(ckpt_path);

  std::string embeddings = emb_path;
  if (embeddings.empty()) {
    if (corpus_dir.empty())
      throw std::runtime_error("export-masks: pass --embeddings or --corpus");
    embeddings = corpus_dir + "/embeddings.csv";
  }
  auto embs = load_embeddings(embeddings);

  CorpusManifest manifest;
  const CorpusManifest* mp = nullptr;
  if (!corpus_dir.empty()) {
    manifest = manifest_of(corpus_dir);
    mp = &manifest;
  }
  export_masks(ckpt.params, embs, mp, out_path);
  std::cout << "export-masks: wrote " << out_path << " (" << embs.size() << " speakers)\n";
  return 0;
}

int cmd_grad_check(const Config& cfg, int n_configs) {
  echo_config(cfg);
  GradSuiteResult res = run_grad_suite(n_configs, cfg.seed, 1e-5, 1e-5, &std::cout);
  std::cout << "grad-check: " << res.configs_run << " configurations, " << res.params_checked
            << " parameters, worst rel err " << res.worst_rel_err;
  if (!res.worst_where.empty()) std::cout << " at " << res.worst_where;
  std::cout << (res.pass ? " -> pass\n" : " -> FAIL\n");
  return res.pass ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"one-shot speaker-adaptive speech enhancement"};
  app.require_subcommand(1);

  std::string config_path, corpus_dir, out_path, ckpt_path, init_path, log_path;
  std::string in_path, emb_path, speaker;
  bool streaming = false;
  int n_grad_configs = 5;

  app.add_option("--config", config_path, "JSON config file (defaults apply when omitted)");

  auto* gen = app.add_subcommand("gen-corpus", "synthesize the seeded speech corpus");
  gen->add_option("--out", out_path, "output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "supervised initialization stage");
  pre->add_option("--corpus", corpus_dir, "corpus directory")->required();
  pre->add_option("--out", out_path, "output checkpoint")->required();
  pre->add_option("--log", log_path, "JSONL stats log");

  auto* meta = app.add_subcommand("meta-train", "speaker-partitioned meta training");
  meta->add_option("--corpus", corpus_dir, "corpus directory")->required();
  meta->add_option("--out", out_path, "output checkpoint")->required();
  meta->add_option("--init", init_path, "starting checkpoint (e.g. from pretrain)");
  meta->add_option("--log", log_path, "JSONL stats log");

  auto* adapt = app.add_subcommand("adapt", "one-shot adaptation to a corpus speaker");
  adapt->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  adapt->add_option("--corpus", corpus_dir, "corpus directory")->required();
  adapt->add_option("--enroll", speaker, "speaker id to enroll")->required();
  adapt->add_option("--out", out_path, "adapted checkpoint")->required();

  auto* enh = app.add_subcommand("enhance", "enhance one WAV file");
  enh->add_option("--checkpoint", ckpt_path, "checkpoint (adapted ones carry their speaker)")
      ->required();
  enh->add_option("--in", in_path, "input WAV")->required();
  enh->add_option("--out", out_path, "output WAV")->required();
  enh->add_option("--embeddings", emb_path, "embeddings CSV (for unadapted checkpoints)");
  enh->add_option("--speaker", speaker, "speaker id within --embeddings");
  enh->add_flag("--stream", streaming, "run the frame-synchronous path");

  auto* ev = app.add_subcommand("eval", "one-shot adaptation benchmark on test speakers");
  ev->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  ev->add_option("--corpus", corpus_dir, "corpus directory")->required();
  ev->add_option("--out", out_path, "JSON report path");

  auto* abp = app.add_subcommand("ablate-placement", "retrain per mask site and compare");
  abp->add_option("--corpus", corpus_dir, "corpus directory")->required();
  abp->add_option("--out", out_path, "JSON report path");

  auto* abt = app.add_subcommand("ablate-techniques", "retrain per technique set and compare");
  abt->add_option("--corpus", corpus_dir, "corpus directory")->required();
  abt->add_option("--out", out_path, "JSON report path");

  auto* exm = app.add_subcommand("export-masks", "dump per-speaker masks as CSV");
  exm->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  exm->add_option("--embeddings", emb_path, "embeddings CSV");
  exm->add_option("--corpus", corpus_dir, "corpus directory (gender tags, default embeddings)");
  exm->add_option("--out", out_path, "output CSV")->required();

  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient validation");
  gc->add_option("--configs", n_grad_configs, "number of random configurations");

  // CLI11 wants argc/argv order reversed.
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const Config cfg = load_or_default(config_path);
    if (gen->parsed()) return cmd_gen_corpus(cfg, out_path);
    if (pre->parsed()) return cmd_pretrain(cfg, corpus_dir, out_path, log_path);
    if (meta->parsed()) return cmd_meta_train(cfg, corpus_dir, out_path, init_path, log_path);
    if (adapt->parsed()) return cmd_adapt(cfg, ckpt_path, corpus_dir, speaker, out_path);
    if (enh->parsed())
      return cmd_enhance(cfg, ckpt_path, in_path, out_path, emb_path, speaker, streaming);
    if (ev->parsed()) return cmd_eval(cfg, ckpt_path, corpus_dir, out_path);
    if (abp->parsed()) return cmd_ablate(cfg, corpus_dir, out_path, true);
    if (abt->parsed()) return cmd_ablate(cfg, corpus_dir, out_path, false);
    if (exm->parsed()) return cmd_export_masks(cfg, ckpt_path, emb_path, corpus_dir, out_path);
    if (gc->parsed()) return cmd_grad_check(cfg, n_grad_configs);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ossem
