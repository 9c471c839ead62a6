#include "ossem/ablate.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ossem {

namespace {

// One complete run for a single configuration: random init, optional
// supervised warm start, meta loop, then the one-shot evaluation.
AblationRow run_one(const AblationSetup& setup, const std::string& label, const ModelConfig& mcfg,
                    const TrainConfig& tcfg) {
  if (setup.progress) setup.progress("[" + setup.corpus_dir + "] row '" + label + "': training");

  TrainingData data = load_training_data(setup.corpus_dir, setup.manifest, setup.stft_cfg);
  ParamSet<float> init = init_params<float>(mcfg, tcfg.seed);
  if (tcfg.tech.ilr_schedule && setup.pretrain_steps > 0)
    init = supervised_pretrain(tcfg, data, init, setup.pretrain_steps, nullptr, nullptr);
  ParamSet<float> trained = meta_train(tcfg, data, init, nullptr, nullptr);

  EvalOptions eopt = setup.eval_opt;
  eopt.adapt.ilr = tcfg.ilr_peak;
  eopt.adapt.steps = std::max(1, tcfg.inner_steps);
  eopt.adapt.rescale = tcfg.tech.feature_rescale;
  eopt.adapt.rescale_apply = tcfg.rescale_apply;
  EvalReport er = eval_adaptation(trained, setup.corpus_dir, setup.manifest, setup.stft_cfg, eopt);

  AblationRow row;
  row.label = label;
  row.si_sdr_unadapted = er.si_sdr_db.unadapted;
  row.si_sdr_adapted = er.si_sdr_db.adapted;
  row.delta = er.mean_delta_si_sdr;
  row.seg_snr_adapted = er.seg_snr_db.adapted;
  row.spectral_l1_adapted = er.spectral_l1.adapted;
  if (setup.progress) {
    std::ostringstream os;
    os << "row '" << label << "': si-sdr " << std::fixed << std::setprecision(2)
       << row.si_sdr_unadapted << " -> " << row.si_sdr_adapted << " dB";
    setup.progress(os.str());
  }
  return row;
}

}  // namespace

AblationReport ablate_placement(const AblationSetup& setup) {
  setup.train_cfg.validate();
  AblationReport report;
  report.axis = "placement";
  for (Placement p :
       {Placement::Pre, Placement::Mid1, Placement::Mid2, Placement::Last, Placement::Non}) {
    ModelConfig mcfg = setup.model_cfg;
    mcfg.placement = p;
    report.rows.push_back(run_one(setup, placement_to_string(p), mcfg, setup.train_cfg));
  }
  return report;
}

AblationReport ablate_techniques(const AblationSetup& setup) {
  AblationReport report;
  report.axis = "techniques";

  struct Variant {
    std::string label;
    Techniques tech;
  };
  const Variant variants[] = {
      {"none", {false, false, false}},
      {"inner-loop", {true, false, false}},
      {"inner-loop+schedule", {true, true, false}},
      {"inner-loop+schedule+rescale", {true, true, true}},
  };

  for (const auto& v : variants) {
    TrainConfig tcfg = setup.train_cfg;
    tcfg.tech = v.tech;
    tcfg.validate();
    report.rows.push_back(run_one(setup, v.label, setup.model_cfg, tcfg));
  }
  return report;
}

std::string ablation_table(const AblationReport& r) {
  size_t w = 5;
  for (const auto& row : r.rows) w = std::max(w, row.label.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w)) << r.axis << "  " << std::right
     << std::setw(12) << "si-sdr base" << std::setw(12) << "si-sdr 1shot" << std::setw(10)
     << "delta" << std::setw(12) << "seg-snr" << std::setw(12) << "spec-l1" << "\n";
  os << std::string(w + 2 + 12 + 12 + 10 + 12 + 12, '-') << "\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& row : r.rows) {
    os << std::left << std::setw(static_cast<int>(w)) << row.label << "  " << std::right
       << std::setw(12) << row.si_sdr_unadapted << std::setw(12) << row.si_sdr_adapted
       << std::setw(10) << row.delta << std::setw(12) << row.seg_snr_adapted << std::setw(12)
       << row.spectral_l1_adapted << "\n";
  }
  return os.str();
}

std::string ablation_json(const AblationReport& r) {
  nlohmann::json j;
  j["axis"] = r.axis;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : r.rows) {
    j["rows"].push_back({{"label", row.label},
                         {"si_sdr_unadapted_db", row.si_sdr_unadapted},
                         {"si_sdr_adapted_db", row.si_sdr_adapted},
                         {"delta_si_sdr_db", row.delta},
                         {"seg_snr_adapted_db", row.seg_snr_adapted},
                         {"spectral_l1_adapted", row.spectral_l1_adapted}});
  }
  return j.dump(2);
}

void save_ablation_report(const std::string& path, const AblationReport& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << ablation_json(r) << "\n";
}

}  // namespace ossem
