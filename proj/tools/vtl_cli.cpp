// Command-line front end: dataset preparation, pre-training snapshots and the
// ablation / comparison / r-sweep experiments.

#include "vtl/errors.hpp"
#include "vtl/experiments.hpp"
#include "vtl/serialization.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("-c,--config", opts.config_path, "Experiment config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--override", opts.overrides, "key.path=value applied to the config")
      ->take_all();
  cmd->add_option("--seed", opts.seed, "Random seed (synthetic data)");
  cmd->add_option("--out-dir", opts.out_dir, "Output directory");
}

vtl::ExperimentConfig load_config(const CommonOptions& opts) {
  std::ifstream in(opts.config_path);
  if (!in) throw vtl::LoadError("cannot open " + opts.config_path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw vtl::ConfigError(opts.config_path + ": " + e.what());
  }
  for (const auto& o : opts.overrides) vtl::apply_override(doc, o);
  if (opts.seed) doc["seed"] = *opts.seed;
  if (opts.out_dir) doc["out_dir"] = *opts.out_dir;
  return vtl::experiment_config_from_json(doc, fs::path(opts.config_path).parent_path());
}

enum class Experiment { kAblation, kComparison, kSweep };

int run_experiment(const CommonOptions& opts, Experiment which) {
  const auto cfg = load_config(opts);
  const auto ds = vtl::load_experiment_dataset(cfg);
  vtl::ReportTable table;
  std::string file;
  std::string command;
  switch (which) {
    case Experiment::kAblation:
      table = vtl::run_ablation(cfg, ds);
      file = "ablation.csv";
      command = "ablate";
      break;
    case Experiment::kComparison:
      table = vtl::run_comparison(cfg, ds);
      file = "comparison.csv";
      command = "compare";
      break;
    case Experiment::kSweep:
      table = vtl::run_r_sweep(cfg, ds);
      file = "r_sweep.csv";
      command = "sweep-r";
      break;
  }
  vtl::write_report_csv(table, cfg.out_dir / file);
  vtl::write_prediction_logs(table, cfg.out_dir);
  vtl::write_run_meta(cfg, command, {file, "predictions/"}, cfg.out_dir / "run_meta.json");
  std::cout << vtl::report_csv(table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian inter-subject variance transfer for EMG pattern classification"};
  app.require_subcommand(1);

  CommonOptions synth_opts, pre_opts, pretrain_opts, ablate_opts, compare_opts, sweep_opts;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-subject feature dataset");
  add_common(synth, synth_opts);

  auto* pre = app.add_subcommand("preprocess", "Extract features from a raw-trial manifest");
  add_common(pre, pre_opts);

  auto* pretrain = app.add_subcommand("pretrain", "Pre-train on sources and calibrate one target");
  add_common(pretrain, pretrain_opts);
  std::string target;
  double fraction = 1.0;
  std::string mode = "variance";
  std::optional<double> ratio;
  pretrain->add_option("--target", target, "Target subject id")->required();
  pretrain->add_option("--fraction", fraction, "Calibration fraction")->check(CLI::Range(0.0, 1.0));
  pretrain->add_option("--mode", mode, "none, mean, variance or both");
  pretrain->add_option("--r", ratio, "Transfer ratio (default: ratio matching)");

  auto* predict = app.add_subcommand("predict", "Classify a feature CSV with a posterior snapshot");
  std::string posterior_path, features_path, predictions_path;
  predict->add_option("--posterior", posterior_path)->required()->check(CLI::ExistingFile);
  predict->add_option("--features", features_path, "ch1..chD,label CSV")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--out", predictions_path, "Output CSV")->required();

  auto* ablate = app.add_subcommand("ablate", "Transfer-mode ablation");
  add_common(ablate, ablate_opts);
  auto* compare = app.add_subcommand("compare", "Adaptive LDA / QDA / proposed comparison");
  add_common(compare, compare_opts);
  auto* sweep = app.add_subcommand("sweep-r", "Accuracy as a function of the transfer ratio r");
  add_common(sweep, sweep_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const auto cfg = load_config(synth_opts);
      if (!cfg.synthetic) throw vtl::ConfigError("synth needs a synthetic dataset config");
      const auto manifest = vtl::save_feature_dataset(vtl::generate_synthetic(*cfg.synthetic),
                                                      cfg.out_dir);
      std::cout << manifest.string() << '\n';
    } else if (*pre) {
      const auto cfg = load_config(pre_opts);
      const auto manifest =
          vtl::save_feature_dataset(vtl::load_experiment_dataset(cfg), cfg.out_dir);
      std::cout << manifest.string() << '\n';
    } else if (*pretrain) {
      const auto cfg = load_config(pretrain_opts);
      const auto ds = vtl::load_experiment_dataset(cfg);
      auto split = vtl::split_roles(ds, target, cfg.calibration_trial);
      split.calibration = vtl::truncate_calibration(split.calibration, fraction);
      const auto prior = vtl::init_prior(ds.dim, cfg.prior);
      const auto policy = ratio ? vtl::WeightPolicy::explicit_ratio(*ratio)
                                : vtl::WeightPolicy::ratio_match();
      std::vector<Eigen::Index> n_src;
      for (const auto& s : split.source) n_src.push_back(s.size());
      const auto weights = vtl::compute_weights(policy, split.calibration.size(), n_src);
      vtl::PosteriorSnapshot snap{prior,
                                  vtl::pretrain_source(prior, ds.num_classes, split.source, weights),
                                  {}};
      snap.target = vtl::transfer_update(prior, *snap.source, split.calibration,
                                         {vtl::parse_transfer_mode(mode), policy});
      const fs::path out = cfg.out_dir / ("posterior_" + target + ".json");
      vtl::write_snapshot(out, snap);
      std::cout << out.string() << '\n';
    } else if (*predict) {
      const auto snap = vtl::read_snapshot(posterior_path);
      const auto model = vtl::build_predictive(snap.target);
      const auto seq = vtl::read_feature_csv(features_path, snap.target.dim(),
                                             snap.target.num_classes());
      if (fs::path(predictions_path).has_parent_path()) {
        fs::create_directories(fs::path(predictions_path).parent_path());
      }
      std::ofstream out(predictions_path);
      out << "row,true,predicted";
      for (int c = 1; c <= model.num_classes(); ++c) out << ",p" << c;
      out << '\n';
      out.precision(17);
      Eigen::Index correct = 0;
      for (Eigen::Index i = 0; i < seq.size(); ++i) {
        const auto p = vtl::predict(model, seq.features.row(i).transpose());
        correct += p.label == seq.labels[static_cast<size_t>(i)];
        out << i << ',' << seq.labels[static_cast<size_t>(i)] << ',' << p.label;
        for (Eigen::Index c = 0; c < p.probabilities.size(); ++c) out << ',' << p.probabilities[c];
        out << '\n';
      }
      std::cout << "accuracy " << 100.0 * static_cast<double>(correct) / static_cast<double>(seq.size())
                << "%\n";
    } else if (*ablate) {
      return run_experiment(ablate_opts, Experiment::kAblation);
    } else if (*compare) {
      return run_experiment(compare_opts, Experiment::kComparison);
    } else if (*sweep) {
      return run_experiment(sweep_opts, Experiment::kSweep);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
