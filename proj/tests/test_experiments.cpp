#include "vtl/errors.hpp"
#include "vtl/experiments.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace vtl;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(std::uint64_t seed = 11) {
  SyntheticConfig syn;
  syn.num_subjects = 4;
  syn.num_classes = 3;
  syn.dim = 2;
  syn.samples_per_class = 8;
  syn.trials_per_subject = 3;
  syn.seed = seed;
  ExperimentConfig cfg;
  cfg.synthetic = syn;
  cfg.seed = seed;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const ReportRow& find_row(const ReportTable& t, std::string_view method, double fraction,
                          std::optional<double> r = std::nullopt) {
  for (const auto& row : t.rows) {
    if (row.method == method && row.calibration_fraction == fraction && (!r || row.r == r)) return row;
  }
  FAIL("row not found");
  return t.rows.front();
}

}  // namespace

TEST_CASE("evaluate_accuracy") {
  FeatureSequence a;
  a.features = Matrix::Zero(10, 1);
  for (int i = 0; i < 10; ++i) a.labels.push_back(i % 2 + 1);
  const std::vector<FeatureSequence> test = {a};

  const LabelPredictor perfect = [&](const Matrix&) { return a.labels; };
  CHECK(evaluate_accuracy(perfect, test) == 100.0);

  const LabelPredictor seven = [&](const Matrix&) {
    auto out = a.labels;
    for (int i = 0; i < 3; ++i) out[static_cast<size_t>(i)] = 3 - out[static_cast<size_t>(i)];
    return out;
  };
  CHECK(evaluate_accuracy(seven, test) == doctest::Approx(70.0));

  // A constant predictor on balanced classes scores 100 / C.
  const LabelPredictor constant = [](const Matrix& x) { return std::vector<int>(static_cast<size_t>(x.rows()), 1); };
  CHECK(evaluate_accuracy(constant, test) == doctest::Approx(50.0));

  const std::vector<FeatureSequence> none;
  CHECK_THROWS_AS(evaluate_accuracy(perfect, none), ConfigError);
}

TEST_CASE("mean_and_std uses the sample deviation") {
  const std::vector<double> v = {90, 80, 70};
  const auto [m, s] = mean_and_std(v);
  CHECK(m == doctest::Approx(80.0));
  CHECK(s == doctest::Approx(10.0));
  const std::vector<double> one = {42};
  CHECK(mean_and_std(one).second == 0.0);
}

TEST_CASE("ablation has one row per mode and fraction, each covering every subject") {
  const auto cfg = small_config();
  const auto ds = load_experiment_dataset(cfg);
  const auto table = run_ablation(cfg, ds);
  CHECK(table.kind == "ablation");
  REQUIRE(table.rows.size() == 8);
  for (const auto& row : table.rows) {
    CHECK(row.subjects.size() == 4);
    CHECK(row.mean_accuracy >= 0.0);
    CHECK(row.mean_accuracy <= 100.0);
    std::vector<double> acc;
    for (const auto& s : row.subjects) {
      CHECK(s.accuracy == doctest::Approx(accuracy_from_predictions(s.predictions)));
      acc.push_back(s.accuracy);
    }
    CHECK(row.mean_accuracy == doctest::Approx(mean_and_std(acc).first));
    // Test set is trials 2..3: 2 trials x 3 classes x 8 samples.
    for (const auto& s : row.subjects) CHECK(s.predictions.size() == 48);
  }
  for (auto mode : {"none", "mean", "variance", "both"}) {
    for (double f : {0.25, 1.0}) CHECK(find_row(table, mode, f).subjects.size() == 4);
  }
}

TEST_CASE("comparison records the selected blend hyperparameters") {
  const auto cfg = small_config();
  const auto ds = load_experiment_dataset(cfg);
  const auto table = run_comparison(cfg, ds);
  REQUIRE(table.rows.size() == 6);
  for (const auto& row : table.rows) {
    for (const auto& s : row.subjects) {
      if (row.method == "proposed") {
        CHECK(s.hyperparameters == "r=1");
      } else {
        CHECK(s.hyperparameters.find("tau=") == 0);
        CHECK(s.hyperparameters.find("lambda=") != std::string::npos);
      }
    }
  }
  const auto csv = report_csv(table);
  CHECK(csv.rfind("dataset,method,calibration_fraction,mean_accuracy,std_across_subjects,"
                  "n_subjects,subject_accuracies,selected_hyperparameters\n", 0) == 0);
}

TEST_CASE("r sweep covers the default grid and r = 0 reproduces no transfer") {
  auto cfg = small_config();
  cfg.calibration_fractions = {1.0};
  const auto ds = load_experiment_dataset(cfg);
  const auto sweep = run_r_sweep(cfg, ds);
  REQUIRE(sweep.rows.size() == kDefaultRValues.size());
  for (size_t i = 0; i < kDefaultRValues.size(); ++i) CHECK(sweep.rows[i].r == kDefaultRValues[i]);

  const auto ablation = run_ablation(cfg, ds);
  const auto& zero = find_row(sweep, "variance", 1.0, 0.0);
  const auto& none = find_row(ablation, "none", 1.0);
  for (size_t s = 0; s < zero.subjects.size(); ++s) {
    CHECK(zero.subjects[s].subject_id == none.subjects[s].subject_id);
    CHECK(zero.subjects[s].accuracy == none.subjects[s].accuracy);
    for (size_t k = 0; k < zero.subjects[s].predictions.size(); ++k) {
      CHECK(zero.subjects[s].predictions[k].predicted == none.subjects[s].predictions[k].predicted);
    }
  }
  const auto csv = report_csv(sweep);
  CHECK(csv.rfind("dataset,r,calibration_fraction,mean_accuracy,std_across_subjects,ci95_low,"
                  "ci95_high,n_subjects,subject_accuracies\n", 0) == 0);
}

TEST_CASE("confidence interval half width") {
  ReportRow row;
  row.std_accuracy = 4.0;
  row.subjects.resize(4);
  CHECK(row.ci95_half_width() == doctest::Approx(1.96 * 2.0));
}

TEST_CASE("experiment outputs are deterministic and logs reproduce accuracies") {
  const auto cfg = small_config(3);
  const auto ds = load_experiment_dataset(cfg);
  const auto a = run_ablation(cfg, ds);
  const auto b = run_ablation(cfg, load_experiment_dataset(cfg));
  CHECK(report_csv(a) == report_csv(b));

  const fs::path dir = fs::temp_directory_path() / "vtl_exp_logs";
  fs::remove_all(dir);
  write_report_csv(a, dir / "ablation.csv");
  write_prediction_logs(a, dir);
  CHECK(slurp(dir / "ablation.csv") == report_csv(a));

  for (const auto& subject : a.rows.front().subjects) {
    const auto records = read_prediction_log(dir / "predictions" / subject.subject_id / "variance.csv");
    const auto& row = find_row(a, "variance", 0.25);
    for (const auto& s : row.subjects) {
      if (s.subject_id != subject.subject_id) continue;
      std::vector<PredictionRecord> quarter;
      for (const auto& rec : records)
        if (rec.fraction == 0.25) quarter.push_back(rec);
      CHECK(accuracy_from_predictions(quarter) == doctest::Approx(s.accuracy));
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("apply_override edits nested fields") {
  nlohmann::json doc = {{"seed", 1}, {"dataset", {{"synthetic", {{"num_subjects", 6}}}}}};
  apply_override(doc, "seed=9");
  apply_override(doc, "dataset.synthetic.num_subjects=3");
  apply_override(doc, "out_dir=elsewhere");
  apply_override(doc, "calibration_fractions=[0.5]");
  CHECK(doc["seed"] == 9);
  CHECK(doc["dataset"]["synthetic"]["num_subjects"] == 3);
  CHECK(doc["out_dir"] == "elsewhere");
  const auto cfg = experiment_config_from_json(doc);
  CHECK(cfg.seed == 9);
  CHECK(cfg.synthetic->seed == 9);
  CHECK(cfg.synthetic->num_subjects == 3);
  CHECK(cfg.calibration_fractions == std::vector<double>{0.5});
  CHECK_THROWS_AS(apply_override(doc, "no_equals_sign"), ConfigError);
}

TEST_CASE("experiment config validation") {
  using nlohmann::json;
  CHECK_THROWS_AS(experiment_config_from_json(json::object()), ConfigError);
  CHECK_THROWS_AS(experiment_config_from_json({{"dataset", json::object()}}), ConfigError);
  const json base = {{"dataset", {{"synthetic", json::object()}}}};
  CHECK_NOTHROW(experiment_config_from_json(base));
  auto bad = base;
  bad["methods"] = {"svm"};
  CHECK_THROWS_AS(experiment_config_from_json(bad), ConfigError);
  bad = base;
  bad["modes"] = {"partial"};
  CHECK_THROWS_AS(experiment_config_from_json(bad), ConfigError);
  bad = base;
  bad["calibration_fractions"] = {0.0};
  CHECK_THROWS_AS(experiment_config_from_json(bad), ConfigError);
  bad = base;
  bad["r_values"] = {-1.0};
  CHECK_THROWS_AS(experiment_config_from_json(bad), ConfigError);

  const auto cfg = experiment_config_from_json({{"dataset", {{"manifest", "m.json"}}}}, "/data");
  CHECK(cfg.manifest == fs::path("/data/m.json"));
  CHECK(experiment_config_from_json(to_json(experiment_config_from_json(base))).modes.size() == 4);
}

TEST_CASE("fnv1a matches reference vectors") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}
