#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "irpert/dataset.hpp"
#include "irpert/harness/config.hpp"
#include "irpert/loss.hpp"
#include "irpert/optimize.hpp"

namespace irpert {

// Everything a run needs besides the per-run attack settings.
struct Workspace {
  Dataset attack_set;
  // Dataset mean lightness used by Normalize, taken from the training data.
  double mean_l = 0;
  std::shared_ptr<const Oracle> classifier;
  std::shared_ptr<const Oracle> detector;
  std::vector<RgbImage> backgrounds;
  std::vector<std::string> warnings;
};

Dataset load_data(const DataSource& src);

// Built-in centroid classifier trained on lightness-normalized images.
CentroidModel train_builtin_classifier(const Dataset& train, double mean_l, double temperature);
BuiltinDetector train_builtin_detector(const Dataset& train, double mean_l, double temperature);
double dataset_mean_lightness(const Dataset& ds);

// "builtin" trains from cfg.train_data; "exec:..." and "tcp:..." connect to
// an endpoint that then serves both classification and detection.
Workspace prepare_workspace(const RunConfig& cfg);

struct ScenarioGoal {
  std::size_t sample = 0;
  std::string key;  // sample id, plus "->target" for scenario 3
  AttackGoal goal;
};

// Scenario 1: every speed class but the lowest -> lowest. 2: every speed
// class but the highest -> highest. 3: stop -> each speed class. 4: any sign,
// untargeted. 5: any sign -> no detection. Missing classes are reported by
// name.
std::vector<ScenarioGoal> scenario_goals(int scenario, const Dataset& ds, const RunConfig& cfg);

// Speed classes by numeric value, ascending: (value, class index).
std::vector<std::pair<int, int>> speed_classes(const Dataset& ds, const std::string& prefix);

struct ImageResult {
  std::string key;
  std::string sample_id;
  int source = 0;
  std::optional<int> target;
  std::string goal;
  bool success = false;
  int queries = 0;
  long evaluations = 0;
  double final_loss = 0;
  bool aborted = false;
  std::string error;
  std::vector<int> cells;
  std::vector<TracePoint> trace;
};

struct RunReport {
  int scenario = 0;
  std::uint64_t seed = 0;
  std::string fingerprint;
  double lux = 0;
  int k = 0;
  int l = 0;
  std::string strategy;
  RhoTriple rho{};
  double asr = 0;
  double mean_queries = 0;
  std::size_t aborted = 0;
  std::vector<ImageResult> images;

  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& doc);
  void write_csv(std::ostream& out) const;
};

// Runs one optimization per scenario goal; results are ordered by goal, so
// the report does not depend on thread scheduling.
RunReport run_scenario(const Workspace& ws, const RunConfig& cfg);

struct SweepCell {
  double lux;
  int k;
  int l;
  double asr;
  double mean_queries;
  std::size_t n;
};

std::vector<SweepCell> run_sweep(const Workspace& ws, const RunConfig& cfg);
void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells);
// Rows are lux levels, one asr and one queries column per (k, l).
void write_sweep_table(std::ostream& out, const std::vector<SweepCell>& cells);

// Re-applies the saved manypixel sets to the same images and scores them on
// another oracle. Images at a different resolution than oracle2 expects are
// resampled and noted in `warnings`.
RunReport replay_transfer(const RunReport& saved, const Workspace& ws, const RunConfig& cfg, const Oracle& oracle2,
                          std::vector<std::string>* warnings = nullptr);

// The normalized image and the adversarial image for one saved result.
struct Replayed {
  RgbImage clean;
  RgbImage adversarial;
  ProjectionMask projection;
  AttackGoal goal;
};
Replayed replay_image(const ImageResult& r, const Workspace& ws, const RunConfig& cfg, const RhoTriple& rho);

// Spearman rank correlation; ties get their average rank.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace irpert
