#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "irpert/colorspace.hpp"
#include "irpert/dataset.hpp"
#include "irpert/defense.hpp"
#include "irpert/eot.hpp"
#include "irpert/optimize.hpp"

namespace irpert {

// Where images come from: generated on the fly or read from disk.
struct DataSource {
  std::optional<std::string> path;
  DatasetLayout layout = DatasetLayout::synthetic;
  SyntheticOptions synthetic;

  nlohmann::json to_json() const;
  static DataSource from_json(const nlohmann::json& doc, const DataSource& defaults);
};

struct SweepSpec {
  std::vector<double> lux{10, 1000, 2000, 3000, 4000, 5000};
  std::vector<int> k{192};
  std::vector<int> l{2};

  void validate() const;
  nlohmann::json to_json() const;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int scenario = 4;
  OptimConfig attack;
  double lux = 10;
  // Inline curve; the built-in one when absent.
  std::optional<ScalingCurve> curve;
  std::optional<EotConfig> eot;
  std::optional<std::string> backgrounds_dir;
  std::string oracle = "builtin";
  int oracle_timeout_ms = 30000;
  DataSource attack_data;
  DataSource train_data;
  double temperature = kDefaultTemperature;
  double tau = 0.5;
  // Cap on attacked images; 0 means all.
  int max_images = 0;
  std::string speed_prefix = "speed_";
  std::string stop_class = "stop";
  SweepSpec sweep;
  DetectorConfig defense;
  // Worker threads; 0 picks the hardware concurrency.
  int threads = 0;

  RunConfig();

  void validate() const;
  RhoTriple rho() const;
  ScalingCurve scaling_curve() const;

  // Canonical form: keys sorted, every field present.
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are an error.
  static RunConfig from_json(const nlohmann::json& doc);
  static RunConfig load(const std::string& path);
};

// SHA-256 of the canonical JSON without threads and oracle_timeout_ms, hex
// encoded.
std::string fingerprint(const RunConfig& cfg);
std::string sha256_hex(const std::string& data);

}  // namespace irpert
