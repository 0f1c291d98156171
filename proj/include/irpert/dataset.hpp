#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "irpert/colorspace.hpp"
#include "irpert/image.hpp"
#include "irpert/oracle.hpp"
#include "irpert/perturbation.hpp"

namespace irpert {

struct Sample {
  std::string id;  // "<class_id>/<name>", stable across runs
  int label = 0;
  RgbImage image;
  std::optional<double> lux;
};

struct Dataset {
  std::vector<std::string> class_names;
  int width = 0;
  int height = 0;
  std::uint64_t seed = 0;
  std::vector<Sample> samples;
  // One template silhouette per class; may be empty for ingested data.
  std::vector<ObjectMask> masks;
  std::vector<MeasurementPair> pairs;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  // -1 when absent.
  int class_index(const std::string& name) const;
  std::vector<LabeledImage> labeled() const;
  // Object mask for a sample: its class template, else the whole frame.
  ObjectMask mask_for(int label) const;
};

// Canonical names of the synthetic catalog: six speed limits, stop, yield,
// priority, no_entry, then sign_<i>.
std::string synthetic_class_name(int index);
SignShape synthetic_class_shape(int index);

struct SyntheticOptions {
  std::uint64_t seed = 0;
  int n_classes = 8;
  int samples_per_class = 25;
  int resolution = 32;
};

// Procedurally rendered signs with per-sample jitter in position, color,
// brightness and background. Channel values are 8-bit levels.
Dataset generate_synthetic_dataset(const SyntheticOptions& opt);

// Clean rendering of one class at the frame center, no jitter.
RgbImage render_reference_sign(int class_index, int resolution);

enum class DatasetLayout { synthetic, gtsrb_ir_100 };

DatasetLayout parse_layout(const std::string& name);

// <root>/dataset/<class_id>/<sample>.png, <root>/masks/<class_id>.png,
// <root>/meta.json.
void write_dataset(const std::filesystem::path& root, const Dataset& ds);

// Reads either layout. gtsrb-ir-100: <root>/pairs/<lux>/{vis,ir}.png plus
// an optional meta.json naming the classes and each pair's class.
Dataset ingest_dataset(const std::filesystem::path& root, DatasetLayout layout);

// Only the pair directories; used by rho fitting.
std::vector<MeasurementPair> read_measurement_pairs(const std::filesystem::path& pairs_dir);

}  // namespace irpert
