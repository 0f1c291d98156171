#include <algorithm>
#include <fstream>

#include "irpert/dataset.hpp"
#include "irpert/png_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace irpert {

int Dataset::class_index(const std::string& name) const {
  const auto it = std::find(class_names.begin(), class_names.end(), name);
  return it == class_names.end() ? -1 : static_cast<int>(it - class_names.begin());
}

std::vector<LabeledImage> Dataset::labeled() const {
  std::vector<LabeledImage> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({&s.image, s.label});
  return out;
}

ObjectMask Dataset::mask_for(int label) const {
  if (label >= 0 && label < static_cast<int>(masks.size()) && masks[label].width() > 0) return masks[label];
  return ObjectMask(width, height, 1);
}

DatasetLayout parse_layout(const std::string& name) {
  if (name == "synthetic") return DatasetLayout::synthetic;
  if (name == "gtsrb-ir-100") return DatasetLayout::gtsrb_ir_100;
  throw UsageError("unknown dataset layout '" + name + "' (expected synthetic or gtsrb-ir-100)");
}

void write_dataset(const fs::path& root, const Dataset& ds) {
  fs::create_directories(root / "dataset");
  fs::create_directories(root / "masks");
  for (const auto& s : ds.samples) {
    const fs::path file = root / "dataset" / (s.id + ".png");
    fs::create_directories(file.parent_path());
    write_png(file, s.image);
  }
  for (std::size_t c = 0; c < ds.masks.size(); ++c)
    write_mask_png(root / "masks" / (std::to_string(c) + ".png"), BinaryMask(ds.masks[c]));
  nlohmann::json meta;
  meta["class_names"] = ds.class_names;
  meta["resolution"] = {ds.width, ds.height};
  meta["seed"] = ds.seed;
  std::ofstream(root / "meta.json") << meta.dump(2) << "\n";
}

namespace {

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

Dataset ingest_synthetic(const fs::path& root) {
  if (!fs::exists(root / "meta.json")) throw DataError(root.string() + ": missing meta.json");
  if (!fs::is_directory(root / "dataset")) throw DataError((root / "dataset").string() + ": missing directory");
  const auto meta = read_json_file(root / "meta.json");
  Dataset ds;
  try {
    ds.class_names = meta.at("class_names").get<std::vector<std::string>>();
    ds.width = meta.at("resolution").at(0).get<int>();
    ds.height = meta.at("resolution").at(1).get<int>();
    ds.seed = meta.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw DataError((root / "meta.json").string() + ": " + e.what());
  }
  for (const auto& dir : sorted_entries(root / "dataset")) {
    if (!fs::is_directory(dir)) continue;
    const std::string cls = dir.filename().string();
    int label = -1;
    try {
      std::size_t used = 0;
      label = std::stoi(cls, &used);
      if (used != cls.size()) label = -1;
    } catch (const std::exception&) {
    }
    if (label < 0 || label >= ds.num_classes())
      throw DataError(dir.string() + ": class directory is not a class id listed in meta.json");
    for (const auto& file : sorted_entries(dir)) {
      if (file.extension() != ".png") continue;
      Sample s;
      s.id = cls + "/" + file.stem().string();
      s.label = label;
      s.image = read_png(file);
      if (s.image.width() != ds.width || s.image.height() != ds.height)
        throw DataError(file.string() + ": image size differs from meta.json resolution");
      ds.samples.push_back(std::move(s));
    }
  }
  if (ds.samples.empty()) throw DataError(root.string() + ": dataset contains no images");
  for (int c = 0; c < ds.num_classes(); ++c) {
    const fs::path mask = root / "masks" / (std::to_string(c) + ".png");
    if (fs::exists(mask)) {
      ObjectMask m(read_mask_png(mask));
      if (m.width() != ds.width || m.height() != ds.height)
        throw DataError(mask.string() + ": mask size differs from the images");
      ds.masks.push_back(std::move(m));
    } else {
      ds.masks.emplace_back();
    }
  }
  return ds;
}

}  // namespace

std::vector<MeasurementPair> read_measurement_pairs(const fs::path& pairs_dir) {
  if (!fs::is_directory(pairs_dir)) throw DataError(pairs_dir.string() + ": missing pairs directory");
  std::vector<MeasurementPair> pairs;
  for (const auto& dir : sorted_entries(pairs_dir)) {
    if (!fs::is_directory(dir)) continue;
    double lux = 0;
    try {
      std::size_t used = 0;
      lux = std::stod(dir.filename().string(), &used);
      if (used != dir.filename().string().size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(dir.string() + ": pair directory name is not a lux value");
    }
    if (!(lux > 0)) throw DataError(dir.string() + ": lux must be positive");
    const fs::path vis = dir / "vis.png", ir = dir / "ir.png";
    if (!fs::exists(vis)) throw DataError(vis.string() + ": missing half of the pair");
    if (!fs::exists(ir)) throw DataError(ir.string() + ": missing half of the pair");
    MeasurementPair p{read_png(vis), read_png(ir), lux};
    if (!p.vis.same_shape(p.ir)) throw DataError(dir.string() + ": vis and ir sizes differ");
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw DataError(pairs_dir.string() + ": no measurement pairs");
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.lux < b.lux; });
  return pairs;
}

Dataset ingest_dataset(const fs::path& root, DatasetLayout layout) {
  if (!fs::is_directory(root)) throw DataError(root.string() + ": not a directory");
  if (fs::is_empty(root)) throw DataError(root.string() + ": empty directory");
  if (layout == DatasetLayout::synthetic) return ingest_synthetic(root);

  Dataset ds;
  ds.pairs = read_measurement_pairs(root / "pairs");
  nlohmann::json meta = nlohmann::json::object();
  if (fs::exists(root / "meta.json")) meta = read_json_file(root / "meta.json");
  ds.class_names = meta.value("class_names", std::vector<std::string>{"sign"});
  const auto classes = meta.value("pairs", nlohmann::json::object());
  ds.width = ds.pairs.front().vis.width();
  ds.height = ds.pairs.front().vis.height();
  for (const auto& p : ds.pairs) {
    char lux[32];
    std::snprintf(lux, sizeof lux, "%g", p.lux);
    Sample s;
    s.id = std::string("pairs/") + lux;
    s.label = 0;
    if (classes.contains(lux)) {
      s.label = ds.class_index(classes[lux].get<std::string>());
      if (s.label < 0) throw DataError((root / "meta.json").string() + ": unknown class for pair " + lux);
    }
    s.image = p.vis;
    s.lux = p.lux;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace irpert
