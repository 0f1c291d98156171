#include "irpert/harness/config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <set>
#include <sstream>

namespace irpert {

using nlohmann::json;

namespace {

void reject_unknown(const json& doc, std::initializer_list<const char*> keys, const std::string& where) {
  if (!doc.is_object()) throw DataError(where + " must be a JSON object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : doc.items())
    if (!allowed.count(k)) throw DataError("unknown key '" + k + "' in " + where);
}

template <class T>
T get_or(const json& doc, const char* key, T fallback) {
  if (!doc.contains(key) || doc[key].is_null()) return fallback;
  try {
    return doc[key].get<T>();
  } catch (const json::exception&) {
    throw DataError(std::string("config key '") + key + "' has the wrong type");
  }
}

json detector_to_json(const DetectorConfig& d) {
  return {{"nu", d.nu},
          {"low", d.segmenter.low},
          {"high", d.segmenter.high},
          {"min_region_px", d.segmenter.min_region_px},
          {"crop", d.crop},
          {"work_size", d.work_size}};
}

DetectorConfig detector_from_json(const json& doc, DetectorConfig d) {
  reject_unknown(doc, {"nu", "low", "high", "min_region_px", "crop", "work_size"}, "defense");
  d.nu = get_or(doc, "nu", d.nu);
  d.segmenter.low = get_or(doc, "low", d.segmenter.low);
  d.segmenter.high = get_or(doc, "high", d.segmenter.high);
  d.segmenter.min_region_px = get_or(doc, "min_region_px", d.segmenter.min_region_px);
  d.crop = get_or(doc, "crop", d.crop);
  d.work_size = get_or(doc, "work_size", d.work_size);
  return d;
}

}  // namespace

json DataSource::to_json() const {
  json doc{{"layout", layout == DatasetLayout::synthetic ? "synthetic" : "gtsrb-ir-100"},
           {"path", path ? json(*path) : json(nullptr)},
           {"seed", synthetic.seed},
           {"n_classes", synthetic.n_classes},
           {"samples_per_class", synthetic.samples_per_class},
           {"resolution", synthetic.resolution}};
  return doc;
}

DataSource DataSource::from_json(const json& doc, const DataSource& defaults) {
  reject_unknown(doc, {"layout", "path", "seed", "n_classes", "samples_per_class", "resolution"}, "data source");
  DataSource d = defaults;
  if (doc.contains("path")) d.path = doc["path"].is_null() ? std::nullopt : std::optional(get_or<std::string>(doc, "path", ""));
  if (doc.contains("layout")) d.layout = parse_layout(get_or<std::string>(doc, "layout", "synthetic"));
  d.synthetic.seed = get_or<std::uint64_t>(doc, "seed", d.synthetic.seed);
  d.synthetic.n_classes = get_or(doc, "n_classes", d.synthetic.n_classes);
  d.synthetic.samples_per_class = get_or(doc, "samples_per_class", d.synthetic.samples_per_class);
  d.synthetic.resolution = get_or(doc, "resolution", d.synthetic.resolution);
  return d;
}

void SweepSpec::validate() const {
  if (lux.empty() || k.empty() || l.empty()) throw DataError("sweep axes must be non-empty");
  for (double v : lux)
    if (!(v > 0)) throw DataError("sweep lux values must be positive");
  for (int v : k)
    if (v < 1) throw DataError("sweep k values must be positive");
  for (int v : l)
    if (v < 1) throw DataError("sweep l values must be positive");
}

json SweepSpec::to_json() const { return {{"lux", lux}, {"k", k}, {"l", l}}; }

RunConfig::RunConfig() {
  attack_data.synthetic = {.seed = 2, .n_classes = 8, .samples_per_class = 25, .resolution = 32};
  train_data.synthetic = {.seed = 1, .n_classes = 8, .samples_per_class = 200, .resolution = 32};
}

void RunConfig::validate() const {
  if (scenario < 1 || scenario > 5) throw DataError("scenario must be 1..5");
  attack.validate();
  if (!(lux > 0)) throw DataError("lux must be positive");
  if (eot) eot->validate();
  if (!(temperature > 0)) throw DataError("temperature must be positive");
  if (!(tau > 0 && tau < 1)) throw DataError("tau must lie in (0, 1)");
  if (max_images < 0) throw DataError("max_images must be non-negative");
  if (threads < 0) throw DataError("threads must be non-negative");
  if (oracle_timeout_ms < 1) throw DataError("oracle_timeout_ms must be positive");
  sweep.validate();
  defense.validate();
}

ScalingCurve RunConfig::scaling_curve() const { return curve ? *curve : ScalingCurve::builtin(); }

RhoTriple RunConfig::rho() const { return scaling_curve().eval(lux); }

json RunConfig::to_json() const {
  return {{"seed", seed},
          {"scenario", scenario},
          {"attack",
           {{"k", attack.k},
            {"l", attack.l},
            {"max_queries", attack.max_queries},
            {"strategy", strategy_name(attack.strategy)},
            {"stop_on_success", attack.stop_on_success}}},
          {"lux", lux},
          {"curve", curve ? curve->to_json() : json(nullptr)},
          {"eot", eot ? eot->to_json() : json(nullptr)},
          {"backgrounds_dir", backgrounds_dir ? json(*backgrounds_dir) : json(nullptr)},
          {"oracle", oracle},
          {"oracle_timeout_ms", oracle_timeout_ms},
          {"attack_data", attack_data.to_json()},
          {"train_data", train_data.to_json()},
          {"temperature", temperature},
          {"tau", tau},
          {"max_images", max_images},
          {"speed_prefix", speed_prefix},
          {"stop_class", stop_class},
          {"sweep", sweep.to_json()},
          {"defense", detector_to_json(defense)},
          {"threads", threads}};
}

RunConfig RunConfig::from_json(const json& doc) {
  reject_unknown(doc,
                 {"seed", "scenario", "attack", "lux", "curve", "eot", "backgrounds_dir", "oracle", "oracle_timeout_ms",
                  "attack_data", "train_data", "temperature", "tau", "max_images", "speed_prefix", "stop_class", "sweep",
                  "defense", "threads"},
                 "config");
  RunConfig c;
  c.seed = get_or<std::uint64_t>(doc, "seed", c.seed);
  c.scenario = get_or(doc, "scenario", c.scenario);
  bool queries_given = false;
  if (doc.contains("attack")) {
    const json& a = doc["attack"];
    reject_unknown(a, {"k", "l", "max_queries", "strategy", "stop_on_success"}, "attack");
    c.attack.k = get_or(a, "k", c.attack.k);
    c.attack.l = get_or(a, "l", c.attack.l);
    queries_given = a.contains("max_queries");
    c.attack.max_queries = get_or(a, "max_queries", c.attack.max_queries);
    if (a.contains("strategy")) c.attack.strategy = parse_strategy(get_or<std::string>(a, "strategy", "lrs"));
    c.attack.stop_on_success = get_or(a, "stop_on_success", c.attack.stop_on_success);
  }
  c.lux = get_or(doc, "lux", c.lux);
  if (doc.contains("curve") && !doc["curve"].is_null()) c.curve = ScalingCurve::from_json(doc["curve"]);
  if (doc.contains("eot") && !doc["eot"].is_null()) {
    c.eot = EotConfig::from_json(doc["eot"]);
    // EOT estimates need a larger budget unless one is given.
    if (!queries_given) c.attack.max_queries = 2500;
  }
  if (doc.contains("backgrounds_dir") && !doc["backgrounds_dir"].is_null())
    c.backgrounds_dir = get_or<std::string>(doc, "backgrounds_dir", "");
  c.oracle = get_or(doc, "oracle", c.oracle);
  c.oracle_timeout_ms = get_or(doc, "oracle_timeout_ms", c.oracle_timeout_ms);
  if (doc.contains("attack_data")) c.attack_data = DataSource::from_json(doc["attack_data"], c.attack_data);
  if (doc.contains("train_data")) c.train_data = DataSource::from_json(doc["train_data"], c.train_data);
  c.temperature = get_or(doc, "temperature", c.temperature);
  c.tau = get_or(doc, "tau", c.tau);
  c.max_images = get_or(doc, "max_images", c.max_images);
  c.speed_prefix = get_or(doc, "speed_prefix", c.speed_prefix);
  c.stop_class = get_or(doc, "stop_class", c.stop_class);
  if (doc.contains("sweep")) {
    const json& s = doc["sweep"];
    reject_unknown(s, {"lux", "k", "l"}, "sweep");
    c.sweep.lux = get_or(s, "lux", c.sweep.lux);
    c.sweep.k = get_or(s, "k", c.sweep.k);
    c.sweep.l = get_or(s, "l", c.sweep.l);
  }
  if (doc.contains("defense")) c.defense = detector_from_json(doc["defense"], c.defense);
  c.threads = get_or(doc, "threads", c.threads);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw DataError("config " + path + " is not valid JSON");
  return from_json(doc);
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string fingerprint(const RunConfig& cfg) {
  // Execution knobs do not change results.
  json doc = cfg.to_json();
  doc.erase("threads");
  doc.erase("oracle_timeout_ms");
  return sha256_hex(doc.dump());
}

}  // namespace irpert
