#include "irpert/harness/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <ostream>
#include <thread>

#include "irpert/png_io.hpp"
#include "irpert/remote.hpp"
#include "irpert/seed.hpp"

namespace irpert {

using nlohmann::json;

Dataset load_data(const DataSource& src) {
  if (src.path) return ingest_dataset(*src.path, src.layout);
  return generate_synthetic_dataset(src.synthetic);
}

double dataset_mean_lightness(const Dataset& ds) {
  if (ds.samples.empty()) throw DataError("dataset has no samples");
  double sum = 0;
  for (const auto& s : ds.samples) sum += mean_lightness(s.image);
  return sum / static_cast<double>(ds.samples.size());
}

namespace {

std::vector<RgbImage> normalized_images(const Dataset& ds, double mean_l) {
  std::vector<RgbImage> out;
  out.reserve(ds.samples.size());
  for (const auto& s : ds.samples) out.push_back(normalize_lightness(s.image, mean_l).image);
  return out;
}

std::vector<LabeledImage> label(const std::vector<RgbImage>& imgs, const Dataset& ds) {
  std::vector<LabeledImage> out;
  for (std::size_t i = 0; i < imgs.size(); ++i) out.push_back({&imgs[i], ds.samples[i].label});
  return out;
}

}  // namespace

CentroidModel train_builtin_classifier(const Dataset& train, double mean_l, double temperature) {
  const auto imgs = normalized_images(train, mean_l);
  return train_centroids(label(imgs, train), train.num_classes(), temperature, train.class_names);
}

BuiltinDetector train_builtin_detector(const Dataset& train, double mean_l, double temperature) {
  const auto imgs = normalized_images(train, mean_l);
  return BuiltinDetector::train(label(imgs, train), train.num_classes(), std::min(train.width, 32), temperature);
}

Workspace prepare_workspace(const RunConfig& cfg) {
  cfg.validate();
  Workspace ws;
  ws.attack_set = load_data(cfg.attack_data);
  if (ws.attack_set.samples.empty()) throw DataError("attack dataset has no samples");
  const Dataset train = load_data(cfg.train_data);
  if (train.class_names != ws.attack_set.class_names)
    throw DataError("training and attack datasets disagree on class names");
  ws.mean_l = dataset_mean_lightness(train);
  if (cfg.oracle == "builtin") {
    ws.classifier = std::make_shared<CentroidModel>(train_builtin_classifier(train, ws.mean_l, cfg.temperature));
    ws.detector = std::make_shared<BuiltinDetector>(train_builtin_detector(train, ws.mean_l, cfg.temperature));
  } else {
    RemoteOptions opt;
    opt.timeout = std::chrono::milliseconds(cfg.oracle_timeout_ms);
    std::shared_ptr<const Oracle> remote = RemoteOracle::connect(cfg.oracle, opt);
    ws.classifier = remote;
    ws.detector = remote;
  }
  if (cfg.backgrounds_dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(*cfg.backgrounds_dir))
      if (e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no PNG backgrounds in " + *cfg.backgrounds_dir);
    for (const auto& f : files) ws.backgrounds.push_back(read_png(f));
  }
  return ws;
}

std::vector<std::pair<int, int>> speed_classes(const Dataset& ds, const std::string& prefix) {
  std::vector<std::pair<int, int>> out;
  for (int c = 0; c < ds.num_classes(); ++c) {
    const std::string& n = ds.class_names[c];
    if (n.rfind(prefix, 0) != 0) continue;
    const std::string digits = n.substr(prefix.size());
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](unsigned char ch) { return std::isdigit(ch); }))
      continue;
    out.emplace_back(std::stoi(digits), c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ScenarioGoal> scenario_goals(int scenario, const Dataset& ds, const RunConfig& cfg) {
  std::vector<std::string> missing;
  const auto speeds = speed_classes(ds, cfg.speed_prefix);
  if ((scenario >= 1 && scenario <= 3) && speeds.size() < (scenario == 3 ? 1u : 2u))
    missing.push_back(scenario == 3 ? cfg.speed_prefix + "<value>"
                                    : cfg.speed_prefix + "<value> (two or more)");
  const int stop = ds.class_index(cfg.stop_class);
  if (scenario == 3 && stop < 0) missing.push_back(cfg.stop_class);
  if (!missing.empty()) {
    std::string msg = "scenario " + std::to_string(scenario) + " needs classes absent from the dataset:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }

  std::vector<ScenarioGoal> goals;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    switch (scenario) {
      case 1:
      case 2: {
        const int target = scenario == 1 ? speeds.front().second : speeds.back().second;
        const bool is_speed = std::any_of(speeds.begin(), speeds.end(), [&](auto& p) { return p.second == s.label; });
        if (is_speed && s.label != target) goals.push_back({i, s.id, AttackGoal(Targeted{s.label, target})});
        break;
      }
      case 3:
        if (s.label == stop)
          for (const auto& [value, cls] : speeds)
            goals.push_back({i, s.id + "->" + ds.class_names[cls], AttackGoal(Targeted{s.label, cls})});
        break;
      case 4:
        goals.push_back({i, s.id, AttackGoal(Untargeted{s.label})});
        break;
      case 5: {
        const auto box = ds.mask_for(s.label).bounding_box();
        if (!box) throw DataError("empty object mask for class " + ds.class_names[s.label]);
        goals.push_back({i, s.id, AttackGoal(Hide{s.label, *box, cfg.tau})});
        break;
      }
      default:
        throw DataError("scenario must be 1..5");
    }
  }
  if (cfg.max_images > 0 && goals.size() > static_cast<std::size_t>(cfg.max_images))
    goals.erase(goals.begin() + cfg.max_images, goals.end());
  if (goals.empty()) throw DataError("scenario " + std::to_string(scenario) + " selects no images");
  return goals;
}

namespace {

std::optional<int> goal_target(const AttackGoal& g) {
  if (const auto* t = std::get_if<Targeted>(&g.variant())) return t->target;
  return std::nullopt;
}

template <class F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex fail_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(fail_mu);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

RunReport run_scenario(const Workspace& ws, const RunConfig& cfg) {
  cfg.validate();
  const auto goals = scenario_goals(cfg.scenario, ws.attack_set, cfg);
  const RhoTriple rho = cfg.rho();
  std::optional<EotConfig> eot = cfg.eot;
  if (eot) eot->backgrounds = ws.backgrounds;
  const Oracle& oracle = cfg.scenario == 5 ? *ws.detector : *ws.classifier;
  const MpGrid grid(cfg.attack.l, ws.attack_set.width, ws.attack_set.height);

  RunReport rep;
  rep.scenario = cfg.scenario;
  rep.seed = cfg.seed;
  rep.fingerprint = fingerprint(cfg);
  rep.lux = cfg.lux;
  rep.k = cfg.attack.k;
  rep.l = cfg.attack.l;
  rep.strategy = strategy_name(cfg.attack.strategy);
  rep.rho = rho;
  rep.images.resize(goals.size());

  parallel_for(goals.size(), cfg.threads, [&](std::size_t gi) {
    const ScenarioGoal& g = goals[gi];
    const Sample& s = ws.attack_set.samples[g.sample];
    Objective obj(oracle, normalize_lightness(s.image, ws.mean_l).image, ws.attack_set.mask_for(s.label), grid, rho,
                  g.goal, eot, derive_seed(cfg.seed, g.key + "#eot"));
    OptimConfig oc = cfg.attack;
    oc.seed = derive_seed(cfg.seed, g.key);
    oc.eot = eot;
    const OptimResult r = optimize(obj, oc);
    ImageResult& out = rep.images[gi];
    out.key = g.key;
    out.sample_id = s.id;
    out.source = g.goal.source();
    out.target = goal_target(g.goal);
    out.goal = g.goal.kind();
    out.success = r.success;
    out.queries = r.queries_used;
    out.evaluations = r.evaluations;
    out.final_loss = r.final_loss;
    out.aborted = r.aborted;
    out.error = r.error;
    out.cells = r.mp_set.indices();
    out.trace = r.trace;
  });

  std::vector<bool> outcomes;
  double q = 0;
  for (const auto& r : rep.images) {
    outcomes.push_back(r.success);
    q += r.queries;
    if (r.aborted) ++rep.aborted;
  }
  rep.asr = asr(outcomes);
  rep.mean_queries = q / static_cast<double>(rep.images.size());
  return rep;
}

json RunReport::to_json() const {
  json imgs = json::array();
  for (const auto& r : images)
    imgs.push_back({{"key", r.key},
                    {"sample", r.sample_id},
                    {"source", r.source},
                    {"target", r.target ? json(*r.target) : json(nullptr)},
                    {"goal", r.goal},
                    {"success", r.success},
                    {"queries", r.queries},
                    {"evaluations", r.evaluations},
                    {"final_loss", r.final_loss},
                    {"aborted", r.aborted},
                    {"error", r.error},
                    {"cells", r.cells}});
  return {{"scenario", scenario}, {"seed", seed},   {"fingerprint", fingerprint},
          {"lux", lux},           {"k", k},         {"l", l},
          {"strategy", strategy}, {"rho", rho},     {"asr", asr},
          {"mean_queries", mean_queries},           {"aborted", aborted},
          {"images", imgs}};
}

RunReport RunReport::from_json(const json& doc) {
  try {
    RunReport r;
    r.scenario = doc.at("scenario").get<int>();
    r.seed = doc.at("seed").get<std::uint64_t>();
    r.fingerprint = doc.at("fingerprint").get<std::string>();
    r.lux = doc.at("lux").get<double>();
    r.k = doc.at("k").get<int>();
    r.l = doc.at("l").get<int>();
    r.strategy = doc.at("strategy").get<std::string>();
    r.rho = doc.at("rho").get<RhoTriple>();
    r.asr = doc.at("asr").get<double>();
    r.mean_queries = doc.at("mean_queries").get<double>();
    r.aborted = doc.at("aborted").get<std::size_t>();
    for (const auto& i : doc.at("images")) {
      ImageResult x;
      x.key = i.at("key").get<std::string>();
      x.sample_id = i.at("sample").get<std::string>();
      x.source = i.at("source").get<int>();
      if (!i.at("target").is_null()) x.target = i.at("target").get<int>();
      x.goal = i.at("goal").get<std::string>();
      x.success = i.at("success").get<bool>();
      x.queries = i.at("queries").get<int>();
      x.evaluations = i.at("evaluations").get<long>();
      x.final_loss = i.at("final_loss").get<double>();
      x.aborted = i.at("aborted").get<bool>();
      x.error = i.at("error").get<std::string>();
      x.cells = i.at("cells").get<std::vector<int>>();
      r.images.push_back(std::move(x));
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed run report: ") + e.what());
  }
}

void RunReport::write_csv(std::ostream& out) const {
  out << "key,sample,source,target,goal,success,queries,evaluations,final_loss,aborted\n";
  char buf[64];
  for (const auto& r : images) {
    std::snprintf(buf, sizeof buf, "%.17g", r.final_loss);
    out << r.key << ',' << r.sample_id << ',' << r.source << ',' << (r.target ? std::to_string(*r.target) : "") << ','
        << r.goal << ',' << (r.success ? 1 : 0) << ',' << r.queries << ',' << r.evaluations << ',' << buf << ','
        << (r.aborted ? 1 : 0) << '\n';
  }
}

std::vector<SweepCell> run_sweep(const Workspace& ws, const RunConfig& cfg) {
  cfg.sweep.validate();
  std::vector<SweepCell> cells;
  for (double lux : cfg.sweep.lux)
    for (int k : cfg.sweep.k)
      for (int l : cfg.sweep.l) {
        RunConfig c = cfg;
        c.lux = lux;
        c.attack.k = k;
        c.attack.l = l;
        const RunReport r = run_scenario(ws, c);
        cells.push_back({lux, k, l, r.asr, r.mean_queries, r.images.size()});
      }
  return cells;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells) {
  out << "lux,k,l,asr,mean_queries,n\n";
  char buf[160];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%g,%d,%d,%.17g,%.17g,%zu\n", c.lux, c.k, c.l, c.asr, c.mean_queries, c.n);
    out << buf;
  }
}

void write_sweep_table(std::ostream& out, const std::vector<SweepCell>& cells) {
  std::vector<double> luxes;
  std::vector<std::pair<int, int>> cols;
  for (const auto& c : cells) {
    if (std::find(luxes.begin(), luxes.end(), c.lux) == luxes.end()) luxes.push_back(c.lux);
    if (std::find(cols.begin(), cols.end(), std::pair{c.k, c.l}) == cols.end()) cols.emplace_back(c.k, c.l);
  }
  out << "lux";
  for (const auto& [k, l] : cols) out << ",k" << k << "_l" << l << "_asr,k" << k << "_l" << l << "_queries";
  out << '\n';
  char buf[96];
  for (double lux : luxes) {
    std::snprintf(buf, sizeof buf, "%g", lux);
    out << buf;
    for (const auto& [k, l] : cols) {
      const auto it = std::find_if(cells.begin(), cells.end(),
                                   [&](const SweepCell& c) { return c.lux == lux && c.k == k && c.l == l; });
      std::snprintf(buf, sizeof buf, ",%.4f,%.1f", it->asr, it->mean_queries);
      out << buf;
    }
    out << '\n';
  }
}

Replayed replay_image(const ImageResult& r, const Workspace& ws, const RunConfig& cfg, const RhoTriple& rho) {
  const auto& samples = ws.attack_set.samples;
  const auto it = std::find_if(samples.begin(), samples.end(), [&](const Sample& s) { return s.id == r.sample_id; });
  if (it == samples.end()) throw DataError("saved result names unknown sample '" + r.sample_id + "'");
  const MpGrid grid(cfg.attack.l, ws.attack_set.width, ws.attack_set.height);
  for (int c : r.cells)
    if (c < 0 || c >= grid.cell_count()) throw DataError("saved cell index out of range for '" + r.key + "'");
  const ObjectMask mask = ws.attack_set.mask_for(it->label);
  Replayed out{normalize_lightness(it->image, ws.mean_l).image, {}, {}, AttackGoal(Untargeted{r.source})};
  out.projection = model_perturbation(MpSet::from_indices(r.cells), mask, grid);
  out.adversarial = apply_ir(out.clean, out.projection, rho);
  if (r.goal == "hide") {
    const auto box = mask.bounding_box();
    out.goal = AttackGoal(Hide{r.source, box.value_or(BBox{}), cfg.tau});
  } else if (r.target) {
    out.goal = AttackGoal(Targeted{r.source, *r.target});
  }
  return out;
}

RunReport replay_transfer(const RunReport& saved, const Workspace& ws, const RunConfig& cfg, const Oracle& oracle2,
                          std::vector<std::string>* warnings) {
  if (saved.images.empty()) throw DataError("saved report has no images");
  RunConfig c = cfg;
  c.attack.l = saved.l;
  RunReport rep = saved;
  rep.fingerprint = fingerprint(c);
  const auto res = oracle2.resolution();
  bool warned = false;
  std::vector<bool> outcomes;
  for (auto& r : rep.images) {
    const Replayed rp = replay_image(r, ws, c, saved.rho);
    if (rp.goal.is_hide()) {
      r.success = criterion(oracle2.detect(rp.adversarial, cfg.tau), rp.goal);
    } else {
      RgbImage x = rp.adversarial;
      if (res && (res->first != x.width() || res->second != x.height())) {
        if (!warned && warnings)
          warnings->push_back("resampling " + std::to_string(x.width()) + "x" + std::to_string(x.height()) +
                              " images to the second oracle's " + std::to_string(res->first) + "x" +
                              std::to_string(res->second));
        warned = true;
        x = resize_bilinear(x, res->first, res->second);
      }
      r.success = criterion(oracle2.classify(x), rp.goal);
    }
    r.queries = 0;
    r.evaluations = 1;
    r.trace.clear();
    outcomes.push_back(r.success);
  }
  rep.asr = asr(outcomes);
  rep.mean_queries = 0;
  return rep;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw DataError("spearman needs two equal-length series of 2+ values");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = (i + j) / 2.0 + 1;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  // A constant series has no rank order; report no correlation.
  if (va == 0 || vb == 0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace irpert
