#include "irpert/harness/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "irpert/harness/film.hpp"
#include "irpert/harness/harness.hpp"
#include "irpert/png_io.hpp"
#include "irpert/remote.hpp"

namespace irpert {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> oracle;
  std::string out = "out";
};

class Output {
 public:
  Output(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
    fs::create_directories(dir_);
  }

  fs::path path(const std::string& name) {
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
    return dir_ / name;
  }

  void text(const std::string& name, const std::string& body) {
    std::ofstream f(path(name), std::ios::binary);
    if (!f) throw DataError("cannot write " + (dir_ / name).string());
    f << body;
  }

  void json_file(const std::string& name, const json& doc) { text(name, doc.dump(2) + "\n"); }

  void warn(const std::string& w) { warnings_.push_back(w); }

  // Written last; lists every other file. No timestamps, so reruns match
  // byte for byte.
  void manifest(const RunConfig& cfg, const json& summary) {
    std::vector<std::string> files = files_;
    std::sort(files.begin(), files.end());
    json doc{{"command", command_},   {"fingerprint", fingerprint(cfg)}, {"seed", cfg.seed},
             {"config", cfg.to_json()}, {"outputs", files},              {"warnings", warnings_},
             {"summary", summary}};
    std::ofstream f(dir_ / "manifest.json", std::ios::binary);
    if (!f) throw DataError("cannot write manifest");
    f << doc.dump(2) << "\n";
  }

  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  fs::path dir_;
  std::string command_;
  std::vector<std::string> files_;
  std::vector<std::string> warnings_;
};

template <class F>
std::string to_text(F&& write) {
  std::ostringstream s;
  write(s);
  return s.str();
}

RunConfig base_config(const Globals& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : RunConfig::load(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.oracle) cfg.oracle = *g.oracle;
  cfg.validate();
  return cfg;
}

RunReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw DataError("report " + path + " is not valid JSON");
  return RunReport::from_json(doc);
}

std::string safe_name(std::string key) {
  for (char& c : key)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return key;
}

json report_summary(const RunReport& r) {
  return {{"asr", r.asr}, {"mean_queries", r.mean_queries}, {"images", r.images.size()}, {"aborted", r.aborted}};
}

std::vector<RgbImage> read_png_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no PNG files in " + dir);
  std::vector<RgbImage> out;
  for (const auto& f : files) out.push_back(read_png(f));
  return out;
}

DetectorConfig detector_config(const RunConfig& cfg, const std::string& segmenter) {
  DetectorConfig d = cfg.defense;
  if (segmenter != "builtin") {
    RemoteOptions opt;
    opt.capabilities = {Capability::segment};
    opt.timeout = std::chrono::milliseconds(cfg.oracle_timeout_ms);
    d.backend = RemoteOracle::connect(segmenter, opt);
  }
  return d;
}

struct PairCounts {
  std::vector<std::string> keys;
  std::vector<std::size_t> benign, adversarial;
  std::vector<Replayed> replays;
};

PairCounts count_pairs(const RunReport& saved, const Workspace& ws, const RunConfig& cfg, const DetectorConfig& det) {
  RunConfig c = cfg;
  c.attack.l = saved.l;
  PairCounts pc;
  for (const auto& r : saved.images) {
    pc.replays.push_back(replay_image(r, ws, c, saved.rho));
    pc.keys.push_back(r.key);
    pc.benign.push_back(shape_count(pc.replays.back().clean, det));
    pc.adversarial.push_back(shape_count(pc.replays.back().adversarial, det));
  }
  return pc;
}

std::string counts_csv(const PairCounts& pc) {
  std::ostringstream s;
  s << "key,clean,adversarial\n";
  for (std::size_t i = 0; i < pc.keys.size(); ++i)
    s << pc.keys[i] << ',' << pc.benign[i] << ',' << pc.adversarial[i] << '\n';
  return s.str();
}

// One line-level probe of an endpoint.
struct Probe {
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Probe> serve_check(const RunConfig& cfg, const Workspace& ws) {
  if (cfg.oracle == "builtin") throw UsageError("serve-check needs --oracle exec:<cmd> or tcp:<host>:<port>");
  auto transport = open_transport(cfg.oracle);
  const auto timeout = std::chrono::milliseconds(cfg.oracle_timeout_ms);
  const RgbImage& img = ws.attack_set.samples.front().image;
  std::vector<Probe> probes;
  auto exchange = [&](const std::string& line) {
    transport->send_line(line);
    return transport->recv_line(timeout);
  };
  auto probe = [&](const std::string& name, auto&& fn) {
    try {
      std::string detail;
      const bool ok = fn(detail);
      probes.push_back({name, ok, detail});
    } catch (const std::exception& e) {
      probes.push_back({name, false, e.what()});
    }
  };

  const std::string classify7 = make_request(7, Capability::classify, img).dump();
  std::string first_reply;
  probe("classify_simplex", [&](std::string& d) {
    first_reply = exchange(classify7);
    const ProbSimplex p = parse_classify_response(json::parse(first_reply), 7);
    double sum = 0;
    for (double v : p.probs()) sum += v;
    d = "sum=" + std::to_string(sum);
    return std::abs(sum - 1.0) <= 1e-6 &&
           std::all_of(p.probs().begin(), p.probs().end(), [](double v) { return v >= 0; });
  });
  probe("id_echo", [&](std::string& d) {
    const json doc = json::parse(exchange(make_request(12345, Capability::classify, img).dump()));
    d = doc.contains("id") ? doc["id"].dump() : "missing";
    return doc.contains("id") && doc["id"] == 12345;
  });
  probe("malformed_json", [&](std::string& d) {
    const json doc = json::parse(exchange("{not json"));
    d = doc.dump();
    return doc.contains("error") && doc.contains("id") && doc["id"].is_null();
  });
  probe("unknown_op", [&](std::string& d) {
    const json doc = json::parse(exchange(R"({"id": 9, "op": "teleport"})"));
    d = doc.dump();
    return doc.contains("error") && doc.value("id", json()) == 9;
  });
  probe("survives_errors", [&](std::string& d) {
    const std::string again = exchange(classify7);
    d = again == first_reply ? "identical" : "differs";
    return again == first_reply;
  });
  probe("detect", [&](std::string& d) {
    const json doc = json::parse(exchange(make_request(21, Capability::detect, img).dump()));
    if (doc.value("error", "") == "unsupported_op") {
      d = "unsupported";
      return true;
    }
    const DetectorOutput out = parse_detect_response(doc, 21, 0.0);
    d = std::to_string(out.detections.size()) + " boxes";
    return true;
  });
  probe("segment", [&](std::string& d) {
    const json doc = json::parse(exchange(make_request(22, Capability::segment, img).dump()));
    if (doc.value("error", "") == "unsupported_op") {
      d = "unsupported";
      return true;
    }
    const SegmentationResult s = parse_segment_response(doc, 22, img.width(), img.height());
    d = std::to_string(s.count()) + " masks";
    return true;
  });
  return probes;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Infrared manypixel attack toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Run seed");
  app.add_option("--oracle", g.oracle, "builtin | exec:<cmd> | tcp:<host>:<port>");
  app.add_option("--out", g.out, "Output directory");

  std::optional<int> scenario, k, l, queries, max_images, threads;
  std::optional<double> lux;
  std::optional<std::string> strategy;
  bool trace = false, eot = false;
  auto add_attack_flags = [&](CLI::App* sub) {
    sub->add_option("--scenario", scenario, "1..5");
    sub->add_option("--strategy", strategy, "lrs | rnd | pso | ga | es");
    sub->add_option("--lux", lux);
    sub->add_option("-k,--k", k, "Manypixels per candidate");
    sub->add_option("-l,--l", l, "Manypixel side in pixels");
    sub->add_option("--queries", queries, "Query budget per image");
    sub->add_option("--max-images", max_images);
    sub->add_option("--threads", threads);
    sub->add_flag("--eot", eot, "Optimize over the default transformation distribution");
  };

  auto* attack = app.add_subcommand("attack", "Run one scenario");
  add_attack_flags(attack);
  attack->add_flag("--trace", trace, "Write per-image loss traces");

  auto* sweep = app.add_subcommand("sweep", "Cross product over lux, k and l");
  add_attack_flags(sweep);
  std::vector<double> sweep_lux;
  std::vector<int> sweep_k, sweep_l;
  sweep->add_option("--lux-axis", sweep_lux);
  sweep->add_option("--k-axis", sweep_k);
  sweep->add_option("--l-axis", sweep_l);

  std::string report_path;
  auto* transfer = app.add_subcommand("transfer", "Score saved perturbations on another oracle");
  transfer->add_option("--report", report_path, "report.json from attack")->required()->check(CLI::ExistingFile);
  std::string oracle2 = "builtin";
  std::optional<std::uint64_t> train_seed;
  transfer->add_option("--oracle2", oracle2, "builtin | exec:<cmd> | tcp:<host>:<port>");
  transfer->add_option("--train-seed", train_seed, "Training split seed for a builtin oracle2");

  std::string segmenter = "builtin";
  std::optional<double> nu;
  auto* defend = app.add_subcommand("defend", "Shape-count detector and smoothing defenses");
  defend->add_option("--report", report_path, "report.json from attack")->required()->check(CLI::ExistingFile);
  defend->add_option("--segmenter", segmenter, "builtin | exec:<cmd> | tcp:<host>:<port>");
  defend->add_option("--nu", nu, "Fixed threshold instead of the calibrated one");

  std::string benign_dir, adversarial_dir;
  auto* calibrate = app.add_subcommand("calibrate-nu", "Pick nu at the equal error rate");
  calibrate->add_option("--report", report_path, "report.json from attack")->check(CLI::ExistingFile);
  calibrate->add_option("--benign", benign_dir, "Directory of clean PNGs");
  calibrate->add_option("--adversarial", adversarial_dir, "Directory of attacked PNGs");
  calibrate->add_option("--segmenter", segmenter);

  std::string pairs_dir, interp = "linear";
  auto* fit = app.add_subcommand("fit-rho", "Estimate the lux to rho curve from vis/ir pairs");
  fit->add_option("--pairs", pairs_dir, "Directory of <lux>/vis.png + ir.png")->required()->check(CLI::ExistingDirectory);
  fit->add_option("--interp", interp)->check(CLI::IsMember({"linear", "expdecay"}));

  SyntheticOptions synth;
  auto* synth_cmd = app.add_subcommand("synth-data", "Write a synthetic dataset");
  synth_cmd->add_option("--classes", synth.n_classes);
  synth_cmd->add_option("--per-class", synth.samples_per_class);
  synth_cmd->add_option("--resolution", synth.resolution);

  double dpi = 300, size_mm = 100;
  std::string key;
  auto* film = app.add_subcommand("export-film", "Printable projection masks");
  film->add_option("--report", report_path, "report.json from attack")->required()->check(CLI::ExistingFile);
  film->add_option("--dpi", dpi);
  film->add_option("--size-mm", size_mm);
  film->add_option("--key", key, "Only this image key; default every successful image");

  auto* check = app.add_subcommand("serve-check", "Protocol conformance probe of --oracle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = base_config(g);
    auto apply_attack_flags = [&] {
      if (scenario) cfg.scenario = *scenario;
      if (strategy) cfg.attack.strategy = parse_strategy(*strategy);
      if (lux) cfg.lux = *lux;
      if (k) cfg.attack.k = *k;
      if (l) cfg.attack.l = *l;
      if (eot && !cfg.eot) {
        cfg.eot = EotConfig{};
        if (!queries) cfg.attack.max_queries = 2500;
      }
      if (queries) cfg.attack.max_queries = *queries;
      if (max_images) cfg.max_images = *max_images;
      if (threads) cfg.threads = *threads;
      cfg.validate();
    };
    const std::string command = app.get_subcommands().front()->get_name();
    Output o(g.out, command);

    if (*attack) {
      apply_attack_flags();
      Workspace ws = prepare_workspace(cfg);
      const RunReport rep = run_scenario(ws, cfg);
      o.json_file("report.json", rep.to_json());
      o.text("results.csv", to_text([&](std::ostream& s) { rep.write_csv(s); }));
      if (trace) {
        fs::create_directories(fs::path(g.out) / "traces");
        for (const auto& r : rep.images) {
          OptimResult tr;
          tr.trace = r.trace;
          o.text("traces/" + safe_name(r.key) + ".csv", to_text([&](std::ostream& s) { write_trace_csv(s, tr); }));
        }
      }
      for (const auto& w : ws.warnings) o.warn(w);
      o.manifest(cfg, report_summary(rep));
      out << "scenario " << rep.scenario << ": ASR " << rep.asr << ", mean queries " << rep.mean_queries << " over "
          << rep.images.size() << " images\n";
      if (rep.aborted > 0) {
        for (const auto& w : o.warnings()) err << "warning: " << w << "\n";
        const auto first = std::find_if(rep.images.begin(), rep.images.end(), [](const auto& r) { return r.aborted; });
        err << "oracle error: " << rep.aborted << " of " << rep.images.size() << " images aborted (" << first->key
            << ": " << first->error << ")\n";
        return 3;
      }
    } else if (*sweep) {
      apply_attack_flags();
      if (!sweep_lux.empty()) cfg.sweep.lux = sweep_lux;
      if (!sweep_k.empty()) cfg.sweep.k = sweep_k;
      if (!sweep_l.empty()) cfg.sweep.l = sweep_l;
      cfg.validate();
      Workspace ws = prepare_workspace(cfg);
      const auto cells = run_sweep(ws, cfg);
      o.text("sweep.csv", to_text([&](std::ostream& s) { write_sweep_csv(s, cells); }));
      const std::string table = to_text([&](std::ostream& s) { write_sweep_table(s, cells); });
      o.text("sweep_table.csv", table);
      o.manifest(cfg, {{"cells", cells.size()}});
      out << table;
    } else if (*transfer) {
      const RunReport saved = load_report(report_path);
      Workspace ws = prepare_workspace(cfg);
      std::shared_ptr<const Oracle> second;
      if (oracle2 == "builtin") {
        DataSource src = cfg.train_data;
        src.synthetic.seed = train_seed.value_or(cfg.train_data.synthetic.seed + 100);
        const Dataset train = load_data(src);
        second = std::make_shared<CompositeOracle>(
            std::make_shared<CentroidModel>(train_builtin_classifier(train, ws.mean_l, cfg.temperature)),
            std::make_shared<BuiltinDetector>(train_builtin_detector(train, ws.mean_l, cfg.temperature)));
      } else {
        RemoteOptions opt;
        opt.timeout = std::chrono::milliseconds(cfg.oracle_timeout_ms);
        second = RemoteOracle::connect(oracle2, opt);
      }
      std::vector<std::string> warnings;
      const RunReport rep = replay_transfer(saved, ws, cfg, *second, &warnings);
      for (const auto& w : warnings) o.warn(w);
      o.json_file("transfer.json", rep.to_json());
      o.text("transfer.csv", to_text([&](std::ostream& s) { rep.write_csv(s); }));
      o.manifest(cfg, {{"source_asr", saved.asr}, {"transfer_asr", rep.asr}, {"images", rep.images.size()}});
      out << "transfer ASR " << rep.asr << " (source " << saved.asr << ") over " << rep.images.size() << " images\n";
    } else if (*defend) {
      const RunReport saved = load_report(report_path);
      Workspace ws = prepare_workspace(cfg);
      DetectorConfig det = detector_config(cfg, segmenter);
      const PairCounts pc = count_pairs(saved, ws, cfg, det);
      const CalibrationReport cal = calibrate_nu(pc.benign, pc.adversarial);
      det.nu = nu.value_or(cal.nu);
      std::size_t strictly_more = 0;
      for (std::size_t i = 0; i < pc.benign.size(); ++i) strictly_more += pc.adversarial[i] > pc.benign[i];

      std::vector<LabeledImage> benign;
      std::vector<GoalImage> adversarial;
      for (const auto& rp : pc.replays) {
        benign.push_back({&rp.clean, rp.goal.source()});
        adversarial.push_back({rp.adversarial, rp.goal});
      }
      const bool hide = saved.scenario == 5;
      const Oracle& oracle = hide ? *ws.detector : *ws.classifier;
      json evals = json::array();
      for (DefenseKind kind : {DefenseKind::none, DefenseKind::median, DefenseKind::nonlocal, DefenseKind::segmentation}) {
        Defense d;
        d.kind = kind;
        d.detector = det;
        evals.push_back(evaluate_defense(oracle, d, benign, adversarial, cfg.tau).to_json());
      }
      o.text("counts.csv", counts_csv(pc));
      o.text("roc.csv", to_text([&](std::ostream& s) { write_roc_csv(s, cal); }));
      json doc{{"calibration", cal.to_json()},
               {"nu_used", det.nu},
               {"pairs", pc.keys.size()},
               {"pairs_strictly_more", strictly_more},
               {"evaluations", evals}};
      o.json_file("defense.json", doc);
      o.manifest(cfg, {{"nu", det.nu}, {"f1", cal.f1}, {"eer", cal.eer}});
      out << "nu " << det.nu << ", F1 " << cal.f1 << ", EER " << cal.eer << ", " << strictly_more << "/"
          << pc.keys.size() << " pairs gain shapes\n";
    } else if (*calibrate) {
      const DetectorConfig det = detector_config(cfg, segmenter);
      std::vector<std::size_t> b, a;
      if (!report_path.empty()) {
        if (!benign_dir.empty() || !adversarial_dir.empty())
          throw UsageError("give either --report or --benign/--adversarial");
        const RunReport saved = load_report(report_path);
        Workspace ws = prepare_workspace(cfg);
        const PairCounts pc = count_pairs(saved, ws, cfg, det);
        b = pc.benign;
        a = pc.adversarial;
      } else {
        if (benign_dir.empty() || adversarial_dir.empty())
          throw UsageError("calibrate-nu needs --report or both --benign and --adversarial");
        for (const auto& img : read_png_dir(benign_dir)) b.push_back(shape_count(img, det));
        for (const auto& img : read_png_dir(adversarial_dir)) a.push_back(shape_count(img, det));
      }
      const CalibrationReport cal = calibrate_nu(b, a);
      o.json_file("calibration.json", cal.to_json());
      o.text("roc.csv", to_text([&](std::ostream& s) { write_roc_csv(s, cal); }));
      o.manifest(cfg, {{"nu", cal.nu}, {"f1", cal.f1}, {"eer", cal.eer}});
      out << "nu " << cal.nu << ", F1 " << cal.f1 << ", EER " << cal.eer << "\n";
    } else if (*fit) {
      std::vector<std::string> warnings;
      const ScalingCurve curve = estimate_rho(read_measurement_pairs(pairs_dir),
                                              interp == "linear" ? CurveInterp::linear : CurveInterp::expdecay,
                                              &warnings);
      for (const auto& w : warnings) o.warn(w);
      o.json_file("curve.json", curve.to_json());
      std::ostringstream csv;
      csv << "lux,rho_r,rho_g,rho_b\n";
      for (double v : cfg.sweep.lux) {
        const RhoTriple r = curve.eval(v);
        csv << v << ',' << r[0] << ',' << r[1] << ',' << r[2] << '\n';
      }
      o.text("rho.csv", csv.str());
      o.manifest(cfg, {{"knots", curve.knots(0).size()}});
      out << csv.str();
    } else if (*synth_cmd) {
      synth.seed = cfg.seed;
      const Dataset ds = generate_synthetic_dataset(synth);
      write_dataset(g.out, ds);
      o.manifest(cfg, {{"samples", ds.samples.size()}, {"classes", ds.class_names}});
      out << "wrote " << ds.samples.size() << " samples to " << g.out << "\n";
    } else if (*film) {
      const RunReport saved = load_report(report_path);
      Workspace ws = prepare_workspace(cfg);
      RunConfig c = cfg;
      c.attack.l = saved.l;
      fs::create_directories(fs::path(g.out) / "films");
      std::size_t written = 0;
      for (const auto& r : saved.images) {
        if (key.empty() ? !r.success : r.key != key) continue;
        const Replayed rp = replay_image(r, ws, c, saved.rho);
        const Film f = export_film(rp.projection, dpi, size_mm);
        const std::string stem = "films/" + safe_name(r.key);
        o.path(stem + ".png");
        o.path(stem + ".json");
        write_film(fs::path(g.out) / stem, f, rp.projection, {saved.scenario, saved.seed, saved.k, saved.l, r.key});
        ++written;
      }
      if (!key.empty() && written == 0) throw DataError("no image with key '" + key + "' in the report");
      o.manifest(cfg, {{"films", written}, {"dpi", dpi}, {"size_mm", size_mm}});
      out << "wrote " << written << " films\n";
    } else if (*check) {
      Workspace ws;
      ws.attack_set = load_data(cfg.attack_data);
      if (ws.attack_set.samples.empty()) throw DataError("attack dataset has no samples");
      const auto probes = serve_check(cfg, ws);
      json doc = json::array();
      bool all = true;
      for (const auto& p : probes) {
        out << (p.pass ? "PASS " : "FAIL ") << p.name << " (" << p.detail << ")\n";
        doc.push_back({{"probe", p.name}, {"pass", p.pass}, {"detail", p.detail}});
        all = all && p.pass;
      }
      o.json_file("serve_check.json", doc);
      o.manifest(cfg, {{"pass", all}});
      if (!all) return 3;
    }
    for (const auto& w : o.warnings()) err << "warning: " << w << "\n";
    return 0;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const OracleError& e) {
    err << "oracle error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace irpert
