#include "irpert/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace irpert {

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::lrs:
      return "lrs";
    case Strategy::rnd:
      return "rnd";
    case Strategy::pso:
      return "pso";
    case Strategy::ga:
      return "ga";
    case Strategy::es:
      return "es";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
  for (Strategy s : {Strategy::lrs, Strategy::rnd, Strategy::pso, Strategy::ga, Strategy::es})
    if (strategy_name(s) == n) return s;
  throw UsageError("unknown strategy '" + name + "' (expected lrs, rnd, pso, ga or es)");
}

void OptimConfig::validate() const {
  if (k < 1) throw DataError("k must be >= 1");
  if (l < 1) throw DataError("l must be >= 1");
  if (max_queries < 1) throw DataError("query budget must be >= 1");
  if (eot) eot->validate();
}

int schedule(int i, int k, int max_queries) {
  if (k < 2) return 1;
  const double half = k / 2.0;
  // exp(log(2/k)) * k/2 can land a few ulps above an integer (k = 40 at
  // i = Q gives 1 + 2e-16), which ceil would push up by one.
  const double v = std::ceil(half * std::exp(std::log(2.0 / k) / max_queries * i) - 1e-9);
  return std::clamp(static_cast<int>(v), 1, k);
}

Objective::Objective(const Oracle& oracle, RgbImage normalized, ObjectMask mask, MpGrid grid, RhoTriple rho,
                     AttackGoal goal, std::optional<EotConfig> eot, std::uint64_t eot_seed)
    : oracle_(oracle),
      image_(std::move(normalized)),
      mask_(std::move(mask)),
      grid_(grid),
      rho_(rho),
      goal_(std::move(goal)),
      eot_(std::move(eot)) {
  if (image_.width() != grid_.width() || image_.height() != grid_.height())
    throw DataError("image does not match the manypixel grid");
  if (mask_.width() != image_.width() || mask_.height() != image_.height())
    throw DataError("object mask does not match the image");
  const Capability need = goal_.is_hide() ? Capability::detect : Capability::classify;
  if (!oracle_.supports(need))
    throw CapabilityError("oracle does not support " + std::string(capability_name(need)));
  if (eot_) {
    eot_->validate();
    Rng rng(eot_seed);
    for (int i = 0; i < eot_->samples_per_candidate; ++i) samples_.push_back(sample_transform(rng, *eot_));
    for (const auto& bg : eot_->backgrounds) backgrounds_.push_back(resize_bilinear(bg, image_.width(), image_.height()));
    geometry_ = sign_geometry(mask_);
  }
}

RgbImage Objective::perturbed(const ProjectionMask& projection) const { return apply_ir(image_, projection, rho_); }

double Objective::plain_loss(const RgbImage& img, const Hide* hide_override) {
  ++evaluations_;
  if (goal_.is_hide()) {
    const Hide& h = hide_override ? *hide_override : std::get<Hide>(goal_.variant());
    return hide_loss(oracle_.detect(img, h.tau), AttackGoal(h));
  }
  const auto res = oracle_.resolution();
  if (res && (res->first != img.width() || res->second != img.height()))
    return margin_loss(oracle_.classify(resize_bilinear(img, res->first, res->second)), goal_);
  return margin_loss(oracle_.classify(img), goal_);
}

double Objective::loss_of_image(const RgbImage& perturbed, const ProjectionMask& projection) {
  if (!eot_) return plain_loss(perturbed, nullptr);
  double sum = 0;
  for (const auto& s : samples_) {
    // The film moves with the sign: perturb first, then transform.
    RgbImage x = perturbed;
    if (s.rho_scale != 1.0) {
      const RhoTriple r{rho_[0] * s.rho_scale, rho_[1] * s.rho_scale, rho_[2] * s.rho_scale};
      x = apply_ir(image_, projection, r);
    }
    const RgbImage* bg = s.background >= 0 ? &backgrounds_[s.background] : nullptr;
    const auto t = apply_transform(x, mask_, geometry_, s, bg, eot_->min_size_px);
    if (goal_.is_hide()) {
      Hide h = std::get<Hide>(goal_.variant());
      h.source_bbox = t.sign_bbox;
      sum += plain_loss(t.image, &h);
    } else {
      sum += plain_loss(t.image, nullptr);
    }
  }
  return sum / static_cast<double>(samples_.size());
}

double Objective::loss(const MpSet& set) {
  const ProjectionMask p = model_perturbation(set, mask_, grid_);
  return loss_of_image(perturbed(p), p);
}

std::vector<TracePoint> OptimResult::improvements() const {
  std::vector<TracePoint> out;
  std::copy_if(trace.begin(), trace.end(), std::back_inserter(out), [](const TracePoint& t) { return t.accepted; });
  return out;
}

double evaluate_candidate(const RgbImage& normalized, const MpSet& set, const ObjectMask& mask, const MpGrid& grid,
                          const RhoTriple& rho, const AttackGoal& goal, const Oracle& oracle) {
  Objective obj(oracle, normalized, mask, grid, rho, goal);
  return obj.loss(set);
}

void write_trace_csv(std::ostream& out, const OptimResult& r) {
  out << "query,loss,accepted\n";
  char buf[64];
  for (const auto& t : r.trace) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%d\n", t.query, t.loss, t.accepted ? 1 : 0);
    out << buf;
  }
}

namespace {

struct BudgetExhausted {};

// Query accounting and best-so-far bookkeeping shared by all strategies.
class Tracker {
 public:
  Tracker(Objective& obj, const OptimConfig& cfg, OptimResult& res) : obj_(obj), cfg_(cfg), res_(res) {}

  double eval(const MpSet& set) {
    if (finished()) throw BudgetExhausted{};
    const double l = obj_.loss(set);
    ++res_.queries_used;
    const bool accepted = !have_ || l < best_loss_;
    if (accepted) {
      best_ = set;
      best_loss_ = l;
      have_ = true;
    }
    res_.trace.push_back({res_.queries_used, l, accepted});
    return l;
  }

  bool finished() const {
    return res_.queries_used >= cfg_.max_queries || (cfg_.stop_on_success && have_ && best_loss_ < 0);
  }
  int queries() const { return res_.queries_used; }
  bool have() const { return have_; }
  const MpSet& best() const { return best_; }
  double best_loss() const { return best_loss_; }

 private:
  Objective& obj_;
  const OptimConfig& cfg_;
  OptimResult& res_;
  MpSet best_;
  double best_loss_ = std::numeric_limits<double>::infinity();
  bool have_ = false;
};

using Bits = std::vector<std::uint8_t>;

MpSet to_set(const Bits& bits) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) idx.push_back(static_cast<int>(i));
  return MpSet::from_indices(std::move(idx));
}

Bits to_bits(const MpSet& set, int cells) {
  Bits b(static_cast<std::size_t>(cells), 0);
  for (int i : set.indices()) b[i] = 1;
  return b;
}

// Random repair: drop or add uniformly chosen cells until exactly k are set.
void repair_random(Bits& bits, int k, Rng& rng) {
  std::vector<int> on, off;
  for (std::size_t i = 0; i < bits.size(); ++i) (bits[i] ? on : off).push_back(static_cast<int>(i));
  while (static_cast<int>(on.size()) > k) {
    const int j = std::uniform_int_distribution<int>(0, static_cast<int>(on.size()) - 1)(rng);
    bits[on[j]] = 0;
    on[j] = on.back();
    on.pop_back();
  }
  while (static_cast<int>(on.size()) < k) {
    const int j = std::uniform_int_distribution<int>(0, static_cast<int>(off.size()) - 1)(rng);
    bits[off[j]] = 1;
    on.push_back(off[j]);
    off[j] = off.back();
    off.pop_back();
  }
}

void run_lrs(Tracker& t, const OptimConfig& cfg, const MpGrid& grid, Rng& rng) {
  MpSet current = sample_mp_set(rng, cfg.k, grid);
  double current_loss = t.eval(current);
  while (!t.finished()) {
    const int n = schedule(t.queries() - 1, cfg.k, cfg.max_queries);
    MpSet candidate = mutate_mp_set(rng, current, std::min(n, cfg.k), grid);
    const double l = t.eval(candidate);
    if (l < current_loss) {
      current = std::move(candidate);
      current_loss = l;
    }
  }
}

void run_rnd(Tracker& t, const OptimConfig& cfg, const MpGrid& grid, Rng& rng) {
  while (!t.finished()) t.eval(sample_mp_set(rng, cfg.k, grid));
}

void run_pso(Tracker& t, const OptimConfig& cfg, const MpGrid& grid, Rng& rng) {
  constexpr int kParticles = 20;
  constexpr double kInertia = 0.729, kC1 = 1.494, kC2 = 1.494, kVmax = 4.0;
  const int cells = grid.cell_count();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Particle {
    Bits x;
    std::vector<double> v;
    Bits best;
    double best_loss = std::numeric_limits<double>::infinity();
  };
  std::vector<Particle> swarm(kParticles);
  Bits gbest;
  double gbest_loss = std::numeric_limits<double>::infinity();
  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (auto& p : swarm) {
    p.x = to_bits(sample_mp_set(rng, cfg.k, grid), cells);
    p.v.resize(static_cast<std::size_t>(cells));
    for (double& v : p.v) v = -1.0 + 2.0 * unit(rng);
  }
  for (int iter = 0;; ++iter) {
    for (auto& p : swarm) {
      if (iter > 0) {
        for (int j = 0; j < cells; ++j) {
          const double r1 = unit(rng), r2 = unit(rng);
          double v = kInertia * p.v[j] + kC1 * r1 * (p.best[j] - p.x[j]) + kC2 * r2 * (gbest[j] - p.x[j]);
          p.v[j] = std::clamp(v, -kVmax, kVmax);
          p.x[j] = unit(rng) < sigmoid(p.v[j]) ? 1 : 0;
        }
        // Cardinality repair guided by velocity: keep the most likely cells.
        std::vector<int> order(static_cast<std::size_t>(cells));
        std::iota(order.begin(), order.end(), 0);
        int count = static_cast<int>(std::count(p.x.begin(), p.x.end(), 1));
        if (count != cfg.k) {
          std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p.v[a] > p.v[b]; });
          if (count > cfg.k) {
            for (auto it = order.rbegin(); it != order.rend() && count > cfg.k; ++it)
              if (p.x[*it]) p.x[*it] = 0, --count;
          } else {
            for (auto it = order.begin(); it != order.end() && count < cfg.k; ++it)
              if (!p.x[*it]) p.x[*it] = 1, ++count;
          }
        }
      }
      const double l = t.eval(to_set(p.x));
      if (l < p.best_loss) {
        p.best_loss = l;
        p.best = p.x;
      }
      if (l < gbest_loss) {
        gbest_loss = l;
        gbest = p.x;
      }
    }
  }
}

void run_ga(Tracker& t, const OptimConfig& cfg, const MpGrid& grid, Rng& rng) {
  constexpr int kPop = 20;
  constexpr double kCrossover = 0.9;
  const int cells = grid.cell_count();
  const double mutation = 1.0 / cells;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, kPop - 1);
  struct Individual {
    Bits genes;
    double loss;
  };
  std::vector<Individual> pop;
  for (int i = 0; i < kPop; ++i) {
    Bits g = to_bits(sample_mp_set(rng, cfg.k, grid), cells);
    const double l = t.eval(to_set(g));
    pop.push_back({std::move(g), l});
  }
  auto tournament = [&]() -> const Individual& {
    const Individual& a = pop[pick(rng)];
    const Individual& b = pop[pick(rng)];
    return b.loss < a.loss ? b : a;
  };
  for (;;) {
    const auto elite = *std::min_element(pop.begin(), pop.end(),
                                         [](const Individual& a, const Individual& b) { return a.loss < b.loss; });
    std::vector<Individual> next{elite};
    while (static_cast<int>(next.size()) < kPop) {
      const Individual& p1 = tournament();
      const Individual& p2 = tournament();
      Bits child = p1.genes;
      if (unit(rng) < kCrossover)
        for (int j = 0; j < cells; ++j)
          if (unit(rng) < 0.5) child[j] = p2.genes[j];
      for (int j = 0; j < cells; ++j)
        if (unit(rng) < mutation) child[j] ^= 1;
      repair_random(child, cfg.k, rng);
      const double l = t.eval(to_set(child));
      next.push_back({std::move(child), l});
    }
    pop = std::move(next);
  }
}

void run_es(Tracker& t, const OptimConfig& cfg, const MpGrid& grid, Rng& rng) {
  constexpr int kMu = 10, kLambda = 10;
  constexpr double kAdapt = 1.22;
  const int cells = grid.cell_count();
  double rate = std::min(0.5, 8.0 / cells);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, kMu - 1);
  struct Individual {
    Bits genes;
    double loss;
  };
  std::vector<Individual> parents;
  for (int i = 0; i < kMu; ++i) {
    Bits g = to_bits(sample_mp_set(rng, cfg.k, grid), cells);
    const double l = t.eval(to_set(g));
    parents.push_back({std::move(g), l});
  }
  for (;;) {
    std::vector<Individual> all = parents;
    int successes = 0, born = 0;
    for (int i = 0; i < kLambda; ++i) {
      const Individual& parent = parents[pick(rng)];
      Bits child = parent.genes;
      for (int j = 0; j < cells; ++j)
        if (unit(rng) < rate) child[j] ^= 1;
      repair_random(child, cfg.k, rng);
      double l;
      try {
        l = t.eval(to_set(child));
      } catch (const BudgetExhausted&) {
        break;
      }
      ++born;
      if (l < parent.loss) ++successes;
      all.push_back({std::move(child), l});
    }
    if (born == 0) throw BudgetExhausted{};
    // One-fifth success rule on the flip rate.
    rate = 5 * successes > born ? rate * kAdapt : rate / kAdapt;
    rate = std::clamp(rate, 1.0 / cells, 0.5);
    std::stable_sort(all.begin(), all.end(), [](const Individual& a, const Individual& b) { return a.loss < b.loss; });
    all.resize(kMu);
    parents = std::move(all);
  }
}

}  // namespace

OptimResult optimize(Objective& objective, const OptimConfig& cfg) {
  cfg.validate();
  const MpGrid& grid = objective.grid();
  if (grid.side() != cfg.l) throw DataError("objective grid side differs from the configured l");
  if (cfg.k > grid.cell_count())
    throw DataError("k = " + std::to_string(cfg.k) + " exceeds the " + std::to_string(grid.cell_count()) +
                    " manypixel cells");
  OptimResult res;
  const long evals_before = objective.evaluations();
  Tracker tracker(objective, cfg, res);
  Rng rng(cfg.seed);
  try {
    switch (cfg.strategy) {
      case Strategy::lrs:
        run_lrs(tracker, cfg, grid, rng);
        break;
      case Strategy::rnd:
        run_rnd(tracker, cfg, grid, rng);
        break;
      case Strategy::pso:
        run_pso(tracker, cfg, grid, rng);
        break;
      case Strategy::ga:
        run_ga(tracker, cfg, grid, rng);
        break;
      case Strategy::es:
        run_es(tracker, cfg, grid, rng);
        break;
    }
  } catch (const BudgetExhausted&) {
  } catch (const OracleError& e) {
    res.aborted = true;
    res.error = e.what();
  }
  res.evaluations = objective.evaluations() - evals_before;
  if (!tracker.have()) {
    res.final_loss = std::numeric_limits<double>::infinity();
    res.projection = ProjectionMask(grid.width(), grid.height());
    res.adversarial_image = objective.image();
    return res;
  }
  res.mp_set = tracker.best();
  res.final_loss = tracker.best_loss();
  res.success = res.final_loss < 0;
  res.projection = model_perturbation(res.mp_set, objective.mask(), grid);
  res.adversarial_image = objective.perturbed(res.projection);
  return res;
}

}  // namespace irpert
