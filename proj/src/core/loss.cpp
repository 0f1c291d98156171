#include "irpert/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace irpert {

AttackGoal::AttackGoal(Untargeted g) : goal_(g) {
  if (g.source < 0) throw DataError("source class must be non-negative");
}

AttackGoal::AttackGoal(Targeted g) : goal_(g) {
  if (g.source < 0 || g.target < 0) throw DataError("class indices must be non-negative");
  if (g.source == g.target) throw DataError("targeted goal needs a target different from the source");
}

AttackGoal::AttackGoal(Hide g) : goal_(g) {
  if (g.source < 0) throw DataError("source class must be non-negative");
  if (!(g.tau > 0.0 && g.tau < 1.0)) throw DataError("hide threshold must lie in (0, 1)");
}

int AttackGoal::source() const {
  return std::visit([](const auto& g) { return g.source; }, goal_);
}

std::string AttackGoal::kind() const {
  switch (goal_.index()) {
    case 0:
      return "untargeted";
    case 1:
      return "targeted";
    default:
      return "hide";
  }
}

namespace {

double max_excluding(const ProbSimplex& probs, int skip) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (static_cast<int>(i) != skip) m = std::max(m, probs[i]);
  return m;
}

void check_index(const ProbSimplex& probs, int idx) {
  if (idx >= static_cast<int>(probs.size()))
    throw DataError("class index " + std::to_string(idx) + " outside a " + std::to_string(probs.size()) +
                    "-class simplex");
}

}  // namespace

double margin_loss(const ProbSimplex& probs, const AttackGoal& goal) {
  if (const auto* u = std::get_if<Untargeted>(&goal.variant())) {
    check_index(probs, u->source);
    return probs[u->source] - max_excluding(probs, u->source);
  }
  if (const auto* t = std::get_if<Targeted>(&goal.variant())) {
    check_index(probs, t->source);
    check_index(probs, t->target);
    return max_excluding(probs, t->target) - probs[t->target];
  }
  throw DataError("margin loss does not apply to hide goals; use hide_loss");
}

bool matches_source(const Detection& det, const Hide& goal) {
  return det.probs.argmax() == goal.source && iou(det.bbox, goal.source_bbox) >= kMatchIou;
}

double hide_loss(const DetectorOutput& dets, const AttackGoal& goal) {
  const auto* h = std::get_if<Hide>(&goal.variant());
  if (!h) throw DataError("hide loss needs a hide goal");
  double loss = -h->tau;
  bool any = false;
  for (const auto& d : dets.detections) {
    if (!matches_source(d, *h)) continue;
    const double v = d.probs.max() - h->tau;
    loss = any ? std::max(loss, v) : v;
    any = true;
  }
  return loss;
}

bool criterion(const ProbSimplex& probs, const AttackGoal& goal) {
  if (const auto* u = std::get_if<Untargeted>(&goal.variant())) {
    check_index(probs, u->source);
    return max_excluding(probs, u->source) > probs[u->source];
  }
  if (const auto* t = std::get_if<Targeted>(&goal.variant())) {
    check_index(probs, t->target);
    return probs[t->target] > max_excluding(probs, t->target);
  }
  throw DataError("classifier criterion does not apply to hide goals");
}

bool criterion(const DetectorOutput& dets, const AttackGoal& goal) {
  const auto* h = std::get_if<Hide>(&goal.variant());
  if (!h) throw DataError("detector criterion needs a hide goal");
  return std::none_of(dets.detections.begin(), dets.detections.end(),
                      [&](const Detection& d) { return matches_source(d, *h) && d.probs.max() >= h->tau; });
}

double asr(std::span<const bool> outcomes) {
  if (outcomes.empty()) throw DataError("attack success rate of an empty list");
  const auto hits = std::count(outcomes.begin(), outcomes.end(), true);
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

double asr(const std::vector<bool>& outcomes) {
  if (outcomes.empty()) throw DataError("attack success rate of an empty list");
  const auto hits = std::count(outcomes.begin(), outcomes.end(), true);
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

}  // namespace irpert
