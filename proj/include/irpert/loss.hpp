#pragma once

#include <span>
#include <string>
#include <variant>

#include "irpert/oracle.hpp"

namespace irpert {

struct Untargeted {
  int source = 0;
};

struct Targeted {
  int source = 0;
  int target = 0;
};

struct Hide {
  int source = 0;
  BBox source_bbox;
  double tau = 0.5;
};

// Validating wrapper: targeted goals need t != s, hide goals tau in (0, 1).
class AttackGoal {
 public:
  AttackGoal(Untargeted g);
  AttackGoal(Targeted g);
  AttackGoal(Hide g);

  const std::variant<Untargeted, Targeted, Hide>& variant() const { return goal_; }
  bool is_hide() const { return std::holds_alternative<Hide>(goal_); }
  int source() const;
  std::string kind() const;

 private:
  std::variant<Untargeted, Targeted, Hide> goal_;
};

// Untargeted: f_s - max_{i != s} f_i. Targeted: max_{i != t} f_i - f_t.
double margin_loss(const ProbSimplex& probs, const AttackGoal& goal);

// A detection counts as the source object when it overlaps the source box
// with IoU >= 0.5 and its top class is the source class.
inline constexpr double kMatchIou = 0.5;
bool matches_source(const Detection& det, const Hide& goal);

// max over matching detections of (max_i f_i - tau); -tau when none match.
double hide_loss(const DetectorOutput& dets, const AttackGoal& goal);

// Ties at the top are not adversarial. Hide: no matching detection with
// max_i f_i >= tau.
bool criterion(const ProbSimplex& probs, const AttackGoal& goal);
bool criterion(const DetectorOutput& dets, const AttackGoal& goal);

double asr(std::span<const bool> outcomes);
double asr(const std::vector<bool>& outcomes);

}  // namespace irpert
