#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "irpert/eot.hpp"
#include "irpert/loss.hpp"
#include "irpert/oracle.hpp"
#include "irpert/perturbation.hpp"

namespace irpert {

enum class Strategy { lrs, rnd, pso, ga, es };

std::string strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

struct OptimConfig {
  int k = 192;
  int l = 2;
  int max_queries = 1000;
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::lrs;
  bool stop_on_success = true;
  std::optional<EotConfig> eot;

  void validate() const;
};

// ceil((k/2) * exp(ln(2/k) / Q * i)) clamped to [1, k]; 1 when k < 2.
int schedule(int i, int k, int max_queries);

// Everything a candidate evaluation needs: the normalized image, the sign
// mask, rho, the goal and the oracle. Under EOT a fixed set of transform
// draws is made at construction and every candidate is scored on the same
// set, so loss differences between candidates are not sampling noise.
class Objective {
 public:
  Objective(const Oracle& oracle, RgbImage normalized, ObjectMask mask, MpGrid grid, RhoTriple rho, AttackGoal goal,
            std::optional<EotConfig> eot = std::nullopt, std::uint64_t eot_seed = 0);

  // Loss of one candidate; oracle errors propagate. One call is one query.
  double loss(const MpSet& set);
  double loss_of_image(const RgbImage& perturbed, const ProjectionMask& projection);

  RgbImage perturbed(const ProjectionMask& projection) const;
  const MpGrid& grid() const { return grid_; }
  const ObjectMask& mask() const { return mask_; }
  const AttackGoal& goal() const { return goal_; }
  const RgbImage& image() const { return image_; }
  const RhoTriple& rho() const { return rho_; }
  const std::vector<TransformSample>& eot_samples() const { return samples_; }
  // Oracle forward passes so far (EOT samples each count).
  long evaluations() const { return evaluations_; }

 private:
  double plain_loss(const RgbImage& img, const Hide* hide_override);

  const Oracle& oracle_;
  RgbImage image_;
  ObjectMask mask_;
  MpGrid grid_;
  RhoTriple rho_;
  AttackGoal goal_;
  std::optional<EotConfig> eot_;
  std::vector<TransformSample> samples_;
  std::vector<RgbImage> backgrounds_;
  SignGeometry geometry_;
  long evaluations_ = 0;
};

struct TracePoint {
  int query;
  double loss;
  bool accepted;
};

struct OptimResult {
  MpSet mp_set;
  ProjectionMask projection;
  RgbImage adversarial_image;
  double final_loss = 0;
  int queries_used = 0;
  long evaluations = 0;
  bool success = false;
  // Every evaluated candidate; accepted marks a new best.
  std::vector<TracePoint> trace;
  bool aborted = false;
  std::string error;

  std::vector<TracePoint> improvements() const;
};

OptimResult optimize(Objective& objective, const OptimConfig& cfg);

// Loss without EOT: apply_ir(x, P(I)), then the oracle. The image must
// already be lightness-normalized.
double evaluate_candidate(const RgbImage& normalized, const MpSet& set, const ObjectMask& mask, const MpGrid& grid,
                          const RhoTriple& rho, const AttackGoal& goal, const Oracle& oracle);

void write_trace_csv(std::ostream& out, const OptimResult& r);

}  // namespace irpert
