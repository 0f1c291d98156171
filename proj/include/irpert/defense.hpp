#pragma once

#include <iosfwd>
#include <limits>
#include <memory>
#include <vector>

#include "json.hpp"
#include "irpert/loss.hpp"
#include "irpert/oracle.hpp"

namespace irpert {

struct SegmenterConfig {
  // Hysteresis thresholds as fractions of the image's largest gradient.
  double low = 0.1;
  double high = 0.2;
  int min_region_px = 16;

  void validate() const;
};

// Sobel magnitude on L, hysteresis, then 8-connected components of the
// non-edge pixels; regions below min_region_px are dropped.
SegmentationResult segment_builtin(const RgbImage& image, const SegmenterConfig& cfg = {});

// Hysteresis edge map of the image (1 = edge).
BinaryMask edge_map(const RgbImage& image, double low, double high);

class BuiltinSegmenter final : public Oracle {
 public:
  explicit BuiltinSegmenter(SegmenterConfig cfg = {});
  bool supports(Capability cap) const override { return cap == Capability::segment; }
  SegmentationResult segment(const RgbImage& image) const override;

 private:
  SegmenterConfig cfg_;
};

inline constexpr double kNuNever = std::numeric_limits<double>::infinity();

struct DetectorConfig {
  double nu = 0;
  // Segmentation backend; null selects the built-in segmenter.
  std::shared_ptr<const Oracle> backend;
  SegmenterConfig segmenter;
  // Count shapes on the located sign instead of the whole frame. Off by
  // default: dataset images are already sign crops.
  bool crop = false;
  // Upsampled so the longer side has this many pixels before segmenting;
  // 0 keeps the native size. A 2x2 manypixel on a 32 px sign is otherwise
  // smaller than min_region_px.
  int work_size = 128;

  void validate() const;
};

// Number of regions the configured backend finds.
std::size_t shape_count(const RgbImage& image, const DetectorConfig& cfg);

// Adversarial iff the count is strictly above nu.
bool detect_adversarial(std::size_t count, double nu);
bool detect_adversarial(const RgbImage& image, const DetectorConfig& cfg);

struct RocPoint {
  double nu;
  double fpr;
  double tpr;
};

struct CalibrationReport {
  std::vector<RocPoint> roc;  // ascending nu
  double eer = 0;
  double nu = 0;
  double f1 = 0;
  double fpr = 0;
  double tpr = 0;

  nlohmann::json to_json() const;
};

// Sweeps every integer nu from 0 to the largest count; the EER point
// minimizes |FPR - (1 - TPR)|, ties going to the lower nu.
CalibrationReport calibrate_nu(const std::vector<std::size_t>& benign, const std::vector<std::size_t>& adversarial);

void write_roc_csv(std::ostream& out, const CalibrationReport& report);

// Per-channel median over a k x k window with replicated borders.
RgbImage median_smooth(const RgbImage& image, int kernel);

// Non-local means: every pixel becomes a weighted mean of the window's
// pixels, weighted by exp(-d / h^2) where d is the Gaussian-weighted mean
// squared difference between the two patches. strength is h in 8-bit
// units; 0 returns the input.
RgbImage nonlocal_smooth(const RgbImage& image, int patch, int window, double strength);

enum class DefenseKind { none, median, nonlocal, segmentation };

struct Defense {
  DefenseKind kind = DefenseKind::none;
  int median_kernel = 3;
  int nl_patch = 3;
  int nl_window = 7;
  double nl_strength = 10;
  DetectorConfig detector;

  std::string name() const;
};

struct DefenseEvaluation {
  std::string defense;
  double clean_accuracy = 0;
  double asr = 0;
  std::size_t benign = 0;
  std::size_t adversarial = 0;

  nlohmann::json to_json() const;
};

struct GoalImage {
  RgbImage image;
  AttackGoal goal;
};

// Clean accuracy on the benign set and ASR on the adversarial set, both
// seen through the defense. A flagged image counts as a wrong answer on the
// benign side and as a failed attack on the adversarial side.
DefenseEvaluation evaluate_defense(const Oracle& oracle, const Defense& defense,
                                   const std::vector<LabeledImage>& benign, const std::vector<GoalImage>& adversarial,
                                   double tau = 0.5);

}  // namespace irpert
