#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "irpert/image.hpp"

namespace irpert {

// Probabilities over n >= 2 classes, non-negative, summing to 1 within 1e-6.
class ProbSimplex {
 public:
  explicit ProbSimplex(std::vector<double> probs);

  const std::vector<double>& probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  // Lowest index among the maxima.
  int argmax() const;
  double max() const;

 private:
  std::vector<double> probs_;
};

struct Detection {
  BBox bbox;
  ProbSimplex probs;
};

struct DetectorOutput {
  std::vector<Detection> detections;
  double tau = 0.5;
};

struct SegmentationResult {
  int width = 0;
  int height = 0;
  std::vector<BinaryMask> masks;

  std::size_t count() const { return masks.size(); }
};

enum class Capability { classify, detect, segment };

std::string_view capability_name(Capability cap);

// Black-box model. Implementations are stateless from the caller's point
// of view: the same input always produces the same output.
class Oracle {
 public:
  virtual ~Oracle() = default;

  virtual bool supports(Capability cap) const = 0;
  virtual ProbSimplex classify(const RgbImage& image) const;
  virtual DetectorOutput detect(const RgbImage& image, double tau) const;
  virtual SegmentationResult segment(const RgbImage& image) const;

  // Expected input resolution; nullopt if the oracle accepts any size.
  virtual std::optional<std::pair<int, int>> resolution() const { return std::nullopt; }
};

// Nearest-centroid classifier in CIELAB: p = softmax(-d / T) where d is the
// RMS per-pixel LAB distance to each class centroid.
class CentroidModel final : public Oracle {
 public:
  CentroidModel(std::vector<LabImage> centroids, double temperature, std::vector<std::string> class_names = {});

  bool supports(Capability cap) const override { return cap == Capability::classify; }
  ProbSimplex classify(const RgbImage& image) const override;
  std::optional<std::pair<int, int>> resolution() const override {
    return std::pair{centroids_.front().width(), centroids_.front().height()};
  }

  // RMS LAB distance from the image to every centroid.
  std::vector<double> distances(const RgbImage& image) const;

  std::size_t num_classes() const { return centroids_.size(); }
  double temperature() const { return temperature_; }
  const std::vector<LabImage>& centroids() const { return centroids_; }
  const std::vector<std::string>& class_names() const { return class_names_; }

  // {"kind": "centroid", "width", "height", "temperature", "class_names",
  //  "centroids": [[L plane..., A plane..., B plane...], ...]}
  nlohmann::json to_json() const;
  static CentroidModel from_json(const nlohmann::json& doc);

 private:
  std::vector<LabImage> centroids_;
  double temperature_;
  std::vector<std::string> class_names_;
};

// In RMS LAB units; speed signs differ by a few units, so clean crops clear tau = 0.5.
inline constexpr double kDefaultTemperature = 0.5;

struct LabeledImage {
  const RgbImage* image;
  int label;
};

// Per-class mean of the LAB images. Every class in [0, n_classes) needs at
// least one sample.
CentroidModel train_centroids(const std::vector<LabeledImage>& samples, int n_classes,
                              double temperature = kDefaultTemperature,
                              std::vector<std::string> class_names = {});

// Finds the sign as the bounding box of the largest connected region of
// saturated pixels (LAB chroma above a threshold).
std::optional<BBox> locate_sign(const RgbImage& image, double chroma_threshold);

// Two-stage stand-in for an object detector: locate the sign, classify the
// resampled crop, report it when the top probability exceeds tau.
class BuiltinDetector final : public Oracle {
 public:
  BuiltinDetector(CentroidModel crop_model, double chroma_threshold = 20.0);

  static BuiltinDetector train(const std::vector<LabeledImage>& samples, int n_classes, int crop_size = 32,
                               double temperature = kDefaultTemperature, double chroma_threshold = 20.0);

  bool supports(Capability cap) const override { return cap == Capability::detect; }
  DetectorOutput detect(const RgbImage& image, double tau) const override;

  const CentroidModel& crop_model() const { return model_; }

 private:
  CentroidModel model_;
  double chroma_threshold_;
};

// Routes each capability to a separate oracle.
class CompositeOracle final : public Oracle {
 public:
  CompositeOracle(std::shared_ptr<const Oracle> classifier, std::shared_ptr<const Oracle> detector,
                  std::shared_ptr<const Oracle> segmenter = nullptr);

  bool supports(Capability cap) const override;
  ProbSimplex classify(const RgbImage& image) const override;
  DetectorOutput detect(const RgbImage& image, double tau) const override;
  SegmentationResult segment(const RgbImage& image) const override;
  std::optional<std::pair<int, int>> resolution() const override;

 private:
  std::shared_ptr<const Oracle> classifier_, detector_, segmenter_;
};

}  // namespace irpert
