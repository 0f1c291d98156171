#include "irpert/oracle.hpp"

#include <algorithm>
#include <cmath>
#include "json.hpp"
#include <numeric>

#include "irpert/colorspace.hpp"
#include "irpert/components.hpp"
#include "irpert/simd/kernels.hpp"

namespace irpert {

ProbSimplex::ProbSimplex(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) throw ProtocolError("probability simplex needs at least two classes");
  double sum = 0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ProtocolError("probabilities must be finite and non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ProtocolError("probabilities sum to " + std::to_string(sum) + ", not 1");
}

int ProbSimplex::argmax() const {
  return static_cast<int>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

double ProbSimplex::max() const { return *std::max_element(probs_.begin(), probs_.end()); }

std::string_view capability_name(Capability cap) {
  switch (cap) {
    case Capability::classify:
      return "classify";
    case Capability::detect:
      return "detect";
    case Capability::segment:
      return "segment";
  }
  return "unknown";
}

ProbSimplex Oracle::classify(const RgbImage&) const { throw CapabilityError("oracle cannot classify"); }

DetectorOutput Oracle::detect(const RgbImage&, double) const { throw CapabilityError("oracle cannot detect"); }

SegmentationResult Oracle::segment(const RgbImage&) const { throw CapabilityError("oracle cannot segment"); }

CentroidModel::CentroidModel(std::vector<LabImage> centroids, double temperature,
                             std::vector<std::string> class_names)
    : centroids_(std::move(centroids)), temperature_(temperature), class_names_(std::move(class_names)) {
  if (centroids_.size() < 2) throw DataError("centroid model needs at least two classes");
  if (!(temperature_ > 0.0)) throw DataError("temperature must be positive");
  for (const auto& c : centroids_)
    if (!c.same_shape(centroids_.front())) throw DataError("centroids differ in size");
  if (class_names_.empty())
    for (std::size_t i = 0; i < centroids_.size(); ++i) class_names_.push_back(std::to_string(i));
  if (class_names_.size() != centroids_.size()) throw DataError("class name count does not match centroids");
}

std::vector<double> CentroidModel::distances(const RgbImage& image) const {
  const LabImage& ref = centroids_.front();
  if (image.width() != ref.width() || image.height() != ref.height())
    throw DataError("centroid model expects " + std::to_string(ref.width()) + "x" + std::to_string(ref.height()) +
                    " input");
  const LabImage lab = rgb_to_lab(image);
  const auto& k = simd::active();
  std::vector<double> out;
  out.reserve(centroids_.size());
  for (const auto& c : centroids_) {
    const double sq = k.squared_distance(lab.raw().data(), c.raw().data(), lab.raw().size());
    out.push_back(std::sqrt(sq / double(lab.pixel_count())));
  }
  return out;
}

ProbSimplex CentroidModel::classify(const RgbImage& image) const {
  const auto d = distances(image);
  const double dmin = *std::min_element(d.begin(), d.end());
  std::vector<double> p(d.size());
  double sum = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    p[i] = std::exp(-(d[i] - dmin) / temperature_);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return ProbSimplex(std::move(p));
}

nlohmann::json CentroidModel::to_json() const {
  nlohmann::json doc;
  doc["kind"] = "centroid";
  doc["width"] = centroids_.front().width();
  doc["height"] = centroids_.front().height();
  doc["temperature"] = temperature_;
  doc["class_names"] = class_names_;
  doc["color_space"] = "cielab-d65";
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : centroids_) arr.push_back(std::vector<double>(c.raw().begin(), c.raw().end()));
  doc["centroids"] = std::move(arr);
  return doc;
}

CentroidModel CentroidModel::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("kind").get<std::string>() != "centroid") throw DataError("model kind is not 'centroid'");
    const int w = doc.at("width").get<int>(), h = doc.at("height").get<int>();
    std::vector<LabImage> centroids;
    for (const auto& arr : doc.at("centroids")) {
      const auto values = arr.get<std::vector<double>>();
      LabImage lab(w, h);
      if (values.size() != lab.raw().size()) throw DataError("centroid has the wrong number of values");
      std::copy(values.begin(), values.end(), lab.raw().begin());
      centroids.push_back(std::move(lab));
    }
    return CentroidModel(std::move(centroids), doc.at("temperature").get<double>(),
                         doc.value("class_names", std::vector<std::string>{}));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed centroid model: ") + e.what());
  }
}

CentroidModel train_centroids(const std::vector<LabeledImage>& samples, int n_classes, double temperature,
                              std::vector<std::string> class_names) {
  if (n_classes < 2) throw DataError("need at least two classes");
  if (samples.empty()) throw DataError("no training samples");
  const int w = samples.front().image->width(), h = samples.front().image->height();
  std::vector<LabImage> sums(static_cast<std::size_t>(n_classes), LabImage(w, h));
  std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= n_classes) throw DataError("sample label out of range");
    if (s.image->width() != w || s.image->height() != h) throw DataError("training images differ in size");
    const LabImage lab = rgb_to_lab(*s.image);
    auto dst = sums[s.label].raw();
    const auto src = lab.raw();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    ++counts[s.label];
  }
  std::string missing;
  for (int c = 0; c < n_classes; ++c)
    if (counts[c] == 0) missing += (missing.empty() ? "" : ", ") + std::to_string(c);
  if (!missing.empty()) throw DataError("no training samples for class(es) " + missing);
  for (int c = 0; c < n_classes; ++c)
    for (double& v : sums[c].raw()) v /= counts[c];
  return CentroidModel(std::move(sums), temperature, std::move(class_names));
}

std::optional<BBox> locate_sign(const RgbImage& image, double chroma_threshold) {
  const LabImage lab = rgb_to_lab(image);
  BinaryMask saturated(image.width(), image.height());
  const auto a = lab.plane(1), b = lab.plane(2);
  for (std::size_t i = 0; i < lab.pixel_count(); ++i)
    saturated.bits()[i] = std::hypot(a[i], b[i]) > chroma_threshold ? 1 : 0;
  const auto comps = connected_components(saturated, 8);
  if (comps.empty()) return std::nullopt;
  const auto& largest = *std::max_element(comps.begin(), comps.end(),
                                          [](const auto& x, const auto& y) { return x.size() < y.size(); });
  // Specks are not signs.
  if (largest.size() < 16) return std::nullopt;
  int x0 = image.width(), y0 = image.height(), x1 = -1, y1 = -1;
  for (int p : largest) {
    const int x = p % image.width(), y = p / image.width();
    x0 = std::min(x0, x);
    y0 = std::min(y0, y);
    x1 = std::max(x1, x);
    y1 = std::max(y1, y);
  }
  return BBox{double(x0), double(y0), double(x1 - x0 + 1), double(y1 - y0 + 1)};
}

BuiltinDetector::BuiltinDetector(CentroidModel crop_model, double chroma_threshold)
    : model_(std::move(crop_model)), chroma_threshold_(chroma_threshold) {}

BuiltinDetector BuiltinDetector::train(const std::vector<LabeledImage>& samples, int n_classes, int crop_size,
                                       double temperature, double chroma_threshold) {
  std::vector<RgbImage> crops;
  std::vector<int> labels;
  for (const auto& s : samples) {
    const auto box = locate_sign(*s.image, chroma_threshold);
    if (!box) continue;
    crops.push_back(resize_bilinear(crop(*s.image, *box), crop_size, crop_size));
    labels.push_back(s.label);
  }
  std::vector<LabeledImage> labeled;
  for (std::size_t i = 0; i < crops.size(); ++i) labeled.push_back({&crops[i], labels[i]});
  return BuiltinDetector(train_centroids(labeled, n_classes, temperature), chroma_threshold);
}

DetectorOutput BuiltinDetector::detect(const RgbImage& image, double tau) const {
  if (!(tau > 0.0 && tau <= 1.0)) throw DataError("detection threshold must lie in (0, 1]");
  DetectorOutput out;
  out.tau = tau;
  const auto box = locate_sign(image, chroma_threshold_);
  if (!box) return out;
  const auto [w, h] = *model_.resolution();
  ProbSimplex probs = model_.classify(resize_bilinear(crop(image, *box), w, h));
  if (probs.max() > tau) out.detections.push_back({*box, std::move(probs)});
  return out;
}

CompositeOracle::CompositeOracle(std::shared_ptr<const Oracle> classifier, std::shared_ptr<const Oracle> detector,
                                 std::shared_ptr<const Oracle> segmenter)
    : classifier_(std::move(classifier)), detector_(std::move(detector)), segmenter_(std::move(segmenter)) {}

bool CompositeOracle::supports(Capability cap) const {
  switch (cap) {
    case Capability::classify:
      return classifier_ && classifier_->supports(cap);
    case Capability::detect:
      return detector_ && detector_->supports(cap);
    case Capability::segment:
      return segmenter_ && segmenter_->supports(cap);
  }
  return false;
}

ProbSimplex CompositeOracle::classify(const RgbImage& image) const {
  if (!classifier_) throw CapabilityError("no classifier attached");
  return classifier_->classify(image);
}

DetectorOutput CompositeOracle::detect(const RgbImage& image, double tau) const {
  if (!detector_) throw CapabilityError("no detector attached");
  return detector_->detect(image, tau);
}

SegmentationResult CompositeOracle::segment(const RgbImage& image) const {
  if (!segmenter_) throw CapabilityError("no segmenter attached");
  return segmenter_->segment(image);
}

std::optional<std::pair<int, int>> CompositeOracle::resolution() const {
  return classifier_ ? classifier_->resolution() : std::nullopt;
}

}  // namespace irpert
