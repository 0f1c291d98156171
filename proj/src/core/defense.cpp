#include "irpert/defense.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "irpert/colorspace.hpp"
#include "irpert/components.hpp"

namespace irpert {

void SegmenterConfig::validate() const {
  if (!(low > 0 && low <= high && high <= 1)) throw DataError("hysteresis thresholds need 0 < low <= high <= 1");
  if (min_region_px < 1) throw DataError("min_region_px must be positive");
}

BinaryMask edge_map(const RgbImage& image, double low, double high) {
  const int w = image.width(), h = image.height();
  const LabImage lab = rgb_to_lab(image);
  const auto L = lab.plane(0);
  auto at = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return L[static_cast<std::size_t>(y) * w + x];
  };
  std::vector<double> mag(static_cast<std::size_t>(w) * h);
  double peak = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1)) -
                        (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
      const double gy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1)) -
                        (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
      const double m = std::hypot(gx, gy);
      mag[static_cast<std::size_t>(y) * w + x] = m;
      peak = std::max(peak, m);
    }
  BinaryMask edges(w, h);
  if (peak <= 0) return edges;
  const double lo = low * peak, hi = high * peak;
  std::vector<int> stack;
  auto bits = edges.bits();
  for (std::size_t i = 0; i < mag.size(); ++i)
    if (mag[i] >= hi) {
      bits[i] = 1;
      stack.push_back(static_cast<int>(i));
    }
  // Weak pixels survive when 8-connected to a strong one.
  while (!stack.empty()) {
    const int p = stack.back();
    stack.pop_back();
    const int px = p % w, py = p / w;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int qx = px + dx, qy = py + dy;
        if (qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
        const std::size_t q = static_cast<std::size_t>(qy) * w + qx;
        if (!bits[q] && mag[q] >= lo) {
          bits[q] = 1;
          stack.push_back(static_cast<int>(q));
        }
      }
  }
  return edges;
}

SegmentationResult segment_builtin(const RgbImage& image, const SegmenterConfig& cfg) {
  cfg.validate();
  const BinaryMask edges = edge_map(image, cfg.low, cfg.high);
  BinaryMask free(image.width(), image.height());
  for (std::size_t i = 0; i < free.bits().size(); ++i) free.bits()[i] = edges.bits()[i] ? 0 : 1;
  SegmentationResult out;
  out.width = image.width();
  out.height = image.height();
  for (const auto& comp : connected_components(free, 8)) {
    if (comp.size() < static_cast<std::size_t>(cfg.min_region_px)) continue;
    BinaryMask m(image.width(), image.height());
    for (int p : comp) m.bits()[static_cast<std::size_t>(p)] = 1;
    out.masks.push_back(std::move(m));
  }
  return out;
}

BuiltinSegmenter::BuiltinSegmenter(SegmenterConfig cfg) : cfg_(cfg) { cfg_.validate(); }

SegmentationResult BuiltinSegmenter::segment(const RgbImage& image) const { return segment_builtin(image, cfg_); }

void DetectorConfig::validate() const {
  if (!(nu >= 0)) throw DataError("nu must be non-negative");
  if (work_size < 0) throw DataError("work_size must be non-negative");
  if (backend && !backend->supports(Capability::segment)) throw CapabilityError("backend cannot segment");
  segmenter.validate();
}

std::size_t shape_count(const RgbImage& image, const DetectorConfig& cfg) {
  cfg.validate();
  RgbImage work = image;
  if (cfg.crop) {
    if (const auto box = locate_sign(image, 20.0)) work = crop(image, *box);
  }
  if (cfg.work_size > 0) {
    const double s = static_cast<double>(cfg.work_size) / std::max(work.width(), work.height());
    const int w = std::max(1, static_cast<int>(std::lround(work.width() * s)));
    const int h = std::max(1, static_cast<int>(std::lround(work.height() * s)));
    work = resize_bilinear(work, w, h);
  }
  if (cfg.backend) return cfg.backend->segment(work).count();
  return segment_builtin(work, cfg.segmenter).count();
}

bool detect_adversarial(std::size_t count, double nu) { return static_cast<double>(count) > nu; }

bool detect_adversarial(const RgbImage& image, const DetectorConfig& cfg) {
  return detect_adversarial(shape_count(image, cfg), cfg.nu);
}

CalibrationReport calibrate_nu(const std::vector<std::size_t>& benign, const std::vector<std::size_t>& adversarial) {
  if (benign.empty() || adversarial.empty()) throw DataError("calibration needs benign and adversarial counts");
  const std::size_t top =
      std::max(*std::max_element(benign.begin(), benign.end()), *std::max_element(adversarial.begin(), adversarial.end()));
  auto above = [](const std::vector<std::size_t>& v, std::size_t nu) {
    return static_cast<double>(std::count_if(v.begin(), v.end(), [&](std::size_t c) { return c > nu; }));
  };
  const double nb = static_cast<double>(benign.size()), na = static_cast<double>(adversarial.size());
  CalibrationReport r;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t nu = 0; nu <= top; ++nu) {
    const double fp = above(benign, nu), tp = above(adversarial, nu);
    const RocPoint pt{static_cast<double>(nu), fp / nb, tp / na};
    r.roc.push_back(pt);
    const double gap = std::abs(pt.fpr - (1 - pt.tpr));
    if (gap < best) {
      best = gap;
      r.nu = pt.nu;
      r.fpr = pt.fpr;
      r.tpr = pt.tpr;
      r.eer = (pt.fpr + (1 - pt.tpr)) / 2;
      const double fn = na - tp;
      r.f1 = tp > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
    }
  }
  return r;
}

nlohmann::json CalibrationReport::to_json() const {
  nlohmann::json roc_doc = nlohmann::json::array();
  for (const auto& p : roc) roc_doc.push_back({{"nu", p.nu}, {"fpr", p.fpr}, {"tpr", p.tpr}});
  return {{"nu", nu}, {"eer", eer}, {"f1", f1}, {"fpr", fpr}, {"tpr", tpr}, {"roc", roc_doc}};
}

void write_roc_csv(std::ostream& out, const CalibrationReport& report) {
  out << "nu,fpr,tpr\n";
  char buf[96];
  for (const auto& p : report.roc) {
    std::snprintf(buf, sizeof buf, "%.0f,%.17g,%.17g\n", p.nu, p.fpr, p.tpr);
    out << buf;
  }
}

RgbImage median_smooth(const RgbImage& image, int kernel) {
  if (kernel < 3 || kernel % 2 == 0) throw DataError("median kernel must be odd and at least 3");
  const int w = image.width(), h = image.height(), r = kernel / 2;
  RgbImage out(w, h);
  std::vector<double> win(static_cast<std::size_t>(kernel) * kernel);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        std::size_t n = 0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx)
            win[n++] = image.at(std::clamp(x + dx, 0, w - 1), std::clamp(y + dy, 0, h - 1), c);
        std::nth_element(win.begin(), win.begin() + win.size() / 2, win.end());
        out.at(x, y, c) = win[win.size() / 2];
      }
  return out;
}

RgbImage nonlocal_smooth(const RgbImage& image, int patch, int window, double strength) {
  if (patch < 1 || patch % 2 == 0 || window < 1 || window % 2 == 0)
    throw DataError("non-local patch and window sizes must be odd and positive");
  if (window < patch) throw DataError("non-local window must be at least the patch size");
  if (!(strength >= 0)) throw DataError("non-local strength must be non-negative");
  if (strength == 0) return image;
  const int w = image.width(), h = image.height(), pr = patch / 2, wr = window / 2;
  const double sigma = std::max(0.5, pr / 2.0);
  std::vector<double> gauss;
  double gsum = 0;
  for (int dy = -pr; dy <= pr; ++dy)
    for (int dx = -pr; dx <= pr; ++dx) {
      gauss.push_back(std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)));
      gsum += gauss.back();
    }
  for (double& g : gauss) g /= gsum;
  auto px = [&](int x, int y, int c) { return image.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1), c); };
  const double h2 = strength * strength;
  RgbImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc[3] = {0, 0, 0}, wsum = 0;
      for (int qy = y - wr; qy <= y + wr; ++qy)
        for (int qx = x - wr; qx <= x + wr; ++qx) {
          double d = 0;
          std::size_t gi = 0;
          for (int dy = -pr; dy <= pr; ++dy)
            for (int dx = -pr; dx <= pr; ++dx, ++gi)
              for (int c = 0; c < 3; ++c) {
                const double diff = px(x + dx, y + dy, c) - px(qx + dx, qy + dy, c);
                d += gauss[gi] * diff * diff;
              }
          const double wt = std::exp(-(d / 3.0) / h2);
          wsum += wt;
          for (int c = 0; c < 3; ++c) acc[c] += wt * px(qx, qy, c);
        }
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = acc[c] / wsum;
    }
  return out;
}

std::string Defense::name() const {
  switch (kind) {
    case DefenseKind::none:
      return "none";
    case DefenseKind::median:
      return "median";
    case DefenseKind::nonlocal:
      return "nonlocal";
    case DefenseKind::segmentation:
      return "segmentation";
  }
  return "unknown";
}

nlohmann::json DefenseEvaluation::to_json() const {
  return {{"defense", defense}, {"clean_accuracy", clean_accuracy}, {"asr", asr}, {"benign", benign},
          {"adversarial", adversarial}};
}

namespace {

RgbImage apply_smoothing(const RgbImage& img, const Defense& d) {
  switch (d.kind) {
    case DefenseKind::median:
      return median_smooth(img, d.median_kernel);
    case DefenseKind::nonlocal:
      return nonlocal_smooth(img, d.nl_patch, d.nl_window, d.nl_strength);
    default:
      return img;
  }
}

ProbSimplex classify_at(const Oracle& oracle, const RgbImage& img) {
  const auto res = oracle.resolution();
  if (res && (res->first != img.width() || res->second != img.height()))
    return oracle.classify(resize_bilinear(img, res->first, res->second));
  return oracle.classify(img);
}

}  // namespace

DefenseEvaluation evaluate_defense(const Oracle& oracle, const Defense& defense,
                                   const std::vector<LabeledImage>& benign, const std::vector<GoalImage>& adversarial,
                                   double tau) {
  if (benign.empty() || adversarial.empty()) throw DataError("defense evaluation needs benign and adversarial sets");
  const bool detector = defense.kind == DefenseKind::segmentation;
  DefenseEvaluation ev;
  ev.defense = defense.name();
  ev.benign = benign.size();
  ev.adversarial = adversarial.size();
  std::size_t correct = 0;
  for (const auto& b : benign) {
    if (detector && detect_adversarial(*b.image, defense.detector)) continue;
    if (classify_at(oracle, apply_smoothing(*b.image, defense)).argmax() == b.label) ++correct;
  }
  std::size_t fooled = 0;
  for (const auto& a : adversarial) {
    if (detector && detect_adversarial(a.image, defense.detector)) continue;
    const RgbImage x = apply_smoothing(a.image, defense);
    const bool ok = a.goal.is_hide() ? criterion(oracle.detect(x, tau), a.goal) : criterion(classify_at(oracle, x), a.goal);
    if (ok) ++fooled;
  }
  ev.clean_accuracy = static_cast<double>(correct) / static_cast<double>(benign.size());
  ev.asr = static_cast<double>(fooled) / static_cast<double>(adversarial.size());
  return ev;
}

}  // namespace irpert
