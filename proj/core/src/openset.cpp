#include "cpl/openset.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <string>

#include "cpl/error.hpp"
#include "cpl/net.hpp"

namespace cpl {

ConfidenceMode parse_confidence_mode(std::string_view name) {
  if (name == "prob" || name == "probability") return ConfidenceMode::probability;
  if (name == "dist" || name == "distance") return ConfidenceMode::distance;
  throw ParameterError("unknown confidence mode '" + std::string(name) + "' (prob|dist)");
}

std::string_view to_string(ConfidenceMode mode) { return mode == ConfidenceMode::probability ? "prob" : "dist"; }

double confidence(const PrototypeBank& bank, std::span<const double> feature, ConfidenceMode mode, double gamma) {
  if (mode == ConfidenceMode::distance) return -predict(bank, feature).distance;
  const auto probs = prototype_probabilities(bank, feature, gamma);
  return *std::max_element(probs.per_class.begin(), probs.per_class.end());
}

std::vector<double> confidences(const Model& model, const FeatureBatch& features, ConfidenceMode mode) {
  std::vector<double> out(features.rows);
  for (std::size_t i = 0; i < features.rows; ++i) {
    out[i] = confidence(model.bank, features.row(i), mode, model.config.hyper.gamma);
  }
  return out;
}

std::vector<double> confidences(const Model& model, const ImageSet& images, ConfidenceMode mode) {
  return confidences(model, extract_features(model.net, images), mode);
}

std::vector<double> confidences(const Model& model, const Dataset& dataset, ConfidenceMode mode) {
  return confidences(model, extract_features(model.net, dataset), mode);
}

namespace {
std::vector<double> softmax_confidences(const SoftmaxModel& model, const FeatureBatch& features) {
  std::vector<double> out(features.rows);
  for (std::size_t i = 0; i < features.rows; ++i) {
    const auto p = softmax_probabilities(model.head, features.row(i));
    out[i] = *std::max_element(p.begin(), p.end());
  }
  return out;
}
}  // namespace

std::vector<double> confidences(const SoftmaxModel& model, const ImageSet& images) {
  return softmax_confidences(model, extract_features(model.net, images));
}

std::vector<double> confidences(const SoftmaxModel& model, const Dataset& dataset) {
  return softmax_confidences(model, extract_features(model.net, dataset));
}

namespace {

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + " confidence list contains a non-finite value");
  }
}

CurvePoint rates_sorted(const std::vector<double>& in_sorted, const std::vector<double>& out_sorted,
                        double threshold) {
  const auto in_below = static_cast<std::size_t>(
      std::lower_bound(in_sorted.begin(), in_sorted.end(), threshold) - in_sorted.begin());
  const auto out_below = static_cast<std::size_t>(
      std::lower_bound(out_sorted.begin(), out_sorted.end(), threshold) - out_sorted.begin());
  CurvePoint p;
  p.threshold = threshold;
  p.ar = static_cast<double>(in_sorted.size() - in_below) / static_cast<double>(in_sorted.size());
  p.rr = static_cast<double>(out_below) / static_cast<double>(out_sorted.size());
  return p;
}

}  // namespace

CurvePoint rates_at(std::span<const double> in_confidence, std::span<const double> out_confidence, double threshold) {
  if (in_confidence.empty()) throw ParameterError("in-distribution set is empty");
  if (out_confidence.empty()) throw ParameterError("outlier set is empty");
  std::vector<double> in_sorted(in_confidence.begin(), in_confidence.end());
  std::vector<double> out_sorted(out_confidence.begin(), out_confidence.end());
  std::sort(in_sorted.begin(), in_sorted.end());
  std::sort(out_sorted.begin(), out_sorted.end());
  return rates_sorted(in_sorted, out_sorted, threshold);
}

RejectionCurve ar_rr_curve(std::span<const double> in_confidence, std::span<const double> out_confidence,
                           ConfidenceMode mode, std::size_t num_thresholds) {
  if (in_confidence.empty()) throw ParameterError("in-distribution set is empty");
  if (out_confidence.empty()) throw ParameterError("outlier set is empty");
  check_finite(in_confidence, "in-distribution");
  check_finite(out_confidence, "outlier");

  std::vector<double> in_sorted(in_confidence.begin(), in_confidence.end());
  std::vector<double> out_sorted(out_confidence.begin(), out_confidence.end());
  std::sort(in_sorted.begin(), in_sorted.end());
  std::sort(out_sorted.begin(), out_sorted.end());

  std::vector<double> thresholds;
  thresholds.reserve(in_sorted.size() + out_sorted.size() + 1);
  std::merge(in_sorted.begin(), in_sorted.end(), out_sorted.begin(), out_sorted.end(),
             std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::nextafter(thresholds.back(), std::numeric_limits<double>::infinity()));

  if (num_thresholds > 0 && thresholds.size() > num_thresholds) {
    const std::size_t keep = std::max<std::size_t>(num_thresholds, 2);
    std::vector<double> picked;
    picked.reserve(keep);
    const std::size_t last = thresholds.size() - 1;
    for (std::size_t i = 0; i < keep; ++i) {
      // Evenly spaced indices from 0 to last inclusive; integer arithmetic keeps them exact.
      picked.push_back(thresholds[i * last / (keep - 1)]);
    }
    picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
    thresholds = std::move(picked);
  }

  RejectionCurve curve;
  curve.mode = mode;
  curve.points.reserve(thresholds.size());
  for (double t : thresholds) curve.points.push_back(rates_sorted(in_sorted, out_sorted, t));
  return curve;
}

RejectionCurve ar_rr_curve(const Model& model, const Dataset& in_set, const ImageSet& out_set, ConfidenceMode mode,
                           std::size_t num_thresholds) {
  if (in_set.empty()) throw ParameterError("in-distribution set is empty");
  if (out_set.size() == 0) throw ParameterError("outlier set is empty");
  const auto in_conf = confidences(model, in_set, mode);
  const auto out_conf = confidences(model, out_set, mode);
  return ar_rr_curve(in_conf, out_conf, mode, num_thresholds);
}

bool reaches(const RejectionCurve& curve, double min_ar, double min_rr) {
  return std::any_of(curve.points.begin(), curve.points.end(),
                     [&](const CurvePoint& p) { return p.ar >= min_ar && p.rr >= min_rr; });
}

Model extend_model(const Model& model, const ImageSet& new_samples, std::uint64_t seed) {
  if (new_samples.size() == 0) throw ParameterError("extension needs at least one new-class sample");
  if (!(new_samples.shape == model.net.arch.input())) {
    throw ShapeError("new-class images do not match the model input shape");
  }
  const FeatureBatch features = extract_features(model.net, new_samples);
  Model extended;
  extended.net = model.net;
  extended.bank = add_class_prototype(model.bank, features, seed);
  extended.config = model.config;
  extended.history = model.history;
  return extended;
}

}  // namespace cpl
