#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cpl/data.hpp"
#include "cpl/proto.hpp"
#include "cpl/train.hpp"

namespace cpl {

/// probability: max class probability under the model's gamma.
/// distance: negated squared distance to the nearest prototype.
/// Higher is more confident in both modes.
enum class ConfidenceMode { probability, distance };

ConfidenceMode parse_confidence_mode(std::string_view name);
std::string_view to_string(ConfidenceMode mode);

double confidence(const PrototypeBank& bank, std::span<const double> feature, ConfidenceMode mode, double gamma);

std::vector<double> confidences(const Model& model, const FeatureBatch& features, ConfidenceMode mode);
std::vector<double> confidences(const Model& model, const ImageSet& images, ConfidenceMode mode);
std::vector<double> confidences(const Model& model, const Dataset& dataset, ConfidenceMode mode);
/// Max softmax probability of the comparison network.
std::vector<double> confidences(const SoftmaxModel& model, const ImageSet& images);
std::vector<double> confidences(const SoftmaxModel& model, const Dataset& dataset);

struct CurvePoint {
  double threshold = 0.0;
  double ar = 0.0;  // fraction of in-distribution samples with confidence >= threshold
  double rr = 0.0;  // fraction of outliers with confidence < threshold
  bool operator==(const CurvePoint&) const = default;
};

struct RejectionCurve {
  ConfidenceMode mode = ConfidenceMode::distance;
  std::vector<CurvePoint> points;  // ascending threshold
};

/// Sweeps every distinct observed confidence (both sets) as a threshold, plus
/// one threshold above the maximum so the reject-all endpoint is present.
/// When num_thresholds > 0 and there are more candidates, an evenly spaced
/// subset is kept that always includes both endpoints.
RejectionCurve ar_rr_curve(std::span<const double> in_confidence, std::span<const double> out_confidence,
                           ConfidenceMode mode, std::size_t num_thresholds = 0);

RejectionCurve ar_rr_curve(const Model& model, const Dataset& in_set, const ImageSet& out_set, ConfidenceMode mode,
                           std::size_t num_thresholds = 0);

/// AR and RR for a single threshold.
CurvePoint rates_at(std::span<const double> in_confidence, std::span<const double> out_confidence, double threshold);

/// True when some point has ar >= min_ar and rr >= min_rr.
bool reaches(const RejectionCurve& curve, double min_ar, double min_rr);

/// Appends one class whose prototypes come from the features of new_samples
/// (mean for K = 1, k-means for K > 1). The extractor is copied unchanged and
/// the input model is not modified.
Model extend_model(const Model& model, const ImageSet& new_samples, std::uint64_t seed = 0);

}  // namespace cpl
