#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "cpl/loss.hpp"

namespace cpl {

/// Losses the checker knows how to instantiate. `combined` cycles through the
/// four classification losses with a random prototype-loss weight.
enum class CheckedLoss { mce, mcl, gmcl, dce, pl, combined };

CheckedLoss parse_checked_loss(std::string_view name);
std::string_view to_string(CheckedLoss loss);

struct GradCheckOptions {
  std::size_t trials = 100;
  double step = 1e-5;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
  std::size_t max_dim = 8;
  std::size_t max_classes = 4;
  std::size_t max_per_class = 3;
  /// Instances whose hinge argument or nearest-prototype gap is below this are redrawn.
  double exclusion = 1e-3;
};

struct GradCheckReport {
  std::size_t trials = 0;   // instances compared
  std::size_t skipped = 0;  // instances redrawn because they sat near a kink
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Loss evaluator under test: returns the loss with its analytic gradients.
using LossEvaluator = std::function<LossGrad(std::span<const double> f, std::size_t y, const PrototypeBank& bank)>;

/// Central differences of evaluator(...).loss with respect to f (first d
/// entries) followed by every prototype entry in bank order.
std::vector<double> numeric_gradient(const LossEvaluator& evaluator, std::span<const double> f, std::size_t y,
                                     const PrototypeBank& bank, double step);

/// The analytic gradient laid out like numeric_gradient, with zeros for
/// prototypes absent from the sparse map.
std::vector<double> dense_gradient(const LossGrad& grad, const PrototypeBank& bank);

/// ||a - n||_2 / max(||a||_2, ||n||_2, 1).
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

/// Evaluator for one of the built-in losses with the given hyperparameters.
LossEvaluator make_evaluator(CheckedLoss loss, const LossHyper& hyper, LossKind combined_kind = LossKind::dce);

/// Compares analytic and central-difference gradients on random small
/// instances (d <= max_dim, 2 <= C <= max_classes, K <= max_per_class).
GradCheckReport gradient_check(CheckedLoss loss, const GradCheckOptions& options = {});

/// Same sweep for an arbitrary evaluator. `near_kink` decides which random
/// instances to redraw; pass an empty function to keep all of them.
GradCheckReport gradient_check(const LossEvaluator& evaluator,
                               const std::function<bool(std::span<const double>, std::size_t, const PrototypeBank&)>&
                                   near_kink,
                               const GradCheckOptions& options = {});

}  // namespace cpl
