#include "cpl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "cpl/error.hpp"
#include "cpl/rng.hpp"

namespace cpl {

CheckedLoss parse_checked_loss(std::string_view name) {
  if (name == "mce") return CheckedLoss::mce;
  if (name == "mcl") return CheckedLoss::mcl;
  if (name == "gmcl") return CheckedLoss::gmcl;
  if (name == "dce") return CheckedLoss::dce;
  if (name == "pl") return CheckedLoss::pl;
  if (name == "combined") return CheckedLoss::combined;
  throw ParameterError("unknown loss '" + std::string(name) + "' (mce|mcl|gmcl|dce|pl|combined)");
}

std::string_view to_string(CheckedLoss loss) {
  switch (loss) {
    case CheckedLoss::mce:
      return "mce";
    case CheckedLoss::mcl:
      return "mcl";
    case CheckedLoss::gmcl:
      return "gmcl";
    case CheckedLoss::dce:
      return "dce";
    case CheckedLoss::pl:
      return "pl";
    case CheckedLoss::combined:
      return "combined";
  }
  return "combined";
}

std::vector<double> numeric_gradient(const LossEvaluator& evaluator, std::span<const double> f, std::size_t y,
                                     const PrototypeBank& bank, double step) {
  if (!(step > 0.0)) throw ParameterError("finite-difference step must be > 0");
  std::vector<double> out;
  out.reserve(f.size() + bank.values().size());

  std::vector<double> fx(f.begin(), f.end());
  for (std::size_t j = 0; j < fx.size(); ++j) {
    const double saved = fx[j];
    fx[j] = saved + step;
    const double up = evaluator(fx, y, bank).loss;
    fx[j] = saved - step;
    const double down = evaluator(fx, y, bank).loss;
    fx[j] = saved;
    out.push_back((up - down) / (2.0 * step));
  }

  PrototypeBank perturbed = bank;
  auto& values = perturbed.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = evaluator(f, y, perturbed).loss;
    values[i] = saved - step;
    const double down = evaluator(f, y, perturbed).loss;
    values[i] = saved;
    out.push_back((up - down) / (2.0 * step));
  }
  return out;
}

std::vector<double> dense_gradient(const LossGrad& grad, const PrototypeBank& bank) {
  const std::size_t d = bank.feature_dim();
  if (grad.dL_df.size() != d) throw ShapeError("feature gradient has the wrong dimension");
  std::vector<double> out(d + bank.values().size(), 0.0);
  std::copy(grad.dL_df.begin(), grad.dL_df.end(), out.begin());
  for (const auto& [at, g] : grad.dL_dM) {
    if (at.cls >= bank.num_classes() || at.k >= bank.per_class() || g.size() != d) {
      throw ShapeError("prototype gradient entry does not fit the bank");
    }
    std::copy(g.begin(), g.end(), out.begin() + static_cast<std::ptrdiff_t>(d + (at.cls * bank.per_class() + at.k) * d));
  }
  return out;
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw ShapeError("relative_error: length mismatch");
  double diff = 0.0;
  double na = 0.0;
  double nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1.0});
}

LossEvaluator make_evaluator(CheckedLoss loss, const LossHyper& hyper, LossKind combined_kind) {
  switch (loss) {
    case CheckedLoss::mce:
      return [hyper](std::span<const double> f, std::size_t y, const PrototypeBank& b) {
        return mce_loss_grad(f, y, b, hyper.xi);
      };
    case CheckedLoss::mcl:
      return [hyper](std::span<const double> f, std::size_t y, const PrototypeBank& b) {
        return mcl_loss_grad(f, y, b, hyper.margin_for(LossKind::mcl));
      };
    case CheckedLoss::gmcl:
      return [hyper](std::span<const double> f, std::size_t y, const PrototypeBank& b) {
        return gmcl_loss_grad(f, y, b, hyper.margin_for(LossKind::gmcl));
      };
    case CheckedLoss::dce:
      return [hyper](std::span<const double> f, std::size_t y, const PrototypeBank& b) {
        return dce_loss_grad(f, y, b, hyper.gamma);
      };
    case CheckedLoss::pl:
      return [](std::span<const double> f, std::size_t y, const PrototypeBank& b) { return pl_loss_grad(f, y, b); };
    case CheckedLoss::combined:
      return [hyper, combined_kind](std::span<const double> f, std::size_t y, const PrototypeBank& b) {
        return combined_loss_grad(combined_kind, f, y, b, hyper);
      };
  }
  throw ParameterError("unknown checked loss");
}

namespace {

struct Instance {
  std::vector<double> f;
  std::size_t y = 0;
  PrototypeBank bank;
};

Instance draw_instance(Rng& rng, const GradCheckOptions& options) {
  Instance inst;
  const std::size_t d = 1 + static_cast<std::size_t>(rng.below(options.max_dim));
  const std::size_t C = 2 + static_cast<std::size_t>(rng.below(options.max_classes - 1));
  const std::size_t K = 1 + static_cast<std::size_t>(rng.below(options.max_per_class));
  std::vector<double> values(C * K * d);
  for (double& v : values) v = rng.normal();
  inst.bank = PrototypeBank(C, K, d, std::move(values));
  inst.f.resize(d);
  for (double& v : inst.f) v = rng.normal();
  inst.y = static_cast<std::size_t>(rng.below(C));
  return inst;
}

// Gap between the two smallest distances among the selected prototypes.
double nearest_gap(const PrototypeBank& bank, std::span<const double> f, std::size_t y, bool genuine) {
  double best = std::numeric_limits<double>::infinity();
  double second = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < bank.num_classes(); ++c) {
    if ((c == y) != genuine) continue;
    for (std::size_t k = 0; k < bank.per_class(); ++k) {
      const double dist = squared_distance(f, bank.prototype(c, k));
      if (dist < best) {
        second = best;
        best = dist;
      } else if (dist < second) {
        second = dist;
      }
    }
  }
  return second - best;
}

bool near_tie(const PrototypeBank& bank, std::span<const double> f, std::size_t y, bool with_rival, double eps) {
  if (nearest_gap(bank, f, y, true) < eps) return true;
  return with_rival && nearest_gap(bank, f, y, false) < eps;
}

bool near_hinge(LossKind kind, const PrototypeBank& bank, std::span<const double> f, std::size_t y,
                const LossHyper& hyper, double eps) {
  if (kind != LossKind::mcl && kind != LossKind::gmcl) return false;
  const auto pair = nearest_genuine_and_rival(bank, f, y);
  const double a = pair.genuine_distance;
  const double b = pair.rival_distance;
  const double margin = hyper.margin_for(kind);
  if (kind == LossKind::mcl) return std::abs(a - b + margin) < eps;
  if (a + b <= 1e-6) return true;
  return std::abs((a - b) / (a + b + kGmclEpsilon) + margin) < eps;
}

double check_instance(const LossEvaluator& evaluator, const Instance& inst, double step) {
  const auto analytic = dense_gradient(evaluator(inst.f, inst.y, inst.bank), inst.bank);
  const auto numeric = numeric_gradient(evaluator, inst.f, inst.y, inst.bank, step);
  return relative_error(analytic, numeric);
}

void validate(const GradCheckOptions& options) {
  if (options.trials == 0) throw ParameterError("gradient check needs at least one trial");
  if (!(options.step > 0.0)) throw ParameterError("finite-difference step must be > 0");
  if (!(options.tolerance > 0.0)) throw ParameterError("tolerance must be > 0");
  if (options.max_dim < 1 || options.max_classes < 2 || options.max_per_class < 1) {
    throw ParameterError("instance bounds need d >= 1, C >= 2, K >= 1");
  }
}

template <typename Draw>
GradCheckReport sweep(const GradCheckOptions& options, Draw&& draw_and_check) {
  validate(options);
  GradCheckReport report;
  report.tolerance = options.tolerance;
  Rng rng(options.seed, 0x6c);
  const std::size_t max_draws = options.trials * 1000;
  std::size_t draws = 0;
  while (report.trials < options.trials) {
    if (++draws > max_draws) throw NumericError("gradient check could not find instances away from kinks");
    const auto err = draw_and_check(rng, report.trials);
    if (!err) {
      ++report.skipped;
      continue;
    }
    report.max_rel_error = std::max(report.max_rel_error, *err);
    if (!std::isfinite(*err)) report.max_rel_error = std::numeric_limits<double>::infinity();
    ++report.trials;
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace

GradCheckReport gradient_check(CheckedLoss loss, const GradCheckOptions& options) {
  constexpr LossKind kCycle[] = {LossKind::mce, LossKind::mcl, LossKind::gmcl, LossKind::dce};
  return sweep(options, [&](Rng& rng, std::size_t trial) -> std::optional<double> {
    Instance inst = draw_instance(rng, options);
    LossHyper hyper;
    hyper.xi = 0.5 + 1.5 * rng.uniform();
    hyper.gamma = 0.1 + 1.9 * rng.uniform();
    hyper.lambda = loss == CheckedLoss::combined ? 0.001 + rng.uniform() : 0.0;
    LossKind kind = LossKind::dce;
    switch (loss) {
      case CheckedLoss::mce:
        kind = LossKind::mce;
        break;
      case CheckedLoss::mcl:
        kind = LossKind::mcl;
        break;
      case CheckedLoss::gmcl:
        kind = LossKind::gmcl;
        break;
      case CheckedLoss::combined:
        kind = kCycle[trial % 4];
        break;
      default:
        break;
    }
    hyper.margin = kind == LossKind::gmcl ? 0.05 + 0.9 * rng.uniform() : 0.1 + 1.9 * rng.uniform();

    const bool uses_rival = loss != CheckedLoss::pl && needs_rival(kind);
    const bool uses_genuine = loss != CheckedLoss::dce || hyper.lambda > 0.0;
    const double eps = options.exclusion;
    if (uses_genuine && near_tie(inst.bank, inst.f, inst.y, uses_rival, eps)) return std::nullopt;
    if (uses_rival && near_hinge(kind, inst.bank, inst.f, inst.y, hyper, eps)) return std::nullopt;
    return check_instance(make_evaluator(loss, hyper, kind), inst, options.step);
  });
}

GradCheckReport gradient_check(const LossEvaluator& evaluator,
                               const std::function<bool(std::span<const double>, std::size_t, const PrototypeBank&)>&
                                   near_kink,
                               const GradCheckOptions& options) {
  return sweep(options, [&](Rng& rng, std::size_t) -> std::optional<double> {
    Instance inst = draw_instance(rng, options);
    if (near_kink && near_kink(inst.f, inst.y, inst.bank)) return std::nullopt;
    return check_instance(evaluator, inst, options.step);
  });
}

}  // namespace cpl
