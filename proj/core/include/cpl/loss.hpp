#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "cpl/proto.hpp"

namespace cpl {

enum class LossKind { mce, mcl, gmcl, dce };

LossKind parse_loss_kind(std::string_view name);
std::string_view to_string(LossKind kind);
/// True for the losses built on the genuine/rival pair (they need C >= 2).
bool needs_rival(LossKind kind);

struct LossHyper {
  double xi = 1.0;                 // MCE sigmoid slope
  std::optional<double> margin;    // unset: 1.0 for MCL, 0.3 for GMCL
  double gamma = 1.0;              // DCE hardness
  double lambda = 0.001;           // prototype-loss weight

  double margin_for(LossKind kind) const;
  /// Throws ParameterError naming the offending field.
  void validate(LossKind kind) const;
};

inline constexpr double kGmclEpsilon = 1e-12;

/// Loss value with its gradient with respect to the feature and a sparse map
/// of prototype gradients; prototypes not listed have exactly zero gradient.
struct LossGrad {
  double loss = 0.0;
  std::vector<double> dL_df;
  std::vector<std::pair<ProtoIndex, std::vector<double>>> dL_dM;  // sorted by index, unique

  /// Adds weight * other into this (loss, feature gradient and prototype map).
  void accumulate(const LossGrad& other, double weight = 1.0);
  const std::vector<double>* prototype_grad(ProtoIndex at) const;
};

/// Sigmoid of the genuine-minus-rival squared-distance gap.
LossGrad mce_loss_grad(std::span<const double> f, std::size_t y, const PrototypeBank& bank, double xi);
LossGrad mce_loss_grad(std::span<const double> f, const PrototypeBank& bank, const GenuineRival& pair, double xi);

/// Hinge on d_genuine - d_rival + margin.
LossGrad mcl_loss_grad(std::span<const double> f, std::size_t y, const PrototypeBank& bank, double margin);
LossGrad mcl_loss_grad(std::span<const double> f, const PrototypeBank& bank, const GenuineRival& pair,
                       double margin);

/// Hinge on (d_g - d_r) / (d_g + d_r + eps) + margin, margin in (0, 1).
LossGrad gmcl_loss_grad(std::span<const double> f, std::size_t y, const PrototypeBank& bank, double margin);
LossGrad gmcl_loss_grad(std::span<const double> f, const PrototypeBank& bank, const GenuineRival& pair,
                        double margin);

/// -log p(y | x) with p from prototype_probabilities; touches every prototype.
LossGrad dce_loss_grad(std::span<const double> f, std::size_t y, const PrototypeBank& bank, double gamma);

/// ||f - m_yj||^2 for the nearest prototype m_yj of class y.
LossGrad pl_loss_grad(std::span<const double> f, std::size_t y, const PrototypeBank& bank);
LossGrad pl_loss_grad(std::span<const double> f, const PrototypeBank& bank, ProtoIndex genuine);

/// Classification loss + lambda * PL. The genuine/rival search runs once and is
/// shared by both terms. lambda == 0 returns the bare classification loss.
LossGrad combined_loss_grad(LossKind kind, std::span<const double> f, std::size_t y, const PrototypeBank& bank,
                            const LossHyper& hyper);

}  // namespace cpl
