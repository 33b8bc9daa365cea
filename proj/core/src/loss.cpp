#include "cpl/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cpl/error.hpp"

namespace cpl {

LossKind parse_loss_kind(std::string_view name) {
  if (name == "mce") return LossKind::mce;
  if (name == "mcl") return LossKind::mcl;
  if (name == "gmcl") return LossKind::gmcl;
  if (name == "dce") return LossKind::dce;
  throw ParameterError("unknown loss '" + std::string(name) + "' (mce|mcl|gmcl|dce)");
}

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::mce:
      return "mce";
    case LossKind::mcl:
      return "mcl";
    case LossKind::gmcl:
      return "gmcl";
    case LossKind::dce:
      return "dce";
  }
  return "dce";
}

bool needs_rival(LossKind kind) { return kind != LossKind::dce; }

double LossHyper::margin_for(LossKind kind) const {
  if (margin) return *margin;
  return kind == LossKind::gmcl ? 0.3 : 1.0;
}

void LossHyper::validate(LossKind kind) const {
  if (!(xi > 0.0)) throw ParameterError("xi must be > 0");
  if (!(gamma > 0.0)) throw ParameterError("gamma must be > 0");
  if (!(lambda >= 0.0)) throw ParameterError("pl-weight (lambda) must be >= 0");
  const double m = margin_for(kind);
  if (!std::isfinite(m)) throw ParameterError("margin must be finite");
  if (kind == LossKind::gmcl && !(m > 0.0 && m < 1.0)) throw ParameterError("GMCL margin must lie in (0, 1)");
}

void LossGrad::accumulate(const LossGrad& other, double weight) {
  loss += weight * other.loss;
  if (dL_df.empty()) dL_df.assign(other.dL_df.size(), 0.0);
  for (std::size_t j = 0; j < dL_df.size(); ++j) dL_df[j] += weight * other.dL_df[j];
  for (const auto& [at, grad] : other.dL_dM) {
    auto it = std::lower_bound(dL_dM.begin(), dL_dM.end(), at,
                               [](const auto& entry, const ProtoIndex& key) { return entry.first < key; });
    if (it == dL_dM.end() || it->first != at) {
      it = dL_dM.insert(it, {at, std::vector<double>(grad.size(), 0.0)});
    }
    for (std::size_t j = 0; j < grad.size(); ++j) it->second[j] += weight * grad[j];
  }
}

const std::vector<double>* LossGrad::prototype_grad(ProtoIndex at) const {
  for (const auto& [idx, grad] : dL_dM) {
    if (idx == at) return &grad;
  }
  return nullptr;
}

namespace {

// Gradient of  a * d(f, m_g) + b * d(f, m_r)  for the genuine/rival pair.
LossGrad pair_gradient(double loss, std::span<const double> f, const PrototypeBank& bank, const GenuineRival& pair,
                       double coef_genuine, double coef_rival) {
  const auto mg = bank.prototype(pair.genuine);
  const auto mr = bank.prototype(pair.rival);
  const std::size_t d = f.size();
  LossGrad out;
  out.loss = loss;
  out.dL_df.resize(d);
  std::vector<double> gg(d);
  std::vector<double> gr(d);
  for (std::size_t j = 0; j < d; ++j) {
    out.dL_df[j] = 2.0 * coef_genuine * (f[j] - mg[j]) + 2.0 * coef_rival * (f[j] - mr[j]);
    gg[j] = 2.0 * coef_genuine * (mg[j] - f[j]);
    gr[j] = 2.0 * coef_rival * (mr[j] - f[j]);
  }
  out.dL_dM.push_back({pair.genuine, std::move(gg)});
  out.dL_dM.push_back({pair.rival, std::move(gr)});
  std::sort(out.dL_dM.begin(), out.dL_dM.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

// Inactive hinge: zero loss, zero feature gradient, no prototype entries.
LossGrad inactive(std::size_t d) {
  LossGrad out;
  out.dL_df.assign(d, 0.0);
  return out;
}

void check_inputs(std::span<const double> f, std::size_t y, const PrototypeBank& bank) {
  if (f.size() != bank.feature_dim()) throw ShapeError("loss: feature dimension does not match the bank");
  if (y >= bank.num_classes()) throw ParameterError("loss: label outside the bank");
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

LossGrad mce_loss_grad(std::span<const double> f, const PrototypeBank& bank, const GenuineRival& pair, double xi) {
  const double mu = pair.genuine_distance - pair.rival_distance;
  const double l = sigmoid(xi * mu);
  const double dl_dmu = xi * l * (1.0 - l);
  // dmu/d(d_g) = 1, dmu/d(d_r) = -1
  return pair_gradient(l, f, bank, pair, dl_dmu, -dl_dmu);
}

LossGrad mce_loss_grad(std::span<const double> f, std::size_t y, const PrototypeBank& bank, double xi) {
  check_inputs(f, y, bank);
  if (!(xi > 0.0)) throw ParameterError("mce: xi must be > 0");
  return mce_loss_grad(f, bank, nearest_genuine_and_rival(bank, f, y), xi);
}

LossGrad mcl_loss_grad(std::span<const double> f, const PrototypeBank& bank, const GenuineRival& pair,
                       double margin) {
  const double loss = pair.genuine_distance - pair.rival_distance + margin;
  if (!(loss > 0.0)) return inactive(f.size());
  return pair_gradient(loss, f, bank, pair, 1.0, -1.0);
}

LossGrad mcl_loss_grad(std::span<const double> f, std::size_t y, const PrototypeBank& bank, double margin) {
  check_inputs(f, y, bank);
  return mcl_loss_grad(f, bank, nearest_genuine_and_rival(bank, f, y), margin);
}

LossGrad gmcl_loss_grad(std::span<const double> f, const PrototypeBank& bank, const GenuineRival& pair,
                        double margin) {
  const double a = pair.genuine_distance;
  const double b = pair.rival_distance;
  const double s = a + b + kGmclEpsilon;
  const double loss = (a - b) / s + margin;
  if (!(loss > 0.0)) return inactive(f.size());
  const double s2 = s * s;
  return pair_gradient(loss, f, bank, pair, (2.0 * b + kGmclEpsilon) / s2, -(2.0 * a + kGmclEpsilon) / s2);
}

LossGrad gmcl_loss_grad(std::span<const double> f, std::size_t y, const PrototypeBank& bank, double margin) {
  check_inputs(f, y, bank);
  if (!(margin > 0.0 && margin < 1.0)) throw ParameterError("gmcl: margin must lie in (0, 1)");
  return gmcl_loss_grad(f, bank, nearest_genuine_and_rival(bank, f, y), margin);
}

LossGrad dce_loss_grad(std::span<const double> f, std::size_t y, const PrototypeBank& bank, double gamma) {
  check_inputs(f, y, bank);
  if (!(gamma > 0.0)) throw ParameterError("dce: gamma must be > 0");
  const std::size_t C = bank.num_classes();
  const std::size_t K = bank.per_class();
  const std::size_t d = bank.feature_dim();

  std::vector<double> z(C * K);
  double zmax = -std::numeric_limits<double>::infinity();
  double zmax_y = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < K; ++k) {
      const double v = -gamma * squared_distance(f, bank.prototype(c, k));
      z[c * K + k] = v;
      zmax = std::max(zmax, v);
      if (c == y) zmax_y = std::max(zmax_y, v);
    }
  }
  double s_all = 0.0;
  for (double v : z) s_all += std::exp(v - zmax);
  double s_y = 0.0;
  for (std::size_t k = 0; k < K; ++k) s_y += std::exp(z[y * K + k] - zmax_y);

  LossGrad out;
  // -log p(y|x) = logsumexp(all) - logsumexp(class y)
  out.loss = std::max(0.0, (zmax + std::log(s_all)) - (zmax_y + std::log(s_y)));
  out.dL_df.assign(d, 0.0);
  out.dL_dM.reserve(C * K);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < K; ++k) {
      double coef = std::exp(z[c * K + k] - zmax) / s_all;
      if (c == y) coef -= std::exp(z[c * K + k] - zmax_y) / s_y;
      const auto m = bank.prototype(c, k);
      std::vector<double> gm(d);
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = f[j] - m[j];
        out.dL_df[j] -= 2.0 * gamma * coef * diff;
        gm[j] = 2.0 * gamma * coef * diff;
      }
      out.dL_dM.push_back({{c, k}, std::move(gm)});
    }
  }
  return out;
}

LossGrad pl_loss_grad(std::span<const double> f, const PrototypeBank& bank, ProtoIndex genuine) {
  const auto m = bank.prototype(genuine);
  LossGrad out;
  out.dL_df.resize(f.size());
  std::vector<double> gm(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double diff = f[j] - m[j];
    out.loss += diff * diff;
    out.dL_df[j] = 2.0 * diff;
    gm[j] = -2.0 * diff;
  }
  out.dL_dM.push_back({genuine, std::move(gm)});
  return out;
}

LossGrad pl_loss_grad(std::span<const double> f, std::size_t y, const PrototypeBank& bank) {
  check_inputs(f, y, bank);
  return pl_loss_grad(f, bank, nearest_genuine(bank, f, y));
}

LossGrad combined_loss_grad(LossKind kind, std::span<const double> f, std::size_t y, const PrototypeBank& bank,
                            const LossHyper& hyper) {
  check_inputs(f, y, bank);
  hyper.validate(kind);

  LossGrad out;
  ProtoIndex genuine;
  if (kind == LossKind::dce) {
    out = dce_loss_grad(f, y, bank, hyper.gamma);
    if (hyper.lambda > 0.0) genuine = nearest_genuine(bank, f, y);
  } else {
    const auto pair = nearest_genuine_and_rival(bank, f, y);
    genuine = pair.genuine;
    const double margin = hyper.margin_for(kind);
    switch (kind) {
      case LossKind::mce:
        out = mce_loss_grad(f, bank, pair, hyper.xi);
        break;
      case LossKind::mcl:
        out = mcl_loss_grad(f, bank, pair, margin);
        break;
      default:
        out = gmcl_loss_grad(f, bank, pair, margin);
        break;
    }
  }
  if (hyper.lambda > 0.0) out.accumulate(pl_loss_grad(f, bank, genuine), hyper.lambda);
  return out;
}

}  // namespace cpl
