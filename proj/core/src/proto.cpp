#include "cpl/proto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cpl/error.hpp"
#include "cpl/rng.hpp"

namespace cpl {

PrototypeBank::PrototypeBank(std::size_t num_classes, std::size_t per_class, std::size_t feature_dim)
    : PrototypeBank(num_classes, per_class, feature_dim,
                    std::vector<double>(num_classes * per_class * feature_dim, 0.0)) {}

PrototypeBank::PrototypeBank(std::size_t num_classes, std::size_t per_class, std::size_t feature_dim,
                             std::vector<double> values)
    : classes_(num_classes), per_class_(per_class), dim_(feature_dim), values_(std::move(values)) {
  if (classes_ < 1 || per_class_ < 1 || dim_ < 1) throw ParameterError("prototype bank needs C, K, d >= 1");
  if (values_.size() != classes_ * per_class_ * dim_) throw ShapeError("prototype payload is not C*K*d");
  for (double v : values_) {
    if (!std::isfinite(v)) throw NumericError("prototype bank contains a non-finite value");
  }
}

double squared_distance(std::span<const double> f, std::span<const double> m) {
  if (f.size() != m.size()) {
    throw ShapeError("squared_distance: dimensions " + std::to_string(f.size()) + " and " +
                     std::to_string(m.size()) + " differ");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double diff = f[i] - m[i];
    acc += diff * diff;
  }
  return acc;
}

namespace {
void check_feature(const PrototypeBank& bank, std::span<const double> f) {
  if (f.size() != bank.feature_dim()) {
    throw ShapeError("feature has dimension " + std::to_string(f.size()) + ", bank expects " +
                     std::to_string(bank.feature_dim()));
  }
}

void check_class(const PrototypeBank& bank, std::size_t cls) {
  if (cls >= bank.num_classes()) {
    throw ParameterError("class " + std::to_string(cls) + " outside [0, " + std::to_string(bank.num_classes()) + ")");
  }
}
}  // namespace

ProtoIndex nearest_genuine(const PrototypeBank& bank, std::span<const double> f, std::size_t y, double* distance) {
  check_feature(bank, f);
  check_class(bank, y);
  ProtoIndex best{y, 0};
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < bank.per_class(); ++k) {
    const double d = squared_distance(f, bank.prototype(y, k));
    if (d < best_d) {
      best_d = d;
      best.k = k;
    }
  }
  if (distance) *distance = best_d;
  return best;
}

double discriminant(const PrototypeBank& bank, std::span<const double> f, std::size_t cls) {
  double d = 0.0;
  nearest_genuine(bank, f, cls, &d);
  return -d;
}

Prediction predict(const PrototypeBank& bank, std::span<const double> f) {
  check_feature(bank, f);
  Prediction best{0, 0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < bank.num_classes(); ++c) {
    for (std::size_t k = 0; k < bank.per_class(); ++k) {
      const double d = squared_distance(f, bank.prototype(c, k));
      if (d < best.distance) best = {c, k, d};
    }
  }
  return best;
}

ProtoProbabilities prototype_probabilities(const PrototypeBank& bank, std::span<const double> f, double gamma) {
  if (!(gamma > 0.0)) throw ParameterError("prototype_probabilities: gamma must be > 0");
  check_feature(bank, f);
  ProtoProbabilities out;
  out.per_prototype.resize(bank.num_prototypes());
  double zmax = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < bank.num_classes(); ++c) {
    for (std::size_t k = 0; k < bank.per_class(); ++k) {
      const double z = -gamma * squared_distance(f, bank.prototype(c, k));
      out.per_prototype[c * bank.per_class() + k] = z;
      zmax = std::max(zmax, z);
    }
  }
  double total = 0.0;
  for (double& z : out.per_prototype) {
    z = std::exp(z - zmax);
    total += z;
  }
  out.per_class.assign(bank.num_classes(), 0.0);
  for (std::size_t c = 0; c < bank.num_classes(); ++c) {
    for (std::size_t k = 0; k < bank.per_class(); ++k) {
      double& p = out.per_prototype[c * bank.per_class() + k];
      p /= total;
      out.per_class[c] += p;
    }
  }
  return out;
}

GenuineRival nearest_genuine_and_rival(const PrototypeBank& bank, std::span<const double> f, std::size_t y) {
  if (bank.num_classes() < 2) throw UnsupportedError("rival class required: the bank has a single class");
  GenuineRival out;
  out.genuine = nearest_genuine(bank, f, y, &out.genuine_distance);
  out.rival_distance = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < bank.num_classes(); ++c) {
    if (c == y) continue;
    for (std::size_t k = 0; k < bank.per_class(); ++k) {
      const double d = squared_distance(f, bank.prototype(c, k));
      if (d < out.rival_distance) {
        out.rival_distance = d;
        out.rival = {c, k};
      }
    }
  }
  return out;
}

ProtoInit parse_proto_init(std::string_view name) {
  if (name == "zeros") return ProtoInit::zeros;
  if (name == "mean" || name == "class_means") return ProtoInit::class_means;
  if (name == "random" || name == "gaussian") return ProtoInit::gaussian;
  throw ParameterError("unknown prototype init '" + std::string(name) + "' (zeros|mean|random)");
}

std::string_view to_string(ProtoInit mode) {
  switch (mode) {
    case ProtoInit::zeros:
      return "zeros";
    case ProtoInit::class_means:
      return "mean";
    case ProtoInit::gaussian:
      return "random";
  }
  return "zeros";
}

PrototypeBank init_prototypes(ProtoInit mode, std::size_t num_classes, std::size_t per_class,
                              std::size_t feature_dim, std::uint64_t seed, const FeatureBatch* features,
                              std::span<const int> labels) {
  PrototypeBank bank(num_classes, per_class, feature_dim);
  Rng rng(seed, 0x9707);
  switch (mode) {
    case ProtoInit::zeros:
      break;
    case ProtoInit::gaussian:
      for (double& v : bank.values()) v = rng.normal();
      break;
    case ProtoInit::class_means: {
      if (!features || features->rows != labels.size() || features->rows == 0) {
        throw ParameterError("class_means init requires a feature list with one label per row");
      }
      if (features->dim != feature_dim) throw ShapeError("class_means init: feature dimension mismatch");
      std::vector<double> sums(num_classes * feature_dim, 0.0);
      std::vector<std::size_t> counts(num_classes, 0);
      for (std::size_t r = 0; r < features->rows; ++r) {
        const auto c = static_cast<std::size_t>(labels[r]);
        if (c >= num_classes) throw ParameterError("class_means init: label outside the bank");
        ++counts[c];
        const auto f = features->row(r);
        for (std::size_t j = 0; j < feature_dim; ++j) sums[c * feature_dim + j] += f[j];
      }
      for (std::size_t c = 0; c < num_classes; ++c) {
        if (counts[c] == 0) {
          throw ParameterError("class_means init: class " + std::to_string(c) + " has no features");
        }
        for (std::size_t k = 0; k < per_class; ++k) {
          auto m = bank.prototype(c, k);
          for (std::size_t j = 0; j < feature_dim; ++j) {
            m[j] = sums[c * feature_dim + j] / static_cast<double>(counts[c]);
            if (per_class > 1) m[j] += rng.normal(0.0, 0.1);
          }
        }
      }
      break;
    }
  }
  return bank;
}

std::vector<std::vector<double>> kmeans(const FeatureBatch& points, std::size_t k, std::uint64_t seed,
                                        std::size_t max_iterations) {
  if (points.rows == 0) throw ParameterError("kmeans: no points");
  if (k == 0) throw ParameterError("kmeans: k must be >= 1");
  const std::size_t d = points.dim;

  // Prefer rows that differ from every center chosen so far; fall back to
  // repeats when there are fewer distinct rows than k.
  Rng rng(seed, 0x63d);
  std::vector<std::size_t> order(points.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<double>> centers;
  for (std::size_t idx : order) {
    if (centers.size() == k) break;
    const auto row = points.row(idx);
    const bool fresh = std::none_of(centers.begin(), centers.end(), [&](const auto& c) {
      return std::equal(c.begin(), c.end(), row.begin());
    });
    if (fresh) centers.emplace_back(row.begin(), row.end());
  }
  for (std::size_t i = 0; centers.size() < k; ++i) {
    const auto row = points.row(order[i % order.size()]);
    centers.emplace_back(row.begin(), row.end());
  }

  std::vector<std::size_t> assign(points.rows, k);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (std::size_t r = 0; r < points.rows; ++r) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dist = squared_distance(points.row(r), centers[c]);
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (assign[r] != best) {
        assign[r] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t r = 0; r < points.rows; ++r) {
      ++counts[assign[r]];
      const auto row = points.row(r);
      for (std::size_t j = 0; j < d; ++j) sums[assign[r]][j] += row[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j) centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
  }
  return centers;
}

PrototypeBank add_class_prototype(const PrototypeBank& bank, const FeatureBatch& new_class_features,
                                  std::uint64_t seed) {
  if (new_class_features.rows == 0) throw ParameterError("add_class_prototype: no features for the new class");
  if (new_class_features.dim != bank.feature_dim()) {
    throw ShapeError("add_class_prototype: feature dimension mismatch");
  }
  const std::size_t K = bank.per_class();
  const std::size_t d = bank.feature_dim();
  std::vector<double> values = bank.values();
  values.reserve(values.size() + K * d);
  if (K == 1) {
    std::vector<double> mean(d, 0.0);
    for (std::size_t r = 0; r < new_class_features.rows; ++r) {
      const auto f = new_class_features.row(r);
      for (std::size_t j = 0; j < d; ++j) mean[j] += f[j];
    }
    for (double& v : mean) v /= static_cast<double>(new_class_features.rows);
    values.insert(values.end(), mean.begin(), mean.end());
  } else {
    for (const auto& center : kmeans(new_class_features, K, seed)) values.insert(values.end(), center.begin(), center.end());
  }
  return PrototypeBank(bank.num_classes() + 1, K, d, std::move(values));
}

}  // namespace cpl
