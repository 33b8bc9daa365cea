#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cpl/net.hpp"

namespace cpl {

/// (class, prototype-within-class) address of one prototype.
struct ProtoIndex {
  std::size_t cls = 0;
  std::size_t k = 0;
  auto operator<=>(const ProtoIndex&) const = default;
};

/// C classes x K prototypes x d features, stored contiguously.
class PrototypeBank {
 public:
  PrototypeBank() = default;
  /// All-zero bank.
  PrototypeBank(std::size_t num_classes, std::size_t per_class, std::size_t feature_dim);
  PrototypeBank(std::size_t num_classes, std::size_t per_class, std::size_t feature_dim, std::vector<double> values);

  std::size_t num_classes() const { return classes_; }
  std::size_t per_class() const { return per_class_; }
  std::size_t feature_dim() const { return dim_; }
  std::size_t num_prototypes() const { return classes_ * per_class_; }

  std::span<const double> prototype(std::size_t cls, std::size_t k) const {
    return {values_.data() + offset(cls, k), dim_};
  }
  std::span<double> prototype(std::size_t cls, std::size_t k) { return {values_.data() + offset(cls, k), dim_}; }
  std::span<const double> prototype(ProtoIndex at) const { return prototype(at.cls, at.k); }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  bool operator==(const PrototypeBank&) const = default;

 private:
  std::size_t offset(std::size_t cls, std::size_t k) const { return (cls * per_class_ + k) * dim_; }

  std::size_t classes_ = 0;
  std::size_t per_class_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

struct Prediction {
  std::size_t cls = 0;
  std::size_t index = 0;
  double distance = 0.0;  // squared
};

/// sum_i (f_i - m_i)^2.
double squared_distance(std::span<const double> f, std::span<const double> m);

/// g_i(f) = -min_j ||f - m_ij||^2.
double discriminant(const PrototypeBank& bank, std::span<const double> f, std::size_t cls);

/// Globally nearest prototype. Ties go to the lowest class id, then the lowest
/// prototype index.
Prediction predict(const PrototypeBank& bank, std::span<const double> f);

struct ProtoProbabilities {
  std::vector<double> per_prototype;  // C*K, row-major by class
  std::vector<double> per_class;      // C
};

/// p_ij proportional to exp(-gamma ||f - m_ij||^2), normalised over all C*K
/// prototypes with a max shift; class probabilities are per-class sums.
ProtoProbabilities prototype_probabilities(const PrototypeBank& bank, std::span<const double> f, double gamma);

struct GenuineRival {
  ProtoIndex genuine;
  double genuine_distance = 0.0;
  ProtoIndex rival;
  double rival_distance = 0.0;
};

/// Nearest prototype of class y and nearest prototype of any other class.
/// Throws UnsupportedError when the bank has a single class.
GenuineRival nearest_genuine_and_rival(const PrototypeBank& bank, std::span<const double> f, std::size_t y);
/// Nearest prototype within class y only.
ProtoIndex nearest_genuine(const PrototypeBank& bank, std::span<const double> f, std::size_t y, double* distance = nullptr);

enum class ProtoInit { zeros, class_means, gaussian };

ProtoInit parse_proto_init(std::string_view name);
std::string_view to_string(ProtoInit mode);

/// zeros: all 0. gaussian: i.i.d. N(0, 1). class_means: mean of each class's
/// features; with K > 1 each copy gets N(0, 0.01 I) jitter.
/// features/labels are only read in class_means mode and must cover every class.
PrototypeBank init_prototypes(ProtoInit mode, std::size_t num_classes, std::size_t per_class,
                              std::size_t feature_dim, std::uint64_t seed, const FeatureBatch* features = nullptr,
                              std::span<const int> labels = {});

/// Seeded Lloyd's k-means. Initial centers are distinct random rows; empty
/// clusters keep their previous center. Stops after max_iterations or when no
/// assignment changes.
std::vector<std::vector<double>> kmeans(const FeatureBatch& points, std::size_t k, std::uint64_t seed,
                                        std::size_t max_iterations = 50);

/// Copy of the bank with one extra class appended. With K == 1 the new
/// prototype is the feature mean; with K > 1 the K k-means centers.
/// Existing prototypes are copied bit for bit.
PrototypeBank add_class_prototype(const PrototypeBank& bank, const FeatureBatch& new_class_features,
                                  std::uint64_t seed = 0);

}  // namespace cpl
