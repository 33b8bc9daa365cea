#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cpl/error.hpp"
#include "cpl/proto.hpp"
#include "support.hpp"

namespace cpl {
namespace {

using testing::brute_distance;
using testing::brute_nearest;
using testing::brute_nearest_if;
using testing::random_bank;
using testing::random_vector;

TEST(Predict, MatchesBruteForceOnRandomBanks) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t C = 1 + rng.below(6), K = 1 + rng.below(4), d = 1 + rng.below(6);
    const PrototypeBank bank = random_bank(rng, C, K, d);
    const auto f = random_vector(rng, d, 1.5);
    const Prediction p = predict(bank, f);
    const auto oracle = brute_nearest(bank, f);
    EXPECT_EQ(p.cls, oracle.cls);
    EXPECT_EQ(p.index, oracle.k);
    EXPECT_DOUBLE_EQ(p.distance, oracle.distance);
    for (std::size_t c = 0; c < C; ++c) {
      const auto in_class = brute_nearest_if(bank, f, [c](std::size_t i) { return i == c; });
      EXPECT_DOUBLE_EQ(discriminant(bank, f, c), -in_class.distance);
    }
  }
}

TEST(Predict, TiesGoToLowestClassThenLowestIndex) {
  // Class 0 prototypes at +-1, class 1 prototypes at +-1 as well: the origin is equidistant from all four.
  const PrototypeBank bank(2, 2, 1, {1, -1, -1, 1});
  const std::vector<double> f{0.0};
  const Prediction p = predict(bank, f);
  EXPECT_EQ(p.cls, 0u);
  EXPECT_EQ(p.index, 0u);
  const std::vector<double> g{-1.0};
  EXPECT_EQ(predict(bank, g).cls, 0u);
  EXPECT_EQ(predict(bank, g).index, 1u);

  const PrototypeBank dup(3, 1, 2, {5, 5, 0, 0, 0, 0});
  EXPECT_EQ(predict(dup, std::vector<double>{0.1, -0.1}).cls, 1u);
}

TEST(Predict, DiscriminantArgmaxAgreesWithPredict) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const PrototypeBank bank = random_bank(rng, 4, 3, 3);
    const auto f = random_vector(rng, 3);
    std::size_t best = 0;
    for (std::size_t c = 1; c < 4; ++c) {
      if (discriminant(bank, f, c) > discriminant(bank, f, best)) best = c;
    }
    EXPECT_EQ(predict(bank, f).cls, best);
  }
}

TEST(Predict, TwoPrototypeBoundaryIsPerpendicularBisector) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + rng.below(4);
    const auto a = random_vector(rng, d);
    const auto b = random_vector(rng, d);
    const PrototypeBank bank(2, 1, d, [&] {
      std::vector<double> v(a);
      v.insert(v.end(), b.begin(), b.end());
      return v;
    }());
    // f = midpoint + t (b - a) + orthogonal component.
    std::vector<double> n(d), mid(d);
    for (std::size_t j = 0; j < d; ++j) {
      n[j] = b[j] - a[j];
      mid[j] = 0.5 * (a[j] + b[j]);
    }
    auto ortho = random_vector(rng, d);
    const double proj = std::inner_product(ortho.begin(), ortho.end(), n.begin(), 0.0) /
                        std::inner_product(n.begin(), n.end(), n.begin(), 0.0);
    for (std::size_t j = 0; j < d; ++j) ortho[j] -= proj * n[j];
    const double t = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.01 + rng.uniform());
    std::vector<double> f(d);
    for (std::size_t j = 0; j < d; ++j) f[j] = mid[j] + t * n[j] + ortho[j];
    EXPECT_EQ(predict(bank, f).cls, t > 0 ? 1u : 0u);
  }
}

TEST(Predict, TranslationInvariance) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    PrototypeBank bank = random_bank(rng, 3, 2, 4);
    auto f = random_vector(rng, 4);
    const Prediction before = predict(bank, f);
    const auto pb = prototype_probabilities(bank, f, 0.7);
    const auto shift = random_vector(rng, 4, 3.0);
    for (std::size_t i = 0; i < bank.values().size(); ++i) bank.values()[i] += shift[i % 4];
    for (std::size_t j = 0; j < 4; ++j) f[j] += shift[j];
    const Prediction after = predict(bank, f);
    EXPECT_EQ(after.cls, before.cls);
    EXPECT_EQ(after.index, before.index);
    EXPECT_NEAR(after.distance, before.distance, 1e-10);
    const auto pa = prototype_probabilities(bank, f, 0.7);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(pa.per_class[c], pb.per_class[c], 1e-10);
  }
}

TEST(Predict, DimensionMismatchIsShapeError) {
  const PrototypeBank bank(2, 1, 3);
  EXPECT_THROW(predict(bank, std::vector<double>{1, 2}), ShapeError);
}

TEST(Bank, RejectsBadConstruction) {
  EXPECT_THROW(PrototypeBank(0, 1, 1), ParameterError);
  EXPECT_THROW(PrototypeBank(2, 1, 2, {1, 2, 3}), ShapeError);
  EXPECT_THROW(PrototypeBank(1, 1, 1, {std::nan("")}), NumericError);
}

TEST(Probabilities, MatchDirectSoftmax) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t C = 1 + rng.below(5), K = 1 + rng.below(3);
    const PrototypeBank bank = random_bank(rng, C, K, 3);
    const auto f = random_vector(rng, 3);
    const double gamma = 0.1 + 2 * rng.uniform();
    const auto p = prototype_probabilities(bank, f, gamma);
    std::vector<double> w(C * K);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t k = 0; k < K; ++k) w[c * K + k] = std::exp(-gamma * brute_distance(f, bank.prototype(c, k)));
    }
    const double z = std::accumulate(w.begin(), w.end(), 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      double cls = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        EXPECT_NEAR(p.per_prototype[c * K + k], w[c * K + k] / z, 1e-12);
        cls += w[c * K + k] / z;
      }
      EXPECT_NEAR(p.per_class[c], cls, 1e-12);
      total += p.per_class[c];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Probabilities, TwoPrototypeLogistic) {
  const PrototypeBank bank(2, 1, 1, {0.0, 3.0});
  const std::vector<double> f{1.0};
  const double gamma = 0.5;
  // d0 = 1, d1 = 4: p0 = 1 / (1 + exp(-gamma * (4 - 1))).
  const auto p = prototype_probabilities(bank, f, gamma);
  EXPECT_NEAR(p.per_class[0], 1.0 / (1.0 + std::exp(-1.5)), 1e-15);
}

TEST(Probabilities, StableForHugeDistances) {
  const PrototypeBank bank(3, 1, 1, {1e6, 1e6 + 1, -1e6});
  const auto p = prototype_probabilities(bank, std::vector<double>{1e6}, 1.0);
  for (double v : p.per_class) EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(p.per_class[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_EQ(p.per_class[2], 0.0);
}

TEST(Probabilities, RejectsNonPositiveGamma) {
  const PrototypeBank bank(2, 1, 1);
  EXPECT_THROW(prototype_probabilities(bank, std::vector<double>{0.0}, 0.0), ParameterError);
}

TEST(GenuineRival, MatchesRestrictedBruteForce) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t C = 2 + rng.below(4), K = 1 + rng.below(3);
    const PrototypeBank bank = random_bank(rng, C, K, 3);
    const auto f = random_vector(rng, 3);
    const std::size_t y = rng.below(C);
    const GenuineRival gr = nearest_genuine_and_rival(bank, f, y);
    const auto g = brute_nearest_if(bank, f, [y](std::size_t c) { return c == y; });
    const auto r = brute_nearest_if(bank, f, [y](std::size_t c) { return c != y; });
    EXPECT_EQ(gr.genuine, (ProtoIndex{g.cls, g.k}));
    EXPECT_EQ(gr.rival, (ProtoIndex{r.cls, r.k}));
    EXPECT_DOUBLE_EQ(gr.genuine_distance, g.distance);
    EXPECT_DOUBLE_EQ(gr.rival_distance, r.distance);
    double dist = 0.0;
    EXPECT_EQ(nearest_genuine(bank, f, y, &dist), gr.genuine);
    EXPECT_DOUBLE_EQ(dist, g.distance);
  }
}

TEST(GenuineRival, SingleClassBankHasNoRival) {
  const PrototypeBank bank(1, 2, 2);
  EXPECT_THROW(nearest_genuine_and_rival(bank, std::vector<double>{0, 0}, 0), UnsupportedError);
  EXPECT_NO_THROW(nearest_genuine(bank, std::vector<double>{0, 0}, 0));
}

TEST(Init, ParseNames) {
  EXPECT_EQ(parse_proto_init("zeros"), ProtoInit::zeros);
  EXPECT_EQ(parse_proto_init("mean"), ProtoInit::class_means);
  EXPECT_EQ(parse_proto_init("random"), ProtoInit::gaussian);
  EXPECT_EQ(parse_proto_init(to_string(ProtoInit::class_means)), ProtoInit::class_means);
  EXPECT_THROW(parse_proto_init("ones"), ParameterError);
}

TEST(Init, ZerosAndGaussian) {
  const PrototypeBank z = init_prototypes(ProtoInit::zeros, 3, 2, 4, 0);
  EXPECT_TRUE(std::all_of(z.values().begin(), z.values().end(), [](double v) { return v == 0.0; }));

  const PrototypeBank g = init_prototypes(ProtoInit::gaussian, 50, 4, 50, 9);
  EXPECT_EQ(g, init_prototypes(ProtoInit::gaussian, 50, 4, 50, 9));
  const auto& v = g.values();
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  EXPECT_NEAR(mean, 0.0, 0.03);
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Init, ClassMeansEqualsPerClassAverage) {
  Rng rng(10);
  FeatureBatch feats(30, 3);
  std::vector<int> labels(30);
  for (std::size_t i = 0; i < 30; ++i) {
    labels[i] = static_cast<int>(i % 3);
    for (std::size_t j = 0; j < 3; ++j) feats.row(i)[j] = rng.normal() + 4.0 * labels[i];
  }
  const PrototypeBank bank = init_prototypes(ProtoInit::class_means, 3, 1, 3, 0, &feats, labels);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t i = c; i < 30; i += 3) s += feats.row(i)[j];
      EXPECT_NEAR(bank.prototype(c, 0)[j], s / 10.0, 1e-12);
    }
  }
}

TEST(Init, ClassMeansJittersMultiplePrototypes) {
  const std::size_t d = 400;
  FeatureBatch feats(2, d);
  std::fill(feats.data.begin(), feats.data.end(), 1.0);
  const std::vector<int> labels{0, 1};
  const PrototypeBank bank = init_prototypes(ProtoInit::class_means, 2, 3, d, 5, &feats, labels);
  double ss = 0.0;
  for (double v : bank.values()) ss += (v - 1.0) * (v - 1.0);
  const double sd = std::sqrt(ss / static_cast<double>(bank.values().size()));
  EXPECT_NEAR(sd, 0.1, 0.02);
  EXPECT_NE(bank.prototype(0, 0)[0], bank.prototype(0, 1)[0]);
}

TEST(Init, ClassMeansNeedsEveryClass) {
  FeatureBatch feats(2, 2);
  const std::vector<int> labels{0, 0};
  EXPECT_THROW(init_prototypes(ProtoInit::class_means, 2, 1, 2, 0, &feats, labels), ParameterError);
  EXPECT_THROW(init_prototypes(ProtoInit::class_means, 2, 1, 2, 0), ParameterError);
}

TEST(KMeans, RecoversSeparatedClusters) {
  Rng rng(11);
  const std::vector<std::vector<double>> truth{{10, 0}, {-10, 0}, {0, 10}};
  FeatureBatch pts(300, 2);
  for (std::size_t i = 0; i < 300; ++i) {
    for (std::size_t j = 0; j < 2; ++j) pts.row(i)[j] = truth[i % 3][j] + 0.3 * rng.normal();
  }
  const auto centers = kmeans(pts, 3, 4);
  ASSERT_EQ(centers.size(), 3u);
  for (const auto& t : truth) {
    double best = 1e300;
    for (const auto& c : centers) best = std::min(best, brute_distance(t, c));
    EXPECT_LT(best, 0.05);
  }
  EXPECT_EQ(centers, kmeans(pts, 3, 4));
}

TEST(KMeans, MoreCentersThanDistinctPoints) {
  FeatureBatch pts(3, 1);
  pts.data = {1, 1, 2};
  const auto centers = kmeans(pts, 4, 0);
  EXPECT_EQ(centers.size(), 4u);
  EXPECT_THROW(kmeans(FeatureBatch(0, 1), 1, 0), ParameterError);
}

TEST(AddClass, SinglePrototypeIsMeanAndOldOnesAreUntouched) {
  Rng rng(12);
  const PrototypeBank bank = random_bank(rng, 3, 1, 2);
  FeatureBatch feats(4, 2);
  feats.data = {1, 2, 3, 4, 5, 6, 7, 8};
  const PrototypeBank grown = add_class_prototype(bank, feats);
  ASSERT_EQ(grown.num_classes(), 4u);
  EXPECT_TRUE(std::equal(bank.values().begin(), bank.values().end(), grown.values().begin()));
  EXPECT_DOUBLE_EQ(grown.prototype(3, 0)[0], 4.0);
  EXPECT_DOUBLE_EQ(grown.prototype(3, 0)[1], 5.0);
}

TEST(AddClass, MultiplePrototypesUseKMeansCenters) {
  Rng rng(13);
  const PrototypeBank bank = random_bank(rng, 2, 2, 2);
  FeatureBatch feats(40, 2);
  for (std::size_t i = 0; i < 40; ++i) {
    feats.row(i)[0] = (i % 2 ? 20.0 : -20.0) + 0.1 * rng.normal();
    feats.row(i)[1] = 0.1 * rng.normal();
  }
  const PrototypeBank grown = add_class_prototype(bank, feats, 3);
  EXPECT_TRUE(std::equal(bank.values().begin(), bank.values().end(), grown.values().begin()));
  const double a = grown.prototype(2, 0)[0], b = grown.prototype(2, 1)[0];
  EXPECT_NEAR(std::min(a, b), -20.0, 0.1);
  EXPECT_NEAR(std::max(a, b), 20.0, 0.1);
  EXPECT_THROW(add_class_prototype(bank, FeatureBatch(0, 2)), ParameterError);
  EXPECT_THROW(add_class_prototype(bank, FeatureBatch(1, 3)), ShapeError);
}

}  // namespace
}  // namespace cpl
