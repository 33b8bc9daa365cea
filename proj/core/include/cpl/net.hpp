#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cpl/aligned.hpp"
#include "cpl/arch.hpp"
#include "cpl/data.hpp"

namespace cpl {

/// Dense row-major tensor of 64-bit reals.
struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);

  std::size_t size() const { return data.size(); }
  bool operator==(const Tensor&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool operator==(const NamedTensor&) const = default;
};

/// Trainable extractor parameters: one weight and one bias per conv/fc layer,
/// in layer order. Conv weights are [out, in, k, k], fc weights [out, in].
struct NetParams {
  ArchSpec arch;
  std::vector<NamedTensor> tensors;
  /// Bumped by every sgd_step; a ForwardCache remembers the value it saw.
  std::uint64_t version = 0;

  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  std::size_t num_values() const;
};

/// Gradients congruent with NetParams::tensors (same names, same dims).
struct ParamGrads {
  std::vector<NamedTensor> tensors;

  const Tensor& at(std::string_view name) const;
  void scale(double factor);
};

/// rows x dim matrix of feature vectors, row-major.
struct FeatureBatch {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  FeatureBatch() = default;
  FeatureBatch(std::size_t r, std::size_t d) : rows(r), dim(d), data(r * d, 0.0) {}

  std::span<const double> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * dim, dim}; }
  bool operator==(const FeatureBatch&) const = default;
};

/// Everything backward() needs from one forward() call.
struct ForwardCache {
  std::string arch;
  std::uint64_t params_version = 0;
  std::size_t batch = 0;
  std::vector<AlignedBuffer> acts;                  // acts[i] = input of layer i, acts.back() = output
  std::vector<std::vector<std::uint32_t>> argmax;   // pool layers only
};

/// He-normal weights N(0, 2 / fan_in), zero biases.
NetParams init_network(const ArchSpec& arch, std::uint64_t seed);

struct ForwardResult {
  FeatureBatch features;
  ForwardCache cache;
};

ForwardResult forward(const NetParams& params, const Batch& batch);
/// Inference only; no cache is retained.
FeatureBatch extract_features(const NetParams& params, const Batch& batch);
/// Features for a whole set, in chunks of chunk_size samples.
FeatureBatch extract_features(const NetParams& params, const Dataset& dataset, std::size_t chunk_size = 256);
FeatureBatch extract_features(const NetParams& params, const ImageSet& images, std::size_t chunk_size = 256);

/// Gradients of sum_b <dL_dF[b], f_b> with respect to every parameter.
ParamGrads backward(const NetParams& params, const ForwardCache& cache, const FeatureBatch& dL_dF);

/// theta <- theta - lr * grad. Throws NumericError (naming the tensor) on
/// non-finite gradients and leaves params untouched in that case.
void sgd_step(NetParams& params, const ParamGrads& grads, double learning_rate);

// ---- softmax comparison head ----------------------------------------------

/// Linear C-way map on features: logits = W f + b, W is [C, d].
struct SoftmaxHead {
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<double> weight;
  std::vector<double> bias;
  bool operator==(const SoftmaxHead&) const = default;
};

SoftmaxHead init_softmax_head(std::size_t num_classes, std::size_t feature_dim, std::uint64_t seed);

/// Row-wise softmax of the head logits.
std::vector<double> softmax_probabilities(const SoftmaxHead& head, std::span<const double> feature);

struct SoftmaxStep {
  double loss = 0.0;  // summed over the batch
  std::size_t correct = 0;
  ParamGrads net_grads;
  SoftmaxHead head_grads;  // weight/bias hold gradients
};

/// Cross entropy summed over the batch together with its exact gradients.
SoftmaxStep baseline_softmax_step(const NetParams& params, const SoftmaxHead& head, const Batch& batch);

void sgd_step(SoftmaxHead& head, const SoftmaxHead& grads, double learning_rate);

}  // namespace cpl
