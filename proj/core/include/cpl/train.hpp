#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpl/arch.hpp"
#include "cpl/data.hpp"
#include "cpl/loss.hpp"
#include "cpl/net.hpp"
#include "cpl/proto.hpp"

namespace cpl {

/// How per-sample losses are combined into the batch objective.
enum class Reduction { mean, sum };

Reduction parse_reduction(std::string_view name);
std::string_view to_string(Reduction r);

struct TrainConfig {
  LossKind loss = LossKind::dce;
  LossHyper hyper;
  std::size_t prototypes_per_class = 1;
  ArchSpec arch = ArchSpec::mnist_default(2);
  double learning_rate = 0.001;
  std::size_t batch_size = 50;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  ProtoInit proto_init = ProtoInit::zeros;
  std::optional<double> subsample_fraction;  // stratified, applied to the training set
  Reduction reduction = Reduction::sum;
  /// Step decay: lr *= lr_decay every lr_decay_every epochs. 0 disables it.
  std::size_t lr_decay_every = 0;
  double lr_decay = 0.1;

  std::size_t feature_dim() const { return arch.feature_dim(); }
  /// Throws ParameterError for out-of-range settings.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::string split;      // "train" or "test"
  double loss = 0.0;
  double accuracy = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

/// Trained extractor plus prototypes.
struct Model {
  NetParams net;
  PrototypeBank bank;
  TrainConfig config;
  std::vector<EpochRecord> history;

  std::size_t num_classes() const { return bank.num_classes(); }
};

/// Softmax comparison network sharing the extractor layout.
struct SoftmaxModel {
  NetParams net;
  SoftmaxHead head;
  TrainConfig config;
  std::vector<EpochRecord> history;
};

struct EvalReport {
  double accuracy = 0.0;
  std::size_t num_classes = 0;
  std::vector<std::size_t> confusion;  // row = true class, column = predicted class
  double mean_loss = 0.0;
  std::vector<std::size_t> predictions;

  std::size_t total() const { return predictions.size(); }
  std::size_t confusion_at(std::size_t truth, std::size_t predicted) const {
    return confusion[truth * num_classes + predicted];
  }
  bool operator==(const EvalReport&) const = default;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch SGD on the extractor and the prototypes jointly.
///
/// Each step runs forward on the batch, evaluates combined_loss_grad per
/// sample, reduces over the batch, backpropagates the feature gradients and
/// then updates theta and the touched prototypes with the same learning rate.
/// Serial and deterministic for a fixed config. A non-finite loss aborts with
/// NumericError naming the epoch and step.
Model train(const TrainConfig& config, const Dataset& train_set, const Dataset* eval_set = nullptr,
            const EpochCallback& on_epoch = {});

SoftmaxModel train_softmax_baseline(const TrainConfig& config, const Dataset& train_set,
                                    const Dataset* eval_set = nullptr, const EpochCallback& on_epoch = {});

/// Nearest-prototype predictions over the dataset; mean_loss uses the model's
/// configured loss.
EvalReport evaluate(const Model& model, const Dataset& dataset);
EvalReport evaluate(const SoftmaxModel& model, const Dataset& dataset);

/// Mean squared distance from each training feature to its genuine prototype.
double mean_intra_class_distance(const Model& model, const Dataset& dataset);

}  // namespace cpl
