#include "cpl/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cpl/error.hpp"

namespace cpl {

Reduction parse_reduction(std::string_view name) {
  if (name == "mean") return Reduction::mean;
  if (name == "sum") return Reduction::sum;
  throw ParameterError("unknown batch reduction '" + std::string(name) + "' (mean|sum)");
}

std::string_view to_string(Reduction r) { return r == Reduction::mean ? "mean" : "sum"; }

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ParameterError("learning rate must be > 0");
  if (batch_size < 1) throw ParameterError("batch size must be >= 1");
  if (epochs < 1) throw ParameterError("epochs must be >= 1");
  if (prototypes_per_class < 1) throw ParameterError("prototypes per class (k) must be >= 1");
  if (subsample_fraction && !(*subsample_fraction > 0.0 && *subsample_fraction <= 1.0)) {
    throw ParameterError("subsample fraction must lie in (0, 1]");
  }
  if (lr_decay_every > 0 && !(lr_decay > 0.0)) throw ParameterError("lr decay factor must be > 0");
  hyper.validate(loss);
}

namespace {

void check_dataset(const Dataset& data, const ArchSpec& arch, const char* what) {
  if (data.empty()) throw ParameterError(std::string(what) + " is empty");
  if (!(data.shape == arch.input())) {
    throw ShapeError(std::string(what) + " image shape does not match the architecture input '" + arch.to_string() +
                     "'");
  }
  data.validate();
}

double learning_rate_for(const TrainConfig& config, std::size_t epoch_index) {
  double lr = config.learning_rate;
  if (config.lr_decay_every > 0) {
    for (std::size_t e = config.lr_decay_every; e <= epoch_index; e += config.lr_decay_every) lr *= config.lr_decay;
  }
  return lr;
}

// Shared epoch/batch loop. `step` consumes one batch and returns
// (summed loss, correct count); `evaluate_fn` runs after every epoch.
template <typename Step, typename Eval>
std::vector<EpochRecord> run_epochs(const TrainConfig& config, const Dataset& data, const Dataset* eval_set,
                                    const EpochCallback& on_epoch, Step&& step, Eval&& evaluate_fn) {
  std::vector<EpochRecord> history;
  const BatchSampler sampler(data.size(), config.batch_size, config.seed, true);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = learning_rate_for(config, epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t step_index = 0;
    for (const auto& indices : sampler.epoch(epoch)) {
      const Batch batch = gather(data, indices);
      const auto [batch_loss, batch_correct] = step(batch, lr, epoch, step_index);
      loss_sum += batch_loss;
      correct += batch_correct;
      ++step_index;
    }
    const auto n = static_cast<double>(data.size());
    history.push_back({epoch + 1, "train", loss_sum / n, static_cast<double>(correct) / n});
    if (on_epoch) on_epoch(history.back());
    if (eval_set) {
      const EvalReport report = evaluate_fn(*eval_set);
      history.push_back({epoch + 1, "test", report.mean_loss, report.accuracy});
      if (on_epoch) on_epoch(history.back());
    }
  }
  return history;
}

[[noreturn]] void non_finite(std::size_t epoch, std::size_t step, const std::string& what) {
  throw NumericError("training diverged: non-finite " + what + " at epoch " + std::to_string(epoch + 1) + ", step " +
                     std::to_string(step + 1));
}

}  // namespace

Model train(const TrainConfig& config, const Dataset& train_set, const Dataset* eval_set,
            const EpochCallback& on_epoch) {
  config.validate();
  check_dataset(train_set, config.arch, "training set");
  if (needs_rival(config.loss) && train_set.num_classes < 2) {
    throw UnsupportedError("rival class required: loss '" + std::string(to_string(config.loss)) +
                           "' needs at least 2 classes");
  }
  if (eval_set) check_dataset(*eval_set, config.arch, "evaluation set");

  const Dataset subset =
      config.subsample_fraction ? subsample(train_set, *config.subsample_fraction, config.seed, true) : Dataset{};
  const Dataset& data = config.subsample_fraction ? subset : train_set;

  const auto C = static_cast<std::size_t>(data.num_classes);
  const std::size_t K = config.prototypes_per_class;
  const std::size_t d = config.feature_dim();

  Model model;
  model.config = config;
  model.net = init_network(config.arch, config.seed);
  if (config.proto_init == ProtoInit::class_means) {
    const FeatureBatch initial = extract_features(model.net, data);
    model.bank = init_prototypes(config.proto_init, C, K, d, config.seed, &initial, data.labels);
  } else {
    model.bank = init_prototypes(config.proto_init, C, K, d, config.seed);
  }

  std::vector<double> proto_grad(model.bank.values().size());
  auto step = [&](const Batch& batch, double lr, std::size_t epoch, std::size_t step_index) {
    auto fw = forward(model.net, batch);
    const std::size_t B = batch.size();
    const double scale = config.reduction == Reduction::mean ? 1.0 / static_cast<double>(B) : 1.0;
    FeatureBatch dF(B, d);
    std::fill(proto_grad.begin(), proto_grad.end(), 0.0);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < B; ++b) {
      const auto f = fw.features.row(b);
      const auto y = static_cast<std::size_t>(batch.labels[b]);
      const LossGrad lg = combined_loss_grad(config.loss, f, y, model.bank, config.hyper);
      if (!std::isfinite(lg.loss)) non_finite(epoch, step_index, "loss");
      loss_sum += lg.loss;
      if (predict(model.bank, f).cls == y) ++correct;
      auto row = dF.row(b);
      for (std::size_t j = 0; j < d; ++j) row[j] = scale * lg.dL_df[j];
      for (const auto& [at, g] : lg.dL_dM) {
        double* dst = proto_grad.data() + (at.cls * K + at.k) * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += scale * g[j];
      }
    }
    for (double g : proto_grad) {
      if (!std::isfinite(g)) non_finite(epoch, step_index, "prototype gradient");
    }
    const ParamGrads grads = backward(model.net, fw.cache, dF);
    try {
      sgd_step(model.net, grads, lr);
    } catch (const NumericError& e) {
      non_finite(epoch, step_index, std::string("network gradient (") + e.what() + ")");
    }
    auto& values = model.bank.values();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * proto_grad[i];
    return std::pair{loss_sum, correct};
  };

  model.history = run_epochs(config, data, eval_set, on_epoch, step,
                             [&](const Dataset& eval) { return evaluate(model, eval); });
  return model;
}

SoftmaxModel train_softmax_baseline(const TrainConfig& config, const Dataset& train_set, const Dataset* eval_set,
                                    const EpochCallback& on_epoch) {
  config.validate();
  check_dataset(train_set, config.arch, "training set");
  if (eval_set) check_dataset(*eval_set, config.arch, "evaluation set");

  const Dataset subset =
      config.subsample_fraction ? subsample(train_set, *config.subsample_fraction, config.seed, true) : Dataset{};
  const Dataset& data = config.subsample_fraction ? subset : train_set;

  SoftmaxModel model;
  model.config = config;
  model.net = init_network(config.arch, config.seed);
  model.head = init_softmax_head(static_cast<std::size_t>(data.num_classes), config.feature_dim(), config.seed);

  auto step = [&](const Batch& batch, double lr, std::size_t epoch, std::size_t step_index) {
    SoftmaxStep s = baseline_softmax_step(model.net, model.head, batch);
    if (!std::isfinite(s.loss)) non_finite(epoch, step_index, "loss");
    if (config.reduction == Reduction::mean) {
      const double scale = 1.0 / static_cast<double>(batch.size());
      s.net_grads.scale(scale);
      for (double& v : s.head_grads.weight) v *= scale;
      for (double& v : s.head_grads.bias) v *= scale;
    }
    try {
      sgd_step(model.net, s.net_grads, lr);
      sgd_step(model.head, s.head_grads, lr);
    } catch (const NumericError& e) {
      non_finite(epoch, step_index, std::string("gradient (") + e.what() + ")");
    }
    return std::pair{s.loss, s.correct};
  };

  model.history = run_epochs(config, data, eval_set, on_epoch, step,
                             [&](const Dataset& eval) { return evaluate(model, eval); });
  return model;
}

namespace {

template <typename PerSample>
EvalReport evaluate_features(const FeatureBatch& features, const Dataset& dataset, std::size_t num_classes,
                             PerSample&& per_sample) {
  EvalReport report;
  report.num_classes = num_classes;
  report.confusion.assign(num_classes * num_classes, 0);
  report.predictions.resize(dataset.size());
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto y = static_cast<std::size_t>(dataset.labels[i]);
    const auto [predicted, loss] = per_sample(features.row(i), y);
    report.predictions[i] = predicted;
    ++report.confusion[y * num_classes + predicted];
    if (predicted == y) ++correct;
    loss_sum += loss;
  }
  const auto n = static_cast<double>(dataset.size());
  report.accuracy = static_cast<double>(correct) / n;
  report.mean_loss = loss_sum / n;
  return report;
}

void check_eval_set(const Dataset& dataset, const ArchSpec& arch, std::size_t num_classes) {
  if (dataset.empty()) throw ParameterError("evaluation set is empty");
  if (!(dataset.shape == arch.input())) throw ShapeError("evaluation set shape does not match the architecture input");
  for (int y : dataset.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw ParameterError("evaluation label " + std::to_string(y) + " is not a model class (C = " +
                           std::to_string(num_classes) + ")");
    }
  }
}

}  // namespace

EvalReport evaluate(const Model& model, const Dataset& dataset) {
  const std::size_t C = model.bank.num_classes();
  check_eval_set(dataset, model.net.arch, C);
  const FeatureBatch features = extract_features(model.net, dataset);
  const bool loss_defined = !needs_rival(model.config.loss) || C >= 2;
  return evaluate_features(features, dataset, C, [&](std::span<const double> f, std::size_t y) {
    const double loss =
        loss_defined ? combined_loss_grad(model.config.loss, f, y, model.bank, model.config.hyper).loss : 0.0;
    return std::pair{predict(model.bank, f).cls, loss};
  });
}

EvalReport evaluate(const SoftmaxModel& model, const Dataset& dataset) {
  const std::size_t C = model.head.num_classes;
  check_eval_set(dataset, model.net.arch, C);
  const FeatureBatch features = extract_features(model.net, dataset);
  return evaluate_features(features, dataset, C, [&](std::span<const double> f, std::size_t y) {
    const auto p = softmax_probabilities(model.head, f);
    const auto predicted = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    return std::pair{predicted, -std::log(std::max(p[y], std::numeric_limits<double>::min()))};
  });
}

double mean_intra_class_distance(const Model& model, const Dataset& dataset) {
  check_eval_set(dataset, model.net.arch, model.bank.num_classes());
  const FeatureBatch features = extract_features(model.net, dataset);
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    double dist = 0.0;
    nearest_genuine(model.bank, features.row(i), static_cast<std::size_t>(dataset.labels[i]), &dist);
    total += dist;
  }
  return total / static_cast<double>(dataset.size());
}

}  // namespace cpl
