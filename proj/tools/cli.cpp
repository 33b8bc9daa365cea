#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "cpl/checkpoint.hpp"
#include "cpl/data.hpp"
#include "cpl/error.hpp"
#include "cpl/gradcheck.hpp"
#include "cpl/openset.hpp"
#include "cpl/report.hpp"
#include "cpl/rng.hpp"
#include "cpl/train.hpp"

namespace cpl::cli {

namespace {

namespace fs = std::filesystem;

struct Failure {
  int code;
  std::string message;
};

int code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
  if (dynamic_cast<const ParameterError*>(&e) || dynamic_cast<const UsageError*>(&e) ||
      dynamic_cast<const UnsupportedError*>(&e)) {
    return kUsage;
  }
  return kData;
}

// Runs f, prefixing any library error with the flag and path it came from.
template <typename F>
auto from_source(const std::string& flag, const std::string& path, F&& f) {
  try {
    return f();
  } catch (const Failure&) {
    throw;
  } catch (const std::exception& e) {
    throw Failure{code_for(e), flag + " '" + path + "': " + e.what()};
  }
}

[[noreturn]] void usage(const std::string& message) { throw Failure{kUsage, message}; }

// Output files are only written once all inputs are loaded and the work is
// done; this catches a missing directory before any of that starts.
void check_writable_target(const std::string& flag, const std::string& path) {
  if (path.empty()) return;
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw Failure{kData, flag + " '" + path + "': directory '" + parent.string() + "' does not exist"};
  }
}

void write_output(const std::string& flag, const std::string& path, const std::string& text) {
  from_source(flag, path, [&] {
    write_text_file(path, text);
    return 0;
  });
}

Model read_model(const std::string& path) {
  return from_source("--model", path, [&] { return load_model(path); });
}

void write_model(const std::string& flag, const std::string& path, const Model& model) {
  from_source(flag, path, [&] {
    save_model(model, path);
    return 0;
  });
}

Dataset read_dataset(const std::string& images_flag, const std::string& images, const std::string& labels_flag,
                     const std::string& labels, int num_classes = 0) {
  try {
    return load_idx_dataset(images, labels, num_classes);
  } catch (const std::exception& e) {
    throw Failure{code_for(e), images_flag + " '" + images + "' / " + labels_flag + " '" + labels + "': " + e.what()};
  }
}

ImageSet read_images(const std::string& flag, const std::string& path) {
  return from_source(flag, path, [&] { return load_idx_image_set(path); });
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(3) << v;
  return s.str();
}

// ---- --config overlay ------------------------------------------------------

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

// Expands `--config FILE` (lines of key=value) into flags for the active
// subcommand. Flags given explicitly on the command line win.
std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app) {
  if (args.empty() || args[0].empty() || args[0][0] == '-') return args;
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[0]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }
  std::optional<std::string> path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path) return args;

  std::ifstream in(*path);
  if (!in) throw Failure{kData, "--config '" + *path + "': cannot open file"};
  std::vector<std::string> extra;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      usage("--config '" + *path + "' line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    while (!key.empty() && key[0] == '-') key.erase(0, 1);
    const std::string flag = "--" + key;
    if (key == "config" || key == "help" || sub->get_option_no_throw(flag) == nullptr) {
      usage("--config '" + *path + "' line " + std::to_string(line_no) + ": unknown key '" + key + "' for '" +
            args[0] + "'");
    }
    if (!has_flag(args, flag)) extra.push_back(flag + "=" + value);
  }
  std::vector<std::string> out{args[0]};
  out.insert(out.end(), extra.begin(), extra.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

// ---- subcommands -----------------------------------------------------------

struct TrainFlags {
  std::string loss = "dce";
  double pl_weight = 0.001;
  double gamma = 1.0;
  double xi = 1.0;
  std::optional<double> margin;
  std::size_t k = 1;
  std::size_t feat_dim = 2;
  std::string arch;
  std::size_t epochs = 20;
  double lr = 0.001;
  std::size_t batch_size = 50;
  std::uint64_t seed = 0;
  std::string proto_init = "zeros";
  std::optional<double> subsample_frac;
  std::string reduction = "sum";
  std::size_t lr_decay_every = 0;
  double lr_decay = 0.1;
  std::string train_images, train_labels, test_images, test_labels, out, metrics, config;
  bool quiet = false;
};

int run_train(const TrainFlags& f, std::ostream& out) {
  TrainConfig config;
  config.loss = parse_loss_kind(f.loss);
  config.hyper.lambda = f.pl_weight;
  config.hyper.gamma = f.gamma;
  config.hyper.xi = f.xi;
  config.hyper.margin = f.margin;
  config.prototypes_per_class = f.k;
  config.epochs = f.epochs;
  config.learning_rate = f.lr;
  config.batch_size = f.batch_size;
  config.seed = f.seed;
  config.proto_init = parse_proto_init(f.proto_init);
  config.subsample_fraction = f.subsample_frac;
  config.reduction = parse_reduction(f.reduction);
  config.lr_decay_every = f.lr_decay_every;
  config.lr_decay = f.lr_decay;
  if (f.feat_dim < 1) usage("--feat-dim must be >= 1");
  if (!f.arch.empty()) {
    try {
      config.arch = ArchSpec::parse(f.arch);
    } catch (const std::exception& e) {
      usage(std::string("--arch '") + f.arch + "': " + e.what());
    }
  } else {
    config.arch = ArchSpec::mnist_default(f.feat_dim);
  }
  config.validate();
  if (f.test_images.empty() != f.test_labels.empty()) usage("--test-images and --test-labels must be given together");
  check_writable_target("--out", f.out);
  check_writable_target("--metrics", f.metrics);

  const Dataset train_set = read_dataset("--train-images", f.train_images, "--train-labels", f.train_labels);
  std::optional<Dataset> test_set;
  if (!f.test_images.empty()) {
    test_set = read_dataset("--test-images", f.test_images, "--test-labels", f.test_labels, train_set.num_classes);
  }

  const EpochCallback report = [&](const EpochRecord& r) {
    if (!f.quiet) {
      out << "epoch " << r.epoch << " " << r.split << " loss=" << fixed(r.loss, 6) << " accuracy=" << fixed(r.accuracy)
          << "\n";
    }
  };
  const Model model = train(config, train_set, test_set ? &*test_set : nullptr, report);

  write_model("--out", f.out, model);
  if (!f.metrics.empty()) write_output("--metrics", f.metrics, metrics_csv(model.history));
  out << "saved " << f.out << " (C=" << model.bank.num_classes() << ", K=" << model.bank.per_class()
      << ", d=" << model.bank.feature_dim() << ")\n";
  return kOk;
}

struct EvalFlags {
  std::string model, images, labels, loss = "dce", predictions, config;
  double gamma = 1.0;
  double pl_weight = 0.001;
};

int run_eval(const EvalFlags& f, std::ostream& out) {
  check_writable_target("--predictions", f.predictions);
  Model model = read_model(f.model);
  model.config.loss = parse_loss_kind(f.loss);
  model.config.hyper.gamma = f.gamma;
  model.config.hyper.lambda = f.pl_weight;
  model.config.hyper.validate(model.config.loss);
  const Dataset data =
      read_dataset("--images", f.images, "--labels", f.labels, static_cast<int>(model.bank.num_classes()));
  const EvalReport report = from_source("--images", f.images, [&] { return evaluate(model, data); });

  const std::size_t correct = static_cast<std::size_t>(std::llround(report.accuracy * static_cast<double>(data.size())));
  out << "accuracy=" << fixed(report.accuracy, 6) << " (" << correct << "/" << data.size() << ")"
      << " mean_loss=" << fixed(report.mean_loss, 6) << "\n";
  out << "confusion (rows = true class):\n";
  for (std::size_t t = 0; t < report.num_classes; ++t) {
    for (std::size_t p = 0; p < report.num_classes; ++p) out << (p ? " " : "") << report.confusion_at(t, p);
    out << "\n";
  }
  if (!f.predictions.empty()) {
    std::string csv = "index,label,predicted\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
      csv += std::to_string(i) + "," + std::to_string(data.labels[i]) + "," + std::to_string(report.predictions[i]) +
             "\n";
    }
    write_output("--predictions", f.predictions, csv);
  }
  return kOk;
}

struct GradcheckFlags {
  std::string loss = "all";
  std::size_t trials = 100;
  double step = 1e-5;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  std::string config;
};

int run_gradcheck(const GradcheckFlags& f, std::ostream& out) {
  std::vector<CheckedLoss> losses;
  if (f.loss == "all") {
    losses = {CheckedLoss::mce, CheckedLoss::mcl, CheckedLoss::gmcl,
              CheckedLoss::dce, CheckedLoss::pl,  CheckedLoss::combined};
  } else {
    losses = {parse_checked_loss(f.loss)};
  }
  GradCheckOptions options;
  options.trials = f.trials;
  options.step = f.step;
  options.tolerance = f.tol;
  options.seed = f.seed;
  bool all_passed = true;
  for (CheckedLoss loss : losses) {
    const GradCheckReport r = gradient_check(loss, options);
    all_passed = all_passed && r.passed;
    out << to_string(loss) << ": trials=" << r.trials << " skipped=" << r.skipped
        << " max_rel_error=" << sci(r.max_rel_error) << " tol=" << sci(r.tolerance) << " "
        << (r.passed ? "PASS" : "FAIL") << "\n";
  }
  return all_passed ? kOk : kNumeric;
}

struct RejectFlags {
  std::string model, in_images, in_labels, out_images, mode = "dist", curve_out, confidences_out, config;
  std::optional<std::size_t> noise_count;
  double gamma = 1.0;
  std::size_t num_thresholds = 0;
  std::uint64_t seed = 0;
};

int run_reject(const RejectFlags& f, std::ostream& out) {
  const ConfidenceMode mode = parse_confidence_mode(f.mode);
  if (f.out_images.empty() == !f.noise_count.has_value()) usage("exactly one of --out-images or --noise-count is required");
  if (f.noise_count && *f.noise_count == 0) usage("--noise-count must be >= 1");
  if (!(f.gamma > 0.0)) usage("--gamma must be > 0");
  check_writable_target("--curve-out", f.curve_out);
  check_writable_target("--confidences-out", f.confidences_out);

  Model model = read_model(f.model);
  model.config.hyper.gamma = f.gamma;
  ImageSet in_images;
  if (!f.in_labels.empty()) {
    Dataset ds = read_dataset("--in-images", f.in_images, "--in-labels", f.in_labels);
    in_images.shape = ds.shape;
    in_images.pixels = std::move(ds.pixels);
  } else {
    in_images = read_images("--in-images", f.in_images);
  }
  const ImageSet outliers = f.noise_count ? make_uniform_noise(*f.noise_count, model.net.arch.input(), f.seed)
                                          : read_images("--out-images", f.out_images);
  if (in_images.size() == 0) usage("--in-images '" + f.in_images + "' holds no images");
  if (outliers.size() == 0) usage("--out-images '" + f.out_images + "' holds no images");

  const auto in_conf = from_source("--in-images", f.in_images, [&] { return confidences(model, in_images, mode); });
  const auto out_conf = from_source(f.noise_count ? "--noise-count" : "--out-images",
                                    f.noise_count ? std::to_string(*f.noise_count) : f.out_images,
                                    [&] { return confidences(model, outliers, mode); });
  const RejectionCurve curve = ar_rr_curve(in_conf, out_conf, mode, f.num_thresholds);

  out << "mode=" << to_string(mode) << " in=" << in_conf.size() << " out=" << out_conf.size()
      << " thresholds=" << curve.points.size() << "\n";
  for (double target : {0.99, 0.98, 0.95}) {
    double best_rr = 0.0;
    for (const auto& p : curve.points) {
      if (p.ar >= target) best_rr = std::max(best_rr, p.rr);
    }
    out << "max RR at AR >= " << fixed(target, 2) << ": " << fixed(best_rr) << "\n";
  }
  if (!f.curve_out.empty()) write_output("--curve-out", f.curve_out, curve_csv(curve));
  if (!f.confidences_out.empty()) {
    std::string csv = "set,confidence\n";
    for (double c : in_conf) csv += "in," + format_real(c) + "\n";
    for (double c : out_conf) csv += "out," + format_real(c) + "\n";
    write_output("--confidences-out", f.confidences_out, csv);
  }
  return kOk;
}

struct ExtendFlags {
  std::string model, new_images, out, config;
  std::uint64_t seed = 0;
};

int run_extend(const ExtendFlags& f, std::ostream& out) {
  check_writable_target("--out", f.out);
  const Model model = read_model(f.model);
  const ImageSet images = read_images("--new-images", f.new_images);
  const Model extended = from_source("--new-images", f.new_images, [&] { return extend_model(model, images, f.seed); });
  write_model("--out", f.out, extended);
  out << "extended " << model.bank.num_classes() << " -> " << extended.bank.num_classes() << " classes from "
      << images.size() << " images; saved " << f.out << "\n";
  return kOk;
}

struct FeaturesFlags {
  std::string model, images, labels, out, config;
};

int run_features(const FeaturesFlags& f, std::ostream& out) {
  check_writable_target("--out", f.out);
  const Model model = read_model(f.model);
  ImageSet images;
  std::vector<int> labels;
  if (!f.labels.empty()) {
    Dataset ds = read_dataset("--images", f.images, "--labels", f.labels, static_cast<int>(model.bank.num_classes()));
    images.shape = ds.shape;
    images.pixels = std::move(ds.pixels);
    labels = std::move(ds.labels);
  } else {
    images = read_images("--images", f.images);
  }
  const FeatureBatch features =
      from_source("--images", f.images, [&] { return extract_features(model.net, images); });
  write_output("--out", f.out, features_csv(features, labels));
  out << "wrote " << features.rows << " feature rows (d=" << model.bank.feature_dim() << ") to " << f.out << "\n";
  return kOk;
}

struct SynthFlags {
  std::string kind = "blobs";
  int classes = 2;
  std::size_t per_class = 100;
  std::size_t count = 1000;
  std::size_t height = 28;
  std::size_t width = 28;
  double sigma = 0.1;
  std::uint64_t seed = 0;
  std::string images_out, labels_out, config;
};

int run_synth(const SynthFlags& f, std::ostream& out) {
  if (f.kind != "blobs" && f.kind != "noise") usage("--kind must be blobs or noise, got '" + f.kind + "'");
  if (f.height < 1 || f.width < 1) usage("--height and --width must be >= 1");
  if (f.kind == "blobs" && f.labels_out.empty()) usage("--labels-out is required for --kind blobs");
  check_writable_target("--images-out", f.images_out);
  check_writable_target("--labels-out", f.labels_out);
  const ImageShape shape{1, f.height, f.width};

  std::vector<std::uint8_t> image_bytes;
  std::vector<std::uint8_t> label_bytes;
  std::size_t n = 0;
  if (f.kind == "noise") {
    if (f.count < 1) usage("--count must be >= 1");
    const ImageSet noise = make_uniform_noise(f.count, shape, f.seed);
    image_bytes = encode_idx_images(quantize(noise));
    n = noise.size();
  } else {
    if (f.classes < 1 || f.classes > 256) usage("--classes must lie in [1, 256]");
    // Class centers: one uniform [0.2, 0.8] image per class from its own stream.
    std::vector<std::vector<double>> centers;
    for (int c = 0; c < f.classes; ++c) {
      Rng rng(f.seed, 0xc0 + static_cast<std::uint64_t>(c));
      std::vector<double> center(shape.size());
      for (double& v : center) v = 0.2 + 0.6 * rng.uniform();
      centers.push_back(std::move(center));
    }
    const Dataset blobs = make_gaussian_blobs(f.classes, f.per_class, shape, centers, f.sigma, f.seed);
    ImageSet images{blobs.shape, blobs.pixels};
    image_bytes = encode_idx_images(quantize(images));
    label_bytes.assign(blobs.labels.begin(), blobs.labels.end());
    label_bytes = encode_idx_labels(label_bytes);
    n = blobs.size();
  }
  from_source("--images-out", f.images_out, [&] {
    write_text_file(f.images_out, std::string(image_bytes.begin(), image_bytes.end()));
    return 0;
  });
  if (!label_bytes.empty()) {
    from_source("--labels-out", f.labels_out, [&] {
      write_text_file(f.labels_out, std::string(label_bytes.begin(), label_bytes.end()));
      return 0;
    });
  }
  out << "wrote " << n << " " << f.kind << " images (" << f.height << "x" << f.width << ")\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Convolutional prototype learning: train, evaluate, reject and extend nearest-prototype models",
               "cpl"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train an extractor and prototypes jointly");
  train_cmd->add_option("--loss", tf.loss, "Classification loss")->check(CLI::IsMember({"mce", "mcl", "gmcl", "dce"}));
  train_cmd->add_option("--pl-weight", tf.pl_weight, "Prototype-loss weight lambda (0 disables it)");
  train_cmd->add_option("--gamma", tf.gamma, "DCE hardness gamma");
  train_cmd->add_option("--xi", tf.xi, "MCE sigmoid slope");
  train_cmd->add_option("--margin", tf.margin, "Hinge margin (default 1.0 for mcl, 0.3 for gmcl)");
  train_cmd->add_option("--k", tf.k, "Prototypes per class");
  train_cmd->add_option("--feat-dim", tf.feat_dim, "Feature dimension d of the default architecture");
  train_cmd->add_option("--arch", tf.arch, "Architecture string, e.g. in:1x28x28;conv:32,5,1,2;relu;pool:2;fc:2");
  train_cmd->add_option("--epochs", tf.epochs, "Training epochs");
  train_cmd->add_option("--lr", tf.lr, "Learning rate for the network and the prototypes");
  train_cmd->add_option("--batch-size", tf.batch_size, "Mini-batch size");
  train_cmd->add_option("--seed", tf.seed, "Seed for init, shuffling and subsampling");
  train_cmd->add_option("--proto-init", tf.proto_init, "Prototype initialisation")
      ->check(CLI::IsMember({"zeros", "mean", "random"}));
  train_cmd->add_option("--subsample-frac", tf.subsample_frac, "Stratified fraction of the training set to keep");
  train_cmd->add_option("--reduction", tf.reduction, "Batch objective: sum or mean of per-sample losses")
      ->check(CLI::IsMember({"sum", "mean"}));
  train_cmd->add_option("--lr-decay-every", tf.lr_decay_every, "Multiply lr by --lr-decay every N epochs (0 = off)");
  train_cmd->add_option("--lr-decay", tf.lr_decay, "Step-decay factor");
  train_cmd->add_option("--train-images", tf.train_images, "IDX training images")->required();
  train_cmd->add_option("--train-labels", tf.train_labels, "IDX training labels")->required();
  train_cmd->add_option("--test-images", tf.test_images, "IDX test images (evaluated after every epoch)");
  train_cmd->add_option("--test-labels", tf.test_labels, "IDX test labels");
  train_cmd->add_option("--out", tf.out, "Checkpoint output path")->required();
  train_cmd->add_option("--metrics", tf.metrics, "Metrics CSV output path");
  train_cmd->add_option("--config", tf.config, "File of key=value lines overlaying these flags");
  train_cmd->add_flag("--quiet", tf.quiet, "Do not print per-epoch metrics");

  EvalFlags ef;
  auto* eval_cmd = app.add_subcommand("eval", "Nearest-prototype accuracy and confusion matrix");
  eval_cmd->add_option("--model", ef.model, "Checkpoint path")->required();
  eval_cmd->add_option("--images", ef.images, "IDX images")->required();
  eval_cmd->add_option("--labels", ef.labels, "IDX labels")->required();
  eval_cmd->add_option("--loss", ef.loss, "Loss reported as mean_loss")->check(CLI::IsMember({"mce", "mcl", "gmcl", "dce"}));
  eval_cmd->add_option("--gamma", ef.gamma, "DCE hardness gamma");
  eval_cmd->add_option("--pl-weight", ef.pl_weight, "Prototype-loss weight used in mean_loss");
  eval_cmd->add_option("--predictions", ef.predictions, "Per-sample predictions CSV output path");
  eval_cmd->add_option("--config", ef.config, "File of key=value lines overlaying these flags");

  GradcheckFlags gf;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic loss gradients with central differences");
  grad_cmd->add_option("--loss", gf.loss, "Loss to check")
      ->check(CLI::IsMember({"all", "mce", "mcl", "gmcl", "dce", "pl", "combined"}));
  grad_cmd->add_option("--trials", gf.trials, "Random instances per loss");
  grad_cmd->add_option("--step", gf.step, "Central-difference step");
  grad_cmd->add_option("--tol", gf.tol, "Maximum accepted relative error");
  grad_cmd->add_option("--seed", gf.seed, "Instance seed");
  grad_cmd->add_option("--config", gf.config, "File of key=value lines overlaying these flags");

  RejectFlags rf;
  auto* reject_cmd = app.add_subcommand("reject", "Acceptance/rejection tradeoff against an outlier set");
  reject_cmd->add_option("--model", rf.model, "Checkpoint path")->required();
  reject_cmd->add_option("--in-images", rf.in_images, "In-distribution IDX images")->required();
  reject_cmd->add_option("--in-labels", rf.in_labels, "In-distribution IDX labels (optional; only checked)");
  reject_cmd->add_option("--out-images", rf.out_images, "Outlier IDX images");
  reject_cmd->add_option("--noise-count", rf.noise_count, "Use this many uniform-noise outliers instead");
  reject_cmd->add_option("--mode", rf.mode, "Confidence statistic")->check(CLI::IsMember({"prob", "dist"}));
  reject_cmd->add_option("--gamma", rf.gamma, "Hardness gamma for --mode prob");
  reject_cmd->add_option("--num-thresholds", rf.num_thresholds, "Keep at most this many thresholds (0 = all)");
  reject_cmd->add_option("--seed", rf.seed, "Noise seed");
  reject_cmd->add_option("--curve-out", rf.curve_out, "Curve CSV output path");
  reject_cmd->add_option("--confidences-out", rf.confidences_out, "Per-sample confidence CSV output path");
  reject_cmd->add_option("--config", rf.config, "File of key=value lines overlaying these flags");

  ExtendFlags xf;
  auto* extend_cmd = app.add_subcommand("extend", "Add one class from new images without retraining");
  extend_cmd->add_option("--model", xf.model, "Checkpoint path")->required();
  extend_cmd->add_option("--new-images", xf.new_images, "IDX images of the new class")->required();
  extend_cmd->add_option("--out", xf.out, "Extended checkpoint output path")->required();
  extend_cmd->add_option("--seed", xf.seed, "k-means seed (K > 1)");
  extend_cmd->add_option("--config", xf.config, "File of key=value lines overlaying these flags");

  FeaturesFlags ff;
  auto* features_cmd = app.add_subcommand("features", "Dump extractor features as CSV");
  features_cmd->add_option("--model", ff.model, "Checkpoint path")->required();
  features_cmd->add_option("--images", ff.images, "IDX images")->required();
  features_cmd->add_option("--labels", ff.labels, "IDX labels (optional)");
  features_cmd->add_option("--out", ff.out, "Feature CSV output path")->required();
  features_cmd->add_option("--config", ff.config, "File of key=value lines overlaying these flags");

  SynthFlags sf;
  auto* synth_cmd = app.add_subcommand("synth", "Write Gaussian-blob or uniform-noise IDX files");
  synth_cmd->add_option("--kind", sf.kind, "blobs or noise")->check(CLI::IsMember({"blobs", "noise"}));
  synth_cmd->add_option("--classes", sf.classes, "Blob classes");
  synth_cmd->add_option("--per-class", sf.per_class, "Blob samples per class");
  synth_cmd->add_option("--count", sf.count, "Noise images");
  synth_cmd->add_option("--height", sf.height, "Image height");
  synth_cmd->add_option("--width", sf.width, "Image width");
  synth_cmd->add_option("--sigma", sf.sigma, "Blob pixel standard deviation");
  synth_cmd->add_option("--seed", sf.seed, "Generator seed");
  synth_cmd->add_option("--images-out", sf.images_out, "IDX image output path")->required();
  synth_cmd->add_option("--labels-out", sf.labels_out, "IDX label output path (blobs)");
  synth_cmd->add_option("--config", sf.config, "File of key=value lines overlaying these flags");

  try {
    std::vector<std::string> argv = expand_config(args, app);
    std::reverse(argv.begin(), argv.end());
    try {
      app.parse(argv);
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) {
        app.exit(e, out, err);
        return kOk;
      }
      err << "error: " << e.what() << "\n";
      if (!app.get_subcommands().empty()) err << "run '" << app.get_subcommands()[0]->get_name() << " --help' for usage\n";
      return kUsage;
    }

    if (train_cmd->parsed()) return run_train(tf, out);
    if (eval_cmd->parsed()) return run_eval(ef, out);
    if (grad_cmd->parsed()) return run_gradcheck(gf, out);
    if (reject_cmd->parsed()) return run_reject(rf, out);
    if (extend_cmd->parsed()) return run_extend(xf, out);
    if (features_cmd->parsed()) return run_features(ff, out);
    if (synth_cmd->parsed()) return run_synth(sf, out);
    return kUsage;
  } catch (const Failure& f) {
    err << "error: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return code_for(e);
  }
}

}  // namespace cpl::cli
