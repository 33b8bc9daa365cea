// Acceptance harness: one PASS/FAIL line per criterion.
//
//   cpl_acceptance [--full] [--mnist DIR] [--only 1,4,9] [--work DIR]
//
// Without --full the MNIST headline run uses the stratified 10k-sample
// training subset; --full trains on all 60k images instead.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli.hpp"
#include "cpl/checkpoint.hpp"
#include "cpl/data.hpp"
#include "cpl/error.hpp"
#include "cpl/gradcheck.hpp"
#include "cpl/openset.hpp"
#include "cpl/proto.hpp"
#include "cpl/rng.hpp"
#include "cpl/train.hpp"

namespace fs = std::filesystem;
using namespace cpl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string pct(double v) { return fmt("%.2f%%", 100.0 * v); }

struct Outcome {
  bool passed = false;
  std::string detail;
};

constexpr double kSubsetFraction = 10000.0 / 60000.0;
constexpr std::uint64_t kNoiseSeed = 0x6e6f697365;

class Harness {
 public:
  Harness(fs::path mnist, fs::path work, bool full) : mnist_(std::move(mnist)), work_(std::move(work)), full_(full) {}

  bool have_mnist() const { return !mnist_.empty() && fs::exists(mnist_ / "train-images-idx3-ubyte"); }

  const Dataset& train_set() {
    if (!train_) {
      train_ = load_idx_dataset(mnist_ / "train-images-idx3-ubyte", mnist_ / "train-labels-idx1-ubyte", 10);
    }
    return *train_;
  }
  const Dataset& test_set() {
    if (!test_) test_ = load_idx_dataset(mnist_ / "t10k-images-idx3-ubyte", mnist_ / "t10k-labels-idx1-ubyte", 10);
    return *test_;
  }

  static TrainConfig headline_config() {
    TrainConfig c;
    c.loss = LossKind::dce;
    c.hyper.lambda = 0.001;
    c.hyper.gamma = 1.0;
    c.arch = ArchSpec::mnist_default(2);
    c.learning_rate = 0.001;
    c.batch_size = 50;
    c.epochs = 20;
    c.seed = 0;
    return c;
  }

  // GCPL on the 10k subset with K prototypes per class.
  const Model& subset_model(std::size_t K) {
    auto it = subset_models_.find(K);
    if (it == subset_models_.end()) {
      TrainConfig c = headline_config();
      c.subsample_fraction = kSubsetFraction;
      c.prototypes_per_class = K;
      const auto start = Clock::now();
      Model m = train(c, train_set());
      subset_train_seconds_[K] = seconds_since(start);
      log("trained K=" + std::to_string(K) + " GCPL on the 10k subset in " + fmt("%.0f s", subset_train_seconds_[K]));
      it = subset_models_.emplace(K, std::move(m)).first;
    }
    return it->second;
  }
  double subset_train_seconds(std::size_t K) {
    subset_model(K);
    return subset_train_seconds_.at(K);
  }

  // The model every MNIST-level criterion shares: full data with --full, else the 10k subset.
  const Model& headline_model() {
    if (!full_) return subset_model(1);
    if (!full_model_) {
      const auto start = Clock::now();
      full_model_ = train(headline_config(), train_set());
      full_train_seconds_ = seconds_since(start);
      log("trained GCPL on all training data in " + fmt("%.0f s", full_train_seconds_));
    }
    return *full_model_;
  }
  double headline_train_seconds() {
    headline_model();
    return full_ ? full_train_seconds_ : subset_train_seconds(1);
  }

  const SoftmaxModel& headline_softmax() {
    if (!softmax_) {
      TrainConfig c = headline_config();
      if (!full_) c.subsample_fraction = kSubsetFraction;
      const auto start = Clock::now();
      softmax_ = train_softmax_baseline(c, train_set());
      log("trained the softmax baseline in " + fmt("%.0f s", seconds_since(start)));
    }
    return *softmax_;
  }

  const EvalReport& headline_report() {
    if (!headline_report_) headline_report_ = evaluate(headline_model(), test_set());
    return *headline_report_;
  }

  bool full() const { return full_; }
  const fs::path& mnist() const { return mnist_; }
  const fs::path& work() const { return work_; }

  static void log(const std::string& line) { std::cerr << "  .. " << line << std::endl; }

 private:
  fs::path mnist_;
  fs::path work_;
  bool full_;
  std::optional<Dataset> train_, test_;
  std::map<std::size_t, Model> subset_models_;
  std::map<std::size_t, double> subset_train_seconds_;
  std::optional<Model> full_model_;
  double full_train_seconds_ = 0.0;
  std::optional<SoftmaxModel> softmax_;
  std::optional<EvalReport> headline_report_;
};

// ---- 1: gradient suite -----------------------------------------------------

Outcome gradient_suite(Harness&) {
  const auto start = Clock::now();
  bool ok = true;
  std::ostringstream detail;
  for (CheckedLoss loss : {CheckedLoss::mce, CheckedLoss::mcl, CheckedLoss::gmcl, CheckedLoss::dce, CheckedLoss::pl,
                           CheckedLoss::combined}) {
    GradCheckOptions opts;
    opts.trials = 100;
    opts.step = 1e-5;
    opts.tolerance = 1e-6;
    opts.max_dim = 8;
    opts.max_classes = 4;
    opts.max_per_class = 3;
    const GradCheckReport r = gradient_check(loss, opts);
    ok = ok && r.passed && r.trials == 100;
    detail << to_string(loss) << "=" << fmt("%.1e", r.max_rel_error) << " ";
  }
  const double secs = seconds_since(start);
  ok = ok && secs < 60.0;
  detail << "(max rel. error, tol 1e-6) runtime " << fmt("%.1f s", secs) << " (limit 60 s)";
  return {ok, detail.str()};
}

// ---- 2: brute-force oracle equivalence --------------------------------------

Outcome oracle_equivalence(Harness&) {
  const auto start = Clock::now();
  Rng rng(2024);
  std::size_t mismatches = 0;
  double worst_sum = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t C = 1 + rng.below(8), K = 1 + rng.below(4), d = 1 + rng.below(8);
    std::vector<double> values(C * K * d);
    for (double& v : values) v = rng.normal();
    const PrototypeBank bank(C, K, d, values);
    std::vector<double> f(d);
    for (double& v : f) v = 1.5 * rng.normal();

    // Exhaustive scan, first strictly smaller distance wins.
    std::size_t best_c = 0, best_k = 0;
    double best = INFINITY;
    std::vector<double> class_min(C, INFINITY);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t k = 0; k < K; ++k) {
        double dist = 0.0;
        for (std::size_t j = 0; j < d; ++j) dist += (f[j] - values[(c * K + k) * d + j]) * (f[j] - values[(c * K + k) * d + j]);
        class_min[c] = std::min(class_min[c], dist);
        if (dist < best) best = dist, best_c = c, best_k = k;
      }
    }
    const Prediction p = predict(bank, f);
    if (p.cls != best_c || p.index != best_k || p.distance != best) ++mismatches;
    for (std::size_t c = 0; c < C; ++c) {
      if (discriminant(bank, f, c) != -class_min[c]) ++mismatches;
    }
    for (double gamma : {0.01, 1.0, 100.0}) {
      const auto probs = prototype_probabilities(bank, f, gamma);
      double sp = 0.0, sc = 0.0;
      for (double v : probs.per_prototype) sp += v;
      for (double v : probs.per_class) sc += v;
      worst_sum = std::max({worst_sum, std::abs(sp - 1.0), std::abs(sc - 1.0)});
    }
  }
  const double secs = seconds_since(start);
  const bool ok = mismatches == 0 && worst_sum <= 1e-12 && secs < 10.0;
  return {ok, "1000 banks, " + std::to_string(mismatches) + " mismatches, max |sum p - 1| = " +
                  fmt("%.1e", worst_sum) + " (tol 1e-12), runtime " + fmt("%.2f s", secs) + " (limit 10 s)"};
}

// ---- 3: linear decision boundary --------------------------------------------

Outcome boundary_linearity(Harness&) {
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t C = 2 + rng.below(5), d = 1 + rng.below(8);
    std::vector<double> values(C * d);
    for (double& v : values) v = rng.normal();
    const PrototypeBank bank(C, 1, d, values);
    const std::size_t i = rng.below(C);
    std::size_t k = rng.below(C - 1);
    if (k >= i) ++k;
    const auto mi = bank.prototype(i, 0), mk = bank.prototype(k, 0);
    // Hyperplane w.f = b with w = 2 (m_k - m_i), b = |m_k|^2 - |m_i|^2; project a random point onto it.
    std::vector<double> w(d), f(d);
    double b = 0.0, ww = 0.0, wf = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      w[j] = 2.0 * (mk[j] - mi[j]);
      b += mk[j] * mk[j] - mi[j] * mi[j];
      ww += w[j] * w[j];
      f[j] = 2.0 * rng.normal();
      wf += w[j] * f[j];
    }
    for (std::size_t j = 0; j < d; ++j) f[j] -= (wf - b) / ww * w[j];
    worst = std::max(worst, std::abs(discriminant(bank, f, i) - discriminant(bank, f, k)));
  }
  return {worst <= 1e-9, "100 K=1 banks, max |g_i - g_k| on the hyperplane = " + fmt("%.2e", worst) + " (tol 1e-9)"};
}

// ---- 4: MNIST headline ------------------------------------------------------

Outcome mnist_headline(Harness& h) {
  const double secs = h.headline_train_seconds();
  const double acc = h.headline_report().accuracy;
  const double target = h.full() ? 0.988 : 0.975;
  const double limit = h.full() ? 7200.0 : 600.0;
  const bool ok = acc >= target && secs <= limit;
  return {ok, std::string(h.full() ? "full 60k" : "10k subset") + ", 20 epochs: test accuracy " + pct(acc) +
                  " (target >= " + pct(target) + "), training time " + fmt("%.0f s", secs) + " (limit " +
                  fmt("%.0f s", limit) + ")"};
}

// ---- 5: small-sample robustness ---------------------------------------------

Outcome small_sample(Harness& h) {
  bool ok = true;
  std::ostringstream detail;
  detail << "3% split:";
  for (std::uint64_t seed : {0, 1, 2}) {
    TrainConfig c = Harness::headline_config();
    c.subsample_fraction = 0.03;
    c.seed = seed;
    const double gcpl = evaluate(train(c, h.train_set()), h.test_set()).accuracy;
    const double soft = evaluate(train_softmax_baseline(c, h.train_set()), h.test_set()).accuracy;
    Harness::log("seed " + std::to_string(seed) + ": GCPL " + pct(gcpl) + ", softmax " + pct(soft));
    ok = ok && gcpl >= 0.93 && gcpl > soft;
    detail << " seed " << seed << " GCPL " << pct(gcpl) << " vs softmax " << pct(soft) << ";";
  }
  detail << " (need GCPL >= 93.00% and > softmax for every seed)";
  return {ok, detail.str()};
}

// ---- 6: rejection against noise ----------------------------------------------

double best_rr_at(const RejectionCurve& curve, double min_ar) {
  double best = 0.0;
  for (const auto& p : curve.points) {
    if (p.ar >= min_ar) best = std::max(best, p.rr);
  }
  return best;
}

Outcome rejection(Harness& h) {
  const ImageSet noise = make_uniform_noise(10000, h.test_set().shape, kNoiseSeed);
  const RejectionCurve gcpl = ar_rr_curve(h.headline_model(), h.test_set(), noise, ConfidenceMode::distance);
  const SoftmaxModel& soft = h.headline_softmax();
  const RejectionCurve base = ar_rr_curve(confidences(soft, h.test_set()), confidences(soft, noise),
                                          ConfidenceMode::probability);
  const bool gcpl_ok = reaches(gcpl, 0.98, 0.99);
  const bool base_fails = !reaches(base, 0.98, 0.90);
  return {gcpl_ok && base_fails,
          "GCPL distance: max RR at AR>=98% = " + pct(best_rr_at(gcpl, 0.98)) + " (need >= 99%); softmax prob: " +
              pct(best_rr_at(base, 0.98)) + " (must stay < 90%)"};
}

// ---- 7: incremental extension ----------------------------------------------

Outcome extension(Harness& h) {
  const Model& base = h.headline_model();
  const ImageShape shape = h.test_set().shape;
  const ImageSet new_class = make_uniform_noise(1000, shape, kNoiseSeed + 1);
  const Model ext = extend_model(base, new_class, 0);
  const double acc10 = h.headline_report().accuracy;
  const double acc11 = evaluate(ext, h.test_set()).accuracy;

  const ImageSet held_out = make_uniform_noise(1000, shape, kNoiseSeed + 2);
  Dataset noise_set;
  noise_set.shape = shape;
  noise_set.num_classes = 11;
  noise_set.pixels = held_out.pixels;
  noise_set.labels.assign(held_out.size(), 10);
  const double noise_acc = evaluate(ext, noise_set).accuracy;

  const double drop = std::abs(acc10 - acc11);
  const bool ok = drop <= 0.003 && noise_acc >= 0.99;
  return {ok, "10-way " + pct(acc10) + ", 11-way " + pct(acc11) + " (|diff| " + fmt("%.2f", 100 * drop) +
                  " points, limit 0.30); held-out noise accuracy " + pct(noise_acc) + " (need >= 99%)"};
}

// ---- 8: multi-prototype stability --------------------------------------------

Outcome multi_prototype(Harness& h) {
  const double acc1 = evaluate(h.subset_model(1), h.test_set()).accuracy;
  bool ok = true;
  std::ostringstream detail;
  detail << "10k subset: K=1 " << pct(acc1);
  for (std::size_t K : {2, 3}) {
    const double acc = evaluate(h.subset_model(K), h.test_set()).accuracy;
    ok = ok && std::abs(acc - acc1) <= 0.015;
    detail << ", K=" << K << " " << pct(acc);
  }
  detail << " (band 1.5 points around K=1)";
  return {ok, detail.str()};
}

// ---- 9: persistence ----------------------------------------------------------

Outcome persistence(Harness& h) {
  const Model& model = h.headline_model();
  const fs::path path = h.work() / "headline.cpl";
  save_model(model, path);
  const Model loaded = load_model(path);
  const bool same_report = evaluate(loaded, h.test_set()) == h.headline_report();

  const auto bytes = encode_model(model);
  using Kind = CheckpointError::Kind;
  auto kind_of = [](std::vector<std::uint8_t> b) -> std::optional<Kind> {
    try {
      decode_model(b);
    } catch (const CheckpointError& e) {
      return e.kind();
    } catch (...) {
    }
    return std::nullopt;
  };
  std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2));
  std::vector<std::uint8_t> header_only(bytes.begin(), bytes.begin() + 10);
  auto bad_magic = bytes;
  bad_magic[0] = 'Z';
  auto bad_crc = bytes;
  bad_crc[bytes.size() - 100] ^= 0x01;
  const auto k_trunc = kind_of(truncated);
  const auto k_header = kind_of(header_only);
  const auto k_magic = kind_of(bad_magic);
  const auto k_crc = kind_of(bad_crc);
  const bool typed = k_trunc && (*k_trunc == Kind::truncated || *k_trunc == Kind::crc_mismatch) && k_header &&
                     *k_header == Kind::truncated && k_magic == Kind::bad_magic && k_crc == Kind::crc_mismatch;
  return {same_report && typed, std::string("reloaded EvalReport ") + (same_report ? "bit-identical" : "DIFFERS") +
                                    "; truncation/bad magic/bad CRC " + (typed ? "raise typed errors" : "NOT typed")};
}

// ---- 10: determinism ---------------------------------------------------------

Outcome determinism(Harness& h) {
  auto run_once = [&](const std::string& tag) {
    const std::vector<std::string> args{
        "train", "--subsample-frac", "0.01", "--epochs", "2", "--seed", "11", "--quiet",
        "--train-images", (h.mnist() / "train-images-idx3-ubyte").string(),
        "--train-labels", (h.mnist() / "train-labels-idx1-ubyte").string(),
        "--test-images", (h.mnist() / "t10k-images-idx3-ubyte").string(),
        "--test-labels", (h.mnist() / "t10k-labels-idx1-ubyte").string(),
        "--out", (h.work() / ("det-" + tag + ".cpl")).string(),
        "--metrics", (h.work() / ("det-" + tag + ".csv")).string()};
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != 0) Harness::log("train run " + tag + " failed: " + err.str());
    return code;
  };
  auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  if (run_once("a") != 0 || run_once("b") != 0) return {false, "train command failed"};
  const bool ckpt = read(h.work() / "det-a.cpl") == read(h.work() / "det-b.cpl");
  const bool csv = read(h.work() / "det-a.csv") == read(h.work() / "det-b.csv");
  return {ckpt && csv, std::string("two identical train runs: checkpoints ") + (ckpt ? "identical" : "DIFFER") +
                           ", metrics CSV " + (csv ? "identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Runs the acceptance criteria and prints one PASS/FAIL line for each"};
  bool full = false;
  std::string mnist;
  if (const char* env = std::getenv("CPL_MNIST_DIR")) mnist = env;
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "cpl-acceptance").string();
  app.add_flag("--full", full, "Train the headline model on all 60k images (slow)");
  app.add_option("--mnist", mnist, "Directory with the four MNIST IDX files (default: $CPL_MNIST_DIR)");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--work", work, "Scratch directory for checkpoints");
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(work);
  Harness h(mnist, work, full);

  struct Criterion {
    int id;
    const char* name;
    bool needs_mnist;
    std::function<Outcome(Harness&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient suite", false, gradient_suite},
      {2, "oracle equivalence", false, oracle_equivalence},
      {3, "decision-boundary linearity", false, boundary_linearity},
      {4, "MNIST headline accuracy", true, mnist_headline},
      {5, "small-sample robustness", true, small_sample},
      {6, "rejection vs noise outliers", true, rejection},
      {7, "incremental extension", true, extension},
      {8, "multi-prototype stability", true, multi_prototype},
      {9, "persistence", true, persistence},
      {10, "determinism", true, determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    const auto start = Clock::now();
    if (c.needs_mnist && !h.have_mnist()) {
      o = {false, "MNIST not found (set CPL_MNIST_DIR or --mnist)"};
    } else {
      try {
        o = c.run(h);
      } catch (const std::exception& e) {
        o = {false, std::string("error: ") + e.what()};
      }
    }
    failures += !o.passed;
    std::cout << (o.passed ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << ": " << o.detail << "  ("
              << fmt("%.0f s", seconds_since(start)) << ")" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
