#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cpl {

/// channels x height x width of one image.
struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

/// Byte images exactly as stored in an IDX file.
struct RawImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major
};

/// Unlabeled image set (outliers, new-class samples). May be empty.
struct ImageSet {
  ImageShape shape;
  std::vector<double> pixels;  // size() * shape.size()

  std::size_t size() const { return shape.size() == 0 ? 0 : pixels.size() / shape.size(); }
  bool empty() const { return pixels.empty(); }
  std::span<const double> image(std::size_t i) const {
    return {pixels.data() + i * shape.size(), shape.size()};
  }
};

/// Read-only view of one labeled sample inside a Dataset.
struct SampleView {
  std::span<const double> pixels;
  int label = 0;
};

/// Labeled samples stored contiguously. Every label is in [0, num_classes).
struct Dataset {
  ImageShape shape;
  int num_classes = 0;
  std::vector<double> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  SampleView sample(std::size_t i) const {
    return {{pixels.data() + i * shape.size(), shape.size()}, labels[i]};
  }
  std::vector<std::size_t> class_counts() const;
  /// Throws ParameterError / ShapeError when an invariant is broken.
  void validate() const;
};

/// A gathered mini-batch: batch x channels x height x width.
struct Batch {
  ImageShape shape;
  std::vector<double> pixels;
  std::vector<int> labels;  // empty for unlabeled batches

  std::size_t size() const { return shape.size() == 0 ? 0 : pixels.size() / shape.size(); }
};

// ---- IDX files -------------------------------------------------------------

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

RawImages load_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);

RawImages parse_idx_images(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes,
                                           const std::string& origin = "<memory>");

std::vector<std::uint8_t> encode_idx_images(const RawImages& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);
void write_idx_images(const std::filesystem::path& path, const RawImages& images);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

/// b -> b / 255.
ImageSet normalize(const RawImages& raw);

/// Pairs an image file with its label file. num_classes defaults to max label + 1.
Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         int num_classes = 0);
ImageSet load_idx_image_set(const std::filesystem::path& images);

/// Inverse of normalize, rounding to the nearest byte after clamping to [0, 1].
RawImages quantize(const ImageSet& images);

// ---- synthetic data --------------------------------------------------------

/// Isotropic Gaussian clusters; sample k of class c is centers[c] + sigma * N(0, I).
/// Samples are ordered by class.
Dataset make_gaussian_blobs(int num_classes, std::size_t per_class, ImageShape shape,
                            const std::vector<std::vector<double>>& centers, double sigma,
                            std::uint64_t seed);

/// i.i.d. uniform [0, 1) pixels.
ImageSet make_uniform_noise(std::size_t count, ImageShape shape, std::uint64_t seed);

// ---- sampling --------------------------------------------------------------

/// Random subset of the dataset. In stratified mode every class keeps
/// max(1, round(fraction * class_count)) samples; otherwise round(fraction * n)
/// samples are drawn uniformly. Output order is a seeded permutation.
Dataset subsample(const Dataset& dataset, double fraction, std::uint64_t seed, bool stratified);

Dataset select(const Dataset& dataset, std::span<const std::size_t> indices);
ImageSet select(const ImageSet& images, std::span<const std::size_t> indices);

/// Epoch-wise partition of [0, n) into batches.
///
/// With shuffling on, epoch e uses Rng(seed, e + 1) so every epoch order is
/// a pure function of (seed, e). The last batch may be short.
class BatchSampler {
 public:
  BatchSampler(std::size_t num_samples, std::size_t batch_size, std::uint64_t seed, bool shuffle);

  std::vector<std::vector<std::size_t>> epoch(std::size_t epoch_index) const;
  std::size_t batches_per_epoch() const;

 private:
  std::size_t num_samples_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
};

/// Convenience wrapper: all batches of one epoch, gathered.
std::vector<Batch> batches(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed,
                           bool shuffle, std::size_t epoch_index = 0);

Batch gather(const Dataset& dataset, std::span<const std::size_t> indices);
Batch gather(const ImageSet& images, std::span<const std::size_t> indices);
/// Batch of rows [begin, end) without copying labels from an unlabeled set.
Batch gather_range(const ImageSet& images, std::size_t begin, std::size_t end);
Batch gather_range(const Dataset& dataset, std::size_t begin, std::size_t end);

}  // namespace cpl
