#include "cpl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "cpl/error.hpp"
#include "cpl/rng.hpp"

namespace cpl {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

void check_magic(std::span<const std::uint8_t> bytes, std::uint32_t expected, const std::string& origin) {
  if (bytes.size() < 4) throw LengthError(origin + ": file too short for an IDX header");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != expected) {
    throw FormatError(origin + ": bad IDX magic " + hex32(magic) + " (expected " + hex32(expected) + ")");
  }
}

}  // namespace

// ---- Dataset ---------------------------------------------------------------

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

void Dataset::validate() const {
  if (num_classes < 1) throw ParameterError("dataset must declare at least one class");
  if (pixels.size() != labels.size() * shape.size()) {
    throw ShapeError("dataset pixel buffer does not match " + std::to_string(labels.size()) + " samples");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw ParameterError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  for (double p : pixels) {
    if (!std::isfinite(p)) throw NumericError("dataset contains a non-finite pixel");
  }
}

// ---- IDX -------------------------------------------------------------------

RawImages parse_idx_images(std::span<const std::uint8_t> bytes, const std::string& origin) {
  check_magic(bytes, kIdxImageMagic, origin);
  if (bytes.size() < 16) throw LengthError(origin + ": truncated IDX image header");
  RawImages raw;
  raw.count = read_be32(bytes, 4);
  raw.rows = read_be32(bytes, 8);
  raw.cols = read_be32(bytes, 12);
  const std::size_t payload = raw.count * raw.rows * raw.cols;
  if (bytes.size() - 16 < payload) {
    throw LengthError(origin + ": truncated IDX image payload (" + std::to_string(bytes.size() - 16) +
                      " of " + std::to_string(payload) + " bytes)");
  }
  raw.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  return raw;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes, const std::string& origin) {
  check_magic(bytes, kIdxLabelMagic, origin);
  if (bytes.size() < 8) throw LengthError(origin + ": truncated IDX label header");
  const std::size_t count = read_be32(bytes, 4);
  if (bytes.size() - 8 < count) {
    throw LengthError(origin + ": truncated IDX label payload (" + std::to_string(bytes.size() - 8) +
                      " of " + std::to_string(count) + " bytes)");
  }
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

RawImages load_idx_images(const std::filesystem::path& path) {
  return parse_idx_images(read_file(path), path.string());
}

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
  return parse_idx_labels(read_file(path), path.string());
}

std::vector<std::uint8_t> encode_idx_images(const RawImages& images) {
  if (images.pixels.size() != images.count * images.rows * images.cols) {
    throw ShapeError("raw image buffer does not match count x rows x cols");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(images.count));
  put_be32(out, static_cast<std::uint32_t>(images.rows));
  put_be32(out, static_cast<std::uint32_t>(images.cols));
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

void write_idx_images(const std::filesystem::path& path, const RawImages& images) {
  write_file(path, encode_idx_images(images));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  write_file(path, encode_idx_labels(labels));
}

ImageSet normalize(const RawImages& raw) {
  ImageSet set;
  set.shape = {1, raw.rows, raw.cols};
  set.pixels.resize(raw.pixels.size());
  std::transform(raw.pixels.begin(), raw.pixels.end(), set.pixels.begin(),
                 [](std::uint8_t b) { return static_cast<double>(b) / 255.0; });
  return set;
}

RawImages quantize(const ImageSet& images) {
  if (images.shape.channels != 1) throw ShapeError("IDX export supports single-channel images only");
  RawImages raw;
  raw.count = images.size();
  raw.rows = images.shape.height;
  raw.cols = images.shape.width;
  raw.pixels.resize(images.pixels.size());
  std::transform(images.pixels.begin(), images.pixels.end(), raw.pixels.begin(), [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  return raw;
}

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         int num_classes) {
  ImageSet set = normalize(load_idx_images(images));
  const auto raw_labels = load_idx_labels(labels);
  if (raw_labels.size() != set.size()) {
    throw FormatError("pairing error: '" + images.string() + "' holds " + std::to_string(set.size()) +
                      " images but '" + labels.string() + "' holds " + std::to_string(raw_labels.size()) +
                      " labels");
  }
  Dataset ds;
  ds.shape = set.shape;
  ds.pixels = std::move(set.pixels);
  ds.labels.assign(raw_labels.begin(), raw_labels.end());
  const int max_label = ds.labels.empty() ? -1 : *std::max_element(ds.labels.begin(), ds.labels.end());
  ds.num_classes = num_classes > 0 ? num_classes : max_label + 1;
  if (max_label >= ds.num_classes) {
    throw FormatError("'" + labels.string() + "' contains label " + std::to_string(max_label) +
                      " but only " + std::to_string(ds.num_classes) + " classes were declared");
  }
  return ds;
}

ImageSet load_idx_image_set(const std::filesystem::path& images) { return normalize(load_idx_images(images)); }

// ---- synthetic -------------------------------------------------------------

Dataset make_gaussian_blobs(int num_classes, std::size_t per_class, ImageShape shape,
                            const std::vector<std::vector<double>>& centers, double sigma,
                            std::uint64_t seed) {
  if (num_classes < 1) throw ParameterError("make_gaussian_blobs: num_classes must be >= 1");
  if (per_class < 1) throw ParameterError("make_gaussian_blobs: per_class must be >= 1");
  if (!(sigma > 0.0)) throw ParameterError("make_gaussian_blobs: sigma must be > 0");
  if (centers.size() != static_cast<std::size_t>(num_classes)) {
    throw ParameterError("make_gaussian_blobs: expected one center per class");
  }
  const std::size_t dim = shape.size();
  for (const auto& c : centers) {
    if (c.size() != dim) throw ShapeError("make_gaussian_blobs: center dimension does not match shape");
  }
  Rng rng(seed);
  Dataset ds;
  ds.shape = shape;
  ds.num_classes = num_classes;
  ds.pixels.reserve(static_cast<std::size_t>(num_classes) * per_class * dim);
  ds.labels.reserve(static_cast<std::size_t>(num_classes) * per_class);
  for (int c = 0; c < num_classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      for (std::size_t j = 0; j < dim; ++j) ds.pixels.push_back(centers[c][j] + sigma * rng.normal());
      ds.labels.push_back(c);
    }
  }
  return ds;
}

ImageSet make_uniform_noise(std::size_t count, ImageShape shape, std::uint64_t seed) {
  if (count < 1) throw ParameterError("make_uniform_noise: count must be >= 1");
  Rng rng(seed);
  ImageSet set;
  set.shape = shape;
  set.pixels.resize(count * shape.size());
  for (double& p : set.pixels) p = rng.uniform();
  return set;
}

// ---- sampling --------------------------------------------------------------

Dataset select(const Dataset& dataset, std::span<const std::size_t> indices) {
  Dataset out;
  out.shape = dataset.shape;
  out.num_classes = dataset.num_classes;
  const std::size_t dim = dataset.shape.size();
  out.pixels.resize(indices.size() * dim);
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = dataset.sample(indices[i]);
    std::copy(src.pixels.begin(), src.pixels.end(), out.pixels.begin() + static_cast<std::ptrdiff_t>(i * dim));
    out.labels[i] = src.label;
  }
  return out;
}

ImageSet select(const ImageSet& images, std::span<const std::size_t> indices) {
  ImageSet out;
  out.shape = images.shape;
  const std::size_t dim = images.shape.size();
  out.pixels.resize(indices.size() * dim);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = images.image(indices[i]);
    std::copy(src.begin(), src.end(), out.pixels.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return out;
}

Dataset subsample(const Dataset& dataset, double fraction, std::uint64_t seed, bool stratified) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ParameterError("subsample: fraction must be in (0, 1]");
  const std::size_t n = dataset.size();
  if (stratified && fraction * static_cast<double>(n) < static_cast<double>(dataset.num_classes)) {
    throw ParameterError("subsample: fraction * size must be >= num_classes for a stratified draw");
  }
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  if (stratified) {
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(dataset.num_classes));
    for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
    for (auto& members : by_class) {
      if (members.empty()) continue;
      const auto keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size()))));
      rng.shuffle(std::span<std::size_t>(members));
      chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(keep));
    }
  } else {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(all));
    const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  if (chosen.empty()) throw ParameterError("subsample: result would be empty");
  rng.shuffle(std::span<std::size_t>(chosen));
  return select(dataset, chosen);
}

BatchSampler::BatchSampler(std::size_t num_samples, std::size_t batch_size, std::uint64_t seed, bool shuffle)
    : num_samples_(num_samples), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
}

std::size_t BatchSampler::batches_per_epoch() const { return (num_samples_ + batch_size_ - 1) / batch_size_; }

std::vector<std::vector<std::size_t>> BatchSampler::epoch(std::size_t epoch_index) const {
  std::vector<std::size_t> order(num_samples_);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_) {
    Rng rng(seed_, epoch_index + 1);
    rng.shuffle(std::span<std::size_t>(order));
  }
  std::vector<std::vector<std::size_t>> out;
  out.reserve(batches_per_epoch());
  for (std::size_t begin = 0; begin < num_samples_; begin += batch_size_) {
    const std::size_t end = std::min(begin + batch_size_, num_samples_);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Batch gather(const Dataset& dataset, std::span<const std::size_t> indices) {
  Batch b;
  b.shape = dataset.shape;
  const std::size_t dim = dataset.shape.size();
  b.pixels.resize(indices.size() * dim);
  b.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto s = dataset.sample(indices[i]);
    std::copy(s.pixels.begin(), s.pixels.end(), b.pixels.begin() + static_cast<std::ptrdiff_t>(i * dim));
    b.labels[i] = s.label;
  }
  return b;
}

Batch gather(const ImageSet& images, std::span<const std::size_t> indices) {
  Batch b;
  b.shape = images.shape;
  const std::size_t dim = images.shape.size();
  b.pixels.resize(indices.size() * dim);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto s = images.image(indices[i]);
    std::copy(s.begin(), s.end(), b.pixels.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return b;
}

Batch gather_range(const ImageSet& images, std::size_t begin, std::size_t end) {
  Batch b;
  b.shape = images.shape;
  const std::size_t dim = images.shape.size();
  b.pixels.assign(images.pixels.begin() + static_cast<std::ptrdiff_t>(begin * dim),
                  images.pixels.begin() + static_cast<std::ptrdiff_t>(end * dim));
  return b;
}

Batch gather_range(const Dataset& dataset, std::size_t begin, std::size_t end) {
  Batch b;
  b.shape = dataset.shape;
  const std::size_t dim = dataset.shape.size();
  b.pixels.assign(dataset.pixels.begin() + static_cast<std::ptrdiff_t>(begin * dim),
                  dataset.pixels.begin() + static_cast<std::ptrdiff_t>(end * dim));
  b.labels.assign(dataset.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                  dataset.labels.begin() + static_cast<std::ptrdiff_t>(end));
  return b;
}

std::vector<Batch> batches(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed, bool shuffle,
                           std::size_t epoch_index) {
  BatchSampler sampler(dataset.size(), batch_size, seed, shuffle);
  std::vector<Batch> out;
  for (const auto& idx : sampler.epoch(epoch_index)) out.push_back(gather(dataset, idx));
  return out;
}

}  // namespace cpl
