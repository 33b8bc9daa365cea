#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cpl/data.hpp"
#include "cpl/proto.hpp"
#include "cpl/rng.hpp"

namespace cpl::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text(const std::filesystem::path& path);

/// Bank with i.i.d. N(0, scale^2) entries.
PrototypeBank random_bank(Rng& rng, std::size_t C, std::size_t K, std::size_t d, double scale = 1.0);
std::vector<double> random_vector(Rng& rng, std::size_t d, double scale = 1.0);

// ---- independent oracles ---------------------------------------------------
// Written from the definitions alone, sharing no code with the library.

struct BruteNearest {
  std::size_t cls = 0;
  std::size_t k = 0;
  double distance = std::numeric_limits<double>::infinity();
};

double brute_distance(std::span<const double> a, std::span<const double> b);
/// Scan of all C*K prototypes keeping the first strictly smaller distance.
BruteNearest brute_nearest(const PrototypeBank& bank, std::span<const double> f);
/// Same scan restricted to classes where include(c) is true.
template <typename Pred>
BruteNearest brute_nearest_if(const PrototypeBank& bank, std::span<const double> f, Pred include) {
  BruteNearest best;
  for (std::size_t c = 0; c < bank.num_classes(); ++c) {
    if (!include(c)) continue;
    for (std::size_t k = 0; k < bank.per_class(); ++k) {
      const double dist = brute_distance(f, bank.prototype(c, k));
      if (dist < best.distance) best = {c, k, dist};
    }
  }
  return best;
}

/// A tiny labelled two-class blob dataset with the given image shape.
Dataset two_blobs(std::size_t per_class, ImageShape shape, double offset, double sigma, std::uint64_t seed);

/// Path of the MNIST directory from CPL_MNIST_DIR, or empty when unset/missing.
std::filesystem::path mnist_dir();

}  // namespace cpl::testing
