#include "support.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <unistd.h>

namespace cpl::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("cpl-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

PrototypeBank random_bank(Rng& rng, std::size_t C, std::size_t K, std::size_t d, double scale) {
  std::vector<double> values(C * K * d);
  for (double& v : values) v = scale * rng.normal();
  return PrototypeBank(C, K, d, std::move(values));
}

std::vector<double> random_vector(Rng& rng, std::size_t d, double scale) {
  std::vector<double> v(d);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

double brute_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

BruteNearest brute_nearest(const PrototypeBank& bank, std::span<const double> f) {
  return brute_nearest_if(bank, f, [](std::size_t) { return true; });
}

Dataset two_blobs(std::size_t per_class, ImageShape shape, double offset, double sigma, std::uint64_t seed) {
  std::vector<double> a(shape.size(), 0.0);
  std::vector<double> b(shape.size(), 0.0);
  a[0] = offset;
  b[0] = -offset;
  return make_gaussian_blobs(2, per_class, shape, {a, b}, sigma, seed);
}

fs::path mnist_dir() {
  const char* env = std::getenv("CPL_MNIST_DIR");
  if (!env || !*env) return {};
  const fs::path dir(env);
  if (!fs::exists(dir / "train-images-idx3-ubyte")) return {};
  return dir;
}

}  // namespace cpl::testing
