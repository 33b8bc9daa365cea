#include "cpl/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <iterator>
#include <string>

namespace cpl {

namespace {

using Kind = CheckpointError::Kind;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4, "integer");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8, "real");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t{bytes_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n, "string");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(Kind::truncated, std::string("checkpoint truncated while reading ") + what);
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32_ieee(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in slices.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_model(const Model& model) {
  Writer w;
  w.raw("CPL1");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model.bank.num_classes()));
  w.u32(static_cast<std::uint32_t>(model.bank.per_class()));
  w.u32(static_cast<std::uint32_t>(model.bank.feature_dim()));
  w.str(model.net.arch.to_string());
  for (double v : model.bank.values()) w.f64(v);
  w.u32(static_cast<std::uint32_t>(model.net.tensors.size()));
  for (const auto& t : model.net.tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.tensor.dims.size()));
    for (auto dim : t.tensor.dims) w.u32(static_cast<std::uint32_t>(dim));
    for (double v : t.tensor.data) w.f64(v);
  }
  const std::uint32_t crc = crc32_ieee(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

Model decode_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw CheckpointError(Kind::truncated, "checkpoint truncated: no magic");
  const std::string magic(reinterpret_cast<const char*>(bytes.data()), 4);
  if (magic != "CPL1") {
    if (magic.compare(0, 3, "CPL") == 0) {
      throw CheckpointError(Kind::version_mismatch, "unsupported checkpoint version tag '" + magic + "'");
    }
    throw CheckpointError(Kind::bad_magic, "not a checkpoint: bad magic");
  }
  if (bytes.size() < 8) throw CheckpointError(Kind::truncated, "checkpoint truncated: no version");
  if (bytes.size() < 4 + 4 * 5 + 4) throw CheckpointError(Kind::truncated, "checkpoint truncated: header incomplete");

  const auto body = bytes.first(bytes.size() - 4);
  Reader trailer(bytes.last(4));
  const std::uint32_t stored_crc = trailer.u32();
  if (crc32_ieee(body) != stored_crc) {
    throw CheckpointError(Kind::crc_mismatch, "checkpoint CRC mismatch (file truncated or corrupted)");
  }

  Reader r(body);
  r.u32();  // magic
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::version_mismatch, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::size_t C = r.u32();
  const std::size_t K = r.u32();
  const std::size_t d = r.u32();
  const std::string arch_text = r.str();

  Model model;
  try {
    model.net.arch = ArchSpec::parse(arch_text);
  } catch (const Error& e) {
    throw CheckpointError(Kind::malformed, std::string("checkpoint arch is invalid: ") + e.what());
  }
  if (model.net.arch.feature_dim() != d) {
    throw CheckpointError(Kind::malformed, "checkpoint feature dimension disagrees with its arch");
  }
  if (C == 0 || K == 0 || d == 0) throw CheckpointError(Kind::malformed, "checkpoint declares an empty bank");
  if (C * K * d > r.remaining() / 8) throw CheckpointError(Kind::truncated, "checkpoint truncated in prototypes");
  std::vector<double> values(C * K * d);
  for (double& v : values) v = r.f64();

  const NetParams expected = init_network(model.net.arch, 0);
  const std::uint32_t count = r.u32();
  if (count != expected.tensors.size()) {
    throw CheckpointError(Kind::malformed, "checkpoint holds " + std::to_string(count) + " tensors, arch needs " +
                                               std::to_string(expected.tensors.size()));
  }
  for (std::uint32_t t = 0; t < count; ++t) {
    NamedTensor nt;
    nt.name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointError(Kind::malformed, "checkpoint tensor '" + nt.name + "' has rank > 8");
    for (std::uint32_t i = 0; i < rank; ++i) nt.tensor.dims.push_back(r.u32());
    const auto& want = expected.tensors[t];
    if (nt.name != want.name || nt.tensor.dims != want.tensor.dims) {
      throw CheckpointError(Kind::malformed, "checkpoint tensor '" + nt.name + "' does not match the arch");
    }
    nt.tensor.data.resize(want.tensor.size());
    if (nt.tensor.data.size() > r.remaining() / 8) {
      throw CheckpointError(Kind::truncated, "checkpoint truncated in tensor '" + nt.name + "'");
    }
    for (double& v : nt.tensor.data) v = r.f64();
    model.net.tensors.push_back(std::move(nt));
  }
  if (r.remaining() != 0) throw CheckpointError(Kind::malformed, "checkpoint has trailing bytes");

  try {
    model.bank = PrototypeBank(C, K, d, std::move(values));
  } catch (const Error& e) {
    throw CheckpointError(Kind::malformed, std::string("checkpoint prototypes invalid: ") + e.what());
  }
  model.config.arch = model.net.arch;
  model.config.prototypes_per_class = K;
  return model;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  const auto bytes = encode_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_model(bytes);
}

}  // namespace cpl
