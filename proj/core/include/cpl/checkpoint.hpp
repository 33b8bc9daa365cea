#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cpl/error.hpp"
#include "cpl/train.hpp"

namespace cpl {

/// Checkpoint layout, all integers little-endian:
///
///   "CPL1"                       4-byte magic
///   u32 version (= 1)
///   u32 C, u32 K, u32 d
///   u32 n + n bytes              arch string (UTF-8)
///   C*K*d f64                    prototypes
///   u32 tensor count
///   per tensor: u32 n + name, u32 rank, rank * u32 dims, f64 payload
///   u32 CRC-32 (IEEE) of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public FormatError {
 public:
  enum class Kind { bad_magic, version_mismatch, crc_mismatch, truncated, malformed };

  CheckpointError(Kind kind, const std::string& message) : FormatError(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::vector<std::uint8_t> encode_model(const Model& model);
/// The returned model carries a default TrainConfig except for arch and K.
Model decode_model(std::span<const std::uint8_t> bytes);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

std::uint32_t crc32_ieee(std::span<const std::uint8_t> bytes);

}  // namespace cpl
