#include "cpl/report.hpp"

#include <array>
#include <charconv>
#include <fstream>

#include "cpl/error.hpp"

namespace cpl {

std::string format_real(double value) {
  std::array<char, 40> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::general, 17);
  return std::string(buf.data(), res.ptr);
}

std::string metrics_csv(std::span<const EpochRecord> history) {
  std::string out = "epoch,split,loss,accuracy\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + r.split + "," + format_real(r.loss) + "," + format_real(r.accuracy) + "\n";
  }
  return out;
}

std::string curve_csv(const RejectionCurve& curve) {
  std::string out = "threshold,ar,rr\n";
  for (const auto& p : curve.points) {
    out += format_real(p.threshold) + "," + format_real(p.ar) + "," + format_real(p.rr) + "\n";
  }
  return out;
}

std::string features_csv(const FeatureBatch& features, std::span<const int> labels) {
  if (!labels.empty() && labels.size() != features.rows) {
    throw ShapeError("features_csv: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(features.rows) + " feature rows");
  }
  std::string out = "label";
  for (std::size_t j = 0; j < features.dim; ++j) out += ",f" + std::to_string(j + 1);
  out += "\n";
  for (std::size_t i = 0; i < features.rows; ++i) {
    if (!labels.empty()) out += std::to_string(labels[i]);
    for (double v : features.row(i)) out += "," + format_real(v);
    out += "\n";
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace cpl
