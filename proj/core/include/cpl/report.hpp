#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cpl/net.hpp"
#include "cpl/openset.hpp"
#include "cpl/train.hpp"

namespace cpl {

/// printf("%.17g") equivalent: 17 significant digits, parses back to the same double.
std::string format_real(double value);

/// `epoch,split,loss,accuracy`
std::string metrics_csv(std::span<const EpochRecord> history);
/// `threshold,ar,rr`
std::string curve_csv(const RejectionCurve& curve);
/// `label,f1,...,fd`; labels may be empty for unlabeled images (column left blank).
std::string features_csv(const FeatureBatch& features, std::span<const int> labels);

/// Writes the whole text or throws IoError; content is built before the file is opened.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cpl
