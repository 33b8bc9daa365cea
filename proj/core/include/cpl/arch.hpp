#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cpl/data.hpp"

namespace cpl {

struct ConvLayer {
  std::size_t out_maps = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  bool operator==(const ConvLayer&) const = default;
};

/// Non-overlapping max pooling (stride == window).
struct PoolLayer {
  std::size_t window = 2;
  bool operator==(const PoolLayer&) const = default;
};

struct FcLayer {
  std::size_t out_dim = 1;
  bool operator==(const FcLayer&) const = default;
};

struct ReluLayer {
  bool operator==(const ReluLayer&) const = default;
};

using LayerSpec = std::variant<ConvLayer, PoolLayer, FcLayer, ReluLayer>;

/// Activation shape between layers. A flat vector is (n, 1, 1).
using ActShape = ImageShape;

/// Feature extractor layout.
///
/// Canonical text form, one line, ';'-separated:
///   in:CxHxW;conv:maps,kernel,stride,pad;relu;pool:window;fc:out;...
/// The last layer must be fc; its width is the feature dimension d.
class ArchSpec {
 public:
  ArchSpec() = default;
  ArchSpec(ImageShape input, std::vector<LayerSpec> layers);

  static ArchSpec parse(std::string_view text);
  /// Conv(32,5,1,2) ReLU Pool(2) Conv(64,5,1,2) ReLU Pool(2) FC(256) ReLU FC(feature_dim).
  static ArchSpec mnist_default(std::size_t feature_dim = 2);

  std::string to_string() const;

  const ImageShape& input() const { return input_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  /// shapes()[i] is the input of layer i; shapes().back() the output.
  const std::vector<ActShape>& shapes() const { return shapes_; }
  std::size_t feature_dim() const { return shapes_.back().size(); }

  bool operator==(const ArchSpec& other) const { return input_ == other.input_ && layers_ == other.layers_; }

 private:
  void infer_shapes();

  ImageShape input_;
  std::vector<LayerSpec> layers_;
  std::vector<ActShape> shapes_;
};

}  // namespace cpl
