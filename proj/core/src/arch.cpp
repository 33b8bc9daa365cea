#include "cpl/arch.hpp"

#include <charconv>
#include <sstream>

#include "cpl/error.hpp"

namespace cpl {

namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::size_t to_size(std::string_view token, std::string_view context) {
  std::size_t value = 0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc{} || ptr != end || token.empty()) {
    throw FormatError("arch: bad integer '" + std::string(token) + "' in '" + std::string(context) + "'");
  }
  return value;
}

std::vector<std::size_t> to_sizes(std::string_view args, char sep, std::size_t expected, std::string_view context) {
  const auto parts = split(args, sep);
  if (parts.size() != expected) {
    throw FormatError("arch: '" + std::string(context) + "' expects " + std::to_string(expected) + " values");
  }
  std::vector<std::size_t> out;
  for (auto p : parts) out.push_back(to_size(p, context));
  return out;
}

}  // namespace

ArchSpec::ArchSpec(ImageShape input, std::vector<LayerSpec> layers) : input_(input), layers_(std::move(layers)) {
  infer_shapes();
}

void ArchSpec::infer_shapes() {
  if (input_.size() == 0) throw ShapeError("arch: input shape must be non-empty");
  if (layers_.empty() || !std::holds_alternative<FcLayer>(layers_.back())) {
    throw ShapeError("arch: the final layer must be fc (features carry no activation)");
  }
  shapes_.assign(1, input_);
  for (const auto& layer : layers_) {
    ActShape s = shapes_.back();
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      if (conv->out_maps == 0 || conv->kernel == 0 || conv->stride == 0) {
        throw ShapeError("arch: conv parameters must be positive");
      }
      if (s.height + 2 * conv->pad < conv->kernel || s.width + 2 * conv->pad < conv->kernel) {
        throw ShapeError("arch: conv kernel larger than padded input");
      }
      s = {conv->out_maps, (s.height + 2 * conv->pad - conv->kernel) / conv->stride + 1,
           (s.width + 2 * conv->pad - conv->kernel) / conv->stride + 1};
    } else if (const auto* pool = std::get_if<PoolLayer>(&layer)) {
      if (pool->window == 0 || s.height < pool->window || s.width < pool->window) {
        throw ShapeError("arch: pool window does not fit the input");
      }
      s = {s.channels, s.height / pool->window, s.width / pool->window};
    } else if (const auto* fc = std::get_if<FcLayer>(&layer)) {
      if (fc->out_dim == 0) throw ShapeError("arch: fc width must be positive");
      s = {fc->out_dim, 1, 1};
    }
    shapes_.push_back(s);
  }
}

ArchSpec ArchSpec::parse(std::string_view text) {
  const auto tokens = split(text, ';');
  if (tokens.empty() || tokens.front().substr(0, 3) != "in:") {
    throw FormatError("arch: must start with 'in:CxHxW', got '" + std::string(text) + "'");
  }
  const auto dims = to_sizes(tokens.front().substr(3), 'x', 3, tokens.front());
  std::vector<LayerSpec> layers;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto tok = tokens[i];
    const auto colon = tok.find(':');
    const auto kind = tok.substr(0, colon);
    const auto args = colon == std::string_view::npos ? std::string_view{} : tok.substr(colon + 1);
    if (kind == "conv") {
      const auto v = to_sizes(args, ',', 4, tok);
      layers.emplace_back(ConvLayer{v[0], v[1], v[2], v[3]});
    } else if (kind == "pool") {
      layers.emplace_back(PoolLayer{to_size(args, tok)});
    } else if (kind == "fc") {
      layers.emplace_back(FcLayer{to_size(args, tok)});
    } else if (kind == "relu" && colon == std::string_view::npos) {
      layers.emplace_back(ReluLayer{});
    } else {
      throw FormatError("arch: unknown layer '" + std::string(tok) + "'");
    }
  }
  return ArchSpec({dims[0], dims[1], dims[2]}, std::move(layers));
}

ArchSpec ArchSpec::mnist_default(std::size_t feature_dim) {
  return ArchSpec({1, 28, 28}, {ConvLayer{32, 5, 1, 2}, ReluLayer{}, PoolLayer{2}, ConvLayer{64, 5, 1, 2},
                                ReluLayer{}, PoolLayer{2}, FcLayer{256}, ReluLayer{}, FcLayer{feature_dim}});
}

std::string ArchSpec::to_string() const {
  std::ostringstream os;
  os << "in:" << input_.channels << 'x' << input_.height << 'x' << input_.width;
  for (const auto& layer : layers_) {
    os << ';';
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      os << "conv:" << conv->out_maps << ',' << conv->kernel << ',' << conv->stride << ',' << conv->pad;
    } else if (const auto* pool = std::get_if<PoolLayer>(&layer)) {
      os << "pool:" << pool->window;
    } else if (const auto* fc = std::get_if<FcLayer>(&layer)) {
      os << "fc:" << fc->out_dim;
    } else {
      os << "relu";
    }
  }
  return os.str();
}

}  // namespace cpl
