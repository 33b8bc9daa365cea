#include "cpl/net.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cpl/error.hpp"
#include "cpl/rng.hpp"

namespace cpl {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

// Index of the weight tensor for each layer, or -1 for parameter-free layers.
std::vector<int> param_slots(const ArchSpec& arch) {
  std::vector<int> slots;
  int next = 0;
  for (const auto& layer : arch.layers()) {
    if (std::holds_alternative<ConvLayer>(layer) || std::holds_alternative<FcLayer>(layer)) {
      slots.push_back(next);
      next += 2;
    } else {
      slots.push_back(-1);
    }
  }
  return slots;
}

// Output columns [lo, hi) whose input column ow*stride + offset - pad lies inside [0, width).
std::pair<std::size_t, std::size_t> valid_span(std::size_t out_width, std::size_t stride, std::size_t offset,
                                               std::size_t pad, std::size_t width) {
  std::size_t lo = 0;
  while (lo < out_width && lo * stride + offset < pad) ++lo;
  std::size_t hi = lo;
  while (hi < out_width && hi * stride + offset - pad < width) ++hi;
  return {lo, hi};
}

void im2col(const double* in, const ActShape& s, const ConvLayer& conv, const ActShape& out_shape, double* cols) {
  const std::size_t k = conv.kernel;
  const std::size_t ow_n = out_shape.width;
  const std::size_t plane = out_shape.height * ow_n;
  for (std::size_t c = 0; c < s.channels; ++c) {
    const double* src = in + c * s.height * s.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      const auto [h_lo, h_hi] = valid_span(out_shape.height, conv.stride, ki, conv.pad, s.height);
      for (std::size_t kj = 0; kj < k; ++kj) {
        const auto [w_lo, w_hi] = valid_span(ow_n, conv.stride, kj, conv.pad, s.width);
        double* dst = cols + ((c * k + ki) * k + kj) * plane;
        std::fill(dst, dst + h_lo * ow_n, 0.0);
        for (std::size_t oh = h_lo; oh < h_hi; ++oh) {
          const double* src_row = src + (oh * conv.stride + ki - conv.pad) * s.width;
          double* row = dst + oh * ow_n;
          std::fill(row, row + w_lo, 0.0);
          if (conv.stride == 1) {
            std::copy(src_row + (w_lo + kj - conv.pad), src_row + (w_hi + kj - conv.pad), row + w_lo);
          } else {
            for (std::size_t ow = w_lo; ow < w_hi; ++ow) row[ow] = src_row[ow * conv.stride + kj - conv.pad];
          }
          std::fill(row + w_hi, row + ow_n, 0.0);
        }
        std::fill(dst + h_hi * ow_n, dst + plane, 0.0);
      }
    }
  }
}

void col2im(const double* cols, const ActShape& s, const ConvLayer& conv, const ActShape& out_shape, double* in) {
  const std::size_t k = conv.kernel;
  const std::size_t ow_n = out_shape.width;
  const std::size_t plane = out_shape.height * ow_n;
  for (std::size_t c = 0; c < s.channels; ++c) {
    double* dst = in + c * s.height * s.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      const auto [h_lo, h_hi] = valid_span(out_shape.height, conv.stride, ki, conv.pad, s.height);
      for (std::size_t kj = 0; kj < k; ++kj) {
        const auto [w_lo, w_hi] = valid_span(ow_n, conv.stride, kj, conv.pad, s.width);
        const double* src = cols + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oh = h_lo; oh < h_hi; ++oh) {
          double* dst_row = dst + (oh * conv.stride + ki - conv.pad) * s.width;
          const double* row = src + oh * ow_n;
          for (std::size_t ow = w_lo; ow < w_hi; ++ow) dst_row[ow * conv.stride + kj - conv.pad] += row[ow];
        }
      }
    }
  }
}

void check_batch(const NetParams& params, const Batch& batch) {
  if (!(batch.shape == params.arch.input())) {
    throw ShapeError("batch shape " + std::to_string(batch.shape.channels) + "x" +
                     std::to_string(batch.shape.height) + "x" + std::to_string(batch.shape.width) +
                     " does not match network input of '" + params.arch.to_string() + "'");
  }
  if (batch.pixels.size() % batch.shape.size() != 0) throw ShapeError("batch pixel buffer is ragged");
}

FeatureBatch run_forward(const NetParams& params, const Batch& batch, ForwardCache* cache) {
  check_batch(params, batch);
  const auto& arch = params.arch;
  const auto& shapes = arch.shapes();
  const auto slots = param_slots(arch);
  const std::size_t B = batch.size();

  AlignedBuffer current(batch.pixels.begin(), batch.pixels.end());
  if (cache) {
    cache->arch = arch.to_string();
    cache->params_version = params.version;
    cache->batch = B;
    cache->acts.assign(arch.layers().size() + 1, {});
    cache->argmax.assign(arch.layers().size(), {});
  }

  AlignedBuffer cols_scratch;
  for (std::size_t li = 0; li < arch.layers().size(); ++li) {
    const auto& layer = arch.layers()[li];
    const ActShape& in_s = shapes[li];
    const ActShape& out_s = shapes[li + 1];
    AlignedBuffer next(B * out_s.size());

    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      const auto& w = params.tensors[static_cast<std::size_t>(slots[li])].tensor;
      const auto& bias = params.tensors[static_cast<std::size_t>(slots[li]) + 1].tensor;
      const std::size_t patch = in_s.channels * conv->kernel * conv->kernel;
      const std::size_t plane = out_s.height * out_s.width;
      cols_scratch.resize(patch * plane);
      const AlignedBuffer wbuf(w.data.begin(), w.data.end());
      ConstMatMap W(wbuf.data(), ix(conv->out_maps), ix(patch));
      ConstVecMap bv(bias.data.data(), ix(conv->out_maps));
      for (std::size_t b = 0; b < B; ++b) {
        double* col = cols_scratch.data();
        im2col(current.data() + b * in_s.size(), in_s, *conv, out_s, col);
        MatMap out(next.data() + b * out_s.size(), ix(conv->out_maps), ix(plane));
        out.noalias() = W * ConstMatMap(col, ix(patch), ix(plane));
        out.colwise() += bv;
      }
    } else if (const auto* pool = std::get_if<PoolLayer>(&layer)) {
      const std::size_t win = pool->window;
      std::vector<std::uint32_t> arg;
      if (cache) arg.resize(next.size());
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < in_s.channels; ++c) {
          const std::size_t in_base = (b * in_s.channels + c) * in_s.height * in_s.width;
          const std::size_t out_base = (b * out_s.channels + c) * out_s.height * out_s.width;
          for (std::size_t oh = 0; oh < out_s.height; ++oh) {
            for (std::size_t ow = 0; ow < out_s.width; ++ow) {
              // First maximal element in row-major window order wins ties.
              std::size_t best = in_base + (oh * win) * in_s.width + ow * win;
              for (std::size_t i = 0; i < win; ++i) {
                for (std::size_t j = 0; j < win; ++j) {
                  const std::size_t at = in_base + (oh * win + i) * in_s.width + ow * win + j;
                  if (current[at] > current[best]) best = at;
                }
              }
              const std::size_t o = out_base + oh * out_s.width + ow;
              next[o] = current[best];
              if (cache) arg[o] = static_cast<std::uint32_t>(best);
            }
          }
        }
      }
      if (cache) cache->argmax[li] = std::move(arg);
    } else if (const auto* fc = std::get_if<FcLayer>(&layer)) {
      const auto& w = params.tensors[static_cast<std::size_t>(slots[li])].tensor;
      const auto& bias = params.tensors[static_cast<std::size_t>(slots[li]) + 1].tensor;
      const AlignedBuffer wbuf(w.data.begin(), w.data.end());
      ConstMatMap in(current.data(), ix(B), ix(in_s.size()));
      ConstMatMap W(wbuf.data(), ix(fc->out_dim), ix(in_s.size()));
      MatMap out(next.data(), ix(B), ix(fc->out_dim));
      out.noalias() = in * W.transpose();
      out.rowwise() += ConstVecMap(bias.data.data(), ix(fc->out_dim)).transpose();
    } else {
      std::transform(current.begin(), current.end(), next.begin(), [](double v) { return v > 0.0 ? v : 0.0; });
    }

    if (cache) {
      cache->acts[li] = std::move(current);
    }
    current = std::move(next);
  }

  FeatureBatch features(B, arch.feature_dim());
  features.data.assign(current.begin(), current.end());
  if (cache) cache->acts.back() = std::move(current);
  return features;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : dims(std::move(shape)) {
  const std::size_t n = std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  data.assign(n, 0.0);
}

namespace {
template <typename List>
auto& find_named(List& tensors, std::string_view name) {
  for (auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw ParameterError("no tensor named '" + std::string(name) + "'");
}
}  // namespace

const Tensor& NetParams::at(std::string_view name) const { return find_named(tensors, name); }
Tensor& NetParams::at(std::string_view name) { return find_named(tensors, name); }

std::size_t NetParams::num_values() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.tensor.size();
  return n;
}

const Tensor& ParamGrads::at(std::string_view name) const { return find_named(tensors, name); }

void ParamGrads::scale(double factor) {
  for (auto& t : tensors) {
    for (double& v : t.tensor.data) v *= factor;
  }
}

NetParams init_network(const ArchSpec& arch, std::uint64_t seed) {
  NetParams params;
  params.arch = arch;
  Rng rng(seed);
  std::size_t conv_count = 0;
  std::size_t fc_count = 0;
  const auto& shapes = arch.shapes();
  for (std::size_t li = 0; li < arch.layers().size(); ++li) {
    const auto& layer = arch.layers()[li];
    std::string prefix;
    std::vector<std::size_t> wdims;
    std::size_t fan_in = 0;
    std::size_t outputs = 0;
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      prefix = "conv" + std::to_string(conv_count++);
      wdims = {conv->out_maps, shapes[li].channels, conv->kernel, conv->kernel};
      fan_in = shapes[li].channels * conv->kernel * conv->kernel;
      outputs = conv->out_maps;
    } else if (const auto* fc = std::get_if<FcLayer>(&layer)) {
      prefix = "fc" + std::to_string(fc_count++);
      wdims = {fc->out_dim, shapes[li].size()};
      fan_in = shapes[li].size();
      outputs = fc->out_dim;
    } else {
      continue;
    }
    Tensor w(wdims);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : w.data) v = rng.normal(0.0, stddev);
    params.tensors.push_back({prefix + ".weight", std::move(w)});
    params.tensors.push_back({prefix + ".bias", Tensor({outputs})});
  }
  return params;
}

ForwardResult forward(const NetParams& params, const Batch& batch) {
  ForwardResult r;
  r.features = run_forward(params, batch, &r.cache);
  return r;
}

FeatureBatch extract_features(const NetParams& params, const Batch& batch) {
  return run_forward(params, batch, nullptr);
}

namespace {
template <typename Set>
FeatureBatch extract_all(const NetParams& params, const Set& set, std::size_t chunk_size) {
  if (chunk_size == 0) throw ParameterError("chunk_size must be >= 1");
  FeatureBatch all(set.size(), params.arch.feature_dim());
  for (std::size_t begin = 0; begin < set.size(); begin += chunk_size) {
    const std::size_t end = std::min(begin + chunk_size, set.size());
    const auto part = run_forward(params, gather_range(set, begin, end), nullptr);
    std::copy(part.data.begin(), part.data.end(), all.data.begin() + static_cast<std::ptrdiff_t>(begin * all.dim));
  }
  return all;
}
}  // namespace

FeatureBatch extract_features(const NetParams& params, const Dataset& dataset, std::size_t chunk_size) {
  if (!(dataset.shape == params.arch.input())) throw ShapeError("dataset shape does not match network input");
  return extract_all(params, dataset, chunk_size);
}

FeatureBatch extract_features(const NetParams& params, const ImageSet& images, std::size_t chunk_size) {
  if (!(images.shape == params.arch.input())) throw ShapeError("image shape does not match network input");
  return extract_all(params, images, chunk_size);
}

ParamGrads backward(const NetParams& params, const ForwardCache& cache, const FeatureBatch& dL_dF) {
  const auto& arch = params.arch;
  if (cache.arch != arch.to_string() || cache.params_version != params.version ||
      cache.acts.size() != arch.layers().size() + 1) {
    throw UsageError("backward: forward cache does not belong to these parameters");
  }
  if (dL_dF.rows != cache.batch || dL_dF.dim != arch.feature_dim()) {
    throw UsageError("backward: upstream gradient is " + std::to_string(dL_dF.rows) + "x" +
                     std::to_string(dL_dF.dim) + ", cache expects " + std::to_string(cache.batch) + "x" +
                     std::to_string(arch.feature_dim()));
  }
  const auto& shapes = arch.shapes();
  const auto slots = param_slots(arch);
  const std::size_t B = cache.batch;

  ParamGrads grads;
  grads.tensors.reserve(params.tensors.size());
  for (const auto& t : params.tensors) grads.tensors.push_back({t.name, Tensor(t.tensor.dims)});

  // The first parameterised layer needs no input gradient.
  std::size_t first_param_layer = arch.layers().size();
  for (std::size_t li = 0; li < slots.size(); ++li) {
    if (slots[li] >= 0) {
      first_param_layer = li;
      break;
    }
  }

  AlignedBuffer grad(dL_dF.data.begin(), dL_dF.data.end());
  for (std::size_t li = arch.layers().size(); li-- > 0;) {
    if (li < first_param_layer) break;
    const auto& layer = arch.layers()[li];
    const ActShape& in_s = shapes[li];
    const ActShape& out_s = shapes[li + 1];
    const bool need_input_grad = li > first_param_layer;
    AlignedBuffer prev;
    if (need_input_grad) prev.assign(B * in_s.size(), 0.0);

    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      const auto slot = static_cast<std::size_t>(slots[li]);
      const auto& w = params.tensors[slot].tensor;
      auto& gw = grads.tensors[slot].tensor;
      auto& gb = grads.tensors[slot + 1].tensor;
      const std::size_t patch = in_s.channels * conv->kernel * conv->kernel;
      const std::size_t plane = out_s.height * out_s.width;
      const AlignedBuffer wbuf(w.data.begin(), w.data.end());
      AlignedBuffer gwbuf(gw.data.size(), 0.0);
      AlignedBuffer gbbuf(gb.data.size(), 0.0);
      ConstMatMap W(wbuf.data(), ix(conv->out_maps), ix(patch));
      MatMap GW(gwbuf.data(), ix(conv->out_maps), ix(patch));
      VecMap GB(gbbuf.data(), ix(conv->out_maps));
      AlignedBuffer dcols(need_input_grad ? patch * plane : 0);
      AlignedBuffer cols(patch * plane);
      for (std::size_t b = 0; b < B; ++b) {
        ConstMatMap dout(grad.data() + b * out_s.size(), ix(conv->out_maps), ix(plane));
        im2col(cache.acts[li].data() + b * in_s.size(), in_s, *conv, out_s, cols.data());
        ConstMatMap col(cols.data(), ix(patch), ix(plane));
        GW.noalias() += dout * col.transpose();
        GB += dout.rowwise().sum();
        if (need_input_grad) {
          MatMap dc(dcols.data(), ix(patch), ix(plane));
          dc.noalias() = W.transpose() * dout;
          col2im(dcols.data(), in_s, *conv, out_s, prev.data() + b * in_s.size());
        }
      }
      gw.data.assign(gwbuf.begin(), gwbuf.end());
      gb.data.assign(gbbuf.begin(), gbbuf.end());
    } else if (std::holds_alternative<PoolLayer>(layer)) {
      const auto& arg = cache.argmax[li];
      for (std::size_t o = 0; o < grad.size(); ++o) prev[arg[o]] += grad[o];
    } else if (const auto* fc = std::get_if<FcLayer>(&layer)) {
      const auto slot = static_cast<std::size_t>(slots[li]);
      const auto& w = params.tensors[slot].tensor;
      auto& gw = grads.tensors[slot].tensor;
      auto& gb = grads.tensors[slot + 1].tensor;
      ConstMatMap dout(grad.data(), ix(B), ix(fc->out_dim));
      ConstMatMap in(cache.acts[li].data(), ix(B), ix(in_s.size()));
      AlignedBuffer gwbuf(gw.data.size());
      MatMap(gwbuf.data(), ix(fc->out_dim), ix(in_s.size())).noalias() = dout.transpose() * in;
      gw.data.assign(gwbuf.begin(), gwbuf.end());
      AlignedBuffer gbbuf(gb.data.size());
      VecMap(gbbuf.data(), ix(fc->out_dim)) = dout.colwise().sum().transpose();
      gb.data.assign(gbbuf.begin(), gbbuf.end());
      if (need_input_grad) {
        const AlignedBuffer wbuf(w.data.begin(), w.data.end());
        ConstMatMap W(wbuf.data(), ix(fc->out_dim), ix(in_s.size()));
        MatMap(prev.data(), ix(B), ix(in_s.size())).noalias() = dout * W;
      }
    } else {
      const auto& out = cache.acts[li + 1];
      for (std::size_t i = 0; i < grad.size(); ++i) prev[i] = out[i] > 0.0 ? grad[i] : 0.0;
    }
    grad = std::move(prev);
  }
  return grads;
}

void sgd_step(NetParams& params, const ParamGrads& grads, double learning_rate) {
  if (grads.tensors.size() != params.tensors.size()) throw ShapeError("sgd_step: gradient list is not congruent");
  for (std::size_t t = 0; t < grads.tensors.size(); ++t) {
    const auto& g = grads.tensors[t];
    if (g.name != params.tensors[t].name || g.tensor.dims != params.tensors[t].tensor.dims) {
      throw ShapeError("sgd_step: gradient '" + g.name + "' is not congruent with '" + params.tensors[t].name + "'");
    }
    for (std::size_t i = 0; i < g.tensor.data.size(); ++i) {
      if (!std::isfinite(g.tensor.data[i])) {
        throw NumericError("sgd_step: non-finite gradient in '" + g.name + "' at flat index " + std::to_string(i));
      }
    }
  }
  for (std::size_t t = 0; t < grads.tensors.size(); ++t) {
    auto& p = params.tensors[t].tensor.data;
    const auto& g = grads.tensors[t].tensor.data;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= learning_rate * g[i];
  }
  ++params.version;
}

// ---- softmax head ----------------------------------------------------------

SoftmaxHead init_softmax_head(std::size_t num_classes, std::size_t feature_dim, std::uint64_t seed) {
  if (num_classes < 1 || feature_dim < 1) throw ParameterError("softmax head needs C >= 1 and d >= 1");
  SoftmaxHead head;
  head.num_classes = num_classes;
  head.feature_dim = feature_dim;
  head.weight.resize(num_classes * feature_dim);
  head.bias.assign(num_classes, 0.0);
  Rng rng(seed, 0x5f7);
  const double stddev = std::sqrt(2.0 / static_cast<double>(feature_dim));
  for (double& v : head.weight) v = rng.normal(0.0, stddev);
  return head;
}

std::vector<double> softmax_probabilities(const SoftmaxHead& head, std::span<const double> feature) {
  if (feature.size() != head.feature_dim) throw ShapeError("softmax head: feature dimension mismatch");
  std::vector<double> z(head.num_classes);
  for (std::size_t c = 0; c < head.num_classes; ++c) {
    double acc = head.bias[c];
    for (std::size_t j = 0; j < head.feature_dim; ++j) acc += head.weight[c * head.feature_dim + j] * feature[j];
    z[c] = acc;
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    total += v;
  }
  for (double& v : z) v /= total;
  return z;
}

SoftmaxStep baseline_softmax_step(const NetParams& params, const SoftmaxHead& head, const Batch& batch) {
  if (batch.labels.size() != batch.size()) throw ParameterError("softmax step: batch carries no labels");
  auto fw = forward(params, batch);
  const std::size_t d = head.feature_dim;
  if (fw.features.dim != d) throw ShapeError("softmax step: head width does not match feature dimension");

  SoftmaxStep step;
  step.head_grads = head;
  std::fill(step.head_grads.weight.begin(), step.head_grads.weight.end(), 0.0);
  std::fill(step.head_grads.bias.begin(), step.head_grads.bias.end(), 0.0);
  FeatureBatch dF(fw.features.rows, d);
  for (std::size_t b = 0; b < fw.features.rows; ++b) {
    const auto f = fw.features.row(b);
    const auto y = static_cast<std::size_t>(batch.labels[b]);
    if (y >= head.num_classes) throw ParameterError("softmax step: label outside head classes");
    const auto p = softmax_probabilities(head, f);
    step.loss -= std::log(std::max(p[y], std::numeric_limits<double>::min()));
    if (static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) == y) ++step.correct;
    auto df = dF.row(b);
    for (std::size_t c = 0; c < head.num_classes; ++c) {
      const double dz = p[c] - (c == y ? 1.0 : 0.0);
      step.head_grads.bias[c] += dz;
      for (std::size_t j = 0; j < d; ++j) {
        step.head_grads.weight[c * d + j] += dz * f[j];
        df[j] += dz * head.weight[c * d + j];
      }
    }
  }
  step.net_grads = backward(params, fw.cache, dF);
  return step;
}

void sgd_step(SoftmaxHead& head, const SoftmaxHead& grads, double learning_rate) {
  for (double g : grads.weight) {
    if (!std::isfinite(g)) throw NumericError("sgd_step: non-finite softmax head gradient");
  }
  for (double g : grads.bias) {
    if (!std::isfinite(g)) throw NumericError("sgd_step: non-finite softmax head gradient");
  }
  for (std::size_t i = 0; i < head.weight.size(); ++i) head.weight[i] -= learning_rate * grads.weight[i];
  for (std::size_t i = 0; i < head.bias.size(); ++i) head.bias[i] -= learning_rate * grads.bias[i];
}

}  // namespace cpl
