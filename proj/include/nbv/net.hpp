/*
 * Copyright 2026 The nbvkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nbv/parallel.hpp"
#include "nbv/rng.hpp"
#include "nbv/tensor.hpp"

namespace nbv {

enum class Architecture : std::uint8_t { NbvNet = 1, FcBaseline = 2 };

inline const char* to_string(Architecture a) {
  return a == Architecture::NbvNet ? "nbvnet" : "fcbaseline";
}

inline Architecture architecture_from_string(const std::string& name) {
  if (name == "nbvnet") return Architecture::NbvNet;
  if (name == "fcbaseline") return Architecture::FcBaseline;
  throw std::invalid_argument("unknown architecture: " + name);
}

struct LayerSpec {
  enum class Kind : std::uint8_t {
    Conv3d = 1,
    MaxPool3d = 2,
    Dense = 3,
    Relu = 4,
    Dropout = 5,
    Flatten = 6,
  };
  Kind kind = Kind::Relu;
  int features = 0;  // Conv3d output channels
  int kernel = 0;    // Conv3d kernel edge
  int stride = 0;    // Conv3d / MaxPool3d stride
  int units = 0;     // Dense output units
  double keep = 1.0; // Dropout keep probability

  static LayerSpec conv(int f, int k, int s) {
    if (f < 1 || k < 1 || s < 1) throw std::invalid_argument("bad conv spec");
    LayerSpec l;
    l.kind = Kind::Conv3d;
    l.features = f;
    l.kernel = k;
    l.stride = s;
    return l;
  }
  static LayerSpec pool(int s) {
    if (s < 1) throw std::invalid_argument("bad pool stride");
    LayerSpec l;
    l.kind = Kind::MaxPool3d;
    l.stride = s;
    return l;
  }
  static LayerSpec dense(int n) {
    if (n < 1) throw std::invalid_argument("bad dense units");
    LayerSpec l;
    l.kind = Kind::Dense;
    l.units = n;
    return l;
  }
  static LayerSpec relu() {
    LayerSpec l;
    l.kind = Kind::Relu;
    return l;
  }
  static LayerSpec dropout(double keep) {
    if (keep <= 0.0 || keep > 1.0) throw std::invalid_argument("bad keep prob");
    LayerSpec l;
    l.kind = Kind::Dropout;
    l.keep = keep;
    return l;
  }
  static LayerSpec flatten() {
    LayerSpec l;
    l.kind = Kind::Flatten;
    return l;
  }
};

/// The two trainable stacks. ReLU follows every hidden layer; inverted
/// dropout follows each fully connected layer and the last convolutional
/// layer. The softmax head itself stays linear.
inline std::vector<LayerSpec> architecture_layers(Architecture arch,
                                                  int classes,
                                                  double keep_prob) {
  using L = LayerSpec;
  if (arch == Architecture::NbvNet) {
    return {L::conv(10, 3, 2), L::relu(),           L::pool(2),
            L::conv(12, 3, 2), L::relu(),           L::pool(2),
            L::conv(8, 3, 2),  L::relu(),           L::dropout(keep_prob),
            L::pool(2),        L::flatten(),        L::dense(1500),
            L::relu(),         L::dropout(keep_prob), L::dense(500),
            L::relu(),         L::dropout(keep_prob), L::dense(100),
            L::relu(),         L::dropout(keep_prob), L::dense(50),
            L::relu(),         L::dropout(keep_prob), L::dense(classes),
            L::dropout(keep_prob)};
  }
  return {L::flatten(),        L::dense(1500), L::relu(),
          L::dropout(keep_prob), L::dense(750),  L::relu(),
          L::dropout(keep_prob), L::dense(100),  L::relu(),
          L::dropout(keep_prob), L::dense(50),   L::relu(),
          L::dropout(keep_prob), L::dense(classes), L::dropout(keep_prob)};
}

struct ConvParams {
  int in_channels = 0, out_channels = 0, kernel = 0, stride = 0;
  std::vector<double> w;  // [oc][ic][kx][ky][kz]
  std::vector<double> b;  // [oc]
};

struct DenseParams {
  int in = 0, out = 0;
  std::vector<double> w;  // [o][i] row-major
  std::vector<double> b;  // [o]
};

struct InputShape {
  int channels = 1, nx = 32, ny = 32, nz = 32;
};

struct NetworkParams {
  Architecture arch = Architecture::NbvNet;
  int classes = 14;
  std::uint64_t seed = 0;
  InputShape input;
  std::vector<LayerSpec> layers;
  std::vector<ConvParams> convs;
  std::vector<DenseParams> denses;
};

namespace detail {

struct Shape4 {
  int c, x, y, z;
  std::size_t total() const {
    return static_cast<std::size_t>(c) * x * y * z;
  }
};

inline int conv_out_edge(int n, int s) { return (n - 1) / s + 1; }  // ceil(n/s)
inline int pool_out_edge(int n, int s) { return (n + s - 1) / s; }  // ceil(n/s)

}  // namespace detail

/// Builds a parameter set for an explicit layer stack: weights from
/// N(0, 0.1^2) truncated at two sigma, biases zero, deterministic per seed.
inline NetworkParams init_network(Architecture arch,
                                  std::vector<LayerSpec> layers,
                                  InputShape input, int classes,
                                  std::uint64_t seed) {
  NetworkParams params;
  params.arch = arch;
  params.classes = classes;
  params.seed = seed;
  params.input = input;
  params.layers = std::move(layers);

  constexpr double kInitSigma = 0.1;
  Pcg32 rng(seed, 0x696e6974u);
  detail::Shape4 shape{input.channels, input.nx, input.ny, input.nz};
  for (const auto& layer : params.layers) {
    switch (layer.kind) {
      case LayerSpec::Kind::Conv3d: {
        ConvParams cp;
        cp.in_channels = shape.c;
        cp.out_channels = layer.features;
        cp.kernel = layer.kernel;
        cp.stride = layer.stride;
        cp.w.resize(static_cast<std::size_t>(cp.out_channels) * cp.in_channels *
                    cp.kernel * cp.kernel * cp.kernel);
        for (auto& v : cp.w) v = rng.truncated_normal(kInitSigma);
        cp.b.assign(cp.out_channels, 0.0);
        params.convs.push_back(std::move(cp));
        shape = {layer.features, detail::conv_out_edge(shape.x, layer.stride),
                 detail::conv_out_edge(shape.y, layer.stride),
                 detail::conv_out_edge(shape.z, layer.stride)};
        break;
      }
      case LayerSpec::Kind::MaxPool3d:
        shape = {shape.c, detail::pool_out_edge(shape.x, layer.stride),
                 detail::pool_out_edge(shape.y, layer.stride),
                 detail::pool_out_edge(shape.z, layer.stride)};
        break;
      case LayerSpec::Kind::Dense: {
        DenseParams dp;
        dp.in = static_cast<int>(shape.total());
        dp.out = layer.units;
        dp.w.resize(static_cast<std::size_t>(dp.out) * dp.in);
        for (auto& v : dp.w) v = rng.truncated_normal(kInitSigma);
        dp.b.assign(dp.out, 0.0);
        params.denses.push_back(std::move(dp));
        shape = {layer.units, 1, 1, 1};
        break;
      }
      case LayerSpec::Kind::Flatten:
        shape = {static_cast<int>(shape.total()), 1, 1, 1};
        break;
      case LayerSpec::Kind::Relu:
      case LayerSpec::Kind::Dropout:
        break;
    }
  }
  if (static_cast<int>(shape.total()) != classes)
    throw std::invalid_argument(
        "layer stack does not end in a " + std::to_string(classes) +
        "-way output (got " + std::to_string(shape.total()) + ")");
  return params;
}

inline NetworkParams init_params(Architecture arch, std::uint64_t seed,
                                 int classes = 14, double keep_prob = 0.7,
                                 InputShape input = {}) {
  return init_network(arch, architecture_layers(arch, classes, keep_prob),
                      input, classes, seed);
}

/// Zero-valued parameter set with the same shapes; gradient container.
inline NetworkParams zeros_like(const NetworkParams& p) {
  NetworkParams g = p;
  for (auto& c : g.convs) {
    std::fill(c.w.begin(), c.w.end(), 0.0);
    std::fill(c.b.begin(), c.b.end(), 0.0);
  }
  for (auto& d : g.denses) {
    std::fill(d.w.begin(), d.w.end(), 0.0);
    std::fill(d.b.begin(), d.b.end(), 0.0);
  }
  return g;
}

/// Visits every parameter array in a fixed order (layer order, weights then
/// biases). The optimizer and the weights file share this enumeration.
template <typename Fn>
void for_each_param_array(NetworkParams& p, Fn&& fn) {
  for (auto& c : p.convs) {
    fn(c.w);
    fn(c.b);
  }
  for (auto& d : p.denses) {
    fn(d.w);
    fn(d.b);
  }
}

template <typename Fn>
void for_each_param_array(const NetworkParams& p, Fn&& fn) {
  for (const auto& c : p.convs) {
    fn(c.w);
    fn(c.b);
  }
  for (const auto& d : p.denses) {
    fn(d.w);
    fn(d.b);
  }
}

inline std::size_t parameter_count(const NetworkParams& p) {
  std::size_t n = 0;
  for_each_param_array(p, [&](const std::vector<double>& a) { n += a.size(); });
  return n;
}

// ---------------------------------------------------------------------------
// Layer forward / backward kernels
// ---------------------------------------------------------------------------

/// Same-padded strided 3D cross-correlation. Zero padding of (k-1)/2 on each
/// face gives output edges of ceil(n/s).
inline Tensor4 conv3d_forward(const Tensor4& in, const ConvParams& cp) {
  if (in.channels != cp.in_channels)
    throw std::invalid_argument("conv input channel mismatch");
  const int k = cp.kernel, s = cp.stride, pad = (cp.kernel - 1) / 2;
  const int ox_n = detail::conv_out_edge(in.nx, s);
  const int oy_n = detail::conv_out_edge(in.ny, s);
  const int oz_n = detail::conv_out_edge(in.nz, s);
  Tensor4 out(cp.out_channels, ox_n, oy_n, oz_n);

  parallel_for(static_cast<std::size_t>(cp.out_channels),
               [&](std::size_t oc_begin, std::size_t oc_end) {
    for (std::size_t oc = oc_begin; oc < oc_end; ++oc) {
      for (int ox = 0; ox < ox_n; ++ox)
        for (int oy = 0; oy < oy_n; ++oy)
          for (int oz = 0; oz < oz_n; ++oz) {
            double acc = cp.b[oc];
            for (int ic = 0; ic < cp.in_channels; ++ic) {
              const std::size_t w_base =
                  ((oc * cp.in_channels + ic) * k) * k * k;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * s - pad + kx;
                if (ix < 0 || ix >= in.nx) continue;
                for (int ky = 0; ky < k; ++ky) {
                  const int iy = oy * s - pad + ky;
                  if (iy < 0 || iy >= in.ny) continue;
                  const std::size_t w_row = w_base + (static_cast<std::size_t>(kx) * k + ky) * k;
                  const std::size_t in_row = ((static_cast<std::size_t>(ic) * in.nx + ix) * in.ny + iy) * in.nz;
                  for (int kz = 0; kz < k; ++kz) {
                    const int iz = oz * s - pad + kz;
                    if (iz < 0 || iz >= in.nz) continue;
                    acc += cp.w[w_row + kz] * in.data[in_row + iz];
                  }
                }
              }
            }
            out.at(static_cast<int>(oc), ox, oy, oz) = acc;
          }
    }
  });
  return out;
}

/// Accumulates weight/bias gradients into `grads` and, when `grad_in` is
/// non-null, the gradient with respect to the input.
inline void conv3d_backward(const Tensor4& in, const ConvParams& cp,
                            const Tensor4& grad_out, ConvParams& grads,
                            Tensor4* grad_in) {
  const int k = cp.kernel, s = cp.stride, pad = (cp.kernel - 1) / 2;
  if (grad_in) *grad_in = Tensor4(in.channels, in.nx, in.ny, in.nz);
  for (int oc = 0; oc < cp.out_channels; ++oc) {
    for (int ox = 0; ox < grad_out.nx; ++ox)
      for (int oy = 0; oy < grad_out.ny; ++oy)
        for (int oz = 0; oz < grad_out.nz; ++oz) {
          const double g = grad_out.at(oc, ox, oy, oz);
          if (g == 0.0) continue;
          grads.b[oc] += g;
          for (int ic = 0; ic < cp.in_channels; ++ic) {
            const std::size_t w_base = ((static_cast<std::size_t>(oc) * cp.in_channels + ic) * k) * k * k;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * s - pad + kx;
              if (ix < 0 || ix >= in.nx) continue;
              for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * s - pad + ky;
                if (iy < 0 || iy >= in.ny) continue;
                const std::size_t w_row = w_base + (static_cast<std::size_t>(kx) * k + ky) * k;
                const std::size_t in_row = ((static_cast<std::size_t>(ic) * in.nx + ix) * in.ny + iy) * in.nz;
                for (int kz = 0; kz < k; ++kz) {
                  const int iz = oz * s - pad + kz;
                  if (iz < 0 || iz >= in.nz) continue;
                  grads.w[w_row + kz] += g * in.data[in_row + iz];
                  if (grad_in) grad_in->data[in_row + iz] += g * cp.w[w_row + kz];
                }
              }
            }
          }
        }
  }
}

/// Ceil-mode max pooling with window == stride; partial windows at the high
/// edges are allowed, and an edge-1 axis passes through unchanged.
inline Tensor4 maxpool3d_forward(const Tensor4& in, int stride,
                                 std::vector<int>* argmax = nullptr) {
  const int s = stride;
  const int ox_n = detail::pool_out_edge(in.nx, s);
  const int oy_n = detail::pool_out_edge(in.ny, s);
  const int oz_n = detail::pool_out_edge(in.nz, s);
  Tensor4 out(in.channels, ox_n, oy_n, oz_n);
  if (argmax) argmax->assign(out.size(), 0);
  for (int c = 0; c < in.channels; ++c)
    for (int ox = 0; ox < ox_n; ++ox)
      for (int oy = 0; oy < oy_n; ++oy)
        for (int oz = 0; oz < oz_n; ++oz) {
          double best = -std::numeric_limits<double>::infinity();
          int best_idx = -1;
          for (int ix = ox * s; ix < std::min((ox + 1) * s, in.nx); ++ix)
            for (int iy = oy * s; iy < std::min((oy + 1) * s, in.ny); ++iy)
              for (int iz = oz * s; iz < std::min((oz + 1) * s, in.nz); ++iz) {
                const std::size_t idx = in.index(c, ix, iy, iz);
                if (in.data[idx] > best) {
                  best = in.data[idx];
                  best_idx = static_cast<int>(idx);
                }
              }
          const std::size_t out_idx = out.index(c, ox, oy, oz);
          out.data[out_idx] = best;
          if (argmax) (*argmax)[out_idx] = best_idx;
        }
  return out;
}

inline Tensor4 maxpool3d_backward(const Tensor4& in, const Tensor4& grad_out,
                                  const std::vector<int>& argmax) {
  Tensor4 grad_in(in.channels, in.nx, in.ny, in.nz);
  for (std::size_t o = 0; o < grad_out.size(); ++o)
    grad_in.data[argmax[o]] += grad_out.data[o];
  return grad_in;
}

inline std::vector<double> dense_forward(const DenseParams& dp,
                                         const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != dp.in)
    throw std::invalid_argument("dense input size mismatch");
  std::vector<double> y(dp.out);
  parallel_for(static_cast<std::size_t>(dp.out),
               [&](std::size_t begin, std::size_t end) {
    for (std::size_t o = begin; o < end; ++o) {
      const double* row = dp.w.data() + o * dp.in;
      double acc = dp.b[o];
      for (int i = 0; i < dp.in; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Whole-network forward
// ---------------------------------------------------------------------------

struct ForwardCache {
  std::vector<Tensor4> inputs;                       // input of each layer
  std::vector<std::vector<int>> pool_argmax;         // per layer (pools only)
  std::vector<std::vector<std::uint8_t>> drop_mask;  // per layer (dropout only)
};

/// Runs the layer stack. Train mode (dropout_rng != nullptr) applies
/// inverted dropout; eval mode is deterministic. The cache, when given,
/// records what the backward pass needs.
inline Tensor4 forward_tensor(const NetworkParams& params, const Tensor4& input,
                              Pcg32* dropout_rng = nullptr,
                              ForwardCache* cache = nullptr) {
  if (input.channels != params.input.channels || input.nx != params.input.nx ||
      input.ny != params.input.ny || input.nz != params.input.nz)
    throw std::invalid_argument("network input shape mismatch");
  if (cache) {
    cache->inputs.clear();
    cache->pool_argmax.assign(params.layers.size(), {});
    cache->drop_mask.assign(params.layers.size(), {});
  }

  Tensor4 act = input;
  std::size_t conv_i = 0, dense_i = 0;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& layer = params.layers[li];
    if (cache) cache->inputs.push_back(act);
    switch (layer.kind) {
      case LayerSpec::Kind::Conv3d:
        act = conv3d_forward(act, params.convs[conv_i++]);
        break;
      case LayerSpec::Kind::MaxPool3d:
        act = maxpool3d_forward(act, layer.stride,
                                cache ? &cache->pool_argmax[li] : nullptr);
        break;
      case LayerSpec::Kind::Dense: {
        const auto& dp = params.denses[dense_i++];
        std::vector<double> y = dense_forward(dp, act.data);
        act = Tensor4(dp.out, 1, 1, 1);
        act.data = std::move(y);
        break;
      }
      case LayerSpec::Kind::Relu:
        for (auto& v : act.data) v = v > 0.0 ? v : 0.0;
        break;
      case LayerSpec::Kind::Dropout: {
        if (dropout_rng) {
          const double keep = layer.keep;
          std::vector<std::uint8_t> mask(act.size());
          for (std::size_t i = 0; i < act.size(); ++i) {
            mask[i] = dropout_rng->uniform() < keep ? 1 : 0;
            act.data[i] = mask[i] ? act.data[i] / keep : 0.0;
          }
          if (cache) cache->drop_mask[li] = std::move(mask);
        }
        break;
      }
      case LayerSpec::Kind::Flatten: {
        Tensor4 flat(static_cast<int>(act.size()), 1, 1, 1);
        flat.data = std::move(act.data);
        act = std::move(flat);
        break;
      }
    }
  }
  if (static_cast<int>(act.size()) != params.classes)
    throw std::invalid_argument("network output size mismatch");
  return act;
}

inline std::vector<double> forward_logits(const NetworkParams& params,
                                          const Tensor4& input,
                                          Pcg32* dropout_rng = nullptr,
                                          ForwardCache* cache = nullptr) {
  return forward_tensor(params, input, dropout_rng, cache).data;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

/// argmax of softmax(logits); lowest class id wins ties.
inline int argmax_class(const std::vector<double>& scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

struct Prediction {
  int cls = 0;
  std::vector<double> probabilities;
};

inline Prediction predict(const NetworkParams& params, const Tensor4& input) {
  Prediction pred;
  pred.probabilities = softmax(forward_logits(params, input));
  pred.cls = argmax_class(pred.probabilities);
  return pred;
}

// ---------------------------------------------------------------------------
// Loss and backward
// ---------------------------------------------------------------------------

struct BatchItem {
  const Tensor4* input = nullptr;
  int label = 0;
};

/// Mean softmax cross-entropy over the batch plus gradients for every
/// parameter, computed by reverse-mode accumulation through the cached
/// forward. Dense weight gradients are accumulated once per batch from the
/// cached (input, output-gradient) pairs. Returns the batch loss; fills
/// `grads` (shaped like params) and, optionally, the number of correct
/// argmax predictions under the forward used for the loss.
inline double loss_and_backward(const NetworkParams& params,
                                const std::vector<BatchItem>& batch,
                                NetworkParams& grads,
                                Pcg32* dropout_rng = nullptr,
                                int* correct = nullptr) {
  if (batch.empty()) throw std::invalid_argument("batch must be nonempty");
  for (const auto& item : batch)
    if (item.label < 0 || item.label >= params.classes)
      throw std::invalid_argument("label out of range");

  grads = zeros_like(params);

  // First parametric layer never needs an input gradient.
  std::size_t first_param_layer = params.layers.size();
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto k = params.layers[li].kind;
    if (k == LayerSpec::Kind::Conv3d || k == LayerSpec::Kind::Dense) {
      first_param_layer = li;
      break;
    }
  }

  // Per dense layer: cached x and dy per item, flushed into dW at the end.
  struct DenseBatch {
    std::vector<std::vector<double>> xs, gys;
  };
  std::vector<DenseBatch> dense_batches(params.denses.size());

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total_loss = 0.0;
  if (correct) *correct = 0;

  ForwardCache cache;
  for (const auto& item : batch) {
    const std::vector<double> logits =
        forward_logits(params, *item.input, dropout_rng, &cache);
    const std::vector<double> probs = softmax(logits);

    // Stable cross-entropy: logsumexp(logits) - logits[label].
    const double m = *std::max_element(logits.begin(), logits.end());
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - m);
    total_loss += (m + std::log(lse) - logits[item.label]) * inv_b;
    if (correct && argmax_class(logits) == item.label) ++*correct;

    Tensor4 grad(params.classes, 1, 1, 1);
    for (int i = 0; i < params.classes; ++i)
      grad.data[i] = (probs[i] - (i == item.label ? 1.0 : 0.0)) * inv_b;

    // Reverse pass.
    std::size_t conv_i = params.convs.size();
    std::size_t dense_i = params.denses.size();
    for (std::size_t li = params.layers.size(); li-- > 0;) {
      const auto& layer = params.layers[li];
      const Tensor4& x = cache.inputs[li];
      switch (layer.kind) {
        case LayerSpec::Kind::Conv3d: {
          --conv_i;
          Tensor4 grad_in;
          conv3d_backward(x, params.convs[conv_i], grad,
                          grads.convs[conv_i],
                          li == first_param_layer ? nullptr : &grad_in);
          if (li == first_param_layer) { li = 0; grad = Tensor4(); }
          else grad = std::move(grad_in);
          break;
        }
        case LayerSpec::Kind::Dense: {
          --dense_i;
          const auto& dp = params.denses[dense_i];
          auto& db = dense_batches[dense_i];
          for (int o = 0; o < dp.out; ++o) grads.denses[dense_i].b[o] += grad.data[o];
          db.xs.push_back(x.data);
          db.gys.push_back(grad.data);
          if (li == first_param_layer) { li = 0; grad = Tensor4(); break; }
          // dx = W^T dy, accumulated row-wise so memory access stays linear.
          Tensor4 grad_in(x.channels, x.nx, x.ny, x.nz);
          parallel_for(static_cast<std::size_t>(dp.in),
                       [&](std::size_t begin, std::size_t end) {
            for (std::size_t o = 0; o < static_cast<std::size_t>(dp.out); ++o) {
              const double g = grad.data[o];
              if (g == 0.0) continue;
              const double* row = dp.w.data() + o * dp.in;
              for (std::size_t i = begin; i < end; ++i)
                grad_in.data[i] += g * row[i];
            }
          });
          grad = std::move(grad_in);
          break;
        }
        case LayerSpec::Kind::MaxPool3d:
          grad = maxpool3d_backward(x, grad, cache.pool_argmax[li]);
          break;
        case LayerSpec::Kind::Relu:
          for (std::size_t i = 0; i < grad.size(); ++i)
            if (x.data[i] <= 0.0) grad.data[i] = 0.0;
          break;
        case LayerSpec::Kind::Dropout:
          if (!cache.drop_mask[li].empty()) {
            const auto& mask = cache.drop_mask[li];
            for (std::size_t i = 0; i < grad.size(); ++i)
              grad.data[i] = mask[i] ? grad.data[i] / layer.keep : 0.0;
          }
          break;
        case LayerSpec::Kind::Flatten: {
          Tensor4 shaped(x.channels, x.nx, x.ny, x.nz);
          shaped.data = std::move(grad.data);
          grad = std::move(shaped);
          break;
        }
      }
      if (li == 0) break;
    }
  }

  // Deferred dense dW: dW[o][i] = sum_b gy_b[o] * x_b[i], items in order.
  for (std::size_t d = 0; d < params.denses.size(); ++d) {
    const auto& dp = params.denses[d];
    auto& gw = grads.denses[d].w;
    const auto& db = dense_batches[d];
    parallel_for(static_cast<std::size_t>(dp.out),
                 [&](std::size_t begin, std::size_t end) {
      for (std::size_t o = begin; o < end; ++o) {
        double* row = gw.data() + o * dp.in;
        for (std::size_t bi = 0; bi < db.xs.size(); ++bi) {
          const double g = db.gys[bi][o];
          if (g == 0.0) continue;
          const double* x = db.xs[bi].data();
          for (int i = 0; i < dp.in; ++i) row[i] += g * x[i];
        }
      }
    });
  }
  return total_loss;
}

}  // namespace nbv
