#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "msreg/parallel.hpp"
#include "msreg/rng.hpp"
#include "msreg/volume.hpp"

namespace msreg {

// Dense (channels, z, y, x) tensor, x fastest.
struct Tensor {
  int channels = 0, nz = 0, ny = 0, nx = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int z, int y, int x)
      : channels(c), nz(z), ny(y), nx(x),
        data(static_cast<std::size_t>(c) * z * y * x, 0.0) {}

  std::size_t spatial_size() const { return static_cast<std::size_t>(nz) * ny * nx; }
  std::size_t index(int c, int z, int y, int x) const {
    return ((static_cast<std::size_t>(c) * nz + z) * ny + y) * nx + x;
  }
  double at(int c, int z, int y, int x) const { return data[index(c, z, y, x)]; }
  double& at(int c, int z, int y, int x) { return data[index(c, z, y, x)]; }
  bool same_shape(const Tensor& o) const {
    return channels == o.channels && nz == o.nz && ny == o.ny && nx == o.nx;
  }
};

// One 3x3x3, stride-1, zero-pad-1 convolution layer; spatial dims are
// preserved by construction. Weight layout: [out][in][dz][dy][dx].
struct ConvLayer {
  int in_channels = 0, out_channels = 0;
  bool relu = true;
  std::vector<double> weights;
  std::vector<double> bias;

  std::size_t weight_count() const {
    return static_cast<std::size_t>(in_channels) * out_channels * 27;
  }
  std::size_t weight_index(int oc, int ic, int dz, int dy, int dx) const {
    return ((static_cast<std::size_t>(oc) * in_channels + ic) * 3 + dz) * 9 +
           static_cast<std::size_t>(dy) * 3 + dx;
  }
};

// Channel-concatenation edge: the output of layer `src` is appended to the
// input of layer `dst` (0-based layer indices, src < dst).
struct SkipEdge {
  int src = 0;
  int dst = 0;
};

struct MsNetConfig {
  std::vector<int> hidden_channels{32, 64, 64, 64, 64, 64, 32, 32};
  std::vector<SkipEdge> skips{{0, 5}, {1, 4}};
};

// The morphological simplification network: a chain of 3D conv layers with
// rectifier activations, optional concatenation skips, and a final 1-channel
// linear layer. No pooling anywhere, so every layer keeps the input's
// spatial dims.
struct MsNet {
  std::vector<ConvLayer> layers;  // hidden layers then the output layer
  std::vector<SkipEdge> skips;

  int layer_count() const { return static_cast<int>(layers.size()); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight_count() + l.bias.size();
    return n;
  }

  // Extra input channels layer `dst` receives through skips, in declared
  // order.
  std::vector<int> skip_sources(int dst) const {
    std::vector<int> out;
    for (const auto& e : skips)
      if (e.dst == dst) out.push_back(e.src);
    return out;
  }
};

inline MsNet make_msnet(const MsNetConfig& config) {
  if (config.hidden_channels.empty())
    throw std::invalid_argument("MsNet: at least one hidden layer required");
  const int hidden = static_cast<int>(config.hidden_channels.size());
  for (const auto& e : config.skips) {
    if (e.src < 0 || e.dst <= e.src || e.dst >= hidden + 1)
      throw std::invalid_argument("MsNet: invalid skip edge");
  }
  MsNet net;
  net.skips = config.skips;
  std::vector<int> out_channels(hidden + 1);
  for (int l = 0; l < hidden; ++l) out_channels[l] = config.hidden_channels[l];
  out_channels[hidden] = 1;
  for (int l = 0; l <= hidden; ++l) {
    ConvLayer layer;
    layer.out_channels = out_channels[l];
    layer.in_channels = l == 0 ? 1 : out_channels[l - 1];
    for (const auto& e : config.skips)
      if (e.dst == l) layer.in_channels += out_channels[e.src];
    layer.relu = l < hidden;
    layer.weights.assign(layer.weight_count(), 0.0);
    layer.bias.assign(static_cast<std::size_t>(layer.out_channels), 0.0);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

// Fan-in-scaled uniform initialization, biases zero.
inline void init_weights(MsNet& net, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& layer : net.layers) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(layer.in_channels) * 27.0);
    for (auto& w : layer.weights) w = rng.next_in(-limit, limit);
    for (auto& b : layer.bias) b = 0.0;
  }
}

// A net whose every layer passes its first input channel through unchanged
// (center tap 1). Useful as a fixed point for tests and smoke checks.
inline MsNet make_identity_msnet(int hidden_layers = 1) {
  MsNetConfig config;
  config.hidden_channels.assign(static_cast<std::size_t>(hidden_layers), 1);
  config.skips.clear();
  MsNet net = make_msnet(config);
  for (auto& layer : net.layers) {
    layer.relu = false;  // identity must pass negative intensities
    layer.weights.assign(layer.weight_count(), 0.0);
    layer.weights[layer.weight_index(0, 0, 1, 1, 1)] = 1.0;
  }
  return net;
}

namespace detail {

inline void conv3_forward(const ConvLayer& layer, const Tensor& in, Tensor& out) {
  parallel_for(0, layer.out_channels, [&](std::int64_t ocl) {
    const int oc = static_cast<int>(ocl);
    const double b = layer.bias[oc];
    for (int z = 0; z < in.nz; ++z)
      for (int y = 0; y < in.ny; ++y)
        for (int x = 0; x < in.nx; ++x) {
          double acc = b;
          for (int ic = 0; ic < layer.in_channels; ++ic)
            for (int dz = 0; dz < 3; ++dz) {
              const int sz = z + dz - 1;
              if (sz < 0 || sz >= in.nz) continue;
              for (int dy = 0; dy < 3; ++dy) {
                const int sy = y + dy - 1;
                if (sy < 0 || sy >= in.ny) continue;
                for (int dx = 0; dx < 3; ++dx) {
                  const int sx = x + dx - 1;
                  if (sx < 0 || sx >= in.nx) continue;
                  acc += layer.weights[layer.weight_index(oc, ic, dz, dy, dx)] *
                         in.at(ic, sz, sy, sx);
                }
              }
            }
          out.at(oc, z, y, x) = acc;
        }
  });
}

}  // namespace detail

struct ForwardTrace {
  std::vector<Tensor> inputs;   // concatenated input of each layer
  std::vector<Tensor> preacts;  // pre-activation output of each layer
};

// Layer-by-layer forward pass; output spatial dims equal input dims.
inline Tensor forward(const MsNet& net, const Tensor& input, ForwardTrace* trace = nullptr) {
  if (input.channels != 1) throw std::invalid_argument("forward: input must have one channel");
  if (input.nx < 1 || input.ny < 1 || input.nz < 1)
    throw std::invalid_argument("forward: empty input");
  std::vector<Tensor> activations;  // post-activation outputs, per layer
  activations.reserve(net.layers.size());
  if (trace) {
    trace->inputs.clear();
    trace->preacts.clear();
  }
  for (int l = 0; l < net.layer_count(); ++l) {
    const auto& layer = net.layers[l];
    Tensor in = l == 0 ? input : activations[l - 1];
    for (int src : net.skip_sources(l)) {
      const Tensor& extra = activations[src];
      Tensor merged(in.channels + extra.channels, in.nz, in.ny, in.nx);
      std::copy(in.data.begin(), in.data.end(), merged.data.begin());
      std::copy(extra.data.begin(), extra.data.end(), merged.data.begin() + in.data.size());
      in = std::move(merged);
    }
    if (in.channels != layer.in_channels)
      throw std::invalid_argument("forward: layer input channels mismatch");
    Tensor pre(layer.out_channels, in.nz, in.ny, in.nx);
    detail::conv3_forward(layer, in, pre);
    Tensor post = pre;
    if (layer.relu)
      for (auto& v : post.data) v = v > 0.0 ? v : 0.0;
    if (trace) {
      trace->inputs.push_back(std::move(in));
      trace->preacts.push_back(pre);
    }
    activations.push_back(std::move(post));
  }
  return activations.back();
}

// Sum of squared differences over all voxels.
inline double loss_ssd(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) throw std::invalid_argument("loss_ssd: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    acc += d * d;
  }
  return acc;
}

struct PatchPair {
  Tensor complex_patch;  // network input
  Tensor simple_patch;   // training target
  std::array<int, 3> center{0, 0, 0};
};

struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;

  static Gradients zeros_like(const MsNet& net) {
    Gradients g;
    for (const auto& l : net.layers) {
      g.weights.emplace_back(l.weight_count(), 0.0);
      g.bias.emplace_back(l.bias.size(), 0.0);
    }
    return g;
  }
};

namespace detail {

// Backward pass of one conv layer: accumulates weight/bias gradients and
// returns the gradient with respect to the layer input.
inline Tensor conv3_backward(const ConvLayer& layer, const Tensor& in, const Tensor& grad_out,
                             std::vector<double>& grad_w, std::vector<double>& grad_b) {
  Tensor grad_in(layer.in_channels, in.nz, in.ny, in.nx);
  for (int oc = 0; oc < layer.out_channels; ++oc) {
    double gb = 0.0;
    for (int z = 0; z < in.nz; ++z)
      for (int y = 0; y < in.ny; ++y)
        for (int x = 0; x < in.nx; ++x) {
          const double g = grad_out.at(oc, z, y, x);
          if (g == 0.0) continue;
          gb += g;
          for (int ic = 0; ic < layer.in_channels; ++ic)
            for (int dz = 0; dz < 3; ++dz) {
              const int sz = z + dz - 1;
              if (sz < 0 || sz >= in.nz) continue;
              for (int dy = 0; dy < 3; ++dy) {
                const int sy = y + dy - 1;
                if (sy < 0 || sy >= in.ny) continue;
                for (int dx = 0; dx < 3; ++dx) {
                  const int sx = x + dx - 1;
                  if (sx < 0 || sx >= in.nx) continue;
                  const std::size_t wi = layer.weight_index(oc, ic, dz, dy, dx);
                  grad_w[wi] += g * in.at(ic, sz, sy, sx);
                  grad_in.at(ic, sz, sy, sx) += g * layer.weights[wi];
                }
              }
            }
        }
    grad_b[oc] += gb;
  }
  return grad_in;
}

inline void backward_item(const MsNet& net, const ForwardTrace& trace, const Tensor& output,
                          const Tensor& target, Gradients& grads) {
  const int layer_count = net.layer_count();
  // d(SSD)/d(prediction)
  Tensor grad(output.channels, output.nz, output.ny, output.nx);
  for (std::size_t i = 0; i < output.data.size(); ++i)
    grad.data[i] = 2.0 * (output.data[i] - target.data[i]);

  // Gradients flowing into each layer's post-activation output (from the
  // chain successor and from any skip consumers).
  std::vector<Tensor> pending(static_cast<std::size_t>(layer_count));
  for (int l = layer_count - 1; l >= 0; --l) {
    const auto& layer = net.layers[l];
    Tensor grad_post = l == layer_count - 1 ? std::move(grad) : std::move(pending[l]);
    if (layer.relu)
      for (std::size_t i = 0; i < grad_post.data.size(); ++i)
        if (trace.preacts[l].data[i] <= 0.0) grad_post.data[i] = 0.0;
    Tensor grad_in = conv3_backward(layer, trace.inputs[l], grad_post, grads.weights[l], grads.bias[l]);

    // Split the concatenated input gradient back to its sources.
    const auto sources = net.skip_sources(l);
    const int own_channels =
        layer.in_channels - [&] {
          int extra = 0;
          for (int src : sources) extra += net.layers[src].out_channels;
          return extra;
        }();
    std::size_t offset = static_cast<std::size_t>(own_channels) * grad_in.spatial_size();
    if (l > 0) {
      Tensor& dst = pending[l - 1];
      if (dst.data.empty()) dst = Tensor(own_channels, grad_in.nz, grad_in.ny, grad_in.nx);
      for (std::size_t i = 0; i < offset; ++i) dst.data[i] += grad_in.data[i];
    }
    for (int src : sources) {
      const int src_channels = net.layers[src].out_channels;
      Tensor& dst = pending[src];
      if (dst.data.empty()) dst = Tensor(src_channels, grad_in.nz, grad_in.ny, grad_in.nx);
      const std::size_t count = static_cast<std::size_t>(src_channels) * grad_in.spatial_size();
      for (std::size_t i = 0; i < count; ++i) dst.data[i] += grad_in.data[offset + i];
      offset += count;
    }
  }
}

}  // namespace detail

// Exact analytic gradients of the batch-mean SSD loss with respect to every
// weight and bias. Also reports the mean loss of the batch if asked.
inline Gradients gradients(const MsNet& net, std::span<const PatchPair> batch,
                           double* mean_loss = nullptr) {
  if (batch.empty()) throw std::invalid_argument("gradients: empty batch");
  Gradients grads = Gradients::zeros_like(net);
  double loss_sum = 0.0;
  for (const auto& pair : batch) {
    ForwardTrace trace;
    const Tensor out = forward(net, pair.complex_patch, &trace);
    loss_sum += loss_ssd(out, pair.simple_patch);
    detail::backward_item(net, trace, out, pair.simple_patch, grads);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& w : grads.weights)
    for (auto& v : w) v *= inv;
  for (auto& b : grads.bias)
    for (auto& v : b) v *= inv;
  if (mean_loss) *mean_loss = loss_sum * inv;
  return grads;
}

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 32;
  int epochs = 10;
  int patches_per_pair = 20000;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (batch_size < 1 || epochs < 0 || patches_per_pair < 1)
      throw std::invalid_argument("TrainConfig: sizes must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 && epsilon > 0.0))
      throw std::invalid_argument("TrainConfig: invalid Adam constants");
  }
};

struct AdamState {
  std::vector<std::vector<double>> m_weights, v_weights, m_bias, v_bias;
  long step = 0;

  static AdamState zeros_like(const MsNet& net) {
    AdamState s;
    for (const auto& l : net.layers) {
      s.m_weights.emplace_back(l.weight_count(), 0.0);
      s.v_weights.emplace_back(l.weight_count(), 0.0);
      s.m_bias.emplace_back(l.bias.size(), 0.0);
      s.v_bias.emplace_back(l.bias.size(), 0.0);
    }
    return s;
  }
};

// Standard Adam step with bias correction.
inline void adam_step(MsNet& net, const Gradients& grads, AdamState& state,
                      const TrainConfig& config) {
  if (state.m_weights.size() != net.layers.size() || grads.weights.size() != net.layers.size())
    throw std::invalid_argument("adam_step: state/gradient layout mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const auto update = [&](std::vector<double>& params, const std::vector<double>& g,
                          std::vector<double>& m, std::vector<double>& v) {
    if (params.size() != g.size() || params.size() != m.size())
      throw std::invalid_argument("adam_step: parameter dimension mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      params[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    update(net.layers[l].weights, grads.weights[l], state.m_weights[l], state.v_weights[l]);
    update(net.layers[l].bias, grads.bias[l], state.m_bias[l], state.v_bias[l]);
  }
}

// Mini-batch training with a seeded shuffle per epoch. Returns the mean
// per-item SSD loss of each epoch (measured at the pre-update forward pass).
inline std::vector<double> train(MsNet& net, std::span<const PatchPair> pairs,
                                 const TrainConfig& config) {
  config.validate();
  if (pairs.empty()) throw std::invalid_argument("train: no training pairs");
  AdamState state = AdamState::zeros_like(net);
  Rng rng(config.seed);
  std::vector<double> history;
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<PatchPair> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(pairs[order[k]]);
      double mean_loss = 0.0;
      const Gradients grads = gradients(net, batch, &mean_loss);
      loss_sum += mean_loss * static_cast<double>(batch.size());
      adam_step(net, grads, state, config);
    }
    history.push_back(loss_sum / static_cast<double>(pairs.size()));
  }
  return history;
}

// --- Eq. 2 sampling ----------------------------------------------------------

struct SamplingMap {
  GridInfo grid;
  std::vector<double> prob;  // sums to 1 over the mask, 0 outside
  BrainMask mask;
};

// Per-voxel sampling probability: |grad_x| + |grad_y| + |grad_z| by central
// differences (clamped at faces), normalized to sum 1 over the mask. A
// gradient-free image falls back to uniform over the mask.
inline SamplingMap sampling_map(const Volume3& g, const BrainMask& mask) {
  require_same_grid(g.grid, mask.grid, "sampling_map");
  std::size_t support = 0;
  for (int v : mask.data) support += v != 0 ? 1 : 0;
  if (support == 0) throw std::invalid_argument("sampling_map: empty mask");
  SamplingMap map;
  map.grid = g.grid;
  map.mask = mask;
  map.prob.assign(g.data.size(), 0.0);
  const auto& d = g.grid.dims;
  double total = 0.0;
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const std::size_t i = g.grid.index(x, y, z);
        if (mask.data[i] == 0) continue;
        const int xm = x > 0 ? x - 1 : x, xp = x < d[0] - 1 ? x + 1 : x;
        const int ym = y > 0 ? y - 1 : y, yp = y < d[1] - 1 ? y + 1 : y;
        const int zm = z > 0 ? z - 1 : z, zp = z < d[2] - 1 ? z + 1 : z;
        const double gx = (g.at(xp, y, z) - g.at(xm, y, z)) / 2.0;
        const double gy = (g.at(x, yp, z) - g.at(x, ym, z)) / 2.0;
        const double gz = (g.at(x, y, zp) - g.at(x, y, zm)) / 2.0;
        const double w = std::abs(gx) + std::abs(gy) + std::abs(gz);
        map.prob[i] = w;
        total += w;
      }
  if (total < 1e-12) {
    const double uniform = 1.0 / static_cast<double>(support);
    for (std::size_t i = 0; i < map.prob.size(); ++i)
      map.prob[i] = mask.data[i] != 0 ? uniform : 0.0;
  } else {
    for (auto& p : map.prob) p /= total;
  }
  return map;
}

// Draws n patch centers i.i.d. from the map restricted to centers whose
// patch fits in-bounds, deterministic in the seed. Patches span
// [c - (size-1)/2, c + size/2] per axis.
inline std::vector<PatchPair> sample_patch_pairs(const Volume3& complex_vol,
                                                 const Volume3& simple_vol, const SamplingMap& map,
                                                 int n, std::uint64_t seed, int patch_size = 16) {
  require_same_grid(complex_vol.grid, simple_vol.grid, "sample_patch_pairs");
  require_same_grid(complex_vol.grid, map.grid, "sample_patch_pairs");
  if (n < 1) throw std::invalid_argument("sample_patch_pairs: n must be >= 1");
  const int lo = (patch_size - 1) / 2, hi = patch_size / 2;
  const auto& d = map.grid.dims;

  std::vector<std::size_t> centers;
  std::vector<double> cdf;
  double total = 0.0;
  for (int z = lo; z + hi < d[2]; ++z)
    for (int y = lo; y + hi < d[1]; ++y)
      for (int x = lo; x + hi < d[0]; ++x) {
        const std::size_t i = map.grid.index(x, y, z);
        if (map.prob[i] <= 0.0) continue;
        centers.push_back(i);
        total += map.prob[i];
        cdf.push_back(total);
      }
  if (centers.empty())
    throw std::invalid_argument("sample_patch_pairs: no valid patch centers under the map");

  const auto extract = [&](const Volume3& vol, int cx, int cy, int cz) {
    Tensor t(1, patch_size, patch_size, patch_size);
    for (int z = 0; z < patch_size; ++z)
      for (int y = 0; y < patch_size; ++y)
        for (int x = 0; x < patch_size; ++x)
          t.at(0, z, y, x) = vol.at(cx - lo + x, cy - lo + y, cz - lo + z);
    return t;
  };

  Rng rng(seed);
  std::vector<PatchPair> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double u = rng.next_double() * total;
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    const std::size_t pick = std::min(centers.size() - 1,
                                      static_cast<std::size_t>(it - cdf.begin()));
    const std::size_t i = centers[pick];
    const int cx = static_cast<int>(i % d[0]);
    const int cy = static_cast<int>((i / d[0]) % d[1]);
    const int cz = static_cast<int>(i / (static_cast<std::size_t>(d[0]) * d[1]));
    PatchPair pair;
    pair.center = {cx, cy, cz};
    pair.complex_patch = extract(complex_vol, cx, cy, cz);
    pair.simple_patch = extract(simple_vol, cx, cy, cz);
    out.push_back(std::move(pair));
  }
  return out;
}

// --- whole-volume inference --------------------------------------------------

namespace detail {

inline std::vector<int> block_starts(int nz, int block, int stride) {
  std::vector<int> starts;
  if (nz <= block) {
    starts.push_back(0);
    return starts;
  }
  for (int z = 0; z + block <= nz; z += stride) starts.push_back(z);
  if (starts.back() + block < nz) starts.push_back(nz - block);
  return starts;
}

}  // namespace detail

// Whole-volume inference with the 16-slice block protocol: blocks of 16
// axial slices starting at z = 0, 8, 16, ... (the final block aligned to the
// end when needed), each voxel averaged over all covering blocks. Intensities
// are mapped to [0,1] by the volume's min/max before the network and mapped
// back after. Volumes with fewer than 16 slices are zero-padded in z and
// cropped back.
inline Volume3 simplify_volume(const MsNet& net, const Volume3& vol, int block = 16,
                               int overlap = 8) {
  if (block < 1 || overlap < 0 || overlap >= block)
    throw std::invalid_argument("simplify_volume: invalid block/overlap");
  const auto& d = vol.grid.dims;
  const auto [lo, hi] = min_max(vol);
  const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;

  const int nz = std::max(d[2], block);
  Tensor norm(1, nz, d[1], d[0]);
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x)
        norm.at(0, z, y, x) = (vol.at(x, y, z) - lo) * scale;

  std::vector<double> acc(norm.data.size(), 0.0);
  std::vector<int> cover(norm.data.size(), 0);
  const auto starts = detail::block_starts(nz, block, block - overlap);
  for (int s : starts) {
    Tensor in(1, block, d[1], d[0]);
    std::copy(norm.data.begin() + static_cast<std::size_t>(s) * d[1] * d[0],
              norm.data.begin() + static_cast<std::size_t>(s + block) * d[1] * d[0],
              in.data.begin());
    const Tensor out = forward(net, in);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      acc[static_cast<std::size_t>(s) * d[1] * d[0] + i] += out.data[i];
      cover[static_cast<std::size_t>(s) * d[1] * d[0] + i] += 1;
    }
  }

  Volume3 result = Volume3::zeros(vol.grid);
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const std::size_t i = (static_cast<std::size_t>(z) * d[1] + y) * d[0] + x;
        const double mean = acc[i] / static_cast<double>(cover[i]);
        result.at(x, y, z) = lo + mean * (hi - lo);
      }
  return result;
}

// --- parameter serialization -------------------------------------------------
//
// Binary format: magic "MSNET001", then a layer table (in/out channels, relu
// flag), skip edges, and the little-endian float64 parameter payload (per
// layer: weights then biases). A text summary goes to <path>.txt.

inline void write_msnet(const MsNet& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  const auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  out.write("MSNET001", 8);
  put_u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    put_u32(static_cast<std::uint32_t>(l.in_channels));
    put_u32(static_cast<std::uint32_t>(l.out_channels));
    put_u32(l.relu ? 1 : 0);
  }
  put_u32(static_cast<std::uint32_t>(net.skips.size()));
  for (const auto& e : net.skips) {
    put_u32(static_cast<std::uint32_t>(e.src));
    put_u32(static_cast<std::uint32_t>(e.dst));
  }
  for (const auto& l : net.layers) {
    out.write(reinterpret_cast<const char*>(l.weights.data()),
              static_cast<std::streamsize>(l.weights.size() * 8));
    out.write(reinterpret_cast<const char*>(l.bias.data()),
              static_cast<std::streamsize>(l.bias.size() * 8));
  }
  if (!out) throw std::runtime_error("write failed: " + path);

  std::ofstream txt(path + ".txt", std::ios::trunc);
  txt << "layers: " << net.layers.size() << "\n";
  for (std::size_t l = 0; l < net.layers.size(); ++l)
    txt << "layer " << l << ": in=" << net.layers[l].in_channels
        << " out=" << net.layers[l].out_channels
        << (net.layers[l].relu ? " relu" : " linear") << "\n";
  for (const auto& e : net.skips) txt << "skip: " << e.src << " -> " << e.dst << "\n";
  txt << "parameters: " << net.parameter_count() << "\n";
}

inline MsNet read_msnet(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "MSNET001", 8) != 0)
    throw std::runtime_error("bad MS-Net magic in " + path);
  const auto get_u32 = [&]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  MsNet net;
  const std::uint32_t layer_count = get_u32();
  if (layer_count == 0 || layer_count > 1024) throw std::runtime_error("bad layer count in " + path);
  net.layers.resize(layer_count);
  for (auto& l : net.layers) {
    l.in_channels = static_cast<int>(get_u32());
    l.out_channels = static_cast<int>(get_u32());
    l.relu = get_u32() != 0;
  }
  const std::uint32_t skip_count = get_u32();
  net.skips.resize(skip_count);
  for (auto& e : net.skips) {
    e.src = static_cast<int>(get_u32());
    e.dst = static_cast<int>(get_u32());
  }
  for (auto& l : net.layers) {
    l.weights.resize(l.weight_count());
    l.bias.resize(static_cast<std::size_t>(l.out_channels));
    in.read(reinterpret_cast<char*>(l.weights.data()),
            static_cast<std::streamsize>(l.weights.size() * 8));
    in.read(reinterpret_cast<char*>(l.bias.data()),
            static_cast<std::streamsize>(l.bias.size() * 8));
  }
  if (!in) throw std::runtime_error("truncated MS-Net file: " + path);
  return net;
}

}  // namespace msreg
