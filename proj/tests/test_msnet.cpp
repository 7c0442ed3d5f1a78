#include <gtest/gtest.h>

#include <filesystem>

#include "msreg/msnet.hpp"
#include "msreg/phantom.hpp"
#include "msreg/rng.hpp"
#include "oracles.hpp"

using namespace msreg;

namespace {

Tensor random_tensor(int c, int n, std::uint64_t seed) {
  Tensor t(c, n, n, n);
  Rng rng(seed);
  for (auto& v : t.data) v = rng.next_normal();
  return t;
}

// Net whose rectifier units are firmly on or firmly off: weights are scaled
// down and biases alternate +-1, so no pre-activation sits near zero and the
// finite-difference loss is smooth at h = 1e-3.
MsNet margin_net(const MsNetConfig& config, std::uint64_t seed) {
  MsNet net = make_msnet(config);
  init_weights(net, seed);
  for (auto& layer : net.layers) {
    for (auto& w : layer.weights) w *= 0.05;
    for (std::size_t b = 0; b < layer.bias.size(); ++b)
      layer.bias[b] = layer.relu ? (b % 2 == 0 ? 1.0 : -1.0) : 0.1;
  }
  return net;
}

double relu_margin(const MsNet& net, std::span<const PatchPair> batch) {
  double margin = 1e30;
  for (const auto& pair : batch) {
    ForwardTrace trace;
    forward(net, pair.complex_patch, &trace);
    for (int l = 0; l < net.layer_count(); ++l)
      if (net.layers[l].relu)
        for (double v : trace.preacts[l].data) margin = std::min(margin, std::abs(v));
  }
  return margin;
}

std::vector<PatchPair> random_batch(int items, int n, std::uint64_t seed) {
  std::vector<PatchPair> batch(items);
  Rng rng(seed);
  for (auto& p : batch) {
    p.complex_patch = Tensor(1, n, n, n);
    p.simple_patch = Tensor(1, n, n, n);
    for (auto& v : p.complex_patch.data) v = 0.5 + 0.2 * rng.next_normal();
    for (auto& v : p.simple_patch.data) v = 0.5 + 0.2 * rng.next_normal();
  }
  return batch;
}

}  // namespace

TEST(Forward, ZeroNetGivesZeroOutput) {
  MsNetConfig cfg;
  cfg.hidden_channels = {3, 3};
  cfg.skips = {{0, 2}};
  const MsNet net = make_msnet(cfg);  // weights default to zero
  const Tensor out = forward(net, random_tensor(1, 5, 3));
  for (double v : out.data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Forward, IdentityKernelNetCopiesInput) {
  const MsNet net = make_identity_msnet(2);
  const Tensor in = random_tensor(1, 6, 4);
  const Tensor out = forward(net, in);
  for (std::size_t i = 0; i < in.data.size(); ++i) EXPECT_DOUBLE_EQ(out.data[i], in.data[i]);
}

TEST(Forward, MatchesNestedLoopOracle) {
  MsNetConfig cfg;
  cfg.hidden_channels = {2, 3};
  cfg.skips = {{0, 2}};
  MsNet net = make_msnet(cfg);
  init_weights(net, 33);
  const Tensor in = random_tensor(1, 4, 5);
  const Tensor fast = forward(net, in);
  const Tensor slow = oracles::direct_forward(net, in);
  ASSERT_EQ(fast.data.size(), slow.data.size());
  for (std::size_t i = 0; i < fast.data.size(); ++i) {
    const double denom = std::max(std::abs(slow.data[i]), 1e-9);
    EXPECT_LT(std::abs(fast.data[i] - slow.data[i]) / denom, 1e-5);
  }
}

TEST(Forward, PreservesSpatialShapeEverywhere) {
  MsNetConfig cfg;
  cfg.hidden_channels = {4, 6, 4};
  cfg.skips = {{0, 3}, {1, 2}};
  MsNet net = make_msnet(cfg);
  init_weights(net, 3);
  Tensor in(1, 7, 5, 3);
  ForwardTrace trace;
  const Tensor out = forward(net, in, &trace);
  EXPECT_EQ(out.nz, 7);
  EXPECT_EQ(out.ny, 5);
  EXPECT_EQ(out.nx, 3);
  EXPECT_EQ(out.channels, 1);
  for (const auto& pre : trace.preacts) {
    EXPECT_EQ(pre.nz, 7);
    EXPECT_EQ(pre.ny, 5);
    EXPECT_EQ(pre.nx, 3);
  }
}

TEST(LossSsd, Examples) {
  Tensor a(1, 16, 16, 16), b(1, 16, 16, 16);
  EXPECT_DOUBLE_EQ(loss_ssd(a, b), 0.0);
  for (auto& v : a.data) v = 2.0;
  EXPECT_DOUBLE_EQ(loss_ssd(a, b), 4.0 * 4096.0);  // 16384
  Rng rng(2);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    a.data[i] = rng.next_normal();
    b.data[i] = rng.next_normal();
  }
  double expected = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    expected += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  EXPECT_DOUBLE_EQ(loss_ssd(a, b), expected);
  EXPECT_THROW(loss_ssd(a, Tensor(1, 8, 8, 8)), std::invalid_argument);
}

TEST(Gradients, ZeroAtTheMinimum) {
  MsNetConfig cfg;
  cfg.hidden_channels = {2};
  const MsNet net = make_identity_msnet(1);
  std::vector<PatchPair> batch(2);
  for (auto& p : batch) {
    p.complex_patch = random_tensor(1, 4, 5);
    p.simple_patch = p.complex_patch;  // prediction equals target
  }
  const Gradients grads = gradients(net, batch);
  for (const auto& layer : grads.weights)
    for (double g : layer) EXPECT_DOUBLE_EQ(g, 0.0);
  for (const auto& layer : grads.bias)
    for (double g : layer) EXPECT_DOUBLE_EQ(g, 0.0);
}

TEST(Gradients, MatchFiniteDifferences) {
  MsNetConfig cfg;
  cfg.hidden_channels = {2, 2};
  cfg.skips = {{0, 2}};
  MsNet net = margin_net(cfg, 11);
  const auto batch = random_batch(2, 4, 5);
  ASSERT_GT(relu_margin(net, batch), 0.1);  // finite differences stay on one relu branch

  const Gradients grads = gradients(net, batch);
  const double h = 1e-3;
  const auto batch_loss = [&]() {
    double loss = 0.0;
    for (const auto& p : batch) loss += loss_ssd(forward(net, p.complex_patch), p.simple_patch);
    return loss / static_cast<double>(batch.size());
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    for (std::size_t wi = 0; wi < net.layers[l].weights.size(); ++wi) {
      const double orig = net.layers[l].weights[wi];
      net.layers[l].weights[wi] = orig + h;
      const double up = batch_loss();
      net.layers[l].weights[wi] = orig - h;
      const double down = batch_loss();
      net.layers[l].weights[wi] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(grads.weights[l][wi]), 1e-9});
      EXPECT_LT(std::abs(fd - grads.weights[l][wi]) / denom, 1e-4) << "layer " << l << " w " << wi;
    }
    for (std::size_t bi = 0; bi < net.layers[l].bias.size(); ++bi) {
      const double orig = net.layers[l].bias[bi];
      net.layers[l].bias[bi] = orig + h;
      const double up = batch_loss();
      net.layers[l].bias[bi] = orig - h;
      const double down = batch_loss();
      net.layers[l].bias[bi] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(grads.bias[l][bi]), 1e-9});
      EXPECT_LT(std::abs(fd - grads.bias[l][bi]) / denom, 1e-4) << "layer " << l << " b " << bi;
    }
  }
}

TEST(Gradients, InvariantUnderBatchDuplication) {
  MsNetConfig cfg;
  cfg.hidden_channels = {2};
  MsNet net = margin_net(cfg, 7);
  auto batch = random_batch(3, 4, 9);
  const Gradients single = gradients(net, batch);
  std::vector<PatchPair> doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  const Gradients twice = gradients(net, doubled);
  for (std::size_t l = 0; l < single.weights.size(); ++l)
    for (std::size_t i = 0; i < single.weights[l].size(); ++i)
      EXPECT_NEAR(twice.weights[l][i], single.weights[l][i], 1e-12);
}

TEST(AdamStep, ZeroGradientsLeaveParametersUnchanged) {
  MsNetConfig cfg;
  cfg.hidden_channels = {2};
  MsNet net = make_msnet(cfg);
  init_weights(net, 1);
  const MsNet before = net;
  AdamState state = AdamState::zeros_like(net);
  adam_step(net, Gradients::zeros_like(net), state, TrainConfig{});
  for (std::size_t l = 0; l < net.layers.size(); ++l)
    EXPECT_EQ(net.layers[l].weights, before.layers[l].weights);
}

TEST(AdamStep, FirstStepHandValue) {
  // scalar parameter, g = 1, fresh state: update = -lr * 1 / (1 + eps)
  MsNetConfig cfg;
  cfg.hidden_channels = {1};
  MsNet net = make_msnet(cfg);  // all zero weights
  AdamState state = AdamState::zeros_like(net);
  Gradients grads = Gradients::zeros_like(net);
  grads.weights[0][0] = 1.0;
  TrainConfig config;
  config.learning_rate = 0.001;
  adam_step(net, grads, state, config);
  EXPECT_NEAR(net.layers[0].weights[0], -0.001 / (1.0 + 1e-8), 1e-12);
  EXPECT_EQ(state.step, 1);
}

TEST(Train, IdentityMappingStartsAndStaysAtZeroLoss) {
  MsNet net = make_identity_msnet(1);
  std::vector<PatchPair> pairs(4);
  for (auto& p : pairs) {
    p.complex_patch = random_tensor(1, 4, 21);
    p.simple_patch = p.complex_patch;
  }
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 2;
  const auto history = train(net, pairs, config);
  for (double loss : history) EXPECT_NEAR(loss, 0.0, 1e-18);
}

TEST(Train, DeterministicHistoryUnderFixedSeed) {
  MsNetConfig cfg;
  cfg.hidden_channels = {3};
  TrainConfig config;
  config.epochs = 4;
  config.batch_size = 2;
  config.seed = 5;
  const auto pairs = random_batch(6, 4, 77);
  MsNet net1 = make_msnet(cfg);
  init_weights(net1, 13);
  MsNet net2 = make_msnet(cfg);
  init_weights(net2, 13);
  const auto h1 = train(net1, pairs, config);
  const auto h2 = train(net2, pairs, config);
  EXPECT_EQ(h1, h2);
  for (std::size_t l = 0; l < net1.layers.size(); ++l)
    EXPECT_EQ(net1.layers[l].weights, net2.layers[l].weights);
}

TEST(SamplingMap, ConstantImageFallsBackToUniform) {
  const auto grid = make_grid(6, 6, 6);
  const Volume3 flat = Volume3::with_value(grid, 2.0);
  BrainMask mask = LabelVolume::zeros(grid);
  for (int z = 2; z < 5; ++z)
    for (int y = 2; y < 5; ++y)
      for (int x = 2; x < 5; ++x) mask.at(x, y, z) = 1;
  const SamplingMap map = sampling_map(flat, mask);
  const double uniform = 1.0 / 27.0;
  for (int z = 0; z < 6; ++z)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) {
        const double expected = mask.at(x, y, z) ? uniform : 0.0;
        EXPECT_NEAR(map.prob[grid.index(x, y, z)], expected, 1e-15);
      }
}

TEST(SamplingMap, StepEdgeConcentratesMass) {
  const auto grid = make_grid(16, 16, 16);
  Volume3 v = Volume3::zeros(grid);
  for (int z = 0; z < 16; ++z)
    for (int y = 0; y < 16; ++y)
      for (int x = 8; x < 16; ++x) v.at(x, y, z) = 1.0;
  const SamplingMap map = sampling_map(v, full_mask(grid));
  const auto reference = oracles::sampling_probability(v, full_mask(grid));
  double mass_on_edge = 0.0;
  for (int z = 0; z < 16; ++z)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const std::size_t i = grid.index(x, y, z);
        EXPECT_NEAR(map.prob[i], reference[i], 1e-12);
        if (x == 7 || x == 8) mass_on_edge += map.prob[i];
        else EXPECT_DOUBLE_EQ(map.prob[i], 0.0);  // central difference zero away from the edge
      }
  EXPECT_NEAR(mass_on_edge, 1.0, 1e-9);
}

TEST(SamplingMap, AlwaysSumsToOne) {
  const auto grid = make_grid(10, 9, 8);
  Rng rng(3);
  Volume3 v = Volume3::zeros(grid);
  for (auto& x : v.data) x = rng.next_double();
  BrainMask mask = LabelVolume::zeros(grid);
  for (std::size_t i = 0; i < mask.data.size(); ++i) mask.data[i] = rng.next_below(2);
  const SamplingMap map = sampling_map(v, mask);
  double total = 0.0;
  for (double p : map.prob) total += p;
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_THROW(sampling_map(v, LabelVolume::zeros(grid)), std::invalid_argument);
}

TEST(SamplePatchPairs, DegenerateMapYieldsCopiesOfOneCenter) {
  const auto grid = make_grid(20, 20, 20);
  Rng rng(8);
  Volume3 complex_vol = Volume3::zeros(grid);
  Volume3 simple_vol = Volume3::zeros(grid);
  for (auto& v : complex_vol.data) v = rng.next_double();
  for (auto& v : simple_vol.data) v = rng.next_double();
  SamplingMap map;
  map.grid = grid;
  map.mask = full_mask(grid);
  map.prob.assign(grid.voxel_count(), 0.0);
  map.prob[grid.index(9, 9, 9)] = 1.0;
  const auto pairs = sample_patch_pairs(complex_vol, simple_vol, map, 5, 123);
  ASSERT_EQ(pairs.size(), 5u);
  for (const auto& p : pairs) {
    EXPECT_EQ(p.center, (std::array<int, 3>{9, 9, 9}));
    EXPECT_EQ(p.complex_patch.data, pairs[0].complex_patch.data);
    // patch content is the volume window around the center
    EXPECT_DOUBLE_EQ(p.complex_patch.at(0, 7, 7, 7), complex_vol.at(9, 9, 9));
    EXPECT_DOUBLE_EQ(p.simple_patch.at(0, 0, 0, 0), simple_vol.at(2, 2, 2));
  }
}

TEST(SamplePatchPairs, SameSeedSamePairs) {
  const auto grid = make_grid(24, 24, 24);
  Rng rng(4);
  Volume3 complex_vol = Volume3::zeros(grid);
  for (auto& v : complex_vol.data) v = rng.next_double();
  const SamplingMap map = sampling_map(complex_vol, full_mask(grid));
  const auto a = sample_patch_pairs(complex_vol, complex_vol, map, 20, 9);
  const auto b = sample_patch_pairs(complex_vol, complex_vol, map, 20, 9);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].center, b[i].center);
    EXPECT_EQ(a[i].complex_patch.data, b[i].complex_patch.data);
  }
}

TEST(SamplePatchPairs, EmpiricalFrequenciesMatchStatedProbabilities) {
  // two valid centers with p = 0.25 / 0.75; 1e5 draws within 1% absolute
  const auto grid = make_grid(20, 20, 20);
  const Volume3 vol = Volume3::with_value(grid, 0.0);
  SamplingMap map;
  map.grid = grid;
  map.mask = full_mask(grid);
  map.prob.assign(grid.voxel_count(), 0.0);
  map.prob[grid.index(8, 8, 8)] = 0.25;
  map.prob[grid.index(10, 10, 10)] = 0.75;
  const auto pairs = sample_patch_pairs(vol, vol, map, 100000, 31);
  std::size_t first = 0;
  for (const auto& p : pairs) first += p.center == std::array<int, 3>{8, 8, 8};
  const double freq = static_cast<double>(first) / pairs.size();
  EXPECT_NEAR(freq, 0.25, 0.01);
}

TEST(SamplePatchPairs, NoValidCentersThrows) {
  const auto grid = make_grid(8, 8, 8);  // too small for 16^3 patches
  const Volume3 vol = Volume3::with_value(grid, 0.0);
  const SamplingMap map = sampling_map(vol, full_mask(grid));
  EXPECT_THROW(sample_patch_pairs(vol, vol, map, 1, 1), std::invalid_argument);
}

TEST(SimplifyVolume, SingleBlockEqualsForward) {
  const auto grid = make_grid(6, 5, 16);
  Rng rng(12);
  Volume3 vol = Volume3::zeros(grid);
  for (auto& v : vol.data) v = rng.next_double();
  MsNetConfig cfg;
  cfg.hidden_channels = {2};
  MsNet net = make_msnet(cfg);
  init_weights(net, 5);
  const Volume3 out = simplify_volume(net, vol);

  const auto [lo, hi] = min_max(vol);
  Tensor in(1, 16, 5, 6);
  for (int z = 0; z < 16; ++z)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x) in.at(0, z, y, x) = (vol.at(x, y, z) - lo) / (hi - lo);
  const Tensor fwd = forward(net, in);
  for (int z = 0; z < 16; ++z)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x)
        EXPECT_DOUBLE_EQ(out.at(x, y, z), lo + fwd.at(0, z, y, x) * (hi - lo));
}

TEST(SimplifyVolume, IdentityNetSurvivesOverlapAveraging) {
  const auto grid = make_grid(10, 9, 40);
  Rng rng(14);
  Volume3 vol = Volume3::zeros(grid);
  for (auto& v : vol.data) v = rng.next_double();
  const Volume3 out = simplify_volume(make_identity_msnet(1), vol);
  for (std::size_t i = 0; i < vol.data.size(); ++i) EXPECT_NEAR(out.data[i], vol.data[i], 1e-5);
}

TEST(SimplifyVolume, MatchesBlockAverageReferenceExactly) {
  const auto grid = make_grid(7, 6, 24);
  Rng rng(15);
  Volume3 vol = Volume3::zeros(grid);
  for (auto& v : vol.data) v = rng.next_double();
  MsNetConfig cfg;
  cfg.hidden_channels = {2, 2};
  cfg.skips = {{0, 2}};
  MsNet net = make_msnet(cfg);
  init_weights(net, 20);
  const Volume3 fast = simplify_volume(net, vol);
  const Volume3 reference = oracles::block_average_reference(net, vol, 16, 8);
  EXPECT_EQ(fast.data, reference.data);  // identical arithmetic order
}

TEST(SimplifyVolume, ShortVolumeIsPaddedAndCropped) {
  const auto grid = make_grid(6, 6, 9);  // nz < 16
  Rng rng(16);
  Volume3 vol = Volume3::zeros(grid);
  for (auto& v : vol.data) v = rng.next_double();
  const Volume3 out = simplify_volume(make_identity_msnet(1), vol);
  EXPECT_EQ(out.grid.dims, grid.dims);
  for (std::size_t i = 0; i < vol.data.size(); ++i) EXPECT_NEAR(out.data[i], vol.data[i], 1e-9);
}

TEST(MsNetIo, RoundTripPreservesEverything) {
  MsNetConfig cfg;
  cfg.hidden_channels = {3, 4};
  cfg.skips = {{0, 2}};
  MsNet net = make_msnet(cfg);
  init_weights(net, 44);
  const auto path = (std::filesystem::temp_directory_path() / "msreg_net.bin").string();
  write_msnet(net, path);
  const MsNet r = read_msnet(path);
  ASSERT_EQ(r.layers.size(), net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    EXPECT_EQ(r.layers[l].in_channels, net.layers[l].in_channels);
    EXPECT_EQ(r.layers[l].out_channels, net.layers[l].out_channels);
    EXPECT_EQ(r.layers[l].relu, net.layers[l].relu);
    EXPECT_EQ(r.layers[l].weights, net.layers[l].weights);
    EXPECT_EQ(r.layers[l].bias, net.layers[l].bias);
  }
  ASSERT_EQ(r.skips.size(), net.skips.size());
  EXPECT_EQ(r.skips[0].src, 0);
  EXPECT_EQ(r.skips[0].dst, 2);
  EXPECT_TRUE(std::filesystem::exists(path + ".txt"));  // text summary
}

TEST(MsNet, DefaultArchitectureShape) {
  const MsNet net = make_msnet(MsNetConfig{});
  ASSERT_EQ(net.layer_count(), 9);  // 8 hidden + 1 output
  EXPECT_EQ(net.layers[0].in_channels, 1);
  EXPECT_EQ(net.layers[0].out_channels, 32);
  EXPECT_EQ(net.layers[4].in_channels, 64 + 64);  // concat from layer 2
  EXPECT_EQ(net.layers[5].in_channels, 64 + 32);  // concat from layer 1
  EXPECT_EQ(net.layers[8].out_channels, 1);
  EXPECT_FALSE(net.layers[8].relu);
}
