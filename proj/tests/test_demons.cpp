#include <gtest/gtest.h>

#include "msreg/demons.hpp"
#include "msreg/metrics.hpp"
#include "msreg/phantom.hpp"
#include "msreg/rng.hpp"
#include "oracles.hpp"

using namespace msreg;

namespace {

Volume3 gaussian_blob(GridInfo grid, double cx, double cy, double cz, double sigma) {
  Volume3 v = Volume3::zeros(grid);
  const auto& d = grid.dims;
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x)
        v.at(x, y, z) = std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz)) /
                                 (2.0 * sigma * sigma));
  return v;
}

}  // namespace

TEST(DemonsForce, IdenticalImagesGiveZeroField) {
  const auto grid = make_grid(10, 10, 10);
  Rng rng(4);
  Volume3 v = Volume3::zeros(grid);
  for (auto& x : v.data) x = rng.next_double();
  const VectorField3 f = demons_force(v, v, 1.0);
  EXPECT_DOUBLE_EQ(max_displacement(f), 0.0);
}

TEST(DemonsForce, RampHandValue) {
  const auto grid = make_grid(12, 8, 8);
  Volume3 fixed = Volume3::zeros(grid);
  Volume3 moving = Volume3::zeros(grid);
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 12; ++x) {
        fixed.at(x, y, z) = x;
        moving.at(x, y, z) = x + 1.0;
      }
  const VectorField3 f = demons_force(fixed, moving, 1.0);
  // u = (m - f) grad f / (|grad f|^2 + (m-f)^2/k^2) = 1*1 / (1+1) = 0.5
  for (int z = 1; z < 7; ++z)
    for (int y = 1; y < 7; ++y)
      for (int x = 1; x < 11; ++x) {
        const auto u = f.at(x, y, z);
        EXPECT_NEAR(u[0], 0.5, 1e-12);
        EXPECT_NEAR(u[1], 0.0, 1e-12);
        EXPECT_NEAR(u[2], 0.0, 1e-12);
      }
}

TEST(DemonsForce, FlatFixedRegionGivesZeroForce) {
  const auto grid = make_grid(8, 8, 8);
  const Volume3 fixed = Volume3::with_value(grid, 0.5);
  Rng rng(9);
  Volume3 moving = Volume3::zeros(grid);
  for (auto& x : moving.data) x = rng.next_double();
  const VectorField3 f = demons_force(fixed, moving, 1.0);
  EXPECT_DOUBLE_EQ(max_displacement(f), 0.0);  // zero-gradient guard
}

TEST(GaussianSmoothField, SigmaZeroIsBitwiseIdentity) {
  const auto grid = make_grid(9, 9, 9);
  const VectorField3 f = random_smooth_velocity(grid, 1.0, 2.0, 12);
  const VectorField3 out = gaussian_smooth_field(f, 0.0);
  EXPECT_EQ(out.ux, f.ux);
  EXPECT_EQ(out.uy, f.uy);
  EXPECT_EQ(out.uz, f.uz);
}

TEST(GaussianSmoothField, ConstantFieldIsPreserved) {
  const auto grid = make_grid(9, 9, 9);
  VectorField3 f(grid);
  for (std::size_t i = 0; i < f.ux.size(); ++i) {
    f.ux[i] = 1.5;
    f.uy[i] = -2.0;
    f.uz[i] = 0.5;
  }
  const VectorField3 out = gaussian_smooth_field(f, 2.0);
  for (std::size_t i = 0; i < f.ux.size(); ++i) {
    EXPECT_NEAR(out.ux[i], 1.5, 1e-12);
    EXPECT_NEAR(out.uy[i], -2.0, 1e-12);
    EXPECT_NEAR(out.uz[i], 0.5, 1e-12);
  }
}

TEST(GaussianSmoothField, MatchesDenseConvolutionOracle) {
  const auto grid = make_grid(8, 7, 6);
  Rng rng(21);
  Volume3 v = Volume3::zeros(grid);
  for (auto& x : v.data) x = rng.next_normal();
  const Volume3 smoothed = gaussian_smooth(v, 1.5);
  const Volume3 reference = oracles::dense_gaussian(v, 1.5);
  for (std::size_t i = 0; i < v.data.size(); ++i)
    EXPECT_NEAR(smoothed.data[i], reference.data[i], 1e-5);
}

TEST(DemonsRegister, IdenticalImagesStayPut) {
  PhantomSpec spec;
  spec.dims = {24, 24, 24};
  spec.r_wm = 5;
  spec.r_gm = 8;
  spec.amplitude = 1;
  spec.seed = 3;
  const auto phantom = generate_phantom(spec);
  const RegistrationResult result = demons_register(phantom.intensity, phantom.intensity);
  EXPECT_LT(max_displacement(result.field), 0.1);
}

TEST(DemonsRegister, RecoversBlobTranslation) {
  const auto grid = make_grid(32, 32, 32);
  const Volume3 fixed = gaussian_blob(grid, 15.5, 15.5, 15.5, 4.0);
  VectorField3 shift(grid);
  for (auto& v : shift.ux) v = 3.0;
  const Volume3 moving = warp(fixed, shift);
  const RegistrationResult result = demons_register(fixed, moving);

  double sx = 0.0, sy = 0.0, sz = 0.0;
  int n = 0;
  for (int z = 0; z < 32; ++z)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (fixed.at(x, y, z) >= 0.5) {
          const auto u = result.field.at(x, y, z);
          sx += u[0];
          sy += u[1];
          sz += u[2];
          ++n;
        }
  ASSERT_GT(n, 0);
  EXPECT_NEAR(sx / n, -3.0, 0.5);
  EXPECT_NEAR(sy / n, 0.0, 0.5);
  EXPECT_NEAR(sz / n, 0.0, 0.5);

  const Volume3 warped = warp(moving, result.field);
  std::size_t na = 0, nb = 0, ni = 0;
  for (std::size_t i = 0; i < warped.data.size(); ++i) {
    const bool a = warped.data[i] >= 0.5, b = fixed.data[i] >= 0.5;
    na += a;
    nb += b;
    ni += a && b;
  }
  EXPECT_GE(2.0 * static_cast<double>(ni) / static_cast<double>(na + nb), 0.95);
}

TEST(DemonsRegister, ResultFieldIsDiffeomorphic) {
  PhantomSpec fa, fb;
  fa.dims = fb.dims = {24, 24, 24};
  fa.r_wm = fb.r_wm = 5;
  fa.r_gm = fb.r_gm = 8;
  fa.amplitude = fb.amplitude = 1.5;
  fa.frequency = fb.frequency = 3;
  fa.seed = 6;
  fb.seed = 16;
  const auto a = generate_phantom(fa);
  const auto b = generate_phantom(fb);
  const RegistrationResult result = demons_register(a.intensity, b.intensity);
  const JacobianStats stats = jacobian_stats(result.field);
  EXPECT_GT(stats.min_det, 0.0);
  EXPECT_DOUBLE_EQ(stats.fraction_nonpositive, 0.0);
}

TEST(DemonsRegister, SimilarityTraceDecreasesWithinBand) {
  const auto grid = make_grid(24, 24, 24);
  const Volume3 fixed = gaussian_blob(grid, 11.5, 11.5, 11.5, 3.5);
  VectorField3 shift(grid);
  for (auto& v : shift.ux) v = 2.0;
  const Volume3 moving = warp(fixed, shift);
  const RegistrationResult result = demons_register(fixed, moving);
  for (const auto& trace : result.level_traces)
    for (std::size_t i = 1; i < trace.size(); ++i)
      EXPECT_LE(trace[i], trace[i - 1] * 1.05) << "iteration " << i;
}

TEST(DemonsRegister, DeterministicAcrossRunsAndThreadCounts) {
  PhantomSpec fa;
  fa.dims = {20, 20, 20};
  fa.r_wm = 4;
  fa.r_gm = 6;
  fa.amplitude = 1;
  fa.seed = 8;
  PhantomSpec fb = fa;
  fb.seed = 18;
  const auto a = generate_phantom(fa);
  const auto b = generate_phantom(fb);
  const RegistrationResult first = demons_register(a.intensity, b.intensity);
  const RegistrationResult second = demons_register(a.intensity, b.intensity);
  EXPECT_EQ(first.field.ux, second.field.ux);
  EXPECT_EQ(first.field.uy, second.field.uy);
  EXPECT_EQ(first.field.uz, second.field.uz);

  set_thread_count(4);
  const RegistrationResult parallel = demons_register(a.intensity, b.intensity);
  set_thread_count(1);
  // per-voxel loops are chunk-independent, so even parallel runs are bitwise
  EXPECT_EQ(first.field.ux, parallel.field.ux);
  EXPECT_EQ(first.field.uy, parallel.field.uy);
  EXPECT_EQ(first.field.uz, parallel.field.uz);
}

TEST(DemonsParams, Validation) {
  DemonsParams p;
  p.iterations_per_level = {10, 10};  // length != pyramid_levels
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = DemonsParams{};
  p.sigma_field = -1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Demons, GridMismatchThrows) {
  const Volume3 a = Volume3::zeros(make_grid(8, 8, 8));
  const Volume3 b = Volume3::zeros(make_grid(8, 8, 9));
  EXPECT_THROW(demons_force(a, b, 1.0), std::invalid_argument);
  EXPECT_THROW(demons_register(a, b), std::invalid_argument);
}
