#include <gtest/gtest.h>

#include <filesystem>

#include "msreg/field.hpp"
#include "msreg/field_io.hpp"
#include "msreg/phantom.hpp"
#include "msreg/rng.hpp"
#include "oracles.hpp"

using namespace msreg;

namespace {

Volume3 random_volume(GridInfo grid, std::uint64_t seed) {
  Rng rng(seed);
  Volume3 v = Volume3::zeros(grid);
  for (auto& x : v.data) x = rng.next_double();
  return v;
}

VectorField3 constant_field(GridInfo grid, double vx, double vy, double vz) {
  VectorField3 f(grid);
  for (std::size_t i = 0; i < f.ux.size(); ++i) {
    f.ux[i] = vx;
    f.uy[i] = vy;
    f.uz[i] = vz;
  }
  return f;
}

double max_interior_displacement(const VectorField3& f, int rim) {
  const auto& d = f.grid.dims;
  double m = 0.0;
  for (int z = rim; z < d[2] - rim; ++z)
    for (int y = rim; y < d[1] - rim; ++y)
      for (int x = rim; x < d[0] - rim; ++x) {
        const auto u = f.at(x, y, z);
        m = std::max(m, std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]));
      }
  return m;
}

}  // namespace

TEST(Warp, IdentityFieldIsIdentity) {
  const auto grid = make_grid(8, 7, 6);
  const Volume3 v = random_volume(grid, 1);
  const VectorField3 id(grid);
  const Volume3 nearest = warp(v, id, Interp::nearest);
  EXPECT_EQ(nearest.data, v.data);  // bitwise for nearest
  const Volume3 tri = warp(v, id, Interp::trilinear);
  for (std::size_t i = 0; i < v.data.size(); ++i) EXPECT_NEAR(tri.data[i], v.data[i], 1e-14);
}

TEST(Warp, ConstantShiftOnRamp) {
  const auto grid = make_grid(10, 6, 6);
  Volume3 ramp = Volume3::zeros(grid);
  for (int z = 0; z < 6; ++z)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 10; ++x) ramp.at(x, y, z) = x;
  const Volume3 out = warp(ramp, constant_field(grid, 1.0, 0.0, 0.0));
  for (int z = 0; z < 6; ++z)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 8; ++x) EXPECT_NEAR(out.at(x, y, z), x + 1.0, 1e-12);
}

TEST(Warp, MatchesPerVoxelSampleOracle) {
  const auto grid = make_grid(12, 12, 12);
  const Volume3 v = random_volume(grid, 5);
  const VectorField3 f = random_smooth_velocity(grid, 1.5, 2.0, 9);
  const Volume3 out = warp(v, f);
  for (int z = 0; z < 12; ++z)
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x) {
        const auto u = f.at(x, y, z);
        EXPECT_NEAR(out.at(x, y, z), sample_at(v, x + u[0], y + u[1], z + u[2]), 1e-13);
      }
}

TEST(Warp, NearestEmitsOnlyInputLabels) {
  const auto grid = make_grid(10, 10, 10);
  LabelVolume labels = LabelVolume::zeros(grid);
  Rng rng(3);
  for (auto& v : labels.data) v = static_cast<int>(rng.next_below(3)) * 7;  // labels {0, 7, 14}
  const VectorField3 f = random_smooth_velocity(grid, 1.0, 3.0, 4);
  const LabelVolume out = warp(labels, f);
  for (int v : out.data) EXPECT_TRUE(v == 0 || v == 7 || v == 14);
}

TEST(Compose, IdentityLaws) {
  const auto grid = make_grid(10, 10, 10);
  const VectorField3 id(grid);
  const VectorField3 f = random_smooth_velocity(grid, 1.5, 1.5, 11);
  const VectorField3 left = compose(id, f);  // id o f = f exactly
  EXPECT_EQ(left.ux, f.ux);
  EXPECT_EQ(left.uy, f.uy);
  EXPECT_EQ(left.uz, f.uz);
  const VectorField3 right = compose(f, id);  // f o id = f up to interpolation
  for (std::size_t i = 0; i < f.ux.size(); ++i) {
    EXPECT_NEAR(right.ux[i], f.ux[i], 1e-12);
    EXPECT_NEAR(right.uy[i], f.uy[i], 1e-12);
    EXPECT_NEAR(right.uz[i], f.uz[i], 1e-12);
  }
}

TEST(Compose, ConstantTranslationsAdd) {
  const auto grid = make_grid(12, 12, 12);
  const auto f1 = constant_field(grid, 1.0, 0.5, -0.25);
  const auto f2 = constant_field(grid, -0.5, 1.0, 0.75);
  const VectorField3 c = compose(f1, f2);
  for (int z = 3; z < 9; ++z)
    for (int y = 3; y < 9; ++y)
      for (int x = 3; x < 9; ++x) {
        const auto u = c.at(x, y, z);
        EXPECT_NEAR(u[0], 0.5, 1e-12);
        EXPECT_NEAR(u[1], 1.5, 1e-12);
        EXPECT_NEAR(u[2], 0.5, 1e-12);
      }
}

TEST(Compose, TwoStageWarpOracle) {
  const auto grid = make_grid(14, 14, 14);
  const Volume3 v = random_volume(grid, 21);
  const Volume3 smooth = gaussian_smooth(v, 1.5);  // unit-scale smooth intensities
  const VectorField3 fa = random_smooth_velocity(grid, 2.0, 1.5, 31);
  const VectorField3 fb = random_smooth_velocity(grid, 2.0, 1.5, 32);
  const Volume3 direct = warp(smooth, compose(fa, fb));
  const Volume3 staged = warp(warp(smooth, fa), fb);
  for (int z = 3; z < 11; ++z)
    for (int y = 3; y < 11; ++y)
      for (int x = 3; x < 11; ++x)
        EXPECT_NEAR(direct.at(x, y, z), staged.at(x, y, z), 1e-2);
}

TEST(Compose, AssociativeWithinInterpolationTolerance) {
  const auto grid = make_grid(14, 14, 14);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const VectorField3 fa = random_smooth_velocity(grid, 2.0, 1.0, 100 + seed);
    const VectorField3 fb = random_smooth_velocity(grid, 2.0, 1.0, 200 + seed);
    const VectorField3 fc = random_smooth_velocity(grid, 2.0, 1.0, 300 + seed);
    const VectorField3 left = compose(compose(fa, fb), fc);
    const VectorField3 right = compose(fa, compose(fb, fc));
    for (int z = 3; z < 11; ++z)
      for (int y = 3; y < 11; ++y)
        for (int x = 3; x < 11; ++x) {
          const auto ul = left.at(x, y, z), ur = right.at(x, y, z);
          for (int c = 0; c < 3; ++c) EXPECT_NEAR(ul[c], ur[c], 5e-2);
        }
  }
}

TEST(Exponentiate, ZeroVelocityIsIdentity) {
  const VectorField3 v(make_grid(8, 8, 8));
  const VectorField3 phi = exponentiate(v);
  EXPECT_DOUBLE_EQ(max_displacement(phi), 0.0);
}

TEST(Exponentiate, ConstantVelocityIsTranslation) {
  const auto grid = make_grid(24, 24, 24);
  const VectorField3 phi = exponentiate(constant_field(grid, 3.0, 0.0, 0.0));
  for (int z = 6; z < 18; ++z)
    for (int y = 6; y < 18; ++y)
      for (int x = 6; x < 14; ++x) {  // x + 3 stays well inside
        const auto u = phi.at(x, y, z);
        EXPECT_NEAR(u[0], 3.0, 1e-3);
        EXPECT_NEAR(u[1], 0.0, 1e-3);
        EXPECT_NEAR(u[2], 0.0, 1e-3);
      }
}

TEST(Exponentiate, InverseConsistency) {
  const auto grid = make_grid(32, 32, 32);
  for (std::uint64_t seed : {42u, 7u, 99u}) {
    const VectorField3 v = random_smooth_velocity(grid, 2.0, 2.0, seed);
    VectorField3 vn = v;
    for (std::size_t i = 0; i < v.ux.size(); ++i) {
      vn.ux[i] = -v.ux[i];
      vn.uy[i] = -v.uy[i];
      vn.uz[i] = -v.uz[i];
    }
    const VectorField3 round = compose(exponentiate(v), exponentiate(vn));
    EXPECT_LT(max_interior_displacement(round, 2), 0.1) << "seed " << seed;
  }
}

TEST(Jacobian, IdentityIsOne) {
  const Volume3 det = jacobian_determinant(VectorField3(make_grid(6, 6, 6)));
  for (double v : det.data) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Jacobian, UniformExpansion) {
  const auto grid = make_grid(10, 10, 10);
  VectorField3 f(grid);
  for (int z = 0; z < 10; ++z)
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 10; ++x) f.set(x, y, z, 0.1 * x, 0.1 * y, 0.1 * z);
  const Volume3 det = jacobian_determinant(f);
  for (int z = 1; z < 9; ++z)
    for (int y = 1; y < 9; ++y)
      for (int x = 1; x < 9; ++x) EXPECT_NEAR(det.at(x, y, z), 1.331, 1e-9);
}

TEST(Jacobian, ExponentiatedFieldsStayPositive) {
  const auto grid = make_grid(20, 20, 20);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const VectorField3 phi = exponentiate(random_smooth_velocity(grid, 2.0, 2.5, 400 + seed));
    const Volume3 det = jacobian_determinant(phi);
    double lowest = 1e9;
    for (double v : det.data) lowest = std::min(lowest, v);
    EXPECT_GT(lowest, 0.0) << "seed " << seed;
  }
}

TEST(Jacobian, GridTooSmallThrows) {
  EXPECT_THROW(jacobian_determinant(VectorField3(make_grid(2, 5, 5))), std::invalid_argument);
}

TEST(FieldIo, ThreeComponentRoundTrip) {
  const auto grid = make_grid(6, 5, 4);
  const VectorField3 f = random_smooth_velocity(grid, 1.0, 2.0, 8);
  const auto base = (std::filesystem::temp_directory_path() / "msreg_field_rt").string();
  write_field(f, base);
  const VectorField3 r = read_field(base);
  for (std::size_t i = 0; i < f.ux.size(); ++i) {
    EXPECT_FLOAT_EQ(static_cast<float>(r.ux[i]), static_cast<float>(f.ux[i]));
    EXPECT_FLOAT_EQ(static_cast<float>(r.uy[i]), static_cast<float>(f.uy[i]));
    EXPECT_FLOAT_EQ(static_cast<float>(r.uz[i]), static_cast<float>(f.uz[i]));
  }
}

TEST(Field, GridMismatchThrows) {
  const Volume3 v = random_volume(make_grid(4, 4, 4), 1);
  const VectorField3 f(make_grid(5, 4, 4));
  EXPECT_THROW(warp(v, f), std::invalid_argument);
  EXPECT_THROW(compose(f, VectorField3(make_grid(4, 4, 4))), std::invalid_argument);
}
