#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "msreg/parallel.hpp"
#include "msreg/volume.hpp"

namespace msreg {

// Per-voxel 3-vector field in voxel units, stored as three component planes.
// As a deformation it encodes the mapping phi(x) = x + u(x), applied by
// pull-back: out(x) = image(x + u(x)). As a stationary velocity it is the
// flow integrated by exponentiate().
struct VectorField3 {
  GridInfo grid;
  std::vector<double> ux, uy, uz;

  VectorField3() = default;
  explicit VectorField3(GridInfo g) : grid(g) {
    grid.validate();
    const std::size_t n = grid.voxel_count();
    ux.assign(n, 0.0);
    uy.assign(n, 0.0);
    uz.assign(n, 0.0);
  }

  std::array<double, 3> at(int x, int y, int z) const {
    const std::size_t i = grid.index(x, y, z);
    return {ux[i], uy[i], uz[i]};
  }
  void set(int x, int y, int z, double vx, double vy, double vz) {
    const std::size_t i = grid.index(x, y, z);
    ux[i] = vx;
    uy[i] = vy;
    uz[i] = vz;
  }
};

using DeformationField = VectorField3;
using VelocityField = VectorField3;

inline VectorField3 identity_field(GridInfo g) { return VectorField3(g); }

inline double max_displacement(const VectorField3& f) {
  double m2 = 0.0;
  for (std::size_t i = 0; i < f.ux.size(); ++i) {
    const double d2 = f.ux[i] * f.ux[i] + f.uy[i] * f.uy[i] + f.uz[i] * f.uz[i];
    if (d2 > m2) m2 = d2;
  }
  return std::sqrt(m2);
}

enum class Interp { trilinear, nearest };

// Pull-back warp: out(x) = vol(x + u(x)). Out-of-bounds lookups clamp.
inline Volume3 warp(const Volume3& vol, const VectorField3& phi, Interp interp = Interp::trilinear) {
  require_same_grid(vol.grid, phi.grid, "warp");
  Volume3 out = Volume3::zeros(vol.grid);
  const auto& d = vol.grid.dims;
  parallel_for(0, d[2], [&](std::int64_t z) {
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const std::size_t i = vol.grid.index(x, static_cast<int>(y), static_cast<int>(z));
        const double px = x + phi.ux[i], py = y + phi.uy[i], pz = z + phi.uz[i];
        if (interp == Interp::trilinear) {
          out.data[i] = sample_at(vol, px, py, pz);
        } else {
          const int nx = static_cast<int>(std::lround(detail::clampd(px, 0.0, d[0] - 1.0)));
          const int ny = static_cast<int>(std::lround(detail::clampd(py, 0.0, d[1] - 1.0)));
          const int nz = static_cast<int>(std::lround(detail::clampd(pz, 0.0, d[2] - 1.0)));
          out.data[i] = vol.at(nx, ny, nz);
        }
      }
  });
  return out;
}

// Label warp, always nearest-neighbour. zero_outside maps lookups that fall
// outside the grid to background instead of clamping.
inline LabelVolume warp(const LabelVolume& vol, const VectorField3& phi, bool zero_outside = false) {
  require_same_grid(vol.grid, phi.grid, "warp");
  LabelVolume out = LabelVolume::zeros(vol.grid);
  const auto& d = vol.grid.dims;
  parallel_for(0, d[2], [&](std::int64_t z) {
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const std::size_t i = vol.grid.index(x, static_cast<int>(y), static_cast<int>(z));
        const double px = x + phi.ux[i], py = y + phi.uy[i], pz = z + phi.uz[i];
        if (zero_outside &&
            (px < -0.5 || py < -0.5 || pz < -0.5 || px > d[0] - 0.5 || py > d[1] - 0.5 ||
             pz > d[2] - 0.5)) {
          out.data[i] = 0;
          continue;
        }
        out.data[i] = sample_nearest(vol, px, py, pz);
      }
  });
  return out;
}

namespace detail {
inline std::array<double, 3> sample_field(const VectorField3& f, double px, double py, double pz) {
  const auto& d = f.grid.dims;
  px = clampd(px, 0.0, static_cast<double>(d[0] - 1));
  py = clampd(py, 0.0, static_cast<double>(d[1] - 1));
  pz = clampd(pz, 0.0, static_cast<double>(d[2] - 1));
  int x0 = static_cast<int>(px), y0 = static_cast<int>(py), z0 = static_cast<int>(pz);
  if (x0 > d[0] - 2) x0 = d[0] - 2;
  if (y0 > d[1] - 2) y0 = d[1] - 2;
  if (z0 > d[2] - 2) z0 = d[2] - 2;
  if (x0 < 0) x0 = 0;
  if (y0 < 0) y0 = 0;
  if (z0 < 0) z0 = 0;
  const int x1 = d[0] > 1 ? x0 + 1 : x0;
  const int y1 = d[1] > 1 ? y0 + 1 : y0;
  const int z1 = d[2] > 1 ? z0 + 1 : z0;
  const double fx = px - x0, fy = py - y0, fz = pz - z0;
  std::array<double, 3> out{};
  const std::vector<double>* comps[3] = {&f.ux, &f.uy, &f.uz};
  for (int c = 0; c < 3; ++c) {
    const auto& v = *comps[c];
    const double c000 = v[f.grid.index(x0, y0, z0)], c100 = v[f.grid.index(x1, y0, z0)];
    const double c010 = v[f.grid.index(x0, y1, z0)], c110 = v[f.grid.index(x1, y1, z0)];
    const double c001 = v[f.grid.index(x0, y0, z1)], c101 = v[f.grid.index(x1, y0, z1)];
    const double c011 = v[f.grid.index(x0, y1, z1)], c111 = v[f.grid.index(x1, y1, z1)];
    const double c00 = c000 + (c100 - c000) * fx;
    const double c10 = c010 + (c110 - c010) * fx;
    const double c01 = c001 + (c101 - c001) * fx;
    const double c11 = c011 + (c111 - c011) * fx;
    const double c0 = c00 + (c10 - c00) * fy;
    const double c1 = c01 + (c11 - c01) * fy;
    out[c] = c0 + (c1 - c0) * fz;
  }
  return out;
}
}  // namespace detail

// Composition (phi_outer o phi_inner)(x) = phi_outer(phi_inner(x)):
// w(x) = u_inner(x) + u_outer(x + u_inner(x)), the outer displacement read
// by clamped trilinear interpolation.
inline VectorField3 compose(const VectorField3& outer, const VectorField3& inner) {
  require_same_grid(outer.grid, inner.grid, "compose");
  VectorField3 out(outer.grid);
  const auto& d = outer.grid.dims;
  parallel_for(0, d[2], [&](std::int64_t z) {
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const std::size_t i = outer.grid.index(x, static_cast<int>(y), static_cast<int>(z));
        const double px = x + inner.ux[i], py = y + inner.uy[i], pz = z + inner.uz[i];
        const auto uo = detail::sample_field(outer, px, py, pz);
        out.ux[i] = inner.ux[i] + uo[0];
        out.uy[i] = inner.uy[i] + uo[1];
        out.uz[i] = inner.uz[i] + uo[2];
      }
  });
  return out;
}

// Scaling and squaring: pick the smallest N with max|v|/2^N below the step
// threshold (N capped at 10), seed phi = id + v/2^N and self-compose N
// times. An eighth of a voxel per step keeps the trilinear self-composition
// error of exp(v) o exp(-v) under a tenth of a voxel for the smooth fields
// this toolkit produces; half-voxel steps measurably do not.
inline VectorField3 exponentiate(const VectorField3& v, int max_squarings = 10,
                                 double step_threshold = 0.125) {
  const double m = max_displacement(v);
  int n = 0;
  double scale = 1.0;
  while (n < max_squarings && m * scale > step_threshold) {
    scale *= 0.5;
    ++n;
  }
  VectorField3 phi(v.grid);
  for (std::size_t i = 0; i < v.ux.size(); ++i) {
    phi.ux[i] = v.ux[i] * scale;
    phi.uy[i] = v.uy[i] * scale;
    phi.uz[i] = v.uz[i] * scale;
  }
  for (int s = 0; s < n; ++s) phi = compose(phi, phi);
  return phi;
}

// Determinant of the Jacobian of x -> x + u(x); central differences in the
// interior, one-sided at the faces. Positive everywhere means the field
// preserves topology.
inline Volume3 jacobian_determinant(const VectorField3& phi) {
  const auto& d = phi.grid.dims;
  if (d[0] < 3 || d[1] < 3 || d[2] < 3)
    throw std::invalid_argument("jacobian_determinant: grid too small (needs >= 3 per axis)");
  Volume3 out = Volume3::zeros(phi.grid);
  const std::vector<double>* comps[3] = {&phi.ux, &phi.uy, &phi.uz};
  parallel_for(0, d[2], [&](std::int64_t zz) {
    const int z = static_cast<int>(zz);
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        double J[3][3];
        const int p[3] = {x, y, z};
        for (int c = 0; c < 3; ++c) {
          const auto& u = *comps[c];
          for (int a = 0; a < 3; ++a) {
            int lo[3] = {x, y, z}, hi[3] = {x, y, z};
            double h = 2.0;
            if (p[a] == 0) {
              hi[a] = p[a] + 1;
              h = 1.0;
            } else if (p[a] == d[a] - 1) {
              lo[a] = p[a] - 1;
              h = 1.0;
            } else {
              lo[a] = p[a] - 1;
              hi[a] = p[a] + 1;
            }
            const double du =
                (u[phi.grid.index(hi[0], hi[1], hi[2])] - u[phi.grid.index(lo[0], lo[1], lo[2])]) / h;
            J[c][a] = du + (c == a ? 1.0 : 0.0);
          }
        }
        out.data[phi.grid.index(x, y, z)] =
            J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
            J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
            J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
      }
  });
  return out;
}

}  // namespace msreg
