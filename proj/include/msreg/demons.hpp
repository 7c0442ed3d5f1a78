#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "msreg/field.hpp"
#include "msreg/parallel.hpp"
#include "msreg/smoothing.hpp"
#include "msreg/volume.hpp"

namespace msreg {

struct DemonsParams {
  int pyramid_levels = 3;
  std::vector<int> iterations_per_level{30, 30, 20};  // coarse to fine
  double sigma_update = 1.0;  // fluid-like smoothing of the update, voxels
  double sigma_field = 1.5;   // diffusion-like smoothing of the field, voxels
  double max_step = 2.0;      // cap on the per-iteration update magnitude, voxels
  double kappa = 1.0;         // intensity-difference scale in the force denominator
  bool normalize_intensities = true;

  void validate() const {
    if (pyramid_levels < 1) throw std::invalid_argument("DemonsParams: pyramid_levels must be >= 1");
    if (static_cast<int>(iterations_per_level.size()) != pyramid_levels)
      throw std::invalid_argument("DemonsParams: iterations list length must equal pyramid_levels");
    for (int it : iterations_per_level)
      if (it < 1) throw std::invalid_argument("DemonsParams: iterations must be positive");
    if (!(sigma_update > 0.0) || !(sigma_field > 0.0) || !(max_step > 0.0) || !(kappa > 0.0))
      throw std::invalid_argument("DemonsParams: sigmas, max_step and kappa must be positive");
  }
};

struct RegistrationResult {
  VectorField3 field;  // moving -> fixed pull-back convention
  double final_msd = 0.0;
  std::vector<std::vector<double>> level_traces;  // mean squared difference per iteration
};

// Demons force u = (m - f) grad(f) / (|grad f|^2 + (m - f)^2 / kappa^2),
// zero where the denominator underflows; gradients by central differences.
// This is the ascent direction of the squared-difference objective under the
// pull-back convention; demons_register steps against it.
inline VectorField3 demons_force(const Volume3& fixed, const Volume3& warped_moving, double kappa) {
  require_same_grid(fixed.grid, warped_moving.grid, "demons_force");
  VectorField3 out(fixed.grid);
  const auto& d = fixed.grid.dims;
  const double inv_k2 = 1.0 / (kappa * kappa);
  parallel_for(0, d[2], [&](std::int64_t zz) {
    const int z = static_cast<int>(zz);
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const std::size_t i = fixed.grid.index(x, y, z);
        const int xm = x > 0 ? x - 1 : x, xp = x < d[0] - 1 ? x + 1 : x;
        const int ym = y > 0 ? y - 1 : y, yp = y < d[1] - 1 ? y + 1 : y;
        const int zm = z > 0 ? z - 1 : z, zp = z < d[2] - 1 ? z + 1 : z;
        const double gx = (fixed.at(xp, y, z) - fixed.at(xm, y, z)) / (xp - xm ? xp - xm : 1);
        const double gy = (fixed.at(x, yp, z) - fixed.at(x, ym, z)) / (yp - ym ? yp - ym : 1);
        const double gz = (fixed.at(x, y, zp) - fixed.at(x, y, zm)) / (zp - zm ? zp - zm : 1);
        const double diff = warped_moving.data[i] - fixed.data[i];
        const double denom = gx * gx + gy * gy + gz * gz + diff * diff * inv_k2;
        if (denom < 1e-12) continue;
        const double s = diff / denom;
        out.ux[i] = s * gx;
        out.uy[i] = s * gy;
        out.uz[i] = s * gz;
      }
  });
  return out;
}

namespace detail {

inline Volume3 downsample2(const Volume3& vol) {
  const auto& d = vol.grid.dims;
  GridInfo g;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = (d[a] + 1) / 2;
    g.spacing[a] = vol.grid.spacing[a] * 2.0;
    g.origin[a] = vol.grid.origin[a];
  }
  Volume3 out = Volume3::zeros(g);
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x) {
        double acc = 0.0;
        int cnt = 0;
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int sx = 2 * x + dx, sy = 2 * y + dy, sz = 2 * z + dz;
              if (sx >= d[0] || sy >= d[1] || sz >= d[2]) continue;
              acc += vol.at(sx, sy, sz);
              ++cnt;
            }
        out.at(x, y, z) = acc / cnt;
      }
  return out;
}

// Upsamples a displacement field to the given finer grid: positions map as
// fine = 2*coarse + 0.5, displacements double.
inline VectorField3 upsample_field(const VectorField3& coarse, const GridInfo& fine_grid) {
  VectorField3 out(fine_grid);
  const auto& d = fine_grid.dims;
  parallel_for(0, d[2], [&](std::int64_t zz) {
    const int z = static_cast<int>(zz);
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const auto u = sample_field(coarse, (x - 0.5) / 2.0, (y - 0.5) / 2.0, (z - 0.5) / 2.0);
        out.set(x, y, z, 2.0 * u[0], 2.0 * u[1], 2.0 * u[2]);
      }
  });
  return out;
}

inline double mean_squared_difference(const Volume3& a, const Volume3& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

inline void cap_magnitude(VectorField3& f, double max_step) {
  const double m2 = max_step * max_step;
  for (std::size_t i = 0; i < f.ux.size(); ++i) {
    const double d2 = f.ux[i] * f.ux[i] + f.uy[i] * f.uy[i] + f.uz[i] * f.uz[i];
    if (d2 > m2) {
      const double s = max_step / std::sqrt(d2);
      f.ux[i] *= s;
      f.uy[i] *= s;
      f.uz[i] *= s;
    }
  }
}

}  // namespace detail

// Diffeomorphic demons on a multi-resolution pyramid. Per iteration: warp the
// moving image by the current field, evaluate the demons force, smooth the
// update (fluid-like), cap its magnitude, compose the field with the
// exponentiated update, then smooth the field (diffusion-like).
inline RegistrationResult demons_register(const Volume3& fixed, const Volume3& moving,
                                          const DemonsParams& params = DemonsParams{}) {
  require_same_grid(fixed.grid, moving.grid, "demons_register");
  params.validate();

  Volume3 f = fixed, m = moving;
  if (params.normalize_intensities) {
    const auto [lo, hi] = min_max(fixed);
    f = normalize_to_unit(fixed, lo, hi);
    m = normalize_to_unit(moving, lo, hi);
  }

  // Pyramid, index 0 = finest.
  std::vector<Volume3> pf{f}, pm{m};
  for (int l = 1; l < params.pyramid_levels; ++l) {
    pf.push_back(detail::downsample2(pf.back()));
    pm.push_back(detail::downsample2(pm.back()));
  }

  RegistrationResult result;
  result.level_traces.resize(params.pyramid_levels);
  VectorField3 field(pf.back().grid);
  for (int level = params.pyramid_levels - 1; level >= 0; --level) {
    const Volume3& lf = pf[level];
    const Volume3& lm = pm[level];
    auto& trace = result.level_traces[params.pyramid_levels - 1 - level];
    const int iters = params.iterations_per_level[params.pyramid_levels - 1 - level];
    for (int it = 0; it < iters; ++it) {
      const Volume3 warped = warp(lm, field);
      trace.push_back(detail::mean_squared_difference(lf, warped));
      VectorField3 update = demons_force(lf, warped, params.kappa);
      // Step against the ascent direction.
      for (std::size_t i = 0; i < update.ux.size(); ++i) {
        update.ux[i] = -update.ux[i];
        update.uy[i] = -update.uy[i];
        update.uz[i] = -update.uz[i];
      }
      update = gaussian_smooth_field(update, params.sigma_update);
      detail::cap_magnitude(update, params.max_step);
      field = compose(field, exponentiate(update));
      field = gaussian_smooth_field(field, params.sigma_field);
    }
    if (level > 0) field = detail::upsample_field(field, pf[level - 1].grid);
  }

  result.final_msd = detail::mean_squared_difference(pf[0], warp(pm[0], field));
  result.field = std::move(field);
  return result;
}

// Converts tissue label masks to a smooth scalar for demons: WM 1.0, GM 0.5,
// background 0, then Gaussian sigma=1 so binary edges carry gradients.
inline Volume3 tissue_indicator(const LabelVolume& gm, const LabelVolume& wm, double sigma = 1.0) {
  require_same_grid(gm.grid, wm.grid, "tissue_indicator");
  Volume3 out = Volume3::zeros(gm.grid);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = wm.data[i] != 0 ? 1.0 : (gm.data[i] != 0 ? 0.5 : 0.0);
  return gaussian_smooth(out, sigma);
}

}  // namespace msreg
