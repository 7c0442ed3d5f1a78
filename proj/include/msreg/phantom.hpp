#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "msreg/field.hpp"
#include "msreg/mesh.hpp"
#include "msreg/rng.hpp"
#include "msreg/smoothing.hpp"
#include "msreg/volume.hpp"

namespace msreg {

// Synthetic folded-cortex phantom: two nested spherical shells whose radii
// are modulated by sin(k*theta)*sin(k*phi). WM lies inside the inner shell,
// GM between the shells. The fold phase is derived from the seed, so two
// seeds give the same anatomy with shifted folds.
struct PhantomSpec {
  std::array<int, 3> dims{48, 48, 48};
  double r_wm = 10.0;  // inner surface base radius, voxels
  double r_gm = 14.0;  // outer surface base radius, voxels
  double amplitude = 3.0;
  int frequency = 4;
  double mean_background = 0.1;
  double mean_gm = 0.5;
  double mean_wm = 0.9;
  double noise_sigma = 0.02;
  std::uint64_t seed = 1;

  void validate() const {
    const int dmin = std::min({dims[0], dims[1], dims[2]});
    if (dmin < 8) throw std::invalid_argument("PhantomSpec: dims too small");
    if (!(0.0 < r_wm && r_wm < r_gm))
      throw std::invalid_argument("PhantomSpec: need 0 < r_wm < r_gm");
    if (!(r_gm < dmin / 2.0 - amplitude))
      throw std::invalid_argument("PhantomSpec: outer shell does not fit the grid");
    if (amplitude < 0.0) throw std::invalid_argument("PhantomSpec: amplitude must be >= 0");
    if (frequency < 1) throw std::invalid_argument("PhantomSpec: frequency must be >= 1");
    if (noise_sigma < 0.0) throw std::invalid_argument("PhantomSpec: noise sigma must be >= 0");
  }
};

struct Phantom {
  Volume3 intensity;
  LabelVolume gm;
  LabelVolume wm;
};

inline Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  GridInfo grid;
  grid.dims = spec.dims;
  Phantom out;
  out.intensity = Volume3::zeros(grid);
  out.gm = LabelVolume::zeros(grid);
  out.wm = LabelVolume::zeros(grid);

  Rng rng(spec.seed);
  // Fold phase shifts only the azimuthal pattern; the polar factor vanishes
  // at the poles, which keeps the surfaces continuous there.
  const double phase = rng.next_in(0.0, 6.283185307179586);
  const double cx = (spec.dims[0] - 1) / 2.0;
  const double cy = (spec.dims[1] - 1) / 2.0;
  const double cz = (spec.dims[2] - 1) / 2.0;

  for (int z = 0; z < spec.dims[2]; ++z)
    for (int y = 0; y < spec.dims[1]; ++y)
      for (int x = 0; x < spec.dims[0]; ++x) {
        const double dx = x - cx, dy = y - cy, dz = z - cz;
        const double rho = std::sqrt(dx * dx + dy * dy + dz * dz);
        double fold = 0.0;
        if (rho > 1e-9 && spec.amplitude > 0.0) {
          const double theta = std::acos(dz / rho);
          const double phi = std::atan2(dy, dx);
          fold = spec.amplitude * std::sin(spec.frequency * theta) *
                 std::sin(spec.frequency * phi + phase);
        }
        const std::size_t i = grid.index(x, y, z);
        if (rho <= spec.r_wm + fold)
          out.wm.data[i] = 1;
        else if (rho <= spec.r_gm + fold)
          out.gm.data[i] = 1;
      }

  for (std::size_t i = 0; i < out.intensity.data.size(); ++i) {
    const double mean = out.wm.data[i] ? spec.mean_wm
                        : out.gm.data[i] ? spec.mean_gm
                                         : spec.mean_background;
    out.intensity.data[i] = mean + spec.noise_sigma * rng.next_normal();
  }
  return out;
}

// Surface complexity as inverse sphericity: area of the extracted surface
// over the area of the sphere with the same enclosed volume. 1 for a perfect
// sphere, larger for folded shapes.
inline double fold_energy(const LabelVolume& labels, int label) {
  const TriMesh mesh = marching_cubes(labels, label);
  if (mesh.empty()) throw std::invalid_argument("fold_energy: empty label set");
  const double volume = enclosed_volume(mesh);  // throws on open surfaces
  if (!(volume > 0.0)) throw std::invalid_argument("fold_energy: degenerate surface");
  const double area = surface_area(mesh);
  const double sphere_area = std::cbrt(36.0 * 3.141592653589793 * volume * volume);
  return area / sphere_area;
}

// Nearest-tissue-mean classification of an intensity image back to labels
// (1 = GM, 2 = WM). Used to measure fold energy along intensity
// trajectories.
inline LabelVolume classify_intensity(const Volume3& vol, double mean_background, double mean_gm,
                                      double mean_wm) {
  LabelVolume out = LabelVolume::zeros(vol.grid);
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    const double v = vol.data[i];
    const double db = std::abs(v - mean_background);
    const double dg = std::abs(v - mean_gm);
    const double dw = std::abs(v - mean_wm);
    out.data[i] = dw <= dg && dw <= db ? 2 : (dg <= db ? 1 : 0);
  }
  return out;
}

// Smooth random velocity field: seeded white noise smoothed with a Gaussian
// and scaled to a maximum magnitude. The workhorse behind synthetic warps
// and field-algebra checks.
inline VectorField3 random_smooth_velocity(const GridInfo& grid, double sigma, double max_magnitude,
                                           std::uint64_t seed) {
  VectorField3 field(grid);
  Rng rng(seed);
  for (std::size_t i = 0; i < field.ux.size(); ++i) {
    field.ux[i] = rng.next_normal();
    field.uy[i] = rng.next_normal();
    field.uz[i] = rng.next_normal();
  }
  field = gaussian_smooth_field(field, sigma);
  const double peak = max_displacement(field);
  if (peak > 0.0) {
    const double s = max_magnitude / peak;
    for (std::size_t i = 0; i < field.ux.size(); ++i) {
      field.ux[i] *= s;
      field.uy[i] *= s;
      field.uz[i] *= s;
    }
  }
  return field;
}

}  // namespace msreg
