#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "msreg/demons.hpp"
#include "msreg/field.hpp"
#include "msreg/mesh.hpp"
#include "msreg/msnet.hpp"
#include "msreg/volume.hpp"

namespace msreg {

// Per-level mesh smoothing schedule. Simplification must get strictly
// stronger with the level, the default being iterations = 10 * level at
// lambda = 0.5.
struct LevelParams {
  int level = 1;
  SmoothingParams smoothing{0.5, 10};

  static LevelParams for_level(int k, double lambda = 0.5, int iterations_per_level = 10) {
    if (k < 1) throw std::invalid_argument("LevelParams: level must be >= 1");
    LevelParams lp;
    lp.level = k;
    lp.smoothing.lambda = lambda;
    lp.smoothing.iterations = iterations_per_level * k;
    return lp;
  }
};

struct TrainingPair {
  Volume3 complex_image;
  Volume3 simple_image;
  LabelVolume gm_simple;  // tissue labels re-derived from the smoothed surfaces
  LabelVolume wm_simple;
  VectorField3 field;     // pulls the complex image into the simplified geometry
};

namespace detail {

inline LabelVolume union_mask(const LabelVolume& a, const LabelVolume& b) {
  require_same_grid(a.grid, b.grid, "union_mask");
  LabelVolume out = LabelVolume::zeros(a.grid);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = (a.data[i] != 0 || b.data[i] != 0) ? 1 : 0;
  return out;
}

inline std::size_t count_nonzero(const LabelVolume& v) {
  std::size_t n = 0;
  for (int x : v.data) n += x != 0;
  return n;
}

}  // namespace detail

// Ground-truth pair generation: extract the inner (WM) and outer (GM+WM)
// cortical surfaces, smooth each, rescale each back to its pre-smoothing
// enclosed volume, re-voxelize, rebuild tissue labels (WM inside the inner
// surface, GM between the surfaces, conflicts resolved in favour of WM),
// register the original tissue indicator to the simplified one, and warp the
// complex image with the resulting field.
inline TrainingPair make_training_pair(const Volume3& complex_image, const LabelVolume& gm,
                                       const LabelVolume& wm, const LevelParams& lp,
                                       const DemonsParams& dp = DemonsParams{}) {
  require_same_grid(complex_image.grid, gm.grid, "make_training_pair");
  require_same_grid(complex_image.grid, wm.grid, "make_training_pair");
  if (detail::count_nonzero(wm) == 0 || detail::count_nonzero(gm) == 0)
    throw std::invalid_argument("make_training_pair: empty tissue labels");

  const LabelVolume outer_mask = detail::union_mask(gm, wm);
  TriMesh inner = marching_cubes(wm, 1);
  TriMesh outer = marching_cubes(outer_mask, 1);
  if (inner.empty() || outer.empty())
    throw std::invalid_argument("make_training_pair: surface extraction produced no mesh");

  const double inner_volume = enclosed_volume(inner);
  const double outer_volume = enclosed_volume(outer);
  inner = rescale_to_volume(laplacian_smooth(inner, lp.smoothing), inner_volume);
  outer = rescale_to_volume(laplacian_smooth(outer, lp.smoothing), outer_volume);

  LabelVolume wm_simple = voxelize(inner, complex_image.grid, 1);
  const LabelVolume outer_fill = voxelize(outer, complex_image.grid, 1);
  LabelVolume gm_simple = LabelVolume::zeros(complex_image.grid);
  for (std::size_t i = 0; i < gm_simple.data.size(); ++i)
    gm_simple.data[i] = (outer_fill.data[i] != 0 && wm_simple.data[i] == 0) ? 1 : 0;

  const Volume3 moving_ind = tissue_indicator(gm, wm);
  const Volume3 fixed_ind = tissue_indicator(gm_simple, wm_simple);
  RegistrationResult reg = demons_register(fixed_ind, moving_ind, dp);

  TrainingPair out;
  out.complex_image = complex_image;
  out.simple_image = warp(complex_image, reg.field);
  out.gm_simple = std::move(gm_simple);
  out.wm_simple = std::move(wm_simple);
  out.field = std::move(reg.field);
  return out;
}

// Simplification trajectory [I0 = input, I1, ..., In] with
// I_k = simplify_volume(net_k, I_{k-1}).
struct Trajectory {
  std::vector<Volume3> images;

  int levels() const { return static_cast<int>(images.size()) - 1; }
};

inline Trajectory build_trajectory(const Volume3& vol, std::span<const MsNet> nets) {
  Trajectory out;
  out.images.push_back(vol);
  for (const MsNet& net : nets) out.images.push_back(simplify_volume(net, out.images.back()));
  return out;
}

struct GuidedResult {
  VectorField3 field;                      // composed map, pulls moving into fixed space
  std::vector<VectorField3> step_fields;   // phi_1 .. phi_{2n+1}
  std::vector<std::vector<std::vector<double>>> step_traces;
  Volume3 warped;                          // moving image resampled once by `field`
};

// Trajectory-guided registration (2n+1 demons runs along the chain
// M0..Mn, Fn..F0). Each step registers the chain-later image as fixed and the
// chain-earlier as moving, so every phi_i maps later-space points into
// earlier-space; the left fold phi_1 o phi_2 o ... o phi_{2n+1} therefore
// carries a fixed-space point down to moving space and a single warp of the
// moving image lands it on the fixed grid.
inline GuidedResult guided_register(const Volume3& fixed, const Volume3& moving,
                                    std::span<const MsNet> nets,
                                    const DemonsParams& dp = DemonsParams{}) {
  require_same_grid(fixed.grid, moving.grid, "guided_register");
  const Trajectory ft = build_trajectory(fixed, nets);
  const Trajectory mt = build_trajectory(moving, nets);

  std::vector<const Volume3*> chain;
  for (const auto& img : mt.images) chain.push_back(&img);
  for (auto it = ft.images.rbegin(); it != ft.images.rend(); ++it) chain.push_back(&*it);

  GuidedResult out;
  for (std::size_t i = 1; i < chain.size(); ++i) {
    RegistrationResult reg = demons_register(*chain[i], *chain[i - 1], dp);
    out.step_traces.push_back(std::move(reg.level_traces));
    out.step_fields.push_back(std::move(reg.field));
  }
  out.field = out.step_fields.front();
  for (std::size_t i = 1; i < out.step_fields.size(); ++i)
    out.field = compose(out.field, out.step_fields[i]);
  out.warped = warp(moving, out.field);
  return out;
}

}  // namespace msreg
