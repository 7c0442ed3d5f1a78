#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace msreg {

// Regular 3D grid metadata shared by all dense volume types. Data is stored
// in a single linear buffer with x fastest, then y, then z. Spacing and
// origin are in mm; all interpolation and field arithmetic works in voxel
// units, mm only enters distance metrics.
struct GridInfo {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(dims[1]) +
            static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(dims[0]) +
           static_cast<std::size_t>(x);
  }
  bool operator==(const GridInfo& o) const {
    return dims == o.dims && spacing == o.spacing && origin == o.origin;
  }
  bool operator!=(const GridInfo& o) const { return !(*this == o); }

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] < 1) throw std::invalid_argument("GridInfo: dims must be >= 1");
      if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
        throw std::invalid_argument("GridInfo: spacing must be positive and finite");
      if (!std::isfinite(origin[a])) throw std::invalid_argument("GridInfo: origin must be finite");
    }
  }
};

inline GridInfo make_grid(int nx, int ny, int nz) {
  GridInfo g;
  g.dims = {nx, ny, nz};
  g.validate();
  return g;
}

inline void require_same_grid(const GridInfo& a, const GridInfo& b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": grid mismatch");
}

// Dense scalar volume. Immutable by convention once filled: compute
// operations take it by const reference and return new volumes.
struct Volume3 {
  GridInfo grid;
  std::vector<double> data;

  Volume3() = default;
  Volume3(GridInfo g, std::vector<double> values) : grid(g), data(std::move(values)) {
    grid.validate();
    if (data.size() != grid.voxel_count())
      throw std::invalid_argument("Volume3: data length does not match dims");
    for (double v : data)
      if (!std::isfinite(v)) throw std::invalid_argument("Volume3: non-finite value");
  }
  static Volume3 with_value(GridInfo g, double v) {
    Volume3 out;
    g.validate();
    out.grid = g;
    out.data.assign(g.voxel_count(), v);
    return out;
  }
  static Volume3 zeros(GridInfo g) { return with_value(g, 0.0); }

  double at(int x, int y, int z) const { return data[grid.index(x, y, z)]; }
  double& at(int x, int y, int z) { return data[grid.index(x, y, z)]; }
};

// Dense integer label volume. 0 is background; tissue volumes use 1=GM,
// 2=WM; ROI volumes use arbitrary positive ids.
struct LabelVolume {
  GridInfo grid;
  std::vector<int> data;

  LabelVolume() = default;
  LabelVolume(GridInfo g, std::vector<int> values) : grid(g), data(std::move(values)) {
    grid.validate();
    if (data.size() != grid.voxel_count())
      throw std::invalid_argument("LabelVolume: data length does not match dims");
    for (int v : data)
      if (v < 0) throw std::invalid_argument("LabelVolume: negative label");
  }
  static LabelVolume with_value(GridInfo g, int v) {
    LabelVolume out;
    g.validate();
    out.grid = g;
    out.data.assign(g.voxel_count(), v);
    return out;
  }
  static LabelVolume zeros(GridInfo g) { return with_value(g, 0); }

  int at(int x, int y, int z) const { return data[grid.index(x, y, z)]; }
  int& at(int x, int y, int z) { return data[grid.index(x, y, z)]; }
};

// A LabelVolume restricted to {0,1}; the support over which sampling maps
// normalize.
using BrainMask = LabelVolume;

inline BrainMask full_mask(GridInfo g) { return LabelVolume::with_value(g, 1); }

namespace detail {
inline double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }
}  // namespace detail

// Trilinear interpolation at a continuous voxel coordinate. Out-of-bounds
// coordinates are clamped to the valid domain (nearest-edge extension), so
// the function is total. Exact at integer coordinates.
inline double sample_at(const Volume3& vol, double px, double py, double pz) {
  const auto& d = vol.grid.dims;
  px = detail::clampd(px, 0.0, static_cast<double>(d[0] - 1));
  py = detail::clampd(py, 0.0, static_cast<double>(d[1] - 1));
  pz = detail::clampd(pz, 0.0, static_cast<double>(d[2] - 1));
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
  const double c000 = vol.at(x0, y0, z0), c100 = vol.at(x1, y0, z0);
  const double c010 = vol.at(x0, y1, z0), c110 = vol.at(x1, y1, z0);
  const double c001 = vol.at(x0, y0, z1), c101 = vol.at(x1, y0, z1);
  const double c011 = vol.at(x0, y1, z1), c111 = vol.at(x1, y1, z1);
  const double c00 = c000 + (c100 - c000) * fx;
  const double c10 = c010 + (c110 - c010) * fx;
  const double c01 = c001 + (c101 - c001) * fx;
  const double c11 = c011 + (c111 - c011) * fx;
  const double c0 = c00 + (c10 - c00) * fy;
  const double c1 = c01 + (c11 - c01) * fy;
  return c0 + (c1 - c0) * fz;
}

// Nearest-neighbour label lookup with the same clamping policy.
inline int sample_nearest(const LabelVolume& vol, double px, double py, double pz) {
  const auto& d = vol.grid.dims;
  const int x = static_cast<int>(std::lround(detail::clampd(px, 0.0, d[0] - 1.0)));
  const int y = static_cast<int>(std::lround(detail::clampd(py, 0.0, d[1] - 1.0)));
  const int z = static_cast<int>(std::lround(detail::clampd(pz, 0.0, d[2] - 1.0)));
  return vol.at(x, y, z);
}

inline std::pair<double, double> min_max(const Volume3& vol) {
  double lo = vol.data[0], hi = vol.data[0];
  for (double v : vol.data) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  return {lo, hi};
}

// Affine map of [lo, hi] onto [0, 1]; a degenerate range maps to zero.
inline Volume3 normalize_to_unit(const Volume3& vol, double lo, double hi) {
  Volume3 out = vol;
  const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
  for (double& v : out.data) v = (v - lo) * scale;
  return out;
}

}  // namespace msreg
