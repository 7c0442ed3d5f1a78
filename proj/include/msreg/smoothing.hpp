#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "msreg/field.hpp"
#include "msreg/parallel.hpp"
#include "msreg/volume.hpp"

namespace msreg {

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i)
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  return k;
}

// Separable pass along one axis. Near the edges the truncated kernel is
// renormalized over the in-bounds taps, so constants are preserved exactly.
inline void smooth_axis(std::vector<double>& data, const GridInfo& grid, int axis,
                        const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  const auto& d = grid.dims;
  const int n = d[axis];
  if (n == 1) return;
  std::vector<double> out(data.size());
  const int plane_dims[3][2] = {{1, 2}, {0, 2}, {0, 1}};
  const int a1 = plane_dims[axis][0], a2 = plane_dims[axis][1];
  parallel_for(0, d[a2], [&](std::int64_t j2) {
    std::array<int, 3> p{};
    for (int j1 = 0; j1 < d[a1]; ++j1) {
      p[a1] = j1;
      p[a2] = static_cast<int>(j2);
      for (int i = 0; i < n; ++i) {
        double acc = 0.0, wsum = 0.0;
        const int lo = i - radius < 0 ? -i : -radius;
        const int hi = i + radius > n - 1 ? n - 1 - i : radius;
        for (int t = lo; t <= hi; ++t) {
          const double w = kernel[t + radius];
          p[axis] = i + t;
          acc += w * data[grid.index(p[0], p[1], p[2])];
          wsum += w;
        }
        p[axis] = i;
        out[grid.index(p[0], p[1], p[2])] = acc / wsum;
      }
    }
  });
  data.swap(out);
}

inline void gaussian_smooth_inplace(std::vector<double>& data, const GridInfo& grid, double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian smoothing: sigma must be >= 0");
  if (sigma == 0.0) return;
  const auto kernel = gaussian_kernel(sigma);
  for (int axis = 0; axis < 3; ++axis) smooth_axis(data, grid, axis, kernel);
}

}  // namespace detail

inline Volume3 gaussian_smooth(const Volume3& vol, double sigma) {
  Volume3 out = vol;
  detail::gaussian_smooth_inplace(out.data, out.grid, sigma);
  return out;
}

// Componentwise separable Gaussian smoothing of a vector field. sigma = 0 is
// a bitwise identity.
inline VectorField3 gaussian_smooth_field(const VectorField3& f, double sigma) {
  VectorField3 out = f;
  detail::gaussian_smooth_inplace(out.ux, out.grid, sigma);
  detail::gaussian_smooth_inplace(out.uy, out.grid, sigma);
  detail::gaussian_smooth_inplace(out.uz, out.grid, sigma);
  return out;
}

}  // namespace msreg
