#pragma once

#include <string>

#include "msreg/field.hpp"
#include "msreg/volume.hpp"
#include "msreg/volume_io.hpp"

namespace msreg {

// Fields serialize as three scalar volumes. Given a base path "phi" and an
// extension (".nii" or ".raw") the components land in phi.ux.nii, phi.uy.nii
// and phi.uz.nii.
inline void write_field(const VectorField3& f, const std::string& base,
                        const std::string& ext = ".nii") {
  const std::vector<double>* comps[3] = {&f.ux, &f.uy, &f.uz};
  const char* names[3] = {".ux", ".uy", ".uz"};
  for (int c = 0; c < 3; ++c) {
    Volume3 v(f.grid, *comps[c]);
    write_volume(v, base + names[c] + ext);
  }
}

inline VectorField3 read_field(const std::string& base, const std::string& ext = ".nii") {
  Volume3 x = read_scalar_volume(base + ".ux" + ext);
  Volume3 y = read_scalar_volume(base + ".uy" + ext);
  Volume3 z = read_scalar_volume(base + ".uz" + ext);
  require_same_grid(x.grid, y.grid, "read_field");
  require_same_grid(x.grid, z.grid, "read_field");
  VectorField3 f(x.grid);
  f.ux = std::move(x.data);
  f.uy = std::move(y.data);
  f.uz = std::move(z.data);
  return f;
}

}  // namespace msreg
