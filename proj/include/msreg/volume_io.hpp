#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "msreg/volume.hpp"

namespace msreg {

struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct bad_magic_error : io_error {
  explicit bad_magic_error(const std::string& msg) : io_error(msg) {}
};
struct bad_datatype_error : io_error {
  explicit bad_datatype_error(const std::string& msg) : io_error(msg) {}
};
struct truncated_file_error : io_error {
  explicit truncated_file_error(const std::string& msg) : io_error(msg) {}
};
struct nonfinite_data_error : io_error {
  explicit nonfinite_data_error(const std::string& msg) : io_error(msg) {}
};

using VolumeFile = std::variant<Volume3, LabelVolume>;

// NIfTI-1 subset. Little-endian only; header is 348 bytes followed by the
// 4-byte extender, data at offset 352. Only the fields named below are
// written; everything else stays zero and is ignored on read.
//   sizeof_hdr=348, dim[0]=3, dim[1..3]=nx,ny,nz, datatype 2(uint8)|16(float32),
//   bitpix matching, pixdim[1..3]=spacing, vox_offset=352, scl_slope in {0,1},
//   scl_inter=0, magic "n+1\0".
// The subset does not carry origin; use the raw+sidecar format when origin
// matters.
namespace detail {

constexpr int kNiftiHeaderSize = 348;
constexpr int kNiftiDataOffset = 352;

template <class T>
void put_le(std::vector<unsigned char>& buf, std::size_t offset, T value) {
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}
template <class T>
T get_le(const std::vector<unsigned char>& buf, std::size_t offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return value;
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open file for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("write failed: " + path);
}

inline std::vector<unsigned char> nifti_header(const GridInfo& grid, std::int16_t datatype,
                                               std::int16_t bitpix) {
  std::vector<unsigned char> h(kNiftiDataOffset, 0);
  put_le<std::int32_t>(h, 0, kNiftiHeaderSize);
  put_le<std::int16_t>(h, 40, 3);  // dim[0]
  for (int a = 0; a < 3; ++a) put_le<std::int16_t>(h, 42 + 2 * a, static_cast<std::int16_t>(grid.dims[a]));
  put_le<std::int16_t>(h, 70, datatype);
  put_le<std::int16_t>(h, 72, bitpix);
  for (int a = 0; a < 3; ++a) put_le<float>(h, 80 + 4 * a, static_cast<float>(grid.spacing[a]));
  put_le<float>(h, 108, static_cast<float>(kNiftiDataOffset));  // vox_offset
  put_le<float>(h, 112, 1.0f);                                  // scl_slope
  h[344] = 'n';
  h[345] = '+';
  h[346] = '1';
  h[347] = '\0';
  return h;
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline std::string sidecar_path(const std::string& raw_path) {
  const auto dot = raw_path.find_last_of('.');
  return raw_path.substr(0, dot) + ".txt";
}

}  // namespace detail

inline void write_volume_nifti(const Volume3& vol, const std::string& path) {
  auto bytes = detail::nifti_header(vol.grid, 16, 32);
  bytes.resize(detail::kNiftiDataOffset + 4 * vol.data.size());
  for (std::size_t i = 0; i < vol.data.size(); ++i)
    detail::put_le<float>(bytes, detail::kNiftiDataOffset + 4 * i, static_cast<float>(vol.data[i]));
  detail::write_file_bytes(path, bytes);
}

inline void write_volume_nifti(const LabelVolume& vol, const std::string& path) {
  for (int v : vol.data)
    if (v > 255) throw io_error("label value exceeds uint8 range of the NIfTI subset");
  auto bytes = detail::nifti_header(vol.grid, 2, 8);
  bytes.resize(detail::kNiftiDataOffset + vol.data.size());
  for (std::size_t i = 0; i < vol.data.size(); ++i)
    bytes[detail::kNiftiDataOffset + i] = static_cast<unsigned char>(vol.data[i]);
  detail::write_file_bytes(path, bytes);
}

inline VolumeFile read_volume_nifti(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() < static_cast<std::size_t>(detail::kNiftiDataOffset))
    throw truncated_file_error("file smaller than NIfTI header: " + path);
  if (bytes[344] != 'n' || bytes[345] != '+' || bytes[346] != '1' || bytes[347] != '\0')
    throw bad_magic_error("bad NIfTI magic in " + path);
  if (detail::get_le<std::int32_t>(bytes, 0) != detail::kNiftiHeaderSize)
    throw io_error("unexpected sizeof_hdr in " + path);
  if (detail::get_le<std::int16_t>(bytes, 40) != 3)
    throw io_error("only 3-dimensional images are supported: " + path);
  GridInfo grid;
  for (int a = 0; a < 3; ++a) {
    grid.dims[a] = detail::get_le<std::int16_t>(bytes, 42 + 2 * a);
    grid.spacing[a] = detail::get_le<float>(bytes, 80 + 4 * a);
  }
  grid.validate();
  const std::int16_t datatype = detail::get_le<std::int16_t>(bytes, 70);
  const float vox_offset = detail::get_le<float>(bytes, 108);
  if (vox_offset != static_cast<float>(detail::kNiftiDataOffset))
    throw io_error("unsupported vox_offset in " + path);
  const float slope = detail::get_le<float>(bytes, 112);
  const float inter = detail::get_le<float>(bytes, 116);
  if ((slope != 0.0f && slope != 1.0f) || inter != 0.0f)
    throw io_error("unsupported intensity scaling in " + path);
  const std::size_t n = grid.voxel_count();
  if (datatype == 16) {
    if (bytes.size() < detail::kNiftiDataOffset + 4 * n)
      throw truncated_file_error("truncated float32 payload in " + path);
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      const float v = detail::get_le<float>(bytes, detail::kNiftiDataOffset + 4 * i);
      if (!std::isfinite(v)) throw nonfinite_data_error("non-finite voxel in " + path);
      data[i] = v;
    }
    return Volume3(grid, std::move(data));
  }
  if (datatype == 2) {
    if (bytes.size() < detail::kNiftiDataOffset + n)
      throw truncated_file_error("truncated uint8 payload in " + path);
    std::vector<int> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = bytes[detail::kNiftiDataOffset + i];
    return LabelVolume(grid, std::move(data));
  }
  throw bad_datatype_error("unsupported NIfTI datatype code " + std::to_string(datatype) + " in " +
                           path);
}

// Raw+sidecar format: little-endian payload in <base>.raw plus a text
// sidecar <base>.txt with key: value lines (dims, spacing, origin, dtype).
namespace detail {

inline std::string format_triple(const double* v) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g", v[0], v[1], v[2]);
  return buf;
}

inline void write_sidecar(const GridInfo& grid, const char* dtype, const std::string& path) {
  std::ostringstream s;
  s << "dims: " << grid.dims[0] << " " << grid.dims[1] << " " << grid.dims[2] << "\n";
  s << "spacing: " << format_triple(grid.spacing.data()) << "\n";
  s << "origin: " << format_triple(grid.origin.data()) << "\n";
  s << "dtype: " << dtype << "\n";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot open file for writing: " + path);
  out << s.str();
  if (!out) throw io_error("write failed: " + path);
}

struct SidecarInfo {
  GridInfo grid;
  std::string dtype;
};

inline SidecarInfo read_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open sidecar: " + path);
  SidecarInfo info;
  bool have_dims = false, have_dtype = false;
  std::string line;
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    std::istringstream value(line.substr(colon + 1));
    if (key == "dims") {
      value >> info.grid.dims[0] >> info.grid.dims[1] >> info.grid.dims[2];
      have_dims = true;
    } else if (key == "spacing") {
      value >> info.grid.spacing[0] >> info.grid.spacing[1] >> info.grid.spacing[2];
    } else if (key == "origin") {
      value >> info.grid.origin[0] >> info.grid.origin[1] >> info.grid.origin[2];
    } else if (key == "dtype") {
      value >> info.dtype;
      have_dtype = true;
    }
  }
  if (!have_dims || !have_dtype) throw io_error("sidecar missing dims or dtype: " + path);
  info.grid.validate();
  return info;
}

}  // namespace detail

inline void write_volume_raw(const Volume3& vol, const std::string& path) {
  std::vector<unsigned char> bytes(4 * vol.data.size());
  for (std::size_t i = 0; i < vol.data.size(); ++i)
    detail::put_le<float>(bytes, 4 * i, static_cast<float>(vol.data[i]));
  detail::write_file_bytes(path, bytes);
  detail::write_sidecar(vol.grid, "float32", detail::sidecar_path(path));
}

inline void write_volume_raw(const LabelVolume& vol, const std::string& path) {
  for (int v : vol.data)
    if (v > 255) throw io_error("label value exceeds uint8 range of the raw format");
  std::vector<unsigned char> bytes(vol.data.size());
  for (std::size_t i = 0; i < vol.data.size(); ++i)
    bytes[i] = static_cast<unsigned char>(vol.data[i]);
  detail::write_file_bytes(path, bytes);
  detail::write_sidecar(vol.grid, "uint8", detail::sidecar_path(path));
}

inline VolumeFile read_volume_raw(const std::string& path) {
  const auto info = detail::read_sidecar(detail::sidecar_path(path));
  const auto bytes = detail::read_file_bytes(path);
  const std::size_t n = info.grid.voxel_count();
  if (info.dtype == "float32") {
    if (bytes.size() < 4 * n) throw truncated_file_error("truncated raw payload in " + path);
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      const float v = detail::get_le<float>(bytes, 4 * i);
      if (!std::isfinite(v)) throw nonfinite_data_error("non-finite voxel in " + path);
      data[i] = v;
    }
    return Volume3(info.grid, std::move(data));
  }
  if (info.dtype == "uint8") {
    if (bytes.size() < n) throw truncated_file_error("truncated raw payload in " + path);
    std::vector<int> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = bytes[i];
    return LabelVolume(info.grid, std::move(data));
  }
  throw bad_datatype_error("unsupported sidecar dtype '" + info.dtype + "' for " + path);
}

// Dispatch on extension: .nii selects the NIfTI subset, .raw the raw+sidecar
// format.
inline VolumeFile read_volume(const std::string& path) {
  if (detail::has_suffix(path, ".raw")) return read_volume_raw(path);
  return read_volume_nifti(path);
}

inline void write_volume(const Volume3& vol, const std::string& path) {
  if (detail::has_suffix(path, ".raw"))
    write_volume_raw(vol, path);
  else
    write_volume_nifti(vol, path);
}

inline void write_volume(const LabelVolume& vol, const std::string& path) {
  if (detail::has_suffix(path, ".raw"))
    write_volume_raw(vol, path);
  else
    write_volume_nifti(vol, path);
}

inline Volume3 read_scalar_volume(const std::string& path) {
  auto file = read_volume(path);
  if (auto* v = std::get_if<Volume3>(&file)) return std::move(*v);
  throw bad_datatype_error("expected a scalar volume: " + path);
}

inline LabelVolume read_label_volume(const std::string& path) {
  auto file = read_volume(path);
  if (auto* v = std::get_if<LabelVolume>(&file)) return std::move(*v);
  throw bad_datatype_error("expected a label volume: " + path);
}

}  // namespace msreg
