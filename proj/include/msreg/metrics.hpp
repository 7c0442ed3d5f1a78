#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "msreg/field.hpp"
#include "msreg/volume.hpp"

namespace msreg {

// 2|A n B| / (|A| + |B|); 1.0 when both sets are empty, 0.0 when exactly one
// is.
inline double dsc(const LabelVolume& a, const LabelVolume& b, int label) {
  require_same_grid(a.grid, b.grid, "dsc");
  std::size_t na = 0, nb = 0, ni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool ia = a.data[i] == label, ib = b.data[i] == label;
    na += ia;
    nb += ib;
    ni += ia && ib;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
}

// |warped n fixed| / |fixed|; 1.0 when both sets are empty. A nonempty
// warped set against an empty fixed set is undefined for the label; callers
// exclude it from averages (see MetricReport).
inline double target_overlap(const LabelVolume& warped, const LabelVolume& fixed, int label) {
  require_same_grid(warped.grid, fixed.grid, "target_overlap");
  std::size_t nf = 0, ni = 0, nw = 0;
  for (std::size_t i = 0; i < warped.data.size(); ++i) {
    const bool iw = warped.data[i] == label, jf = fixed.data[i] == label;
    nf += jf;
    nw += iw;
    ni += iw && jf;
  }
  if (nf == 0) return nw == 0 ? 1.0 : std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(ni) / static_cast<double>(nf);
}

namespace detail {

// Boundary voxels: labeled voxels with at least one six-neighbour (inside
// the grid) unlabeled.
inline std::vector<std::size_t> boundary_voxels(const LabelVolume& vol, int label) {
  const auto& d = vol.grid.dims;
  std::vector<std::size_t> out;
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        if (vol.at(x, y, z) != label) continue;
        const bool boundary =
            (x > 0 && vol.at(x - 1, y, z) != label) || (x < d[0] - 1 && vol.at(x + 1, y, z) != label) ||
            (y > 0 && vol.at(x, y - 1, z) != label) || (y < d[1] - 1 && vol.at(x, y + 1, z) != label) ||
            (z > 0 && vol.at(x, y, z - 1) != label) || (z < d[2] - 1 && vol.at(x, y, z + 1) != label);
        if (boundary) out.push_back(vol.grid.index(x, y, z));
      }
  return out;
}

// 1D squared-distance lower envelope (Felzenszwalb/Huttenlocher) with real
// sample positions i * spacing. Infinite entries are lines without sites.
inline void edt_pass(std::vector<double>& f, double spacing) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(f.size());
  if (n == 1) return;
  int first = 0;
  while (first < n && f[first] == kInf) ++first;
  if (first == n) return;  // no sites reachable from this line

  static thread_local std::vector<int> v;
  static thread_local std::vector<double> zbnd, out;
  v.assign(static_cast<std::size_t>(n), 0);
  zbnd.assign(static_cast<std::size_t>(n) + 1, 0.0);
  out.assign(static_cast<std::size_t>(n), 0.0);
  const auto xof = [&](int i) { return spacing * i; };

  int k = 0;
  v[0] = first;
  zbnd[0] = -kInf;
  zbnd[1] = kInf;
  for (int q = first + 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    while (true) {
      const int p = v[k];
      const double s =
          ((f[q] + xof(q) * xof(q)) - (f[p] + xof(p) * xof(p))) / (2.0 * xof(q) - 2.0 * xof(p));
      if (s <= zbnd[k]) {
        --k;
        continue;
      }
      ++k;
      v[k] = q;
      zbnd[k] = s;
      zbnd[k + 1] = kInf;
      break;
    }
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (zbnd[j + 1] < xof(q)) ++j;
    const double dx = xof(q) - xof(v[j]);
    out[q] = dx * dx + f[v[j]];
  }
  f.assign(out.begin(), out.end());
}

// Exact squared Euclidean distance (mm) to the nearest seed voxel.
inline std::vector<double> squared_distance_map(const GridInfo& grid,
                                                const std::vector<std::size_t>& seeds) {
  const auto& d = grid.dims;
  std::vector<double> dist(grid.voxel_count(), std::numeric_limits<double>::infinity());
  for (std::size_t s : seeds) dist[s] = 0.0;
  std::vector<double> line;
  // x lines
  line.resize(static_cast<std::size_t>(d[0]));
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y) {
      for (int x = 0; x < d[0]; ++x) line[x] = dist[grid.index(x, y, z)];
      edt_pass(line, grid.spacing[0]);
      for (int x = 0; x < d[0]; ++x) dist[grid.index(x, y, z)] = line[x];
    }
  // y lines
  line.resize(static_cast<std::size_t>(d[1]));
  for (int z = 0; z < d[2]; ++z)
    for (int x = 0; x < d[0]; ++x) {
      for (int y = 0; y < d[1]; ++y) line[y] = dist[grid.index(x, y, z)];
      edt_pass(line, grid.spacing[1]);
      for (int y = 0; y < d[1]; ++y) dist[grid.index(x, y, z)] = line[y];
    }
  // z lines
  line.resize(static_cast<std::size_t>(d[2]));
  for (int y = 0; y < d[1]; ++y)
    for (int x = 0; x < d[0]; ++x) {
      for (int z = 0; z < d[2]; ++z) line[z] = dist[grid.index(x, y, z)];
      edt_pass(line, grid.spacing[2]);
      for (int z = 0; z < d[2]; ++z) dist[grid.index(x, y, z)] = line[z];
    }
  return dist;
}

}  // namespace detail

// Average symmetric surface distance in mm between the label boundaries,
// spacing-aware. Distances run from boundary voxel centers to the nearest
// boundary voxel center of the other set.
inline double assd(const LabelVolume& a, const LabelVolume& b, int label) {
  require_same_grid(a.grid, b.grid, "assd");
  const auto ba = detail::boundary_voxels(a, label);
  const auto bb = detail::boundary_voxels(b, label);
  if (ba.empty() || bb.empty())
    throw std::invalid_argument("assd: empty boundary set for label " + std::to_string(label));
  const auto da = detail::squared_distance_map(a.grid, ba);  // distance to A's boundary
  const auto db = detail::squared_distance_map(b.grid, bb);  // distance to B's boundary
  double sum = 0.0;
  for (std::size_t i : ba) sum += std::sqrt(db[i]);
  for (std::size_t i : bb) sum += std::sqrt(da[i]);
  return sum / static_cast<double>(ba.size() + bb.size());
}

// Splits every ROI id by voxelwise intersection with each tissue mask,
// preserving the ids.
inline std::pair<LabelVolume, LabelVolume> roi_tissue_split(const LabelVolume& roi,
                                                            const LabelVolume& gm,
                                                            const LabelVolume& wm) {
  require_same_grid(roi.grid, gm.grid, "roi_tissue_split");
  require_same_grid(roi.grid, wm.grid, "roi_tissue_split");
  LabelVolume roi_gm = LabelVolume::zeros(roi.grid);
  LabelVolume roi_wm = LabelVolume::zeros(roi.grid);
  for (std::size_t i = 0; i < roi.data.size(); ++i) {
    if (roi.data[i] == 0) continue;
    if (gm.data[i] != 0) roi_gm.data[i] = roi.data[i];
    if (wm.data[i] != 0) roi_wm.data[i] = roi.data[i];
  }
  return {std::move(roi_gm), std::move(roi_wm)};
}

struct JacobianStats {
  double min_det = 0.0;
  double fraction_nonpositive = 0.0;
};

// Statistics of the Jacobian determinant over interior voxels.
inline JacobianStats jacobian_stats(const VectorField3& phi) {
  const Volume3 det = jacobian_determinant(phi);
  const auto& d = det.grid.dims;
  JacobianStats stats;
  stats.min_det = std::numeric_limits<double>::infinity();
  std::size_t nonpositive = 0, count = 0;
  for (int z = 1; z < d[2] - 1; ++z)
    for (int y = 1; y < d[1] - 1; ++y)
      for (int x = 1; x < d[0] - 1; ++x) {
        const double v = det.at(x, y, z);
        stats.min_det = std::min(stats.min_det, v);
        nonpositive += v <= 0.0;
        ++count;
      }
  stats.fraction_nonpositive = count ? static_cast<double>(nonpositive) / count : 0.0;
  return stats;
}

// Per-label evaluation report.
struct MetricReport {
  struct Row {
    int label = 0;
    double dsc = 0.0;
    double target_overlap = 0.0;  // NaN marks undefined-for-label
    double assd_mm = 0.0;         // NaN when a boundary set is empty
  };
  std::vector<Row> rows;
  bool have_jacobian = false;
  JacobianStats jacobian;
};

inline std::set<int> label_inventory(const LabelVolume& vol) {
  std::set<int> labels(vol.data.begin(), vol.data.end());
  labels.erase(0);
  return labels;
}

inline MetricReport evaluate_labels(const LabelVolume& warped, const LabelVolume& fixed,
                                    const VectorField3* field = nullptr) {
  require_same_grid(warped.grid, fixed.grid, "evaluate_labels");
  std::set<int> labels = label_inventory(warped);
  for (int l : label_inventory(fixed)) labels.insert(l);
  MetricReport report;
  for (int label : labels) {
    MetricReport::Row row;
    row.label = label;
    row.dsc = dsc(warped, fixed, label);
    row.target_overlap = target_overlap(warped, fixed, label);
    try {
      row.assd_mm = assd(warped, fixed, label);
    } catch (const std::invalid_argument&) {
      row.assd_mm = std::numeric_limits<double>::quiet_NaN();
    }
    report.rows.push_back(row);
  }
  if (field) {
    report.have_jacobian = true;
    report.jacobian = jacobian_stats(*field);
  }
  return report;
}

namespace detail {
inline std::string fmt_metric(double v) {
  if (std::isnan(v)) return "undefined";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}
}  // namespace detail

// Human-readable table.
inline std::string report_table(const MetricReport& report) {
  std::ostringstream out;
  out << "label        dsc         to          assd_mm\n";
  for (const auto& row : report.rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-6d %-11s %-11s %-11s\n", row.label,
                  detail::fmt_metric(row.dsc).c_str(), detail::fmt_metric(row.target_overlap).c_str(),
                  detail::fmt_metric(row.assd_mm).c_str());
    out << line;
  }
  if (report.have_jacobian)
    out << "jacobian_min " << detail::fmt_metric(report.jacobian.min_det) << "\n"
        << "jacobian_nonpositive_fraction "
        << detail::fmt_metric(report.jacobian.fraction_nonpositive) << "\n";
  return out.str();
}

// Machine-readable key: value lines, stable across runs for identical
// inputs.
inline std::string report_keys(const MetricReport& report) {
  std::ostringstream out;
  for (const auto& row : report.rows) {
    out << "label." << row.label << ".dsc: " << detail::fmt_metric(row.dsc) << "\n";
    out << "label." << row.label << ".to: " << detail::fmt_metric(row.target_overlap) << "\n";
    out << "label." << row.label << ".assd_mm: " << detail::fmt_metric(row.assd_mm) << "\n";
  }
  if (report.have_jacobian) {
    out << "jacobian.min_det: " << detail::fmt_metric(report.jacobian.min_det) << "\n";
    out << "jacobian.nonpositive_fraction: "
        << detail::fmt_metric(report.jacobian.fraction_nonpositive) << "\n";
  }
  return out.str();
}

inline void write_report(const MetricReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out << report_keys(report);
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace msreg
