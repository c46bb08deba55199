#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxenc/error.hpp"
#include "voxenc/npy.hpp"

namespace voxenc::io {

// 3-D voxel grid with a boolean mask. In-mask cells are numbered 0..V-1 in
// row-major grid order; maps are stored as flat length-V arrays.
struct VoxelGrid {
  std::array<std::size_t, 3> dims{};
  std::array<double, 3> voxel_size_mm{3.0, 3.0, 3.0};
  std::vector<std::uint8_t> mask;          // one flag per grid cell, row-major
  std::vector<std::size_t> voxel_cells;    // voxel index -> grid cell

  std::size_t n_cells() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t n_voxels() const { return voxel_cells.size(); }

  std::size_t cell_index(std::size_t x, std::size_t y, std::size_t z) const {
    return (x * dims[1] + y) * dims[2] + z;
  }

  void rebuild_voxel_cells() {
    voxel_cells.clear();
    for (std::size_t c = 0; c < mask.size(); ++c)
      if (mask[c]) voxel_cells.push_back(c);
  }

  static VoxelGrid from_mask(const ArrayContainer& mask3d, std::array<double, 3> voxel_size_mm) {
    require(mask3d.shape.size() == 3, Errc::bad_shape, "mask must be 3-D");
    VoxelGrid g;
    g.dims = {mask3d.shape[0], mask3d.shape[1], mask3d.shape[2]};
    g.voxel_size_mm = voxel_size_mm;
    g.mask.resize(mask3d.size());
    for (std::size_t i = 0; i < g.mask.size(); ++i)
      g.mask[i] = mask3d.at_flat(i) != 0.0 ? 1 : 0;
    g.rebuild_voxel_cells();
    require(g.n_voxels() > 0, Errc::empty_mask, "mask selects no voxels");
    return g;
  }

  ArrayContainer mask_array() const {
    std::vector<std::int32_t> values(mask.begin(), mask.end());
    ArrayContainer a;
    a.shape = {dims[0], dims[1], dims[2]};
    a.dtype = Dtype::i32;
    a.data = std::move(values);
    return a;
  }

  bool same_geometry(const VoxelGrid& other) const {
    return dims == other.dims && mask == other.mask;
  }
};

// Per-voxel map plus provenance, the in-memory form of an R map or stat map.
struct MapFile {
  std::vector<double> values;  // length V
  VoxelGrid grid;
  std::string subject;
  std::string model;
};

namespace detail {

inline std::filesystem::path sidecar_path(const std::filesystem::path& npy_path) {
  std::filesystem::path p = npy_path;
  p.replace_extension(".grid.json");
  return p;
}

}  // namespace detail

// Writes a per-voxel map as an array plus a sidecar grid descriptor. The mask
// itself is stored once per directory (mask.npy) and referenced by relative
// path, so whole output trees stay byte-comparable across directories.
inline void write_map(const std::vector<double>& values, const VoxelGrid& grid,
                      const std::filesystem::path& npy_path, const std::string& subject = {},
                      const std::string& model = {}) {
  require(values.size() == grid.n_voxels(), Errc::mismatched_shape,
          "map length does not match grid voxel count");
  const auto dir = npy_path.parent_path();
  std::string mask_name = "mask.npy";
  const auto default_mask = dir / mask_name;
  if (std::filesystem::exists(default_mask)) {
    const auto existing = VoxelGrid::from_mask(read_array(default_mask), grid.voxel_size_mm);
    if (!existing.same_geometry(grid)) {
      mask_name = npy_path.stem().string() + ".mask.npy";
      write_array(grid.mask_array(), dir / mask_name);
    }
  } else {
    write_array(grid.mask_array(), default_mask);
  }

  ArrayContainer a = ArrayContainer::from_doubles({values.size()}, values);
  write_array(a, npy_path);

  nlohmann::json j;
  j["dims"] = grid.dims;
  j["voxel_size_mm"] = grid.voxel_size_mm;
  j["mask"] = mask_name;
  if (!subject.empty()) j["subject"] = subject;
  if (!model.empty()) j["model"] = model;
  std::ofstream out(detail::sidecar_path(npy_path), std::ios::trunc);
  require(out.good(), Errc::io_failure, "cannot write sidecar for " + npy_path.string());
  out << j.dump(2) << '\n';
}

inline MapFile read_map(const std::filesystem::path& npy_path) {
  const auto sidecar = detail::sidecar_path(npy_path);
  require(std::filesystem::exists(sidecar), Errc::dangling_path,
          "missing grid sidecar " + sidecar.string());
  std::ifstream in(sidecar);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::bad_manifest, "bad sidecar JSON: " + std::string(e.what()));
  }
  require(j.contains("dims") && j.contains("voxel_size_mm") && j.contains("mask"),
          Errc::missing_field, "sidecar missing dims/voxel_size_mm/mask");

  MapFile m;
  std::array<double, 3> vox{};
  for (int i = 0; i < 3; ++i) vox[static_cast<std::size_t>(i)] = j["voxel_size_mm"][i].get<double>();
  const auto mask_path = npy_path.parent_path() / j["mask"].get<std::string>();
  require(std::filesystem::exists(mask_path), Errc::dangling_path,
          "mask file missing: " + mask_path.string());
  m.grid = VoxelGrid::from_mask(read_array(mask_path), vox);
  for (int i = 0; i < 3; ++i)
    require(m.grid.dims[static_cast<std::size_t>(i)] == j["dims"][i].get<std::size_t>(),
            Errc::mismatched_shape, "sidecar dims disagree with mask");
  if (j.contains("subject")) m.subject = j["subject"].get<std::string>();
  if (j.contains("model")) m.model = j["model"].get<std::string>();

  const ArrayContainer a = read_array(npy_path);
  require(a.shape.size() == 1 && a.shape[0] == m.grid.n_voxels(), Errc::mismatched_shape,
          "map length does not match grid voxel count");
  m.values = to_doubles(a);
  return m;
}

}  // namespace voxenc::io
