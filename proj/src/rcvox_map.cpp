#include "rclio/rcvox_map.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace rclio {

namespace {

int floor_div(int a, int b) {
  int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// Non-negative modulo: C++ % truncates toward zero and yields negatives.
int euclid_mod(int a, int n) {
  const int r = a % n;
  return r < 0 ? r + n : r;
}

Index3 floor3(const Vec3& v) {
  return Index3(static_cast<int>(std::floor(v.x())), static_cast<int>(std::floor(v.y())),
                static_cast<int>(std::floor(v.z())));
}

int as_integer_ratio(double value, const char* what) {
  const double rounded = std::round(value);
  if (!(rounded >= 1.0) || std::abs(value - rounded) > 1e-9 * std::max(1.0, rounded)) {
    throw std::invalid_argument(std::string("RcVoxConfig: ") + what +
                                " must be a positive integer");
  }
  return static_cast<int>(rounded);
}

template <std::size_t N>
std::array<Index3, N> make_offsets(int max_l1) {
  std::array<Index3, N> out{};
  std::size_t i = 0;
  for (int dx = -1; dx <= 1; ++dx) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dz = -1; dz <= 1; ++dz) {
        const int l1 = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (l1 == 0 || l1 > max_l1) continue;
        out[i++] = Index3(dx, dy, dz);
      }
    }
  }
  return out;
}

const std::array<Index3, 6> kFaceOffsets = make_offsets<6>(1);
const std::array<Index3, 18> kEdgeOffsets = make_offsets<18>(2);
const std::array<Index3, 26> kCornerOffsets = make_offsets<26>(3);

constexpr std::size_t kCompactStride = 32;

}  // namespace

void RcVoxConfig::validate() const {
  if (!(lidar_range > 0.0) || !(grid_size > 0.0) || !(voxel_size > 0.0)) {
    throw std::invalid_argument("RcVoxConfig: sizes must be positive");
  }
  if (!(lambda >= 1.0)) {
    throw std::invalid_argument("RcVoxConfig: lambda must be at least 1");
  }
  if (neighbor_mode != 6 && neighbor_mode != 18 && neighbor_mode != 26) {
    throw std::invalid_argument("RcVoxConfig: neighbor_mode must be 6, 18 or 26");
  }
  if (max_points_per_voxel < 1) {
    throw std::invalid_argument("RcVoxConfig: max_points_per_voxel must be >= 1");
  }
  grids_per_axis();
  voxels_per_axis();
}

int RcVoxConfig::grids_per_axis() const {
  return as_integer_ratio(2.0 * lambda * lidar_range / grid_size, "2*lambda*l/g");
}

int RcVoxConfig::voxels_per_axis() const {
  return as_integer_ratio(grid_size / voxel_size, "g/v");
}

std::span<const Index3> neighbor_offsets(int neighbor_mode) {
  switch (neighbor_mode) {
    case 6: return kFaceOffsets;
    case 18: return kEdgeOffsets;
    case 26: return kCornerOffsets;
    default: throw std::invalid_argument("neighbor_mode must be 6, 18 or 26");
  }
}

Index3 bla_index(const Vec3& p, const Vec3& b_ori, double voxel_size) {
  return floor3((p - b_ori) / voxel_size);
}

RcVoxMap::RcVoxMap(const RcVoxConfig& cfg, const Vec3& r_init) : cfg_(cfg) {
  cfg_.validate();
  n_grids_ = cfg_.grids_per_axis();
  n_voxels_ = cfg_.voxels_per_axis();
  t_init_ = r_init - cfg_.lambda * cfg_.lidar_range * Vec3::Ones();
  m_curr_ = t_init_;
  r_curr_ = r_init;
  it_m_curr_ = Index3::Zero();
  window_lo_ = Index3::Zero();
  const auto total = static_cast<std::size_t>(n_grids_) * static_cast<std::size_t>(n_grids_) *
                     static_cast<std::size_t>(n_grids_);
  slots_.resize(total);
  epochs_.assign(total, 0U);
}

Index3 RcVoxMap::cell_of(const Vec3& p) const { return floor3((p - t_init_) / cfg_.grid_size); }

bool RcVoxMap::cell_in_window(const Index3& cell) const {
  for (int a = 0; a < 3; ++a) {
    if (cell[a] < window_lo_[a] || cell[a] >= window_lo_[a] + n_grids_) return false;
  }
  return true;
}

std::size_t RcVoxMap::slot_of(const Index3& cell) const {
  const auto n = static_cast<std::size_t>(n_grids_);
  const auto x = static_cast<std::size_t>(euclid_mod(cell.x(), n_grids_));
  const auto y = static_cast<std::size_t>(euclid_mod(cell.y(), n_grids_));
  const auto z = static_cast<std::size_t>(euclid_mod(cell.z(), n_grids_));
  return (x * n + y) * n + z;
}

std::size_t RcVoxMap::voxel_offset(const Index3& local) const {
  const auto b = static_cast<std::size_t>(n_voxels_);
  return (static_cast<std::size_t>(local.x()) * b + static_cast<std::size_t>(local.y())) * b +
         static_cast<std::size_t>(local.z());
}

RcVoxMap::Grid& RcVoxMap::grid_for(const Index3& cell) {
  std::unique_ptr<Grid>& slot = slots_[slot_of(cell)];
  if (!slot) {
    slot = std::make_unique<Grid>();
    slot->cell = cell;
    slot->origin = cell.cast<double>() * cfg_.grid_size + t_init_;
    const auto b = static_cast<std::size_t>(n_voxels_);
    slot->voxels.resize(b * b * b);
  } else if (slot->cell != cell) {
    throw std::logic_error("RcVoxMap: slot aliased by two in-window cells");
  }
  return *slot;
}

const RcVoxMap::Grid* RcVoxMap::find_grid(const Index3& cell) const {
  const Grid* g = slots_[slot_of(cell)].get();
  return (g != nullptr && g->cell == cell) ? g : nullptr;
}

void RcVoxMap::reset_slot(std::size_t slot) {
  if (slots_[slot]) {
    point_count_ -= slots_[slot]->own_count;
    slots_[slot].reset();
  }
  ++epochs_[slot];
}

void RcVoxMap::compact(Voxel& vox, const std::vector<std::uint32_t>& epochs) {
  std::erase_if(vox.neighbor_points, [&epochs](const NeighborRecord& r) {
    return epochs[r.source_slot] != r.source_epoch;
  });
}

std::size_t RcVoxMap::update_origin(const Vec3& r_curr) {
  const Index3 robot_cell = cell_of(r_curr);
  m_curr_ = robot_cell.cast<double>() * cfg_.grid_size + t_init_;
  for (int a = 0; a < 3; ++a) {
    it_m_curr_[a] = euclid_mod(robot_cell[a], n_grids_);
  }
  r_curr_ = r_curr;

  const Index3 new_lo = robot_cell - Index3::Constant(n_grids_ / 2);
  if (new_lo == window_lo_) {
    return 0;
  }
  std::size_t kept = 1;
  for (int a = 0; a < 3; ++a) {
    const int overlap = std::max(0, n_grids_ - std::abs(new_lo[a] - window_lo_[a]));
    kept *= static_cast<std::size_t>(overlap);
  }
  const Index3 old_lo = window_lo_;
  window_lo_ = new_lo;
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    if (slots_[s] && !cell_in_window(slots_[s]->cell)) {
      reset_slot(s);
    }
  }
  backfill_entering_neighbors(old_lo);
  return slots_.size() - kept;
}

void RcVoxMap::backfill_entering_neighbors(const Index3& old_lo) {
  // Points stored before the move could not record into cells outside the old
  // window. Cells that just entered get those records now, so every stored
  // point is recorded in its full in-window footprint.
  const auto offsets = neighbor_offsets(cfg_.neighbor_mode);
  const int b = n_voxels_;
  auto in_old_window = [&](const Index3& cell) {
    for (int a = 0; a < 3; ++a) {
      if (cell[a] < old_lo[a] || cell[a] >= old_lo[a] + n_grids_) return false;
    }
    return true;
  };
  std::vector<Grid*> survivors;
  for (const auto& slot : slots_) {
    if (slot) survivors.push_back(slot.get());
  }
  for (Grid* grid : survivors) {
    const Index3 cell = grid->cell;
    const auto source_slot = static_cast<std::uint32_t>(slot_of(cell));
    const std::uint32_t source_epoch = epochs_[source_slot];
    for (int x = 0; x < b; ++x) {
      for (int y = 0; y < b; ++y) {
        for (int z = 0; z < b; ++z) {
          const bool boundary = x == 0 || y == 0 || z == 0 || x == b - 1 || y == b - 1 ||
                                z == b - 1;
          if (!boundary) continue;
          const Index3 local(x, y, z);
          const std::vector<Vec3>& own = grid->voxels[voxel_offset(local)].own_points;
          if (own.empty()) continue;
          const Index3 gv = cell * b + local;
          for (const Index3& d : offsets) {
            const Index3 nv = gv + d;
            const Index3 ncell(floor_div(nv.x(), b), floor_div(nv.y(), b), floor_div(nv.z(), b));
            if (ncell == cell || !cell_in_window(ncell) || in_old_window(ncell)) continue;
            Grid& ngrid = grid_for(ncell);
            Voxel& nvox = ngrid.voxels[voxel_offset(nv - ncell * b)];
            for (const Vec3& p : own) nvox.neighbor_points.push_back({p, source_slot, source_epoch});
          }
        }
      }
    }
  }
}

Index3 RcVoxMap::tla_index(const Vec3& p) const {
  if (!contains(p)) {
    throw std::out_of_range("RcVoxMap::tla_index: point outside local map");
  }
  const Index3 rel = floor3((p - m_curr_) / cfg_.grid_size) + it_m_curr_;
  return Index3(euclid_mod(rel.x(), n_grids_), euclid_mod(rel.y(), n_grids_),
                euclid_mod(rel.z(), n_grids_));
}

Vec3 RcVoxMap::grid_origin(const Vec3& p) const {
  return cell_of(p).cast<double>() * cfg_.grid_size + t_init_;
}

bool RcVoxMap::contains(const Vec3& p) const {
  return p.allFinite() && cell_in_window(cell_of(p));
}

Index3 RcVoxMap::global_voxel(const Vec3& p) const {
  const Index3 cell = cell_of(p);
  const Vec3 origin = cell.cast<double>() * cfg_.grid_size + t_init_;
  Index3 local = bla_index(p, origin, cfg_.voxel_size);
  // Floating-point rounding at the far face can yield B; keep the point in its grid.
  local = local.cwiseMax(0).cwiseMin(n_voxels_ - 1);
  return cell * n_voxels_ + local;
}

RcVoxMap::InsertStats RcVoxMap::insert(std::span<const Vec3> points) {
  InsertStats stats;
  const auto offsets = neighbor_offsets(cfg_.neighbor_mode);
  const auto cap = static_cast<std::size_t>(cfg_.max_points_per_voxel);
  for (const Vec3& p : points) {
    if (!p.allFinite() || (p - r_curr_).cwiseAbs().maxCoeff() > cfg_.lidar_range) {
      ++stats.outside_cube;
      continue;
    }
    const Index3 cell = cell_of(p);
    if (!cell_in_window(cell)) {
      ++stats.outside_cube;
      continue;
    }
    const Index3 gv = global_voxel(p);
    Grid& grid = grid_for(cell);
    Voxel& vox = grid.voxels[voxel_offset(gv - cell * n_voxels_)];
    if (vox.own_points.size() >= cap) {
      ++stats.voxel_full;
      continue;
    }
    vox.own_points.push_back(p);
    ++grid.own_count;
    ++point_count_;
    ++stats.inserted;

    const auto source_slot = static_cast<std::uint32_t>(slot_of(cell));
    const std::uint32_t source_epoch = epochs_[source_slot];
    for (const Index3& d : offsets) {
      const Index3 nv = gv + d;
      const Index3 ncell(floor_div(nv.x(), n_voxels_), floor_div(nv.y(), n_voxels_),
                         floor_div(nv.z(), n_voxels_));
      if (!cell_in_window(ncell)) continue;
      Grid& ngrid = grid_for(ncell);
      Voxel& nvox = ngrid.voxels[voxel_offset(nv - ncell * n_voxels_)];
      if (!nvox.neighbor_points.empty() && nvox.neighbor_points.size() % kCompactStride == 0) {
        compact(nvox, epochs_);
      }
      nvox.neighbor_points.push_back({p, source_slot, source_epoch});
    }
  }
  return stats;
}

std::vector<Neighbor> RcVoxMap::knn(const Vec3& query, int k) const {
  if (!contains(query)) {
    throw std::out_of_range("RcVoxMap::knn: query outside local map");
  }
  if (k <= 0) return {};
  const Index3 cell = cell_of(query);
  const Grid* grid = find_grid(cell);
  if (grid == nullptr) return {};
  const Voxel& vox = grid->voxels[voxel_offset(global_voxel(query) - cell * n_voxels_)];

  const auto kk = static_cast<std::size_t>(k);
  std::vector<Neighbor> best;
  best.reserve(kk + 1);
  std::size_t order = 0;
  auto offer = [&](const Vec3& p) {
    const double d2 = (p - query).squaredNorm();
    const std::size_t idx = order++;
    if (best.size() == kk && d2 >= best.back().squared_distance) return;
    auto pos = std::upper_bound(best.begin(), best.end(), d2,
                                [](double v, const Neighbor& n) { return v < n.squared_distance; });
    best.insert(pos, Neighbor{p, d2, idx});
    if (best.size() > kk) best.pop_back();
  };
  for (const Vec3& p : vox.own_points) offer(p);
  for (const NeighborRecord& r : vox.neighbor_points) {
    if (epochs_[r.source_slot] == r.source_epoch) offer(r.point);
  }
  return best;
}

void RcVoxMap::for_each_point(const std::function<void(const Vec3&, const Index3&)>& fn) const {
  const int b = n_voxels_;
  for (const auto& slot : slots_) {
    if (!slot) continue;
    for (int x = 0; x < b; ++x) {
      for (int y = 0; y < b; ++y) {
        for (int z = 0; z < b; ++z) {
          const Index3 local(x, y, z);
          const Voxel& vox = slot->voxels[voxel_offset(local)];
          for (const Vec3& p : vox.own_points) fn(p, slot->cell * b + local);
        }
      }
    }
  }
}

const RcVoxMap::Voxel* RcVoxMap::voxel(const Index3& global_voxel) const {
  const Index3 cell(floor_div(global_voxel.x(), n_voxels_), floor_div(global_voxel.y(), n_voxels_),
                    floor_div(global_voxel.z(), n_voxels_));
  if (!cell_in_window(cell)) return nullptr;
  const Grid* grid = find_grid(cell);
  if (grid == nullptr) return nullptr;
  return &grid->voxels[voxel_offset(global_voxel - cell * n_voxels_)];
}

std::vector<Vec3> RcVoxMap::live_neighbor_points(const Index3& global_voxel) const {
  std::vector<Vec3> out;
  const Voxel* vox = voxel(global_voxel);
  if (vox == nullptr) return out;
  for (const NeighborRecord& r : vox->neighbor_points) {
    if (epochs_[r.source_slot] == r.source_epoch) out.push_back(r.point);
  }
  return out;
}

std::size_t RcVoxMap::occupied_grids() const {
  return static_cast<std::size_t>(
      std::count_if(slots_.begin(), slots_.end(), [](const auto& s) { return s != nullptr; }));
}

std::size_t RcVoxMap::memory_bytes() const {
  std::size_t bytes = slots_.capacity() * sizeof(std::unique_ptr<Grid>) +
                      epochs_.capacity() * sizeof(std::uint32_t);
  for (const auto& slot : slots_) {
    if (!slot) continue;
    bytes += sizeof(Grid) + slot->voxels.capacity() * sizeof(Voxel);
    for (const Voxel& v : slot->voxels) {
      bytes += v.own_points.capacity() * sizeof(Vec3) +
               v.neighbor_points.capacity() * sizeof(NeighborRecord);
    }
  }
  return bytes;
}

}  // namespace rclio
