#pragma once

#include "rclio/knn.hpp"
#include "rclio/state.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace rclio {

using Index3 = Eigen::Vector3i;

struct RcVoxConfig {
  double lidar_range = 30.0;  // l
  double lambda = 1.25;       // TLA half-extent multiplier, >= 1
  double grid_size = 5.0;     // g
  double voxel_size = 0.5;    // v
  int neighbor_mode = 18;     // 6, 18 or 26
  int max_points_per_voxel = 20;

  /// Throws std::invalid_argument unless 2*lambda*l/g and g/v are positive integers.
  void validate() const;
  int grids_per_axis() const;   // 2*lambda*l/g
  int voxels_per_axis() const;  // g/v
};

/// Offsets of the adjacent voxels recorded for each mode, in a fixed order.
std::span<const Index3> neighbor_offsets(int neighbor_mode);

/// Voxel index of p inside the grid whose origin is b_ori.
Index3 bla_index(const Vec3& p, const Vec3& b_ori, double voxel_size);

/// Robocentric voxel map: a fixed N^3 top-level array of grids, each holding a
/// lazily created B^3 array of voxels. Grid cells are assigned to slots by
/// modulo of their global cell index, so the array never moves while the
/// local-map window follows the robot.
///
/// The local-map window is the grid-aligned block of N cells per axis around
/// the robot's cell; queries outside it are rejected. Inserted points must
/// additionally lie within the lidar range cube (edge 2l) around the robot.
///
/// Every stored point is also recorded in the adjacent voxels selected by
/// neighbor_mode, so a k-NN query reads a single voxel. Neighbor records carry
/// the epoch of their source slot; a slot's epoch advances whenever the slot is
/// reset, which invalidates copies held by surviving grids.
class RcVoxMap {
 public:
  struct InsertStats {
    std::size_t inserted = 0;
    std::size_t outside_cube = 0;
    std::size_t voxel_full = 0;
  };

  struct NeighborRecord {
    Vec3 point;
    std::uint32_t source_slot;
    std::uint32_t source_epoch;
  };

  struct Voxel {
    std::vector<Vec3> own_points;
    std::vector<NeighborRecord> neighbor_points;
  };

  RcVoxMap(const RcVoxConfig& cfg, const Vec3& r_init);

  RcVoxMap(const RcVoxMap&) = delete;
  RcVoxMap& operator=(const RcVoxMap&) = delete;
  RcVoxMap(RcVoxMap&&) = default;
  RcVoxMap& operator=(RcVoxMap&&) = default;

  /// Moves the local map to follow the robot. Returns the number of TLA slots
  /// whose cell left the window; their contents are reset.
  std::size_t update_origin(const Vec3& r_curr);

  /// TLA index by the modulo remap of the current local-map origin.
  Index3 tla_index(const Vec3& p) const;
  /// Global coordinate of the origin of the grid containing p.
  Vec3 grid_origin(const Vec3& p) const;

  bool contains(const Vec3& p) const;

  InsertStats insert(std::span<const Vec3> points);

  /// Up to k points from the query's voxel (own + neighbor records), nearest first.
  std::vector<Neighbor> knn(const Vec3& query, int k = 5) const;

  /// Visits every stored point with its global voxel index.
  void for_each_point(const std::function<void(const Vec3&, const Index3&)>& fn) const;
  /// Live neighbor records of the voxel with the given global index (empty if absent).
  std::vector<Vec3> live_neighbor_points(const Index3& global_voxel) const;
  const Voxel* voxel(const Index3& global_voxel) const;

  /// Global voxel index of p (grid cell * B + BLA index).
  Index3 global_voxel(const Vec3& p) const;

  const RcVoxConfig& config() const { return cfg_; }
  const Vec3& t_init() const { return t_init_; }
  const Vec3& m_curr() const { return m_curr_; }
  const Index3& it_m_curr() const { return it_m_curr_; }
  const Index3& window_low() const { return window_lo_; }
  std::size_t point_count() const { return point_count_; }
  std::size_t occupied_grids() const;
  std::size_t memory_bytes() const;

 private:
  struct Grid {
    Index3 cell;
    Vec3 origin;
    std::vector<Voxel> voxels;
    std::size_t own_count = 0;
  };

  Index3 cell_of(const Vec3& p) const;
  bool cell_in_window(const Index3& cell) const;
  std::size_t slot_of(const Index3& cell) const;
  Grid& grid_for(const Index3& cell);
  const Grid* find_grid(const Index3& cell) const;
  std::size_t voxel_offset(const Index3& local) const;
  void reset_slot(std::size_t slot);
  void backfill_entering_neighbors(const Index3& old_lo);
  static void compact(Voxel& vox, const std::vector<std::uint32_t>& epochs);

  RcVoxConfig cfg_;
  int n_grids_;
  int n_voxels_;
  Vec3 t_init_;
  Vec3 m_curr_;
  Vec3 r_curr_;
  Index3 it_m_curr_;
  Index3 window_lo_;
  std::vector<std::unique_ptr<Grid>> slots_;
  std::vector<std::uint32_t> epochs_;
  std::size_t point_count_ = 0;
};

}  // namespace rclio
