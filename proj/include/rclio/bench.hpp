#pragma once

#include "rclio/rcvox_map.hpp"
#include "rclio/sim.hpp"
#include "rclio/subframe.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace rclio::bench {

/// One recorded mapping step: the robot position, then k-NN queries for every
/// point followed by insertion of the same points (world frame).
struct WorkloadScan {
  Vec3 robot = Vec3::Zero();
  std::vector<Vec3> points;
};

struct Workload {
  std::string name;
  std::vector<WorkloadScan> scans;
};

/// Registers the first `max_scans` scans with ground-truth poses at scan end,
/// after the usual preprocessing.
Workload record_workload(const std::string& name, const sim::SimSequence& seq,
                         const PreprocessConfig& pre, std::size_t max_scans);

struct BenchRow {
  std::string workload;
  std::string structure;
  std::size_t scans = 0;
  std::size_t inserted_points = 0;
  std::size_t queries = 0;
  double insert_ms = 0.0;
  double delete_ms = 0.0;
  double knn_ms = 0.0;
  double total_ms = 0.0;
  double ms_per_scan = 0.0;
  std::size_t memory_bytes = 0;
};

BenchRow bench_rcvox(const Workload& w, const RcVoxConfig& cfg, int k);
/// Point list with the same voxel cap and local cube as RC-Vox, with the
/// k-d tree rebuilt after every scan's insertion.
BenchRow bench_kdtree(const Workload& w, const RcVoxConfig& cfg, int k);
/// Same point list answered by linear scan for every `stride`-th query.
BenchRow bench_bruteforce(const Workload& w, const RcVoxConfig& cfg, int k, std::size_t stride);

void write_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows);

}  // namespace rclio::bench
