#pragma once

// Work-scaling sweep: one cross-attention pass per cloud size, for dense
// attention over the raw points and for PTA over their trees.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptt/point_tree.hpp"

namespace ptt {

enum class Mechanism { Dense, Pta };

std::string_view to_string(Mechanism m);

struct BenchConfig {
  std::vector<std::size_t> sizes{1000, 2000, 4000, 8000, 16000, 32000};
  /// When positive, the leaf voxel edge at size N is (points_per_leaf / N)^(1/3)
  /// so the expected leaf occupancy stays fixed; zero keeps the tree config's edge.
  double points_per_leaf = 8.0;
  /// Dense attention is executed up to this size; above it the exact count
  /// N·N is reported without running it.
  std::size_t dense_exec_limit = 2048;
  bool timing = false;
  bool parallel = false;

  void validate() const;
};

struct BenchTrial {
  std::size_t n = 0;
  Mechanism mechanism = Mechanism::Dense;
  std::uint64_t count = 0;
  std::uint64_t recount = 0;
  std::uint64_t peak_buffer_bytes = 0;
  std::optional<double> seconds;
  bool executed = false;

  // PTA only.
  double leaf_voxel_size = 0.0;
  std::vector<std::uint64_t> layer_keys;  // key evaluations per tree layer, coarse to dense
  std::vector<std::size_t> layer_counts_q;
  std::vector<std::size_t> layer_counts_k;
  std::size_t max_leaf_occupancy = 0;
  std::size_t max_inner_children = 0;
  std::uint64_t bound = 0;
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Feature width and head count of the attention pass being measured.
struct BenchModel {
  std::size_t model_dim = 264;
  std::size_t heads = 8;
};

struct BenchReport {
  BenchConfig config;
  BenchModel model;
  TreeConfig tree;
  std::uint64_t seed = 0;
  std::vector<BenchTrial> trials;
  SlopeFit dense;
  SlopeFit pta;
};

/// Ordinary least squares of ln(count) on ln(n). Throws Contract on fewer
/// than 4 points or mismatched lengths and Data on non-positive values.
SlopeFit fit_slope(std::span<const double> n, std::span<const double> counts);

/// Upper bound on PTA key evaluations for one direction:
/// N1q·N1k + Σ_{l≥1} N_l^q · max(S·leaf occupancy, S·inner children of the key tree).
std::uint64_t pta_work_bound(const PointTree& tree_q, const PointTree& tree_k, std::size_t top_s);

/// Leaf voxel edge used for a cloud of n points.
double calibrated_voxel_size(std::size_t n, const BenchConfig& cfg);

PointCloud uniform_cloud(std::size_t n, std::uint64_t seed);

/// Both trials run the first cross-attention sublayer of a seeded random
/// encoder: coordinate embedding plus positional encoding, layer norm, then
/// dense attention over the points or pooling and PTA over their trees.
BenchTrial run_dense_trial(std::size_t n, const BenchConfig& cfg, const BenchModel& model, std::uint64_t seed);
BenchTrial run_pta_trial(std::size_t n, const BenchConfig& cfg, const BenchModel& model, const TreeConfig& tree,
                         std::uint64_t seed);

BenchReport run_sweep(const BenchConfig& cfg, const BenchModel& model, const TreeConfig& tree, std::uint64_t seed);

std::string bench_report_json(const BenchReport& report);
std::string bench_report_csv(const BenchReport& report);

}  // namespace ptt
