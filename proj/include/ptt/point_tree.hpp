#pragma once

// Voxel hierarchy over a point cloud. Layers are indexed coarse to dense:
// layer 0 is the coarsest (root) layer and layer num_layers()-1 holds the
// input points themselves.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ptt/numerics.hpp"

namespace ptt {

struct PointCloud {
  std::vector<Vec3> points;
  std::string id;

  std::size_t size() const noexcept { return points.size(); }
};

struct TreeConfig {
  std::size_t layers = 3;         // L_tau
  double leaf_voxel_size = 0.12;  // V, edge of the voxels grouping raw points
  std::size_t group_factor = 4;   // voxels merged per coarser voxel
  std::size_t top_s = 8;          // coarse keys kept per query
  std::size_t leaf_cap = 64;      // reporting threshold for leaf occupancy

  /// Throws ErrorKind::Config on an invalid combination.
  void validate() const;

  /// Edge growth per coarsening step: ceil(cbrt(group_factor)).
  std::size_t edge_multiplier() const;

  /// Voxel edge used to produce tree layer `layer` from layer `layer + 1`.
  double voxel_size_for_layer(std::size_t layer) const;
};

using VoxelKey = std::array<std::int64_t, 3>;

/// Voxel key → member indices. std::map keeps keys in lexicographic order.
using VoxelMap = std::map<VoxelKey, std::vector<std::size_t>>;

VoxelKey voxel_key(const Vec3& p, double voxel_size);
VoxelMap voxelize(std::span<const Vec3> points, double voxel_size);
VoxelMap voxelize(const PointCloud& cloud, double voxel_size);

class PointTree {
 public:
  /// Builds a tree from the densest coordinates and, for each layer pair,
  /// the parent index of every dense node: parents[l][j] is the parent in
  /// layer l of node j in layer l + 1. Coarse coordinates are the means of
  /// their children. Throws Contract if the maps are not a partition.
  static PointTree from_parents(std::vector<Vec3> densest,
                                std::vector<std::vector<std::size_t>> parents);

  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::size_t densest_layer() const noexcept { return layers_.size() - 1; }
  std::size_t layer_size(std::size_t layer) const { return layers_.at(layer).coords.size(); }

  const std::vector<Vec3>& coords(std::size_t layer) const { return layers_.at(layer).coords; }

  /// Children (indices into layer + 1) of every node of `layer`; empty for the densest layer.
  const std::vector<std::vector<std::size_t>>& children(std::size_t layer) const {
    return layers_.at(layer).children;
  }

  /// Parent (index into layer - 1) of every node of `layer`; empty for layer 0.
  const std::vector<std::size_t>& parents(std::size_t layer) const {
    return layers_.at(layer).parent;
  }

  friend bool operator==(const PointTree&, const PointTree&) = default;

 private:
  friend PointTree build_tree(const PointCloud& cloud, const TreeConfig& cfg);

  struct Layer {
    std::vector<Vec3> coords;
    std::vector<std::vector<std::size_t>> children;
    std::vector<std::size_t> parent;
    friend bool operator==(const Layer&, const Layer&) = default;
  };

  std::vector<Layer> layers_;
};

PointTree build_tree(const PointCloud& cloud, const TreeConfig& cfg);

struct TreeStats {
  std::vector<std::size_t> layer_counts;   // coarse to dense
  std::vector<std::size_t> max_children;   // per non-densest layer
  std::vector<double> mean_children;       // per non-densest layer
  std::size_t max_leaf_occupancy = 1;      // V in the complexity bound
  std::size_t max_inner_children = 0;      // realized grouping factor above the leaves
};

TreeStats tree_stats(const PointTree& tree);

/// Empty string when every structural invariant holds, otherwise the first
/// violation found.
std::string check_tree_invariants(const PointTree& tree, double coord_tol = 1e-12);

}  // namespace ptt
