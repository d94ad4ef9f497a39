#include "ptt/point_tree.hpp"

#include <algorithm>
#include <cmath>

#include "ptt/error.hpp"

namespace ptt {

void TreeConfig::validate() const {
  if (layers < 1) fail(ErrorKind::Config, "tree: layers must be >= 1");
  if (!(leaf_voxel_size > 0.0) || !std::isfinite(leaf_voxel_size))
    fail(ErrorKind::Config, "tree: leaf_voxel_size must be a positive finite length");
  if (group_factor < 2) fail(ErrorKind::Config, "tree: group_factor must be >= 2");
  if (top_s < 1) fail(ErrorKind::Config, "tree: top_s must be >= 1");
  if (leaf_cap < 1) fail(ErrorKind::Config, "tree: leaf_cap must be >= 1");
}

std::size_t TreeConfig::edge_multiplier() const {
  std::size_t g = 1;
  while (g * g * g < group_factor) ++g;
  return g;
}

double TreeConfig::voxel_size_for_layer(std::size_t layer) const {
  require(layers >= 2 && layer + 2 <= layers, "voxel_size_for_layer: layer has no denser layer");
  // The layer just above the points uses V; each step toward the root
  // multiplies the edge by g.
  const std::size_t steps = layers - 2 - layer;
  double size = leaf_voxel_size;
  const double g = static_cast<double>(edge_multiplier());
  for (std::size_t i = 0; i < steps; ++i) size *= g;
  return size;
}

VoxelKey voxel_key(const Vec3& p, double voxel_size) {
  return {static_cast<std::int64_t>(std::floor(p.x / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.y / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.z / voxel_size))};
}

VoxelMap voxelize(std::span<const Vec3> points, double voxel_size) {
  require(voxel_size > 0.0, "voxelize: voxel_size must be > 0");
  VoxelMap out;
  for (std::size_t i = 0; i < points.size(); ++i) out[voxel_key(points[i], voxel_size)].push_back(i);
  return out;
}

VoxelMap voxelize(const PointCloud& cloud, double voxel_size) {
  return voxelize(std::span<const Vec3>(cloud.points), voxel_size);
}

namespace {

Vec3 mean_of(const std::vector<Vec3>& coords, const std::vector<std::size_t>& members) {
  Vec3 acc;
  for (std::size_t j : members) acc += coords[j];
  return acc / static_cast<double>(members.size());
}

void validate_cloud(std::span<const Vec3> points) {
  if (points.empty()) fail(ErrorKind::Data, "point tree: cloud is empty");
  for (const Vec3& p : points)
    if (!is_finite(p)) fail(ErrorKind::Data, "point tree: non-finite coordinate");
}

}  // namespace

PointTree PointTree::from_parents(std::vector<Vec3> densest,
                                  std::vector<std::vector<std::size_t>> parents) {
  validate_cloud(densest);
  const std::size_t n_layers = parents.size() + 1;
  PointTree tree;
  tree.layers_.resize(n_layers);
  tree.layers_.back().coords = std::move(densest);
  for (std::size_t l = n_layers - 1; l-- > 0;) {
    Layer& dense = tree.layers_[l + 1];
    Layer& coarse = tree.layers_[l];
    dense.parent = std::move(parents[l]);
    require(dense.parent.size() == dense.coords.size(),
            "from_parents: parent map length does not match layer size");
    std::size_t n_coarse = 0;
    for (std::size_t p : dense.parent) n_coarse = std::max(n_coarse, p + 1);
    coarse.children.assign(n_coarse, {});
    for (std::size_t j = 0; j < dense.parent.size(); ++j) coarse.children[dense.parent[j]].push_back(j);
    coarse.coords.reserve(n_coarse);
    for (const auto& kids : coarse.children) {
      require(!kids.empty(), "from_parents: coarse node without children");
      coarse.coords.push_back(mean_of(dense.coords, kids));
    }
  }
  return tree;
}

PointTree build_tree(const PointCloud& cloud, const TreeConfig& cfg) {
  cfg.validate();
  validate_cloud(cloud.points);
  PointTree tree;
  tree.layers_.resize(cfg.layers);
  tree.layers_.back().coords = cloud.points;
  for (std::size_t l = cfg.layers - 1; l-- > 0;) {
    PointTree::Layer& dense = tree.layers_[l + 1];
    PointTree::Layer& coarse = tree.layers_[l];
    const VoxelMap voxels = voxelize(dense.coords, cfg.voxel_size_for_layer(l));
    dense.parent.assign(dense.coords.size(), 0);
    coarse.children.reserve(voxels.size());
    coarse.coords.reserve(voxels.size());
    for (const auto& [key, members] : voxels) {
      const std::size_t node = coarse.children.size();
      for (std::size_t j : members) dense.parent[j] = node;
      coarse.coords.push_back(mean_of(dense.coords, members));
      coarse.children.push_back(members);
    }
  }
  return tree;
}

TreeStats tree_stats(const PointTree& tree) {
  TreeStats stats;
  const std::size_t n = tree.num_layers();
  for (std::size_t l = 0; l < n; ++l) stats.layer_counts.push_back(tree.layer_size(l));
  for (std::size_t l = 0; l + 1 < n; ++l) {
    std::size_t max_c = 0;
    std::size_t total = 0;
    for (const auto& kids : tree.children(l)) {
      max_c = std::max(max_c, kids.size());
      total += kids.size();
    }
    stats.max_children.push_back(max_c);
    stats.mean_children.push_back(static_cast<double>(total) / static_cast<double>(tree.layer_size(l)));
  }
  if (n >= 2) stats.max_leaf_occupancy = stats.max_children[n - 2];
  for (std::size_t l = 0; l + 2 < n; ++l)
    stats.max_inner_children = std::max(stats.max_inner_children, stats.max_children[l]);
  return stats;
}

std::string check_tree_invariants(const PointTree& tree, double coord_tol) {
  const std::size_t n = tree.num_layers();
  if (n == 0) return "tree has no layers";
  for (std::size_t l = 0; l + 1 < n; ++l) {
    const auto& kids = tree.children(l);
    const auto& par = tree.parents(l + 1);
    if (kids.size() != tree.layer_size(l)) return "layer " + std::to_string(l) + ": child map size";
    if (par.size() != tree.layer_size(l + 1)) return "layer " + std::to_string(l + 1) + ": parent map size";
    std::vector<int> seen(par.size(), 0);
    std::size_t covered = 0;
    for (std::size_t i = 0; i < kids.size(); ++i) {
      if (kids[i].empty()) return "layer " + std::to_string(l) + ": node without children";
      Vec3 acc;
      for (std::size_t j : kids[i]) {
        if (j >= par.size()) return "layer " + std::to_string(l) + ": child index out of range";
        if (seen[j]++) return "layer " + std::to_string(l + 1) + ": node has two parents";
        if (par[j] != i) return "layer " + std::to_string(l) + ": child/parent maps disagree";
        acc += tree.coords(l + 1)[j];
        ++covered;
      }
      const Vec3 mean = acc / static_cast<double>(kids[i].size());
      const Vec3 d = mean - tree.coords(l)[i];
      if (std::abs(d.x) > coord_tol || std::abs(d.y) > coord_tol || std::abs(d.z) > coord_tol)
        return "layer " + std::to_string(l) + ": coarse coordinate is not the mean of its children";
    }
    if (covered != par.size()) return "layer " + std::to_string(l + 1) + ": nodes without parent";
  }
  return {};
}

}  // namespace ptt
