#pragma once

// Point Tree Attention.
//
// Features are pooled up a PointTree; attention starts global at the
// coarsest layer and, one layer denser at a time, each query only sees the
// children of the top-S keys its parent attended to most.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ptt/attention.hpp"
#include "ptt/numerics.hpp"
#include "ptt/point_tree.hpp"
#include "ptt/random.hpp"

namespace ptt {

/// Per-layer features aligned index-for-index with a PointTree.
struct FeatureTree {
  std::vector<Matrix> layers;  // coarse to dense, layers[l].rows() == tree.layer_size(l)
};

/// Two fully connected layers with ReLU between: (D+3) → hidden → D.
struct PoolingMlp : TwoLayerMlp {
  std::size_t feature_dim() const { return output_dim(); }
  void validate() const;

  static PoolingMlp random(std::size_t model_dim, SplitMix64& rng);
};

FeatureTree feature_pooling(const PointTree& tree, const Matrix& dense_features, const PoolingMlp& mlp);

/// dense_f[i] + coarse_phi[parent_index[i]] for every dense row.
Matrix incorporate_coarse(const Matrix& dense_f, const Matrix& coarse_phi,
                          std::span<const std::size_t> parent_index);

/// Key sets each dense query may attend to. Queries sharing a coarse parent
/// share one key set.
struct AttendedRegions {
  std::vector<std::vector<std::size_t>> key_sets;  // ascending, no duplicates
  std::vector<std::size_t> query_set;              // dense query → index into key_sets
  std::vector<std::vector<std::size_t>> selected;  // coarse query → chosen coarse keys (ascending)

  std::size_t num_queries() const noexcept { return query_set.size(); }
  std::span<const std::size_t> keys_for(std::size_t query) const { return key_sets.at(query_set.at(query)); }
  std::uint64_t total_attended() const;

  /// Every query attends to every one of `num_keys` keys.
  static AttendedRegions full(std::size_t num_queries, std::size_t num_keys);
  /// One arbitrary key set per query; sets are sorted and deduplicated.
  static AttendedRegions per_query(std::vector<std::vector<std::size_t>> sets);
};

/// Head-averaged attention weights in ragged form: row i has one weight per
/// key of keys(i).
class AttentionMap {
 public:
  static AttentionMap from_dense(const Matrix& map);
  AttentionMap(const AttendedRegions& regions, std::vector<double> values);

  std::size_t rows() const noexcept { return row_set_.size(); }
  std::span<const std::size_t> keys(std::size_t row) const { return key_sets_.at(row_set_.at(row)); }
  std::span<const double> weights(std::size_t row) const {
    return std::span<const double>(values_).subspan(offsets_.at(row), offsets_.at(row + 1) - offsets_.at(row));
  }

 private:
  AttentionMap() = default;

  std::vector<std::vector<std::size_t>> key_sets_;
  std::vector<std::size_t> row_set_;
  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
};

/// For every coarse query pick the top `top_s` keys of its map row (ties to
/// the lower key index) and hand the union of their children to every child
/// of the query.
AttendedRegions specify_regions(const AttentionMap& coarse_map,
                                const std::vector<std::vector<std::size_t>>& children_q,
                                const std::vector<std::vector<std::size_t>>& children_k,
                                std::size_t top_s);

struct SparseAttentionOutput {
  Matrix features;
  AttentionMap map;
};

/// Multi-head attention with each query restricted to its key set.
SparseAttentionOutput pta_layer_attention(const Matrix& psi_q, const Matrix& psi_k,
                                          const AttendedRegions& regions, const MhaWeights& w,
                                          WorkCounter* counter = nullptr);

/// Attention parameters for every tree layer; one entry means shared.
struct PtaWeights {
  std::vector<MhaWeights> layers;

  bool shared() const noexcept { return layers.size() == 1; }
  const MhaWeights& for_layer(std::size_t layer) const { return shared() ? layers.front() : layers.at(layer); }
};

struct PtaTrace {
  std::vector<std::uint64_t> layer_keys;  // key evaluations per tree layer, coarse to dense
  std::uint64_t peak_buffer_bytes = 0;
};

/// Result of PTA for one side (the queries of one cloud).
struct PtaSide {
  Matrix features;                       // densest-layer output
  std::vector<AttentionMap> maps;        // per tree layer
  std::vector<AttendedRegions> regions;  // per tree layer; regions[0] is the global layer
  PtaTrace trace;
};

struct PtaCrossResult {
  PtaSide query;  // the first cloud attending to the second
  PtaSide key;    // the second cloud attending to the first
};

/// Cross PTA between two clouds. Both directions are evaluated together:
/// the dense keys of one side carry the coarse output of the other.
PtaCrossResult pta_forward(const PointTree& tree_q, const PointTree& tree_k, const FeatureTree& ft_q,
                           const FeatureTree& ft_k, const PtaWeights& w, std::size_t top_s);

PtaSide pta_self(const PointTree& tree, const FeatureTree& ft, const PtaWeights& w, std::size_t top_s);

/// Total key evaluations recorded in a trace.
std::uint64_t count_attended_keys(const PtaTrace& trace);

/// Same total recomputed from the stored regions.
std::uint64_t recount_attended_keys(const PtaSide& side);

/// Empty when every attended key of every layer is a child of one of the
/// keys selected for the query's parent; otherwise a description of the
/// first violation.
std::string check_region_soundness(const PointTree& tree_q, const PointTree& tree_k, const PtaSide& side,
                                   std::size_t top_s);

}  // namespace ptt
