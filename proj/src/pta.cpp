#include "ptt/pta.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ptt/error.hpp"

namespace ptt {

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, double bound, SplitMix64& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

std::vector<double> random_vector(std::size_t n, double bound, SplitMix64& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-bound, bound);
  return v;
}

void sort_unique(std::vector<std::size_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

void check_alignment(const PointTree& tree, const FeatureTree& ft, std::size_t dim, const char* what) {
  require(ft.layers.size() == tree.num_layers(), std::string(what) + ": feature tree depth mismatch");
  for (std::size_t l = 0; l < tree.num_layers(); ++l)
    require(ft.layers[l].rows() == tree.layer_size(l) && ft.layers[l].cols() == dim,
            std::string(what) + ": feature tree misaligned at layer " + std::to_string(l));
}

AttendedRegions global_regions(std::size_t nq, std::size_t nk) { return AttendedRegions::full(nq, nk); }

}  // namespace

// ---------------------------------------------------------------------------
// Pooling

void PoolingMlp::validate() const {
  require(w1.cols() == b1.size() && w2.rows() == w1.cols() && w2.cols() == b2.size(),
          "PoolingMlp: inconsistent layer shapes");
  require(w1.rows() == w2.cols() + 3, "PoolingMlp: input width must be feature width + 3");
}

PoolingMlp PoolingMlp::random(std::size_t model_dim, SplitMix64& rng) {
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(model_dim + 3));
  const double hid_bound = 1.0 / std::sqrt(static_cast<double>(model_dim));
  PoolingMlp mlp;
  mlp.w1 = random_matrix(model_dim + 3, model_dim, in_bound, rng);
  mlp.b1 = random_vector(model_dim, in_bound, rng);
  mlp.w2 = random_matrix(model_dim, model_dim, hid_bound, rng);
  mlp.b2 = random_vector(model_dim, hid_bound, rng);
  return mlp;
}

FeatureTree feature_pooling(const PointTree& tree, const Matrix& dense_features, const PoolingMlp& mlp) {
  mlp.validate();
  const std::size_t dim = mlp.feature_dim();
  require(dense_features.rows() == tree.layer_size(tree.densest_layer()),
          "feature_pooling: dense feature rows do not match the densest layer");
  require(dense_features.cols() == dim, "feature_pooling: feature width does not match the MLP");

  FeatureTree ft;
  ft.layers.resize(tree.num_layers());
  ft.layers.back() = dense_features;
  for (std::size_t c = tree.num_layers() - 1; c-- > 0;) {
    const std::size_t d = c + 1;
    const Matrix& fd = ft.layers[d];
    const auto& parents = tree.parents(d);
    const auto& cd = tree.coords(d);
    const auto& cc = tree.coords(c);
    Matrix input(fd.rows(), dim + 3);
    for (std::size_t j = 0; j < fd.rows(); ++j) {
      auto dst = input.row(j);
      std::copy(fd.row(j).begin(), fd.row(j).end(), dst.begin());
      const Vec3 rel = cd[j] - cc[parents[j]];
      dst[dim] = rel.x;
      dst[dim + 1] = rel.y;
      dst[dim + 2] = rel.z;
    }
    const Matrix projected = mlp.forward(input);
    Matrix fc(tree.layer_size(c), dim);
    const auto& children = tree.children(c);
    for (std::size_t i = 0; i < children.size(); ++i) {
      auto dst = fc.row(i);
      for (std::size_t j : children[i]) {
        const auto src = projected.row(j);
        for (std::size_t k = 0; k < dim; ++k) dst[k] += src[k];
      }
      const double inv = 1.0 / static_cast<double>(children[i].size());
      for (double& v : dst) v *= inv;
    }
    ft.layers[c] = std::move(fc);
  }
  return ft;
}

Matrix incorporate_coarse(const Matrix& dense_f, const Matrix& coarse_phi,
                          std::span<const std::size_t> parent_index) {
  require(parent_index.size() == dense_f.rows(), "incorporate_coarse: parent map length mismatch");
  require(coarse_phi.cols() == dense_f.cols(), "incorporate_coarse: feature width mismatch");
  Matrix out = dense_f;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    require(parent_index[i] < coarse_phi.rows(), "incorporate_coarse: parent index out of range");
    auto dst = out.row(i);
    const auto src = coarse_phi.row(parent_index[i]);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Regions and maps

std::uint64_t AttendedRegions::total_attended() const {
  std::uint64_t total = 0;
  for (std::size_t s : query_set) total += key_sets[s].size();
  return total;
}

AttendedRegions AttendedRegions::full(std::size_t num_queries, std::size_t num_keys) {
  AttendedRegions r;
  r.key_sets.emplace_back(num_keys);
  std::iota(r.key_sets.front().begin(), r.key_sets.front().end(), std::size_t{0});
  r.query_set.assign(num_queries, 0);
  return r;
}

AttendedRegions AttendedRegions::per_query(std::vector<std::vector<std::size_t>> sets) {
  AttendedRegions r;
  r.query_set.resize(sets.size());
  std::iota(r.query_set.begin(), r.query_set.end(), std::size_t{0});
  for (auto& s : sets) sort_unique(s);
  r.key_sets = std::move(sets);
  return r;
}

AttentionMap AttentionMap::from_dense(const Matrix& map) {
  AttentionMap m;
  m.key_sets_.emplace_back(map.cols());
  std::iota(m.key_sets_.front().begin(), m.key_sets_.front().end(), std::size_t{0});
  m.row_set_.assign(map.rows(), 0);
  m.offsets_.resize(map.rows() + 1);
  for (std::size_t i = 0; i <= map.rows(); ++i) m.offsets_[i] = i * map.cols();
  m.values_.assign(map.values().begin(), map.values().end());
  return m;
}

AttentionMap::AttentionMap(const AttendedRegions& regions, std::vector<double> values)
    : key_sets_(regions.key_sets), row_set_(regions.query_set), values_(std::move(values)) {
  offsets_.resize(row_set_.size() + 1, 0);
  for (std::size_t i = 0; i < row_set_.size(); ++i)
    offsets_[i + 1] = offsets_[i] + key_sets_.at(row_set_[i]).size();
  require(offsets_.back() == values_.size(), "AttentionMap: weight count does not match regions");
}

AttendedRegions specify_regions(const AttentionMap& coarse_map,
                                const std::vector<std::vector<std::size_t>>& children_q,
                                const std::vector<std::vector<std::size_t>>& children_k,
                                std::size_t top_s) {
  require(top_s >= 1, "specify_regions: top_s must be >= 1");
  require(coarse_map.rows() == children_q.size(), "specify_regions: map rows do not match coarse queries");

  std::size_t n_dense = 0;
  for (const auto& kids : children_q) n_dense += kids.size();

  AttendedRegions regions;
  regions.key_sets.resize(children_q.size());
  regions.selected.resize(children_q.size());
  regions.query_set.assign(n_dense, children_q.size());
  for (std::size_t i = 0; i < children_q.size(); ++i) {
    const auto keys = coarse_map.keys(i);
    const auto positions = topk_indices(coarse_map.weights(i), top_s);
    auto& chosen = regions.selected[i];
    auto& set = regions.key_sets[i];
    for (std::size_t p : positions) {
      const std::size_t key = keys[p];
      require(key < children_k.size(), "specify_regions: map key outside the coarse key layer");
      chosen.push_back(key);
      set.insert(set.end(), children_k[key].begin(), children_k[key].end());
    }
    sort_unique(set);
    for (std::size_t q : children_q[i]) {
      require(q < n_dense && regions.query_set[q] == children_q.size(),
              "specify_regions: query child maps are not a partition");
      regions.query_set[q] = i;
    }
  }
  return regions;
}

// ---------------------------------------------------------------------------
// Sparse attention

SparseAttentionOutput pta_layer_attention(const Matrix& psi_q, const Matrix& psi_k,
                                          const AttendedRegions& regions, const MhaWeights& w,
                                          WorkCounter* counter) {
  w.validate();
  require(psi_q.cols() == w.model_dim && psi_k.cols() == w.model_dim,
          "pta_layer_attention: feature width does not match model dim");
  require(regions.num_queries() == psi_q.rows(), "pta_layer_attention: regions do not cover the queries");

  const std::size_t dk = w.head_dim();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  const HeadProjections proj = project_heads(psi_q, psi_k, w);

  const std::uint64_t total = regions.total_attended();
  std::vector<double> map_values;
  map_values.reserve(total);
  Matrix concat(psi_q.rows(), w.heads * dk);
  std::vector<double> scores;
  std::vector<double> avg;
  for (std::size_t i = 0; i < psi_q.rows(); ++i) {
    const auto keys = regions.keys_for(i);
    if (keys.empty())
      fail(ErrorKind::EmptyAttentionRow, "pta_layer_attention: query " + std::to_string(i) + " has no keys");
    scores.resize(keys.size());
    avg.assign(keys.size(), 0.0);
    for (std::size_t h = 0; h < w.heads; ++h) {
      const auto qi = proj.q[h].row(i);
      for (std::size_t j = 0; j < keys.size(); ++j) {
        require(keys[j] < psi_k.rows(), "pta_layer_attention: key index out of range");
        scores[j] = scaled_dot(qi, proj.k[h].row(keys[j]), inv_sqrt_dk);
      }
      softmax_inplace(scores);
      auto out = concat.row(i).subspan(h * dk, dk);
      for (std::size_t j = 0; j < keys.size(); ++j) {
        const auto vj = proj.v[h].row(keys[j]);
        for (std::size_t c = 0; c < dk; ++c) out[c] += scores[j] * vj[c];
        avg[j] += scores[j];
      }
    }
    const double inv_heads = 1.0 / static_cast<double>(w.heads);
    for (double v : avg) map_values.push_back(v * inv_heads);
  }
  if (counter != nullptr) counter->record(total, attention_buffer_bytes(total, w.heads));
  return {matmul(concat, w.wo), AttentionMap(regions, std::move(map_values))};
}

// ---------------------------------------------------------------------------
// Full passes

PtaCrossResult pta_forward(const PointTree& tree_q, const PointTree& tree_k, const FeatureTree& ft_q,
                           const FeatureTree& ft_k, const PtaWeights& w, std::size_t top_s) {
  require(!w.layers.empty(), "pta_forward: no attention weights");
  const std::size_t dim = w.layers.front().model_dim;
  require(tree_q.num_layers() == tree_k.num_layers(), "pta_forward: trees differ in depth");
  require(w.shared() || w.layers.size() == tree_q.num_layers(),
          "pta_forward: unshared weights need one set per tree layer");
  check_alignment(tree_q, ft_q, dim, "pta_forward (queries)");
  check_alignment(tree_k, ft_k, dim, "pta_forward (keys)");

  PtaCrossResult result;
  PtaSide& sq = result.query;
  PtaSide& sk = result.key;

  WorkCounter cq, ck;
  const MhaWeights& w0 = w.for_layer(0);
  AttentionOutput gq = multihead_attention(ft_q.layers[0], ft_k.layers[0], w0, &cq);
  AttentionOutput gk = multihead_attention(ft_k.layers[0], ft_q.layers[0], w0, &ck);
  sq.trace.layer_keys.push_back(cq.key_evaluations);
  sk.trace.layer_keys.push_back(ck.key_evaluations);
  sq.regions.push_back(global_regions(tree_q.layer_size(0), tree_k.layer_size(0)));
  sk.regions.push_back(global_regions(tree_k.layer_size(0), tree_q.layer_size(0)));
  sq.maps.push_back(AttentionMap::from_dense(gq.map));
  sk.maps.push_back(AttentionMap::from_dense(gk.map));
  Matrix phi_q = std::move(gq.features);
  Matrix phi_k = std::move(gk.features);

  for (std::size_t d = 1; d < tree_q.num_layers(); ++d) {
    const std::size_t c = d - 1;
    const Matrix psi_q = incorporate_coarse(ft_q.layers[d], phi_q, tree_q.parents(d));
    const Matrix psi_k = incorporate_coarse(ft_k.layers[d], phi_k, tree_k.parents(d));
    AttendedRegions rq = specify_regions(sq.maps[c], tree_q.children(c), tree_k.children(c), top_s);
    AttendedRegions rk = specify_regions(sk.maps[c], tree_k.children(c), tree_q.children(c), top_s);
    const std::uint64_t before_q = cq.key_evaluations;
    const std::uint64_t before_k = ck.key_evaluations;
    SparseAttentionOutput oq = pta_layer_attention(psi_q, psi_k, rq, w.for_layer(d), &cq);
    SparseAttentionOutput ok = pta_layer_attention(psi_k, psi_q, rk, w.for_layer(d), &ck);
    sq.trace.layer_keys.push_back(cq.key_evaluations - before_q);
    sk.trace.layer_keys.push_back(ck.key_evaluations - before_k);
    sq.regions.push_back(std::move(rq));
    sk.regions.push_back(std::move(rk));
    sq.maps.push_back(std::move(oq.map));
    sk.maps.push_back(std::move(ok.map));
    phi_q = std::move(oq.features);
    phi_k = std::move(ok.features);
  }
  sq.features = std::move(phi_q);
  sk.features = std::move(phi_k);
  sq.trace.peak_buffer_bytes = cq.peak_buffer_bytes;
  sk.trace.peak_buffer_bytes = ck.peak_buffer_bytes;
  return result;
}

PtaSide pta_self(const PointTree& tree, const FeatureTree& ft, const PtaWeights& w, std::size_t top_s) {
  require(!w.layers.empty(), "pta_self: no attention weights");
  const std::size_t dim = w.layers.front().model_dim;
  require(w.shared() || w.layers.size() == tree.num_layers(),
          "pta_self: unshared weights need one set per tree layer");
  check_alignment(tree, ft, dim, "pta_self");

  PtaSide side;
  WorkCounter counter;
  AttentionOutput g = multihead_attention(ft.layers[0], ft.layers[0], w.for_layer(0), &counter);
  side.trace.layer_keys.push_back(counter.key_evaluations);
  side.regions.push_back(global_regions(tree.layer_size(0), tree.layer_size(0)));
  side.maps.push_back(AttentionMap::from_dense(g.map));
  Matrix phi = std::move(g.features);

  for (std::size_t d = 1; d < tree.num_layers(); ++d) {
    const std::size_t c = d - 1;
    const Matrix psi = incorporate_coarse(ft.layers[d], phi, tree.parents(d));
    AttendedRegions r = specify_regions(side.maps[c], tree.children(c), tree.children(c), top_s);
    const std::uint64_t before = counter.key_evaluations;
    SparseAttentionOutput o = pta_layer_attention(psi, psi, r, w.for_layer(d), &counter);
    side.trace.layer_keys.push_back(counter.key_evaluations - before);
    side.regions.push_back(std::move(r));
    side.maps.push_back(std::move(o.map));
    phi = std::move(o.features);
  }
  side.features = std::move(phi);
  side.trace.peak_buffer_bytes = counter.peak_buffer_bytes;
  return side;
}

std::uint64_t count_attended_keys(const PtaTrace& trace) {
  return std::accumulate(trace.layer_keys.begin(), trace.layer_keys.end(), std::uint64_t{0});
}

std::uint64_t recount_attended_keys(const PtaSide& side) {
  std::uint64_t total = 0;
  for (const AttendedRegions& r : side.regions)
    for (std::size_t q = 0; q < r.num_queries(); ++q) total += r.keys_for(q).size();
  return total;
}

std::string check_region_soundness(const PointTree& tree_q, const PointTree& tree_k, const PtaSide& side,
                                   std::size_t top_s) {
  const std::size_t layers = tree_q.num_layers();
  if (side.regions.size() != layers || side.maps.size() != layers) return "trace does not cover every layer";
  for (std::size_t d = 1; d < layers; ++d) {
    const std::size_t c = d - 1;
    const AttendedRegions& r = side.regions[d];
    const std::string where = "layer " + std::to_string(d) + ": ";
    if (r.selected.size() != tree_q.layer_size(c)) return where + "provenance does not cover coarse queries";
    if (r.num_queries() != tree_q.layer_size(d)) return where + "regions do not cover dense queries";
    for (std::size_t i = 0; i < r.selected.size(); ++i) {
      const auto& chosen = r.selected[i];
      const std::size_t expected = std::min(top_s, side.maps[c].keys(i).size());
      if (chosen.size() != expected) return where + "coarse query selected a wrong number of keys";
      std::vector<std::size_t> recomputed;
      for (std::size_t p : topk_indices(side.maps[c].weights(i), top_s))
        recomputed.push_back(side.maps[c].keys(i)[p]);
      if (recomputed != chosen) return where + "selected keys are not the top-S of the coarse map";
    }
    const auto& qparents = tree_q.parents(d);
    const auto& kparents = tree_k.parents(d);
    for (std::size_t q = 0; q < r.num_queries(); ++q) {
      const auto keys = r.keys_for(q);
      if (keys.empty()) return where + "query " + std::to_string(q) + " has an empty region";
      const auto& chosen = r.selected[qparents[q]];
      for (std::size_t k : keys) {
        if (k >= kparents.size()) return where + "key index out of range";
        if (!std::binary_search(chosen.begin(), chosen.end(), kparents[k]))
          return where + "query " + std::to_string(q) + " attends to key " + std::to_string(k) +
                 " outside the selected coarse keys";
      }
      std::size_t expected_keys = 0;
      for (std::size_t key : chosen) expected_keys += tree_k.children(c).at(key).size();
      if (keys.size() != expected_keys)
        return where + "query " + std::to_string(q) + " does not see every child of its selected keys";
    }
  }
  return {};
}

}  // namespace ptt
