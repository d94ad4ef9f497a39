#pragma once

// Reference implementations used only by the tests. They share no code with
// the library beyond the plain data types and are written for clarity:
// explicit loops, full sorts, brute-force searches.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "ptt/attention.hpp"
#include "ptt/numerics.hpp"
#include "ptt/point_tree.hpp"
#include "ptt/random.hpp"

namespace oracle {

using Grid = std::vector<std::vector<double>>;

inline Grid to_grid(const ptt::Matrix& m) {
  Grid g(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

inline ptt::Matrix random_matrix(std::size_t r, std::size_t c, ptt::SplitMix64& rng, double lo = -1.0,
                                 double hi = 1.0) {
  ptt::Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

inline std::vector<ptt::Vec3> random_points(std::size_t n, ptt::SplitMix64& rng, double lo = 0.0, double hi = 1.0) {
  std::vector<ptt::Vec3> pts(n);
  for (auto& p : pts) {
    p.x = rng.uniform(lo, hi);
    p.y = rng.uniform(lo, hi);
    p.z = rng.uniform(lo, hi);
  }
  return pts;
}

/// Largest |a - b| / max(|b|, floor) where floor = 1e-6 · max|b|.
inline double max_rel_err(const ptt::Matrix& a, const Grid& b) {
  double scale = 0.0;
  for (const auto& row : b)
    for (double v : row) scale = std::max(scale, std::abs(v));
  const double floor = std::max(scale * 1e-6, std::numeric_limits<double>::min());
  double worst = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b[i].size(); ++j)
      worst = std::max(worst, std::abs(a(i, j) - b[i][j]) / std::max(std::abs(b[i][j]), floor));
  return worst;
}

inline double max_rel_err(const ptt::Matrix& a, const ptt::Matrix& b) { return max_rel_err(a, to_grid(b)); }

inline double max_abs_err(const ptt::Matrix& a, const Grid& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b[i].size(); ++j) worst = std::max(worst, std::abs(a(i, j) - b[i][j]));
  return worst;
}

// ---------------------------------------------------------------------------
// numerics

inline Grid matmul(const Grid& a, const Grid& b) {
  const std::size_t n = a.size(), k = b.size(), m = b.empty() ? 0 : b[0].size();
  Grid c(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i][t] * b[t][j];
      c[i][j] = s;
    }
  return c;
}

inline Grid transpose(const Grid& a) {
  Grid t(a.empty() ? 0 : a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) t[j][i] = a[i][j];
  return t;
}

inline std::vector<double> softmax(const std::vector<double>& row) {
  double total = 0.0;
  std::vector<double> e(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) total += (e[i] = std::exp(row[i]));
  for (double& v : e) v /= total;
  return e;
}

/// Positions of the k largest values by a full stable sort; ties keep the lower position.
inline std::vector<std::size_t> topk(const std::vector<double>& row, std::size_t k) {
  std::vector<std::size_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  idx.resize(std::min(k, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline Grid mlp(const Grid& x, const ptt::TwoLayerMlp& m) {
  const Grid w1 = to_grid(m.w1), w2 = to_grid(m.w2);
  Grid out;
  for (const auto& row : x) {
    std::vector<double> h(m.b1);
    for (std::size_t j = 0; j < h.size(); ++j) {
      for (std::size_t t = 0; t < row.size(); ++t) h[j] += row[t] * w1[t][j];
      h[j] = h[j] > 0.0 ? h[j] : 0.0;
    }
    std::vector<double> o(m.b2);
    for (std::size_t j = 0; j < o.size(); ++j)
      for (std::size_t t = 0; t < h.size(); ++t) o[j] += h[t] * w2[t][j];
    out.push_back(o);
  }
  return out;
}

// ---------------------------------------------------------------------------
// attention

struct MhaResult {
  Grid features;
  Grid map;  // n_q × n_k head-averaged weights, -inf where masked
};

/// Per-head attention with every head, query and key handled in its own
/// loop; `allowed(i, j)` restricts query i to a subset of keys.
template <typename Allowed>
MhaResult mha(const Grid& fq, const Grid& fk, const ptt::MhaWeights& w, Allowed allowed) {
  const std::size_t nq = fq.size(), nk = fk.size(), d = w.model_dim, h_count = w.heads, dk = d / h_count;
  MhaResult r;
  r.map.assign(nq, std::vector<double>(nk, 0.0));
  Grid concat(nq, std::vector<double>(h_count * dk, 0.0));
  for (std::size_t h = 0; h < h_count; ++h) {
    const Grid q = matmul(fq, to_grid(w.wq[h]));
    const Grid k = matmul(fk, to_grid(w.wk[h]));
    const Grid v = matmul(fk, to_grid(w.wv[h]));
    for (std::size_t i = 0; i < nq; ++i) {
      std::vector<double> logits(nk, -std::numeric_limits<double>::infinity());
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nk; ++j) {
        if (!allowed(i, j)) continue;
        double s = 0.0;
        for (std::size_t t = 0; t < dk; ++t) s += q[i][t] * k[j][t];
        logits[j] = s / std::sqrt(static_cast<double>(dk));
        mx = std::max(mx, logits[j]);
      }
      double total = 0.0;
      std::vector<double> p(nk, 0.0);
      for (std::size_t j = 0; j < nk; ++j) {
        if (!allowed(i, j)) continue;
        p[j] = std::exp(logits[j] - mx);
        total += p[j];
      }
      for (std::size_t j = 0; j < nk; ++j) {
        p[j] /= total;
        if (!allowed(i, j)) r.map[i][j] = -std::numeric_limits<double>::infinity();
        r.map[i][j] += p[j] / static_cast<double>(h_count);
        for (std::size_t t = 0; t < dk; ++t) concat[i][h * dk + t] += p[j] * v[j][t];
      }
    }
  }
  r.features = matmul(concat, to_grid(w.wo));
  return r;
}

inline MhaResult mha(const Grid& fq, const Grid& fk, const ptt::MhaWeights& w) {
  return mha(fq, fk, w, [](std::size_t, std::size_t) { return true; });
}

inline double pe_value(double coord, std::size_t d, std::size_t column, double base) {
  const std::size_t per_axis = d / 3;
  const std::size_t within = column % per_axis;
  const std::size_t pair = within / 2;
  const double freq = std::pow(base, -6.0 * static_cast<double>(pair) / static_cast<double>(d));
  return within % 2 == 0 ? std::sin(coord * freq) : std::cos(coord * freq);
}

// ---------------------------------------------------------------------------
// trees

/// Parent assignment for every layer pair computed with a hash grid: pass one
/// collects occupied cells, pass two numbers them in lexicographic order.
struct HashTree {
  std::vector<std::vector<ptt::Vec3>> coords;       // coarse to dense
  std::vector<std::vector<std::size_t>> parents;    // parents[l][j]: parent in layer l of node j of layer l+1
};

struct KeyHash {
  std::size_t operator()(const std::tuple<long long, long long, long long>& k) const {
    const auto [a, b, c] = k;
    return std::hash<long long>()(a) ^ (std::hash<long long>()(b) * 31) ^ (std::hash<long long>()(c) * 1009);
  }
};

inline HashTree hash_tree(const std::vector<ptt::Vec3>& pts, std::size_t layers, double leaf_size, std::size_t group) {
  std::size_t g = 1;
  while (g * g * g < group) ++g;
  HashTree t;
  t.coords.assign(layers, {});
  t.parents.assign(layers > 0 ? layers - 1 : 0, {});
  t.coords[layers - 1] = pts;
  double size = leaf_size;
  for (std::size_t l = layers - 1; l-- > 0;) {
    const auto& dense = t.coords[l + 1];
    using Key = std::tuple<long long, long long, long long>;
    std::unordered_map<Key, std::vector<std::size_t>, KeyHash> cells;
    std::vector<Key> keys(dense.size());
    for (std::size_t j = 0; j < dense.size(); ++j) {
      keys[j] = {static_cast<long long>(std::floor(dense[j].x / size)), static_cast<long long>(std::floor(dense[j].y / size)),
                 static_cast<long long>(std::floor(dense[j].z / size))};
      cells[keys[j]].push_back(j);
    }
    std::vector<Key> order;
    for (const auto& [k, members] : cells) order.push_back(k);
    std::sort(order.begin(), order.end());
    std::map<Key, std::size_t> number;
    for (std::size_t i = 0; i < order.size(); ++i) number[order[i]] = i;
    t.parents[l].resize(dense.size());
    t.coords[l].assign(order.size(), {});
    std::vector<double> count(order.size(), 0.0);
    for (std::size_t j = 0; j < dense.size(); ++j) {
      const std::size_t p = number[keys[j]];
      t.parents[l][j] = p;
      t.coords[l][p] += dense[j];
      count[p] += 1.0;
    }
    for (std::size_t i = 0; i < order.size(); ++i) t.coords[l][i] = t.coords[l][i] / count[i];
    size *= static_cast<double>(g);
  }
  return t;
}

/// Coarse features by direct evaluation of the pooling formula, one node at a time.
inline std::vector<Grid> pool(const ptt::PointTree& tree, const Grid& dense, const ptt::TwoLayerMlp& m) {
  std::vector<Grid> layers(tree.num_layers());
  layers.back() = dense;
  for (std::size_t l = tree.num_layers() - 1; l-- > 0;) {
    layers[l].assign(tree.layer_size(l), std::vector<double>(m.output_dim(), 0.0));
    for (std::size_t i = 0; i < tree.layer_size(l); ++i) {
      const auto& kids = tree.children(l)[i];
      for (std::size_t j : kids) {
        std::vector<double> in = layers[l + 1][j];
        const ptt::Vec3 rel = tree.coords(l + 1)[j] - tree.coords(l)[i];
        in.push_back(rel.x);
        in.push_back(rel.y);
        in.push_back(rel.z);
        const Grid out = mlp({in}, m);
        for (std::size_t t = 0; t < out[0].size(); ++t) layers[l][i][t] += out[0][t] / static_cast<double>(kids.size());
      }
    }
  }
  return layers;
}

// ---------------------------------------------------------------------------
// Point tree attention, transcribed step by step:
//   global attention in the coarsest layer, for both clouds;
//   for each denser layer: add the parent's coarse output to the dense
//   features, pick the top-S keys of each coarse query from the previous
//   map, let every child of the query attend to all children of those keys.

struct PtaOracle {
  Grid q_features;
  Grid k_features;
  std::vector<std::vector<std::set<std::size_t>>> q_regions;  // per layer, per dense query
};

inline PtaOracle pta(const ptt::PointTree& tq, const ptt::PointTree& tk, const std::vector<Grid>& fq,
                     const std::vector<Grid>& fk, const ptt::MhaWeights& w, std::size_t s) {
  PtaOracle out;
  MhaResult aq = mha(fq[0], fk[0], w);
  MhaResult ak = mha(fk[0], fq[0], w);
  out.q_regions.push_back({});
  for (std::size_t d = 1; d < tq.num_layers(); ++d) {
    Grid psi_q = fq[d], psi_k = fk[d];
    for (std::size_t i = 0; i < psi_q.size(); ++i)
      for (std::size_t t = 0; t < psi_q[i].size(); ++t) psi_q[i][t] += aq.features[tq.parents(d)[i]][t];
    for (std::size_t i = 0; i < psi_k.size(); ++i)
      for (std::size_t t = 0; t < psi_k[i].size(); ++t) psi_k[i][t] += ak.features[tk.parents(d)[i]][t];

    const auto regions = [&](const MhaResult& prev, const ptt::PointTree& own, const ptt::PointTree& other) {
      std::vector<std::set<std::size_t>> reg(own.layer_size(d));
      for (std::size_t i = 0; i < own.layer_size(d); ++i) {
        const std::size_t parent = own.parents(d)[i];
        const auto chosen = topk(prev.map[parent], s);
        for (std::size_t j = 0; j < other.layer_size(d); ++j)
          if (std::find(chosen.begin(), chosen.end(), other.parents(d)[j]) != chosen.end()) reg[i].insert(j);
      }
      return reg;
    };
    const auto rq = regions(aq, tq, tk);
    const auto rk = regions(ak, tk, tq);
    aq = mha(psi_q, psi_k, w, [&](std::size_t i, std::size_t j) { return rq[i].contains(j); });
    ak = mha(psi_k, psi_q, w, [&](std::size_t i, std::size_t j) { return rk[i].contains(j); });
    out.q_regions.push_back(rq);
  }
  out.q_features = aq.features;
  out.k_features = ak.features;
  return out;
}

// ---------------------------------------------------------------------------
// registration

inline double nearest_distance(const ptt::Vec3& p, const std::vector<ptt::Vec3>& cloud) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : cloud) {
    const double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
    best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
  }
  return best;
}

// ---------------------------------------------------------------------------
// bench

/// Slope and intercept of y = a + b x from the 2×2 normal equations.
inline std::pair<double, double> ols(const std::vector<double>& x, const std::vector<double>& y) {
  double n = static_cast<double>(x.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double det = n * sxx - sx * sx;
  const double a = (sxx * sy - sx * sxy) / det;
  const double b = (n * sxy - sx * sy) / det;
  return {b, a};
}

}  // namespace oracle
