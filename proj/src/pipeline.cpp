#include "ptt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "ptt/attention.hpp"
#include "ptt/error.hpp"
#include "ptt/pta.hpp"
#include "ptt/random.hpp"

namespace ptt {

namespace {

using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Bundle layout

Matrix as_row(std::span<const double> v) { return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end())); }

std::vector<double> row_values(const Matrix& m) {
  const auto v = m.values();
  return {v.begin(), v.end()};
}

void put_mlp(ParamBundle& b, const std::string& p, const TwoLayerMlp& m) {
  b.add(p + ".w1", m.w1);
  b.add(p + ".b1", as_row(m.b1));
  b.add(p + ".w2", m.w2);
  b.add(p + ".b2", as_row(m.b2));
}

void put_norm(ParamBundle& b, const std::string& p, const LayerNormParams& n) {
  b.add(p + ".gain", as_row(n.gain));
  b.add(p + ".bias", as_row(n.bias));
}

void put_mha(ParamBundle& b, const std::string& p, const MhaWeights& w) {
  for (std::size_t h = 0; h < w.heads; ++h) {
    b.add(p + ".wq." + std::to_string(h), w.wq[h]);
    b.add(p + ".wk." + std::to_string(h), w.wk[h]);
    b.add(p + ".wv." + std::to_string(h), w.wv[h]);
  }
  b.add(p + ".wo", w.wo);
}

void put_sublayer(ParamBundle& b, const std::string& p, const PtaSublayer& s) {
  put_norm(b, p + ".norm", s.norm);
  put_mlp(b, p + ".pool", s.pool);
  for (std::size_t t = 0; t < s.attn.layers.size(); ++t) put_mha(b, p + ".attn." + std::to_string(t), s.attn.layers[t]);
}

class BundleReader {
 public:
  explicit BundleReader(const ParamBundle& b) : bundle_(b) {}

  Matrix matrix(const std::string& name, std::size_t rows, std::size_t cols) {
    used_.insert(name);
    return bundle_.expect(name, rows, cols);
  }
  std::vector<double> vector(const std::string& name, std::size_t n) { return row_values(matrix(name, 1, n)); }

  TwoLayerMlp mlp(const std::string& p, std::size_t in, std::size_t hidden, std::size_t out) {
    TwoLayerMlp m;
    m.w1 = matrix(p + ".w1", in, hidden);
    m.b1 = vector(p + ".b1", hidden);
    m.w2 = matrix(p + ".w2", hidden, out);
    m.b2 = vector(p + ".b2", out);
    return m;
  }
  LayerNormParams norm(const std::string& p, std::size_t d) { return {vector(p + ".gain", d), vector(p + ".bias", d)}; }
  MhaWeights mha(const std::string& p, std::size_t d, std::size_t heads) {
    MhaWeights w;
    w.model_dim = d;
    w.heads = heads;
    const std::size_t dk = d / heads;
    for (std::size_t h = 0; h < heads; ++h) {
      w.wq.push_back(matrix(p + ".wq." + std::to_string(h), d, dk));
      w.wk.push_back(matrix(p + ".wk." + std::to_string(h), d, dk));
      w.wv.push_back(matrix(p + ".wv." + std::to_string(h), d, dk));
    }
    w.wo = matrix(p + ".wo", heads * dk, d);
    return w;
  }
  PtaSublayer sublayer(const std::string& p, const EncoderConfig& cfg) {
    PtaSublayer s;
    s.norm = norm(p + ".norm", cfg.model_dim);
    static_cast<TwoLayerMlp&>(s.pool) = mlp(p + ".pool", cfg.model_dim + 3, cfg.model_dim, cfg.model_dim);
    const std::size_t copies = cfg.share_tree_params ? 1 : cfg.tree_layers;
    for (std::size_t t = 0; t < copies; ++t) s.attn.layers.push_back(mha(p + ".attn." + std::to_string(t), cfg.model_dim, cfg.heads));
    return s;
  }

  void finish() const {
    for (const auto& [name, tensor] : bundle_.tensors())
      if (!used_.contains(name)) fail(ErrorKind::Load, "weights: unexpected tensor " + name);
  }

 private:
  const ParamBundle& bundle_;
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Helpers

std::size_t nearest_index(const Vec3& p, std::span<const Vec3> cloud) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cloud.size(); ++j) {
    const double d = squared_distance(p, cloud[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

template <typename F>
auto run_stage(const char* stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(stage) + ": " + e.what());
  }
}

ordered_json vec_json(const Vec3& v) { return ordered_json::array({v.x, v.y, v.z}); }

ordered_json stats_json(const TreeStats& s) {
  return {{"layer_counts", s.layer_counts},         {"max_children", s.max_children},
          {"mean_children", s.mean_children},       {"max_leaf_occupancy", s.max_leaf_occupancy},
          {"max_inner_children", s.max_inner_children}};
}

ordered_json score_summary(std::span<const double> scores) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
  for (double s : scores) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
    sum += s;
  }
  return {{"count", scores.size()},
          {"min", lo},
          {"max", hi},
          {"mean", scores.empty() ? 0.0 : sum / static_cast<double>(scores.size())}};
}

double max_relative_error(const Matrix& got, const Matrix& want) {
  if (got.rows() != want.rows() || got.cols() != want.cols()) return std::numeric_limits<double>::infinity();
  double scale = 0.0;
  for (double v : want.values()) scale = std::max(scale, std::abs(v));
  const double floor = std::max(scale * 1e-6, std::numeric_limits<double>::min());
  double worst = 0.0;
  const auto g = got.values();
  const auto w = want.values();
  for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(g[i] - w[i]) / std::max(std::abs(w[i]), floor));
  return worst;
}

std::string format_err(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Weights

ModelWeights ModelWeights::random(const RunConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SplitMix64 rng(derive_seed(seed, 0x5eed));
  const std::size_t d = cfg.model_dim;
  ModelWeights w;
  w.embed = random_mlp(3, d, d, rng);
  w.encoder = EncoderWeights::random(cfg.encoder(), rng);
  w.decoder = DecoderWeights::random(d, rng);
  w.w_f = Matrix(d, d);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : w.w_f.values()) v = rng.uniform(-bound, bound);
  return w;
}

ParamBundle to_bundle(const ModelWeights& w) {
  ParamBundle b;
  put_mlp(b, "embed", w.embed);
  for (std::size_t l = 0; l < w.encoder.layers.size(); ++l) {
    const std::string p = "encoder." + std::to_string(l);
    const EncoderLayerWeights& layer = w.encoder.layers[l];
    put_sublayer(b, p + ".self", layer.self_attn);
    put_sublayer(b, p + ".cross", layer.cross_attn);
    put_norm(b, p + ".ffn.norm", layer.ffn.norm);
    put_mlp(b, p + ".ffn.mlp", layer.ffn.mlp);
  }
  put_mlp(b, "decoder.coords", w.decoder.coords);
  b.add("decoder.score_w", w.decoder.score_w);
  b.add("decoder.score_b", as_row(w.decoder.score_b));
  b.add("w_f", w.w_f);
  return b;
}

ModelWeights from_bundle(const ParamBundle& bundle, const RunConfig& cfg) {
  const EncoderConfig enc = cfg.encoder();
  const std::size_t d = cfg.model_dim;
  BundleReader r(bundle);
  ModelWeights w;
  w.embed = r.mlp("embed", 3, d, d);
  for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    EncoderLayerWeights layer;
    layer.self_attn = r.sublayer(p + ".self", enc);
    layer.cross_attn = r.sublayer(p + ".cross", enc);
    layer.ffn.norm = r.norm(p + ".ffn.norm", d);
    layer.ffn.mlp = r.mlp(p + ".ffn.mlp", d, 2 * d, d);
    w.encoder.layers.push_back(std::move(layer));
  }
  w.decoder.coords = r.mlp("decoder.coords", d, d, 3);
  w.decoder.score_w = r.matrix("decoder.score_w", d, 1);
  w.decoder.score_b = r.vector("decoder.score_b", 1);
  w.w_f = r.matrix("w_f", d, d);
  r.finish();
  return w;
}

// ---------------------------------------------------------------------------
// Synthetic data and the oracle decoder

SyntheticPair make_synthetic_pair(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SplitMix64 rng(derive_seed(seed, 0x9a1));
  SyntheticPair pair;
  pair.source.id = "synthetic-source";
  pair.target.id = "synthetic-target";
  for (std::size_t i = 0; i < cfg.points; ++i) {
    const double x = rng.uniform(-0.5, 0.5);
    const double y = rng.uniform(-0.5, 0.5);
    const double z = rng.uniform(-0.5, 0.5);
    pair.source.points.push_back({x, y, z});
  }

  Vec3 axis;
  do {
    axis.x = rng.normal();
    axis.y = rng.normal();
    axis.z = rng.normal();
  } while (norm(axis) < 1e-6);
  const double angle = rng.uniform(0.0, cfg.max_angle_deg) * std::numbers::pi / 180.0;
  Vec3 t;
  for (std::size_t a = 0; a < 3; ++a) t[a] = rng.uniform(-cfg.max_translation, cfg.max_translation);
  pair.gt = RigidTransform::from_axis_angle(axis, angle, t);

  for (const Vec3& p : pair.source.points) {
    Vec3 q = pair.gt.apply(p);
    if (cfg.jitter_sigma > 0.0)
      for (std::size_t a = 0; a < 3; ++a) q[a] += std::clamp(cfg.jitter_sigma * rng.normal(), -cfg.jitter_clip, cfg.jitter_clip);
    pair.target.points.push_back(q);
  }
  return pair;
}

Correspondences oracle_correspondences(std::span<const Vec3> x, std::span<const Vec3> y,
                                       const RigidTransform& gt, double overlap_radius) {
  require(!x.empty() && !y.empty(), "oracle: empty cloud");
  const RigidTransform inv = gt.inverse();
  const double r2 = overlap_radius * overlap_radius;
  const auto score = [&](double d2) { return d2 < r2 ? 1.0 - kProbabilityClamp : kProbabilityClamp; };
  Correspondences c;
  c.y_hat = Matrix(x.size(), 3);
  c.x_hat = Matrix(y.size(), 3);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Vec3 image = gt.apply(x[i]);
    const Vec3& q = y[nearest_index(image, y)];
    for (std::size_t a = 0; a < 3; ++a) c.y_hat(i, a) = q[a];
    c.score_x.push_back(score(squared_distance(image, q)));
  }
  for (std::size_t j = 0; j < y.size(); ++j) {
    const Vec3 image = inv.apply(y[j]);
    const Vec3& p = x[nearest_index(image, x)];
    for (std::size_t a = 0; a < 3; ++a) c.x_hat(j, a) = p[a];
    c.score_y.push_back(score(squared_distance(image, p)));
  }
  return c;
}

// ---------------------------------------------------------------------------
// register

RegisterResult register_pair(const PointCloud& source, const PointCloud& target, const RunConfig& cfg,
                             const RegisterOptions& options) {
  run_stage("config", [&] {
    cfg.validate();
    if (options.oracle && !options.gt) fail(ErrorKind::Config, "the oracle decoder needs a ground-truth transform");
  });
  const std::span<const Vec3> x = source.points;
  const std::span<const Vec3> y = target.points;

  RegisterResult result;
  const PointTree tx = run_stage("tree", [&] { return build_tree(source, cfg.tree); });
  const PointTree ty = run_stage("tree", [&] { return build_tree(target, cfg.tree); });
  result.source_stats = tree_stats(tx);
  result.target_stats = tree_stats(ty);

  std::optional<EncoderOutput> features;
  std::optional<ModelWeights> weights;
  if (options.oracle) {
    result.correspondences =
        run_stage("decode", [&] { return oracle_correspondences(x, y, *options.gt, cfg.loss.overlap_radius); });
  } else {
    weights = run_stage("weights", [&] {
      return options.weights ? from_bundle(load_bundle(*options.weights), cfg) : ModelWeights::random(cfg, cfg.seed);
    });
    const Matrix init_x = run_stage("embed", [&] { return weights->embed.forward(coords_matrix(x)); });
    const Matrix init_y = run_stage("embed", [&] { return weights->embed.forward(coords_matrix(y)); });
    features = run_stage("encode", [&] { return encode(tx, ty, init_x, init_y, cfg.encoder(), weights->encoder); });
    run_stage("decode", [&] {
      DecodedCloud dx = decode(features->x, weights->decoder);
      DecodedCloud dy = decode(features->y, weights->decoder);
      if (!all_finite(dx.coords) || !all_finite(dy.coords))
        fail(ErrorKind::Numerical, "decoder produced non-finite coordinates");
      result.correspondences.y_hat = std::move(dx.coords);
      result.correspondences.score_x = std::move(dx.scores);
      result.correspondences.x_hat = std::move(dy.coords);
      result.correspondences.score_y = std::move(dy.scores);
    });
  }

  result.estimate = run_stage("procrustes", [&] { return estimate_transform(result.correspondences, x, y); });

  if (options.gt) {
    const RigidTransform& gt = *options.gt;
    run_stage("metrics", [&] {
      result.metrics = compute_metrics(result.estimate, gt, x, y, cfg.thresholds);
      const RigidTransform inv = gt.inverse();
      const Correspondences& c = result.correspondences;
      const auto lx = overlap_labels(x, y, gt, cfg.loss.overlap_radius);
      const auto ly = overlap_labels(y, x, inv, cfg.loss.overlap_radius);
      LossParts parts;
      parts.overlap = loss_overlap(lx, c.score_x) + loss_overlap(ly, c.score_y);
      const FlaggedLoss cx = loss_correspondence(x, c.y_hat, lx, gt);
      const FlaggedLoss cy = loss_correspondence(y, c.x_hat, ly, inv);
      parts.correspondence = cx.value + cy.value;
      result.correspondence_degenerate = cx.degenerate && cy.degenerate;
      if (features) {
        const LossConfig& lc = cfg.loss;
        const FlaggedLoss fx =
            loss_feature(features->x, features->y, x, y, gt, weights->w_f, lc.positive_radius, lc.negative_radius);
        const FlaggedLoss fy = loss_feature(features->y, features->x, y, x, inv, transpose(weights->w_f),
                                            lc.positive_radius, lc.negative_radius);
        parts.feature = fx.value + fy.value;
        result.feature_degenerate = fx.degenerate && fy.degenerate;
      }
      result.losses = parts;
    });
  }
  return result;
}

std::string register_report_json(const PointCloud& source, const PointCloud& target, const RunConfig& cfg,
                                 const RegisterOptions& options, const RegisterResult& result) {
  const RigidTransform& est = result.estimate;
  const Matrix rtr = matmul(transpose(est.rotation), est.rotation);
  double orth = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) orth = std::max(orth, std::abs(rtr(i, j) - (i == j ? 1.0 : 0.0)));
  const auto rot = est.rotation.values();

  ordered_json out;
  out["command"] = "register";
  out["seed"] = cfg.seed;
  out["decoder"] = options.oracle ? "oracle" : (options.weights ? "weights-file" : "random-init");
  out["source"] = {{"id", source.id}, {"points", source.size()}};
  out["target"] = {{"id", target.id}, {"points", target.size()}};
  out["transform"] = {{"rotation", std::vector<double>(rot.begin(), rot.end())},
                      {"translation", vec_json(est.translation)},
                      {"det", determinant_3x3(est.rotation)},
                      {"orthonormality_error", orth}};
  out["overlap_scores"] = {{"source", score_summary(result.correspondences.score_x)},
                           {"target", score_summary(result.correspondences.score_y)}};
  out["tree_stats"] = {{"source", stats_json(result.source_stats)}, {"target", stats_json(result.target_stats)}};
  if (result.metrics) {
    const RegistrationMetrics& m = *result.metrics;
    out["metrics"] = {{"rre_deg", m.rre_deg},
                      {"rte", m.rte},
                      {"rmse", m.rmse},
                      {"chamfer", m.chamfer},
                      {"chamfer_convention", "mean squared nearest-neighbour distance, summed over both directions"},
                      {"success_rre_rte", m.success_rre_rte},
                      {"success_rmse", m.success_rmse}};
  } else {
    out["metrics"] = nullptr;
  }
  if (result.losses) {
    const LossParts& p = *result.losses;
    out["losses"] = {{"overlap", p.overlap},
                     {"correspondence", p.correspondence},
                     {"feature", p.feature},
                     {"total", loss_total(p, cfg.loss)},
                     {"correspondence_degenerate", result.correspondence_degenerate},
                     {"feature_degenerate", result.feature_degenerate}};
  } else {
    out["losses"] = nullptr;
  }
  return out.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// tree

std::string tree_report_json(const PointCloud& cloud, const TreeConfig& cfg) {
  const PointTree tree = build_tree(cloud, cfg);
  ordered_json layers = ordered_json::array();
  for (std::size_t l = 0; l < tree.num_layers(); ++l) {
    ordered_json layer;
    layer["index"] = l;
    layer["count"] = tree.layer_size(l);
    ordered_json coords = ordered_json::array();
    for (const Vec3& c : tree.coords(l)) coords.push_back(vec_json(c));
    layer["coords"] = std::move(coords);
    layer["parents"] = tree.parents(l);
    layer["children"] = tree.children(l);
    layers.push_back(std::move(layer));
  }
  const std::string violation = check_tree_invariants(tree);
  ordered_json out;
  out["command"] = "tree";
  out["id"] = cloud.id;
  out["points"] = cloud.size();
  out["config"] = {{"layers", cfg.layers},
                   {"leaf_voxel_size", cfg.leaf_voxel_size},
                   {"group_factor", cfg.group_factor},
                   {"edge_multiplier", cfg.edge_multiplier()},
                   {"leaf_cap", cfg.leaf_cap}};
  const TreeStats stats = tree_stats(tree);
  out["stats"] = stats_json(stats);
  out["leaf_cap_exceeded"] = tree.num_layers() >= 2 && stats.max_leaf_occupancy > cfg.leaf_cap;
  out["invariants_ok"] = violation.empty();
  out["layers"] = std::move(layers);
  return out.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// selftest

std::vector<SelftestCheck> run_selftest(bool inject_region_fault) {
  std::vector<SelftestCheck> checks;
  const auto guarded = [&](const std::string& name, const std::function<SelftestCheck()>& body) {
    try {
      checks.push_back(body());
    } catch (const std::exception& e) {
      checks.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };

  guarded("dense_equivalence", [] {
    constexpr double kTol = 1e-10;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SplitMix64 rng(derive_seed(seed, 0xde45e));
      PointCloud cloud;
      for (int i = 0; i < 24; ++i) cloud.points.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
      TreeConfig tc;
      tc.layers = 1;
      const PointTree tree = build_tree(cloud, tc);
      FeatureTree ft;
      ft.layers.push_back(Matrix(24, 12));
      for (double& v : ft.layers[0].values()) v = rng.uniform(-1.0, 1.0);
      PtaWeights w;
      w.layers.push_back(MhaWeights::random(12, 2, rng));
      const AttentionOutput dense = multihead_attention(ft.layers[0], ft.layers[0], w.layers[0]);
      const PtaCrossResult r = pta_forward(tree, tree, ft, ft, w, 8);
      worst = std::max(worst, max_relative_error(r.query.features, dense.features));
      const SparseAttentionOutput masked =
          pta_layer_attention(ft.layers[0], ft.layers[0], AttendedRegions::full(24, 24), w.layers[0]);
      worst = std::max(worst, max_relative_error(masked.features, dense.features));
    }
    return SelftestCheck{"dense_equivalence", worst <= kTol, "max relative error " + format_err(worst)};
  });

  guarded("procrustes_recovery", [] {
    double worst_r = 0.0, worst_t = 0.0;
    bool proper = true;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      SyntheticConfig sc;
      sc.points = 32;
      sc.max_angle_deg = 180.0;
      const SyntheticPair pair = make_synthetic_pair(sc, seed);
      const std::vector<double> w(sc.points, 1.0);
      const RigidTransform est = weighted_procrustes(pair.source.points, pair.target.points, w);
      worst_r = std::max(worst_r, frobenius_norm(add(est.rotation, scale(pair.gt.rotation, -1.0))));
      worst_t = std::max(worst_t, norm(est.translation - pair.gt.translation));
      proper = proper && is_proper_rotation(est.rotation);
    }
    const bool ok = worst_r < 1e-6 && worst_t < 1e-8 && proper;
    return SelftestCheck{"procrustes_recovery", ok,
                         "rotation error " + format_err(worst_r) + ", translation error " + format_err(worst_t)};
  });

  guarded("tree_invariants", [] {
    std::string detail = "20 clouds";
    bool ok = true;
    for (std::uint64_t seed = 0; seed < 20 && ok; ++seed) {
      SplitMix64 rng(derive_seed(seed, 0x7eee));
      PointCloud cloud;
      const std::size_t n = 1 + rng.next() % 400;
      for (std::size_t i = 0; i < n; ++i) cloud.points.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
      TreeConfig tc;
      tc.layers = 1 + seed % 4;
      tc.leaf_voxel_size = 0.05 + 0.2 * rng.uniform();
      const PointTree tree = build_tree(cloud, tc);
      const std::string violation = check_tree_invariants(tree);
      if (!violation.empty()) {
        ok = false;
        detail = "seed " + std::to_string(seed) + ": " + violation;
      } else if (!(build_tree(cloud, tc) == tree)) {
        ok = false;
        detail = "seed " + std::to_string(seed) + ": rebuild differs";
      }
    }
    return SelftestCheck{"tree_invariants", ok, detail};
  });

  guarded("region_soundness", [inject_region_fault] {
    SplitMix64 rng(0x5e1f);
    PointCloud cx, cy;
    for (int i = 0; i < 64; ++i) cx.points.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    for (int i = 0; i < 64; ++i) cy.points.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    TreeConfig tc;
    tc.layers = 2;
    tc.leaf_voxel_size = 0.3;
    tc.top_s = 1;
    const PointTree tx = build_tree(cx, tc);
    const PointTree ty = build_tree(cy, tc);
    const PoolingMlp pool = PoolingMlp::random(12, rng);
    PtaWeights w;
    w.layers.push_back(MhaWeights::random(12, 2, rng));
    const FeatureTree fx = feature_pooling(tx, sinusoidal_pe(cx.points, 12), pool);
    const FeatureTree fy = feature_pooling(ty, sinusoidal_pe(cy.points, 12), pool);
    PtaCrossResult r = pta_forward(tx, ty, fx, fy, w, tc.top_s);
    if (inject_region_fault) {
      // Give the first dense query a key from a coarse node that was not selected.
      AttendedRegions& regions = r.query.regions[1];
      const std::size_t parent = tx.parents(1)[0];
      const auto& chosen = regions.selected[parent];
      for (std::size_t k = 0; k < ty.layer_size(0); ++k) {
        if (std::find(chosen.begin(), chosen.end(), k) != chosen.end()) continue;
        auto& keys = regions.key_sets[regions.query_set[0]];
        keys.push_back(ty.children(0)[k].front());
        std::sort(keys.begin(), keys.end());
        break;
      }
    }
    const std::string violation = check_region_soundness(tx, ty, r.query, tc.top_s);
    return SelftestCheck{"region_soundness", violation.empty(), violation.empty() ? "ok" : violation};
  });

  return checks;
}

std::string selftest_table(const std::vector<SelftestCheck>& checks) {
  std::ostringstream out;
  std::size_t width = 5;
  for (const SelftestCheck& c : checks) width = std::max(width, c.name.size());
  out << std::left << std::setw(static_cast<int>(width)) << "check" << "  result  detail\n";
  for (const SelftestCheck& c : checks)
    out << std::left << std::setw(static_cast<int>(width)) << c.name << "  " << (c.passed ? "PASS  " : "FAIL  ")
        << "  " << c.detail << '\n';
  return out.str();
}

std::string selftest_json(const std::vector<SelftestCheck>& checks) {
  ordered_json list = ordered_json::array();
  bool all = true;
  for (const SelftestCheck& c : checks) {
    list.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    all = all && c.passed;
  }
  ordered_json out;
  out["command"] = "selftest";
  out["checks"] = std::move(list);
  out["all_passed"] = all;
  return out.dump(2) + "\n";
}

}  // namespace ptt
