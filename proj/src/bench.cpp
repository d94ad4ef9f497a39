#include "ptt/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <sstream>

#include <json.hpp>

#include "ptt/attention.hpp"
#include "ptt/encoder.hpp"
#include "ptt/error.hpp"
#include "ptt/pta.hpp"
#include "ptt/random.hpp"

namespace ptt {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

SlopeFit fit_mechanism(const std::vector<BenchTrial>& trials, Mechanism m) {
  std::vector<double> n, c;
  for (const BenchTrial& t : trials) {
    if (t.mechanism != m) continue;
    n.push_back(static_cast<double>(t.n));
    c.push_back(static_cast<double>(t.count));
  }
  return fit_slope(n, c);
}

struct Sublayer {
  TwoLayerMlp embed;
  LayerNormParams norm;
  PoolingMlp pool;
  PtaWeights attn;
};

Sublayer make_sublayer(const BenchModel& model, std::uint64_t seed) {
  const std::size_t d = model.model_dim;
  if (d == 0 || model.heads == 0 || d % model.heads != 0 || d % 6 != 0)
    fail(ErrorKind::Config, "bench: model_dim must be a positive multiple of 6 and of heads");
  SplitMix64 rng(derive_seed(seed, 7));
  Sublayer s;
  s.embed = random_mlp(3, d, d, rng);
  s.norm = LayerNormParams::identity(d);
  s.pool = PoolingMlp::random(d, rng);
  s.attn.layers.push_back(MhaWeights::random(d, model.heads, rng));
  return s;
}

Matrix input_features(const PointCloud& cloud, const Sublayer& s, std::size_t d) {
  return s.norm.apply(add(s.embed.forward(coords_matrix(cloud.points)), sinusoidal_pe(cloud.points, d)));
}

}  // namespace

double calibrated_voxel_size(std::size_t n, const BenchConfig& cfg) {
  require(cfg.points_per_leaf > 0.0 && n > 0, "calibrated_voxel_size: need positive points_per_leaf and n");
  return std::cbrt(cfg.points_per_leaf / static_cast<double>(n));
}

std::string_view to_string(Mechanism m) { return m == Mechanism::Dense ? "dense" : "pta"; }

void BenchConfig::validate() const {
  if (sizes.size() < 4) fail(ErrorKind::Config, "bench: need at least 4 sizes");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == 0) fail(ErrorKind::Config, "bench: sizes must be positive");
    if (i > 0 && sizes[i] <= sizes[i - 1]) fail(ErrorKind::Config, "bench: sizes must be strictly ascending");
  }
  if (!(points_per_leaf >= 0.0) || !std::isfinite(points_per_leaf))
    fail(ErrorKind::Config, "bench: points_per_leaf must be finite and >= 0");
}

SlopeFit fit_slope(std::span<const double> n, std::span<const double> counts) {
  require(n.size() == counts.size(), "fit_slope: length mismatch");
  require(n.size() >= 4, "fit_slope: need at least 4 points");
  const double m = static_cast<double>(n.size());
  double sx = 0.0, sy = 0.0;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (!(n[i] > 0.0) || !(counts[i] > 0.0)) fail(ErrorKind::Data, "fit_slope: sizes and counts must be positive");
    lx.push_back(std::log(n[i]));
    ly.push_back(std::log(counts[i]));
    sx += lx.back();
    sy += ly.back();
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  require(sxx > 0.0, "fit_slope: sizes must not all be equal");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

std::uint64_t pta_work_bound(const PointTree& tree_q, const PointTree& tree_k, std::size_t top_s) {
  require(tree_q.num_layers() == tree_k.num_layers(), "pta_work_bound: trees differ in depth");
  const TreeStats ks = tree_stats(tree_k);
  const std::uint64_t s = top_s;
  const std::uint64_t k_max = std::max(s * ks.max_leaf_occupancy, s * ks.max_inner_children);
  std::uint64_t bound = static_cast<std::uint64_t>(tree_q.layer_size(0)) * tree_k.layer_size(0);
  for (std::size_t l = 1; l < tree_q.num_layers(); ++l) bound += tree_q.layer_size(l) * k_max;
  return bound;
}

PointCloud uniform_cloud(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform();
    const double y = rng.uniform();
    const double z = rng.uniform();
    cloud.points.push_back({x, y, z});
  }
  cloud.id = "uniform-" + std::to_string(n);
  return cloud;
}

BenchTrial run_dense_trial(std::size_t n, const BenchConfig& cfg, const BenchModel& model, std::uint64_t seed) {
  const Sublayer s = make_sublayer(model, seed);
  BenchTrial t;
  t.n = n;
  t.mechanism = Mechanism::Dense;
  t.count = static_cast<std::uint64_t>(n) * n;
  t.peak_buffer_bytes = attention_buffer_bytes(t.count, model.heads);
  t.recount = t.count;
  if (n > cfg.dense_exec_limit) return t;

  const PointCloud x = uniform_cloud(n, derive_seed(seed, 2 * n));
  const PointCloud y = uniform_cloud(n, derive_seed(seed, 2 * n + 1));
  const auto start = Clock::now();
  const Matrix fx = input_features(x, s, model.model_dim);
  const Matrix fy = input_features(y, s, model.model_dim);
  WorkCounter counter;
  const AttentionOutput out = multihead_attention(fx, fy, s.attn.layers.front(), &counter);
  if (cfg.timing) t.seconds = elapsed_seconds(start);
  if (!all_finite(out.features)) fail(ErrorKind::Numerical, "bench: dense attention produced non-finite output");
  t.executed = true;
  t.count = counter.key_evaluations;
  t.peak_buffer_bytes = counter.peak_buffer_bytes;
  return t;
}

BenchTrial run_pta_trial(std::size_t n, const BenchConfig& cfg, const BenchModel& model, const TreeConfig& tree,
                         std::uint64_t seed) {
  TreeConfig tc = tree;
  if (cfg.points_per_leaf > 0.0) tc.leaf_voxel_size = calibrated_voxel_size(n, cfg);
  tc.validate();
  const Sublayer s = make_sublayer(model, seed);

  const PointCloud x = uniform_cloud(n, derive_seed(seed, 2 * n));
  const PointCloud y = uniform_cloud(n, derive_seed(seed, 2 * n + 1));
  const auto start = Clock::now();
  const PointTree tx = build_tree(x, tc);
  const PointTree ty = build_tree(y, tc);
  const FeatureTree fx = feature_pooling(tx, input_features(x, s, model.model_dim), s.pool);
  const FeatureTree fy = feature_pooling(ty, input_features(y, s, model.model_dim), s.pool);
  const PtaCrossResult r = pta_forward(tx, ty, fx, fy, s.attn, tc.top_s);

  BenchTrial t;
  if (cfg.timing) t.seconds = elapsed_seconds(start);
  if (!all_finite(r.query.features)) fail(ErrorKind::Numerical, "bench: PTA produced non-finite output");
  t.n = n;
  t.mechanism = Mechanism::Pta;
  t.executed = true;
  t.count = count_attended_keys(r.query.trace);
  t.recount = recount_attended_keys(r.query);
  t.peak_buffer_bytes = r.query.trace.peak_buffer_bytes;
  t.leaf_voxel_size = tc.leaf_voxel_size;
  t.layer_keys = r.query.trace.layer_keys;
  const TreeStats sq = tree_stats(tx);
  const TreeStats sk = tree_stats(ty);
  t.layer_counts_q = sq.layer_counts;
  t.layer_counts_k = sk.layer_counts;
  t.max_leaf_occupancy = sk.max_leaf_occupancy;
  t.max_inner_children = sk.max_inner_children;
  t.bound = pta_work_bound(tx, ty, tc.top_s);
  return t;
}

BenchReport run_sweep(const BenchConfig& cfg, const BenchModel& model, const TreeConfig& tree, std::uint64_t seed) {
  cfg.validate();
  tree.validate();
  make_sublayer(model, seed);
  BenchReport report;
  report.config = cfg;
  report.model = model;
  report.tree = tree;
  report.seed = seed;

  if (cfg.parallel && !cfg.timing) {
    std::vector<std::future<BenchTrial>> jobs;
    for (std::size_t n : cfg.sizes) {
      jobs.push_back(std::async(std::launch::async, [&, n] { return run_dense_trial(n, cfg, model, seed); }));
      jobs.push_back(std::async(std::launch::async, [&, n] { return run_pta_trial(n, cfg, model, tree, seed); }));
    }
    for (auto& job : jobs) report.trials.push_back(job.get());
  } else {
    for (std::size_t n : cfg.sizes) {
      report.trials.push_back(run_dense_trial(n, cfg, model, seed));
      report.trials.push_back(run_pta_trial(n, cfg, model, tree, seed));
    }
  }
  report.dense = fit_mechanism(report.trials, Mechanism::Dense);
  report.pta = fit_mechanism(report.trials, Mechanism::Pta);
  return report;
}

std::string bench_report_json(const BenchReport& report) {
  using nlohmann::ordered_json;
  ordered_json trials = ordered_json::array();
  for (const BenchTrial& t : report.trials) {
    ordered_json j;
    j["n"] = t.n;
    j["mechanism"] = to_string(t.mechanism);
    j["count"] = t.count;
    j["recount"] = t.recount;
    j["executed"] = t.executed;
    j["seconds"] = t.seconds ? ordered_json(*t.seconds) : ordered_json(nullptr);
    j["peak_buffer_bytes"] = t.peak_buffer_bytes;
    if (t.mechanism == Mechanism::Pta) {
      j["leaf_voxel_size"] = t.leaf_voxel_size;
      j["layer_keys"] = t.layer_keys;
      j["layer_counts_q"] = t.layer_counts_q;
      j["layer_counts_k"] = t.layer_counts_k;
      j["max_leaf_occupancy"] = t.max_leaf_occupancy;
      j["max_inner_children"] = t.max_inner_children;
      j["bound"] = t.bound;
      j["within_bound"] = t.count <= t.bound;
    }
    trials.push_back(std::move(j));
  }
  const auto fit = [](const SlopeFit& f) {
    return ordered_json{{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}};
  };
  ordered_json out;
  out["seed"] = report.seed;
  out["model_dim"] = report.model.model_dim;
  out["heads"] = report.model.heads;
  out["points_per_leaf"] = report.config.points_per_leaf;
  out["dense_exec_limit"] = report.config.dense_exec_limit;
  out["tree"] = {{"layers", report.tree.layers},
                 {"group_factor", report.tree.group_factor},
                 {"top_s", report.tree.top_s},
                 {"leaf_voxel_size", report.tree.leaf_voxel_size}};
  out["trials"] = std::move(trials);
  out["fit"] = {{"dense", fit(report.dense)}, {"pta", fit(report.pta)}};
  return out.dump(2) + "\n";
}

std::string bench_report_csv(const BenchReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "n,mechanism,count,seconds,bytes\n";
  for (const BenchTrial& t : report.trials) {
    out << t.n << ',' << to_string(t.mechanism) << ',' << t.count << ',';
    if (t.seconds) out << *t.seconds;
    out << ',' << t.peak_buffer_bytes << '\n';
  }
  return out.str();
}

}  // namespace ptt
