#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "oracles.hpp"
#include "ptt/bench.hpp"
#include "ptt/error.hpp"

using namespace ptt;

namespace {

BenchConfig small_config() {
  BenchConfig cfg;
  cfg.sizes = {100, 200, 400, 800};
  return cfg;
}

const BenchModel kSmall{24, 4};

}  // namespace

TEST_CASE("slope of exact power laws") {
  const std::vector<double> n{1000, 2000, 4000, 8000, 16000, 32000};
  std::vector<double> lin, quad;
  for (double v : n) {
    lin.push_back(3.5 * v);
    quad.push_back(0.25 * v * v);
  }
  const SlopeFit a = fit_slope(n, lin), b = fit_slope(n, quad);
  CHECK(std::abs(a.slope - 1.0) < 1e-9);
  CHECK(std::abs(b.slope - 2.0) < 1e-9);
  CHECK(std::abs(a.intercept - std::log(3.5)) < 1e-9);
  CHECK(std::abs(a.r2 - 1.0) < 1e-12);
}

TEST_CASE("slope fit matches the normal-equations oracle") {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> n, c, ln, lc;
    for (int i = 0; i < 4 + trial % 5; ++i) {
      n.push_back(100.0 * (i + 1) + rng.uniform(0, 50));
      c.push_back(std::pow(n.back(), 1.3) * rng.uniform(0.5, 2.0));
      ln.push_back(std::log(n.back()));
      lc.push_back(std::log(c.back()));
    }
    const auto [slope, intercept] = oracle::ols(ln, lc);
    const SlopeFit f = fit_slope(n, c);
    CHECK(std::abs(f.slope - slope) < 1e-9);
    CHECK(std::abs(f.intercept - intercept) < 1e-9);
    CHECK(f.r2 <= 1.0);
  }
}

TEST_CASE("slope fit errors") {
  const std::vector<double> three{1, 2, 3}, four{1, 2, 3, 4}, bad{1, 0, 3, 4};
  CHECK_THROWS_AS(fit_slope(three, three), Error);
  try {
    fit_slope(four, bad);
    FAIL("zero count must be rejected");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Data);
  }
}

TEST_CASE("config validation") {
  BenchConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.sizes = {100, 200, 300};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.sizes = {100, 200, 200, 300};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.sizes = {400, 300, 200, 100};
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("calibrated voxel size and uniform clouds") {
  BenchConfig cfg;
  CHECK(std::abs(calibrated_voxel_size(1000, cfg) - 0.2) < 1e-15);
  CHECK(std::abs(calibrated_voxel_size(8000, cfg) - 0.1) < 1e-15);
  const PointCloud a = uniform_cloud(500, 7), b = uniform_cloud(500, 7);
  CHECK(a.points == b.points);
  for (const auto& p : a.points) {
    CHECK(p.x >= 0.0);
    CHECK(p.x < 1.0);
  }
}

TEST_CASE("dense counts are N squared") {
  BenchConfig cfg;
  for (std::size_t n : {100u, 200u}) {
    const BenchTrial t = run_dense_trial(n, cfg, kSmall, 1);
    CHECK(t.count == n * n);
    CHECK(t.recount == n * n);
    CHECK(t.executed);
  }
  cfg.dense_exec_limit = 50;
  const BenchTrial skipped = run_dense_trial(100, cfg, kSmall, 1);
  CHECK(skipped.count == 10000);
  CHECK_FALSE(skipped.executed);
}

TEST_CASE("single-layer PTA counts equal dense counts") {
  TreeConfig tree;
  tree.layers = 1;
  const BenchConfig cfg;
  for (std::size_t n : {100u, 200u}) CHECK(run_pta_trial(n, cfg, kSmall, tree, 1).count == n * n);
}

TEST_CASE("PTA counts respect the bound and the recount") {
  const BenchConfig cfg = small_config();
  for (std::size_t n : cfg.sizes) {
    const BenchTrial t = run_pta_trial(n, cfg, kSmall, TreeConfig{}, 5);
    CHECK(t.count == t.recount);
    CHECK(t.count <= t.bound);
    CHECK(t.layer_keys.size() == 3);
    std::uint64_t sum = 0;
    for (auto k : t.layer_keys) sum += k;
    CHECK(sum == t.count);
    CHECK(t.layer_keys[0] == t.layer_counts_q[0] * t.layer_counts_k[0]);
    const std::size_t kmax = 8 * std::max(t.max_leaf_occupancy, t.max_inner_children);
    std::uint64_t want = t.layer_counts_q[0] * t.layer_counts_k[0];
    for (std::size_t l = 1; l < 3; ++l) want += t.layer_counts_q[l] * kmax;
    CHECK(t.bound == want);
  }
}

TEST_CASE("bound from explicit trees") {
  const std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {4, 0, 0}, {5, 0, 0}};
  const PointTree t = PointTree::from_parents(pts, {{0, 0}, {0, 0, 1, 1}});
  // root 1×1, then 2 and 4 queries, each allowed S·2 keys
  CHECK(pta_work_bound(t, t, 3) == 1 + 2 * 6 + 4 * 6);
}

TEST_CASE("sweep is deterministic and serializes") {
  const BenchConfig cfg = small_config();
  const BenchReport a = run_sweep(cfg, kSmall, TreeConfig{}, 9);
  BenchConfig par = cfg;
  par.parallel = true;
  const BenchReport b = run_sweep(par, kSmall, TreeConfig{}, 9);
  REQUIRE(a.trials.size() == 8);
  for (std::size_t i = 0; i < a.trials.size(); ++i) CHECK(a.trials[i].count == b.trials[i].count);
  CHECK(std::abs(a.dense.slope - 2.0) < 1e-9);
  CHECK(std::isfinite(a.pta.slope));

  const std::string json = bench_report_json(a);
  CHECK(json == bench_report_json(run_sweep(cfg, kSmall, TreeConfig{}, 9)));
  const auto j = nlohmann::json::parse(json);
  CHECK(j["trials"].size() == 8);
  CHECK(j["fit"]["dense"]["slope"].get<double>() == doctest::Approx(2.0));
  const std::string csv = bench_report_csv(a);
  CHECK(csv.rfind("n,mechanism,count,seconds,bytes\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
}

TEST_CASE("timing fills in seconds") {
  BenchConfig cfg = small_config();
  cfg.timing = true;
  const BenchReport r = run_sweep(cfg, kSmall, TreeConfig{}, 1);
  for (const auto& t : r.trials) {
    REQUIRE(t.seconds.has_value());
    CHECK(*t.seconds >= 0.0);
  }
}
