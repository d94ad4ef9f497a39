#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "oracles.hpp"
#include "ptt/error.hpp"
#include "ptt/pipeline.hpp"

using namespace ptt;

namespace {

RunConfig small_config() {
  RunConfig cfg;
  cfg.model_dim = 24;
  cfg.heads = 4;
  cfg.encoder_layers = 1;
  cfg.synthetic.points = 96;
  return cfg;
}

double angle_deg(const Matrix& r) { return relative_rotation_error_deg(r, Matrix::identity(3)); }

}  // namespace

TEST_CASE("model weights survive a bundle round trip") {
  const RunConfig cfg = small_config();
  const ModelWeights w = ModelWeights::random(cfg, 3);
  const ParamBundle b = to_bundle(w);
  std::stringstream s;
  write_bundle(s, b);
  std::istringstream in(s.str());
  const ParamBundle back = read_bundle(in);
  CHECK(back == b);
  CHECK(to_bundle(from_bundle(back, cfg)) == b);
  CHECK(to_bundle(ModelWeights::random(cfg, 3)) == b);
  CHECK_FALSE(to_bundle(ModelWeights::random(cfg, 4)) == b);

  RunConfig wider = cfg;
  wider.model_dim = 48;
  try {
    from_bundle(b, wider);
    FAIL("shape mismatch must be rejected");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Load);
  }
  ParamBundle partial;
  for (std::size_t i = 0; i + 1 < b.tensors().size(); ++i) partial.add(b.tensors()[i].first, b.tensors()[i].second);
  CHECK_THROWS_AS(from_bundle(partial, cfg), Error);
}

TEST_CASE("synthetic pairs follow the protocol") {
  SyntheticConfig cfg;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const SyntheticPair p = make_synthetic_pair(cfg, seed);
    REQUIRE(p.source.size() == cfg.points);
    REQUIRE(p.target.size() == cfg.points);
    CHECK(angle_deg(p.gt.rotation) <= 45.0 + 1e-9);
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(p.gt.translation[k]) <= 0.5);
    for (std::size_t i = 0; i < p.source.size(); ++i) {
      CHECK(norm(p.gt.apply(p.source.points[i]) - p.target.points[i]) < 1e-12);
      for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(p.source.points[i][k]) <= 0.5);
    }
  }
  cfg.jitter_sigma = 0.5;
  cfg.jitter_clip = 0.05;
  const SyntheticPair j = make_synthetic_pair(cfg, 1);
  for (std::size_t i = 0; i < j.source.size(); ++i) {
    const Vec3 d = j.target.points[i] - j.gt.apply(j.source.points[i]);
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(d[k]) <= 0.05 + 1e-12);
  }
  CHECK(make_synthetic_pair(cfg, 1).target.points == j.target.points);
}

TEST_CASE("oracle correspondences") {
  const SyntheticPair p = make_synthetic_pair(SyntheticConfig{}, 2);
  const Correspondences c = oracle_correspondences(p.source.points, p.target.points, p.gt, 0.06);
  for (std::size_t i = 0; i < p.source.size(); ++i) {
    const Vec3 yh{c.y_hat(i, 0), c.y_hat(i, 1), c.y_hat(i, 2)};
    CHECK(norm(yh - p.target.points[i]) < 1e-12);
    CHECK(c.score_x[i] > 0.5);
    CHECK(c.score_x[i] < 1.0);
  }
  const RigidTransform est = estimate_transform(c, p.source.points, p.target.points);
  CHECK(relative_rotation_error_deg(est.rotation, p.gt.rotation) < 1e-6);
}

TEST_CASE("oracle registration of identical clouds") {
  RunConfig cfg = small_config();
  const SyntheticPair p = make_synthetic_pair(cfg.synthetic, 5);
  RegisterOptions opt;
  opt.oracle = true;
  opt.gt = RigidTransform{};
  const RegisterResult r = register_pair(p.source, p.source, cfg, opt);
  REQUIRE(r.metrics.has_value());
  CHECK(r.metrics->rre_deg < 1e-6);
  CHECK(r.metrics->rte < 1e-8);
}

TEST_CASE("oracle registration recovers a synthetic transform") {
  RunConfig cfg = small_config();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SyntheticPair p = make_synthetic_pair(cfg.synthetic, seed);
    RegisterOptions opt;
    opt.oracle = true;
    opt.gt = p.gt;
    const RegisterResult r = register_pair(p.source, p.target, cfg, opt);
    CHECK(frobenius_norm(add(r.estimate.rotation, scale(p.gt.rotation, -1.0))) < 1e-6);
    CHECK(norm(r.estimate.translation - p.gt.translation) < 1e-6);
    REQUIRE(r.losses.has_value());
    CHECK(r.losses->correspondence < 1e-12);
    CHECK(r.losses->overlap <= 4e-7);
  }
}

TEST_CASE("oracle without ground truth is a config error") {
  const RunConfig cfg = small_config();
  const SyntheticPair p = make_synthetic_pair(cfg.synthetic, 1);
  RegisterOptions opt;
  opt.oracle = true;
  try {
    register_pair(p.source, p.target, cfg, opt);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

TEST_CASE("random-weight registration is finite and proper") {
  const RunConfig cfg = small_config();
  const SyntheticPair p = make_synthetic_pair(cfg.synthetic, 7);
  RegisterOptions opt;
  opt.gt = p.gt;
  const RegisterResult r = register_pair(p.source, p.target, cfg, opt);
  CHECK(is_proper_rotation(r.estimate.rotation, 1e-8));
  CHECK(is_finite(r.estimate.translation));
  for (double s : r.correspondences.score_x) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
  REQUIRE(r.losses.has_value());
  CHECK(std::isfinite(r.losses->feature));
  CHECK(r.source_stats.layer_counts.back() == p.source.size());

  const std::string a = register_report_json(p.source, p.target, cfg, opt, r);
  const std::string b = register_report_json(p.source, p.target, cfg, opt, register_pair(p.source, p.target, cfg, opt));
  CHECK(a == b);
  const auto j = nlohmann::json::parse(a);
  CHECK(j["command"] == "register");
  CHECK(j["transform"]["rotation"].size() == 9);
  CHECK(j["metrics"].is_object());
}

TEST_CASE("stage name is attached to pipeline errors") {
  RunConfig cfg = small_config();
  const SyntheticPair p = make_synthetic_pair(cfg.synthetic, 1);
  RegisterOptions opt;
  opt.weights = "/nonexistent/weights.pttw";
  try {
    register_pair(p.source, p.target, cfg, opt);
    FAIL("expected a load error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Load);
    CHECK(std::string(e.what()).rfind("weights: ", 0) == 0);
  }
}

TEST_CASE("tree report") {
  const SyntheticPair p = make_synthetic_pair(SyntheticConfig{}, 1);
  const std::string text = tree_report_json(p.source, TreeConfig{});
  CHECK(text == tree_report_json(p.source, TreeConfig{}));
  const auto j = nlohmann::json::parse(text);
  CHECK(j["command"] == "tree");
  CHECK(j["invariants_ok"] == true);
  REQUIRE(j["layers"].size() == 3);
  CHECK(j["layers"][2]["count"] == p.source.size());
  CHECK(j["layers"][1]["parents"].size() == j["layers"][1]["count"]);
}

TEST_CASE("selftest passes and the injected fault flips region soundness only") {
  const auto clean = run_selftest(false);
  REQUIRE(clean.size() == 4);
  for (const auto& c : clean) {
    CAPTURE(c.name);
    CAPTURE(c.detail);
    CHECK(c.passed);
  }
  const auto faulty = run_selftest(true);
  for (const auto& c : faulty) CHECK(c.passed == (c.name != "region_soundness"));
  const auto j = nlohmann::json::parse(selftest_json(faulty));
  CHECK(j["all_passed"] == false);
  CHECK(selftest_table(clean).find("PASS") != std::string::npos);
}
