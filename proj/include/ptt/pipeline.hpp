#pragma once

// End-to-end registration and the command implementations behind the CLI.
// Every command returns its report as a string so output bytes depend only
// on inputs, config and seed.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ptt/config.hpp"
#include "ptt/encoder.hpp"
#include "ptt/point_tree.hpp"
#include "ptt/registration.hpp"
#include "ptt/weights_io.hpp"

namespace ptt {

/// All learned parameters of the registration model.
struct ModelWeights {
  TwoLayerMlp embed;  // 3 → D → D coordinate embedding
  EncoderWeights encoder;
  DecoderWeights decoder;
  Matrix w_f;  // D × D bilinear similarity of the feature loss

  static ModelWeights random(const RunConfig& cfg, std::uint64_t seed);
};

ParamBundle to_bundle(const ModelWeights& w);
/// Throws Load naming the first missing or mis-shaped tensor.
ModelWeights from_bundle(const ParamBundle& bundle, const RunConfig& cfg);

struct SyntheticPair {
  PointCloud source;
  PointCloud target;
  RigidTransform gt;  // target ≈ gt(source)
};

/// Uniform source cloud in [-0.5, 0.5]³; target is the source under a random
/// rotation of at most max_angle_deg about a uniform axis and a translation
/// uniform in [-max_translation, max_translation]³, plus optional per-axis
/// Gaussian jitter clipped to ±jitter_clip.
SyntheticPair make_synthetic_pair(const SyntheticConfig& cfg, std::uint64_t seed);

/// Ground-truth stand-in for the decoder: each point's counterpart is the
/// nearest neighbour of its ground-truth image in the other cloud, scored by
/// its overlap label (clamped into (0, 1)).
Correspondences oracle_correspondences(std::span<const Vec3> x, std::span<const Vec3> y,
                                       const RigidTransform& gt, double overlap_radius);

struct RegisterOptions {
  std::optional<RigidTransform> gt;
  std::optional<std::filesystem::path> weights;
  bool oracle = false;
};

struct RegisterResult {
  RigidTransform estimate;
  Correspondences correspondences;
  TreeStats source_stats;
  TreeStats target_stats;
  std::optional<RegistrationMetrics> metrics;
  std::optional<LossParts> losses;
  bool correspondence_degenerate = false;
  bool feature_degenerate = false;
};

/// embed → trees → encode → decode → weighted Procrustes → metrics. Errors
/// are rethrown with the failing stage prefixed to the message.
RegisterResult register_pair(const PointCloud& source, const PointCloud& target, const RunConfig& cfg,
                             const RegisterOptions& options);

std::string register_report_json(const PointCloud& source, const PointCloud& target, const RunConfig& cfg,
                                 const RegisterOptions& options, const RegisterResult& result);

std::string tree_report_json(const PointCloud& cloud, const TreeConfig& cfg);

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<SelftestCheck> run_selftest(bool inject_region_fault);
std::string selftest_table(const std::vector<SelftestCheck>& checks);
std::string selftest_json(const std::vector<SelftestCheck>& checks);

}  // namespace ptt
