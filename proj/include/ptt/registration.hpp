#pragma once

// Decoder heads, ground-truth overlap labels, training losses (forward
// only), weighted Procrustes and the evaluation metrics.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ptt/numerics.hpp"
#include "ptt/random.hpp"

namespace ptt {

struct RigidTransform {
  Matrix rotation = Matrix::identity(3);
  Vec3 translation;

  Vec3 apply(const Vec3& p) const;
  RigidTransform inverse() const;
  /// this ∘ other: first other, then this.
  RigidTransform compose(const RigidTransform& other) const;
  /// 4×4 row-major homogeneous matrix.
  Matrix homogeneous() const;

  static RigidTransform from_homogeneous(const Matrix& m);
  /// Rotation by `angle` radians about `axis` (normalized internally).
  static RigidTransform from_axis_angle(const Vec3& axis, double angle, const Vec3& translation);
};

Vec3 rotate(const Matrix& r, const Vec3& v);

/// RᵀR = I and det(R) = +1, both within `tol`.
bool is_proper_rotation(const Matrix& r, double tol = 1e-8);

std::vector<Vec3> transform_points(const RigidTransform& t, std::span<const Vec3> pts);

// ---------------------------------------------------------------------------
// Decoder

struct DecoderWeights {
  TwoLayerMlp coords;    // D → D → 3
  Matrix score_w;        // D × 1
  std::vector<double> score_b;  // 1

  static DecoderWeights random(std::size_t model_dim, SplitMix64& rng);
};

struct DecodedCloud {
  Matrix coords;               // n × 3 predicted counterpart coordinates
  std::vector<double> scores;  // n overlap probabilities in [1e-7, 1 - 1e-7]
};

DecodedCloud decode(const Matrix& features, const DecoderWeights& w);

struct Correspondences {
  Matrix y_hat;                  // counterpart of every source point, M × 3
  Matrix x_hat;                  // counterpart of every target point, N × 3
  std::vector<double> score_x;   // M
  std::vector<double> score_y;   // N
};

// ---------------------------------------------------------------------------
// Labels and losses

struct LossConfig {
  double lambda_c = 1.0;
  double lambda_f = 0.1;
  double overlap_radius = 0.06;   // r_o
  double positive_radius = 0.12;  // r_p
  double negative_radius = 0.24;  // r_n

  /// Throws Config unless every value is positive and r_n > r_p.
  void validate() const;
};

/// 1 where the nearest target point of gt(x_i) is closer than r_o.
std::vector<std::uint8_t> overlap_labels(std::span<const Vec3> x, std::span<const Vec3> y,
                                         const RigidTransform& gt, double overlap_radius);

/// Mean binary cross-entropy between labels and clamped scores.
double loss_overlap(std::span<const std::uint8_t> labels, std::span<const double> scores);

/// Loss value plus a flag raised when the loss had nothing to average over.
struct FlaggedLoss {
  double value = 0.0;
  bool degenerate = false;
};

/// Overlap-masked mean of |gt(x_i) − ŷ_i|₁ (sum of absolute coordinate differences).
FlaggedLoss loss_correspondence(std::span<const Vec3> x, const Matrix& y_hat,
                                std::span<const std::uint8_t> labels, const RigidTransform& gt);

/// InfoNCE over anchors of x that have a target point within r_p of their
/// ground-truth position; negatives are target points farther than r_n.
/// The similarity is exp(f_xᵀ · W_f · f_c).
FlaggedLoss loss_feature(const Matrix& feats_x, const Matrix& feats_y, std::span<const Vec3> x,
                         std::span<const Vec3> y, const RigidTransform& gt, const Matrix& w_f,
                         double positive_radius, double negative_radius);

struct LossParts {
  double overlap = 0.0;
  double correspondence = 0.0;
  double feature = 0.0;
};

double loss_total(const LossParts& parts, const LossConfig& cfg);

// ---------------------------------------------------------------------------
// Transform estimation

/// Minimizes Σ wᵢ‖R·srcᵢ + t − dstᵢ‖² over proper rigid motions.
RigidTransform weighted_procrustes(std::span<const Vec3> src, std::span<const Vec3> dst,
                                   std::span<const double> weights);

/// One fused solve over both predicted directions: (x_i → ŷ_i) weighted by
/// the source scores and (x̂_j → y_j) weighted by the target scores.
RigidTransform estimate_transform(const Correspondences& corr, std::span<const Vec3> x,
                                  std::span<const Vec3> y);

// ---------------------------------------------------------------------------
// Metrics

struct MetricThresholds {
  double rre_deg = 5.0;  // rotation success threshold
  double rte = 2.0;      // translation success threshold
  double rmse = 0.2;     // correspondence RMSE success threshold
};

struct RegistrationMetrics {
  double rre_deg = 0.0;
  double rte = 0.0;
  double rmse = 0.0;     // RMS distance between est(x) and gt(x) over the source
  double chamfer = 0.0;  // squared-distance Chamfer between est(x) and y
  bool success_rre_rte = false;
  bool success_rmse = false;
};

double relative_rotation_error_deg(const Matrix& r_est, const Matrix& r_gt);

/// mean_a min_b ‖a − b‖² + mean_b min_a ‖a − b‖².
double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b);

RegistrationMetrics compute_metrics(const RigidTransform& est, const RigidTransform& gt, std::span<const Vec3> x,
                                    std::span<const Vec3> y, const MetricThresholds& thresholds);

}  // namespace ptt
