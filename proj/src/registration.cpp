#include "ptt/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ptt/error.hpp"

namespace ptt {

namespace {

Vec3 row_as_vec(const Matrix& m, std::size_t i) { return {m(i, 0), m(i, 1), m(i, 2)}; }

double nearest_squared(const Vec3& p, std::span<const Vec3> cloud) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec3& q : cloud) best = std::min(best, squared_distance(p, q));
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------
// Rigid transforms

Vec3 rotate(const Matrix& r, const Vec3& v) {
  return {r(0, 0) * v.x + r(0, 1) * v.y + r(0, 2) * v.z, r(1, 0) * v.x + r(1, 1) * v.y + r(1, 2) * v.z,
          r(2, 0) * v.x + r(2, 1) * v.y + r(2, 2) * v.z};
}

Vec3 RigidTransform::apply(const Vec3& p) const { return rotate(rotation, p) + translation; }

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = transpose(rotation);
  inv.translation = rotate(inv.rotation, translation) * -1.0;
  return inv;
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = matmul(rotation, other.rotation);
  out.translation = rotate(rotation, other.translation) + translation;
  return out;
}

Matrix RigidTransform::homogeneous() const {
  Matrix m = Matrix::identity(4);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) m(i, j) = rotation(i, j);
  m(0, 3) = translation.x;
  m(1, 3) = translation.y;
  m(2, 3) = translation.z;
  return m;
}

RigidTransform RigidTransform::from_homogeneous(const Matrix& m) {
  if (m.rows() != 4 || m.cols() != 4) fail(ErrorKind::Data, "transform: expected a 4x4 matrix");
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0)
    fail(ErrorKind::Data, "transform: last row must be 0 0 0 1");
  RigidTransform t;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) t.rotation(i, j) = m(i, j);
  t.translation = {m(0, 3), m(1, 3), m(2, 3)};
  if (!is_proper_rotation(t.rotation, 1e-6)) fail(ErrorKind::Data, "transform: rotation block is not a rotation");
  return t;
}

RigidTransform RigidTransform::from_axis_angle(const Vec3& axis, double angle, const Vec3& translation) {
  const double n = norm(axis);
  require(n > 0.0, "from_axis_angle: zero axis");
  const Vec3 k = axis / n;
  const double c = std::cos(angle), s = std::sin(angle), v = 1.0 - c;
  RigidTransform t;
  t.rotation = Matrix::from_rows({{c + k.x * k.x * v, k.x * k.y * v - k.z * s, k.x * k.z * v + k.y * s},
                                  {k.y * k.x * v + k.z * s, c + k.y * k.y * v, k.y * k.z * v - k.x * s},
                                  {k.z * k.x * v - k.y * s, k.z * k.y * v + k.x * s, c + k.z * k.z * v}});
  t.translation = translation;
  return t;
}

bool is_proper_rotation(const Matrix& r, double tol) {
  if (r.rows() != 3 || r.cols() != 3 || !all_finite(r)) return false;
  const Matrix rtr = matmul(transpose(r), r);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (std::abs(rtr(i, j) - (i == j ? 1.0 : 0.0)) > tol) return false;
  return std::abs(determinant_3x3(r) - 1.0) <= tol;
}

std::vector<Vec3> transform_points(const RigidTransform& t, std::span<const Vec3> pts) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const Vec3& p : pts) out.push_back(t.apply(p));
  return out;
}

// ---------------------------------------------------------------------------
// Decoder

DecoderWeights DecoderWeights::random(std::size_t model_dim, SplitMix64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(model_dim));
  const auto fill = [&](Matrix& m) {
    for (double& v : m.values()) v = rng.uniform(-bound, bound);
  };
  DecoderWeights w;
  w.coords.w1 = Matrix(model_dim, model_dim);
  fill(w.coords.w1);
  w.coords.b1.resize(model_dim);
  for (double& v : w.coords.b1) v = rng.uniform(-bound, bound);
  w.coords.w2 = Matrix(model_dim, 3);
  fill(w.coords.w2);
  w.coords.b2.resize(3);
  for (double& v : w.coords.b2) v = rng.uniform(-bound, bound);
  w.score_w = Matrix(model_dim, 1);
  fill(w.score_w);
  w.score_b = {rng.uniform(-bound, bound)};
  return w;
}

DecodedCloud decode(const Matrix& features, const DecoderWeights& w) {
  require(features.cols() == w.coords.input_dim() && features.cols() == w.score_w.rows(),
          "decode: feature width does not match decoder weights");
  require(w.coords.output_dim() == 3 && w.score_w.cols() == 1 && w.score_b.size() == 1,
          "decode: head output widths must be 3 and 1");
  DecodedCloud out;
  out.coords = w.coords.forward(features);
  const Matrix logits = linear_forward(features, w.score_w, w.score_b);
  out.scores.reserve(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) out.scores.push_back(sigmoid(logits(i, 0)));
  return out;
}

// ---------------------------------------------------------------------------
// Labels and losses

void LossConfig::validate() const {
  if (!(lambda_c > 0.0) || !(lambda_f > 0.0)) fail(ErrorKind::Config, "loss: lambdas must be positive");
  if (!(overlap_radius > 0.0)) fail(ErrorKind::Config, "loss: overlap_radius must be positive");
  if (!(positive_radius > 0.0) || !(negative_radius > positive_radius))
    fail(ErrorKind::Config, "loss: need 0 < positive_radius < negative_radius");
}

std::vector<std::uint8_t> overlap_labels(std::span<const Vec3> x, std::span<const Vec3> y,
                                         const RigidTransform& gt, double overlap_radius) {
  require(overlap_radius > 0.0, "overlap_labels: radius must be > 0");
  if (y.empty()) fail(ErrorKind::Data, "overlap_labels: target cloud is empty");
  const double r2 = overlap_radius * overlap_radius;
  std::vector<std::uint8_t> labels;
  labels.reserve(x.size());
  for (const Vec3& p : x) labels.push_back(nearest_squared(gt.apply(p), y) < r2 ? 1 : 0);
  return labels;
}

double loss_overlap(std::span<const std::uint8_t> labels, std::span<const double> scores) {
  require(labels.size() == scores.size(), "loss_overlap: length mismatch");
  require(!labels.empty(), "loss_overlap: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double s = std::clamp(scores[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    acc += labels[i] ? std::log(s) : std::log(1.0 - s);
  }
  return -acc / static_cast<double>(labels.size());
}

FlaggedLoss loss_correspondence(std::span<const Vec3> x, const Matrix& y_hat,
                                std::span<const std::uint8_t> labels, const RigidTransform& gt) {
  require(y_hat.rows() == x.size() && y_hat.cols() == 3, "loss_correspondence: prediction shape mismatch");
  require(labels.size() == x.size(), "loss_correspondence: label length mismatch");
  double acc = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!labels[i]) continue;
    const Vec3 d = gt.apply(x[i]) - row_as_vec(y_hat, i);
    acc += std::abs(d.x) + std::abs(d.y) + std::abs(d.z);
    ++positives;
  }
  if (positives == 0) return {0.0, true};
  return {acc / static_cast<double>(positives), false};
}

FlaggedLoss loss_feature(const Matrix& feats_x, const Matrix& feats_y, std::span<const Vec3> x,
                         std::span<const Vec3> y, const RigidTransform& gt, const Matrix& w_f,
                         double positive_radius, double negative_radius) {
  require(feats_x.rows() == x.size() && feats_y.rows() == y.size(), "loss_feature: feature rows mismatch");
  require(w_f.rows() == feats_x.cols() && w_f.cols() == feats_y.cols(), "loss_feature: W_f shape mismatch");
  require(positive_radius > 0.0 && negative_radius > positive_radius, "loss_feature: need 0 < r_p < r_n");
  const Matrix projected = matmul(feats_x, w_f);
  const double rp2 = positive_radius * positive_radius;
  const double rn2 = negative_radius * negative_radius;

  double acc = 0.0;
  std::size_t anchors = 0;
  std::vector<double> logits;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Vec3 target = gt.apply(x[i]);
    std::size_t positive = y.size();
    double best = rp2;
    for (std::size_t j = 0; j < y.size(); ++j) {
      const double d2 = squared_distance(target, y[j]);
      if (d2 < best) {
        best = d2;
        positive = j;
      }
    }
    if (positive == y.size()) continue;

    const auto fx = projected.row(i);
    const auto similarity = [&](std::size_t j) {
      const auto fy = feats_y.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < fy.size(); ++k) s += fx[k] * fy[k];
      return s;
    };
    logits.clear();
    logits.push_back(similarity(positive));
    for (std::size_t j = 0; j < y.size(); ++j)
      if (squared_distance(target, y[j]) > rn2) logits.push_back(similarity(j));
    const double max_l = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - max_l);
    acc += -(logits.front() - max_l - std::log(sum));
    ++anchors;
  }
  if (anchors == 0) return {0.0, true};
  return {acc / static_cast<double>(anchors), false};
}

double loss_total(const LossParts& parts, const LossConfig& cfg) {
  return parts.overlap + cfg.lambda_c * parts.correspondence + cfg.lambda_f * parts.feature;
}

// ---------------------------------------------------------------------------
// Transform estimation

RigidTransform weighted_procrustes(std::span<const Vec3> src, std::span<const Vec3> dst,
                                   std::span<const double> weights) {
  require(src.size() == dst.size() && src.size() == weights.size(), "weighted_procrustes: length mismatch");
  if (src.size() < 3) fail(ErrorKind::DegenerateGeometry, "weighted_procrustes: need at least 3 correspondences");
  double total = 0.0;
  for (double w : weights) {
    require(w >= 0.0 && std::isfinite(w), "weighted_procrustes: weights must be finite and nonnegative");
    total += w;
  }
  if (!(total > 0.0)) fail(ErrorKind::DegenerateGeometry, "weighted_procrustes: weights sum to zero");

  Vec3 mu_s, mu_d;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights[i] / total;
    mu_s += src[i] * w;
    mu_d += dst[i] * w;
  }
  Matrix h(3, 3);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights[i] / total;
    const Vec3 a = src[i] - mu_s;
    const Vec3 b = dst[i] - mu_d;
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) h(r, c) += w * a[r] * b[c];
  }
  if (!all_finite(h)) fail(ErrorKind::Numerical, "weighted_procrustes: non-finite covariance");

  const Svd3 svd = svd_3x3(h);
  if (!(svd.s[0] > 0.0) || svd.s[1] <= 1e-12 * svd.s[0])
    fail(ErrorKind::DegenerateGeometry, "weighted_procrustes: weighted covariance has rank < 2");

  Matrix correction = Matrix::identity(3);
  correction(2, 2) = determinant_3x3(matmul(svd.v, transpose(svd.u))) < 0.0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = matmul(matmul(svd.v, correction), transpose(svd.u));
  t.translation = mu_d - rotate(t.rotation, mu_s);
  return t;
}

RigidTransform estimate_transform(const Correspondences& corr, std::span<const Vec3> x,
                                  std::span<const Vec3> y) {
  require(corr.y_hat.rows() == x.size() && corr.score_x.size() == x.size(),
          "estimate_transform: source correspondences do not match the source cloud");
  require(corr.x_hat.rows() == y.size() && corr.score_y.size() == y.size(),
          "estimate_transform: target correspondences do not match the target cloud");
  std::vector<Vec3> src, dst;
  std::vector<double> w;
  src.reserve(x.size() + y.size());
  dst.reserve(x.size() + y.size());
  w.reserve(x.size() + y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    src.push_back(x[i]);
    dst.push_back(row_as_vec(corr.y_hat, i));
    w.push_back(corr.score_x[i]);
  }
  for (std::size_t j = 0; j < y.size(); ++j) {
    src.push_back(row_as_vec(corr.x_hat, j));
    dst.push_back(y[j]);
    w.push_back(corr.score_y[j]);
  }
  return weighted_procrustes(src, dst, w);
}

// ---------------------------------------------------------------------------
// Metrics

double relative_rotation_error_deg(const Matrix& r_est, const Matrix& r_gt) {
  const Matrix delta = matmul(transpose(r_gt), r_est);
  const double cos_part = (delta(0, 0) + delta(1, 1) + delta(2, 2) - 1.0) / 2.0;
  // Same angle as arccos of the trace term, but stable near zero.
  const Vec3 skew{delta(2, 1) - delta(1, 2), delta(0, 2) - delta(2, 0), delta(1, 0) - delta(0, 1)};
  const double sin_part = norm(skew) / 2.0;
  return std::atan2(sin_part, cos_part) * 180.0 / std::numbers::pi;
}

double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
  require(!a.empty() && !b.empty(), "chamfer_distance: empty cloud");
  double ab = 0.0, ba = 0.0;
  for (const Vec3& p : a) ab += nearest_squared(p, b);
  for (const Vec3& q : b) ba += nearest_squared(q, a);
  return ab / static_cast<double>(a.size()) + ba / static_cast<double>(b.size());
}

RegistrationMetrics compute_metrics(const RigidTransform& est, const RigidTransform& gt, std::span<const Vec3> x,
                                    std::span<const Vec3> y, const MetricThresholds& thresholds) {
  RegistrationMetrics m;
  m.rre_deg = relative_rotation_error_deg(est.rotation, gt.rotation);
  m.rte = norm(est.translation - gt.translation);
  double sq = 0.0;
  for (const Vec3& p : x) sq += squared_distance(est.apply(p), gt.apply(p));
  m.rmse = x.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(x.size()));
  const std::vector<Vec3> aligned = transform_points(est, x);
  m.chamfer = chamfer_distance(aligned, y);
  m.success_rre_rte = m.rre_deg < thresholds.rre_deg && m.rte < thresholds.rte;
  m.success_rmse = m.rmse < thresholds.rmse;
  return m;
}

}  // namespace ptt
