#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "shapesel/errors.hpp"
#include "shapesel/geom.hpp"
#include "shapesel/sampling.hpp"

namespace shapesel {

/// Loss value together with its gradient with respect to the inputs.
template <typename Grad>
struct LossWithGradient {
  double loss = 0.0;
  Grad gradient;
};

namespace detail {
/// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double log_sum_exp(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}
inline void check_batch(std::size_t a, std::size_t b) {
  if (a == 0) throw InvalidArgument("at least one object required");
  if (a != b) throw MismatchedLengths("per-object lists differ in length");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Shape selection

/// Mean softmax cross-entropy against one-hot targets.
inline LossWithGradient<std::vector<Eigen::VectorXd>> hard_selection_loss_with_gradient(
    const std::vector<Eigen::VectorXd>& scores, const std::vector<Eigen::VectorXd>& targets) {
  detail::check_batch(scores.size(), targets.size());
  const double m = static_cast<double>(scores.size());
  LossWithGradient<std::vector<Eigen::VectorXd>> r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].size() != targets[i].size()) throw MismatchedLengths("score and target sizes differ");
    const double lse = detail::log_sum_exp(scores[i]);
    const Eigen::VectorXd log_p = scores[i].array() - lse;
    r.loss -= targets[i].dot(log_p) / m;
    r.gradient.push_back((log_p.array().exp() * targets[i].sum() - targets[i].array()).matrix() / m);
  }
  return r;
}

inline double hard_selection_loss(const std::vector<Eigen::VectorXd>& scores, const std::vector<Eigen::VectorXd>& targets) {
  return hard_selection_loss_with_gradient(scores, targets).loss;
}

enum class SoftLossMode {
  /// -Σ d log S(z): positive terms only.
  literal,
  /// Adds -(1 - d) log(1 - S(z)), i.e. per-exemplar binary cross-entropy.
  symmetric,
};

/// Mean over objects of the sigmoid cross-entropy against soft labels d.
inline LossWithGradient<std::vector<Eigen::VectorXd>> soft_selection_loss_with_gradient(
    const std::vector<Eigen::VectorXd>& scores, const std::vector<Eigen::VectorXd>& soft_targets,
    SoftLossMode mode = SoftLossMode::symmetric) {
  detail::check_batch(scores.size(), soft_targets.size());
  const double m = static_cast<double>(scores.size());
  LossWithGradient<std::vector<Eigen::VectorXd>> r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& z = scores[i];
    const auto& d = soft_targets[i];
    if (z.size() != d.size()) throw MismatchedLengths("score and target sizes differ");
    Eigen::VectorXd g(z.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) {
      const double s = detail::sigmoid(z(k));
      // -log S(z) = softplus(-z); -log(1 - S(z)) = softplus(z)
      r.loss += d(k) * detail::softplus(-z(k)) / m;
      g(k) = -d(k) * (1.0 - s) / m;
      if (mode == SoftLossMode::symmetric) {
        r.loss += (1.0 - d(k)) * detail::softplus(z(k)) / m;
        g(k) += (1.0 - d(k)) * s / m;
      }
    }
    r.gradient.push_back(std::move(g));
  }
  return r;
}

inline double soft_selection_loss(const std::vector<Eigen::VectorXd>& scores, const std::vector<Eigen::VectorXd>& soft_targets,
                                  SoftLossMode mode = SoftLossMode::symmetric) {
  return soft_selection_loss_with_gradient(scores, soft_targets, mode).loss;
}

// ---------------------------------------------------------------------------
// Pose

/// Σ_k |T̂ x_k - y_k|² for corresponding canonical points x_k and targets
/// y_k, with gradient with respect to the unconstrained prediction (through
/// the SO(3) projection).
inline LossWithGradient<PoseGradient> correspondence_loss_with_gradient(const PoseParams& pred, const PointCloud& cloud,
                                                                        const std::vector<Vec3>& targets) {
  if (cloud.points.size() != targets.size()) throw MismatchedLengths("one target per point required");
  const SO3Projection proj = SO3Projection::compute(pred.m);
  const Mat3& r = proj.r.matrix();
  LossWithGradient<PoseGradient> out;
  Mat3 grad_r = Mat3::Zero();
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const Vec3& x = cloud.points[k];
    const Vec3 sx = pred.s.cwiseProduct(x);
    const Vec3 residual = r * sx + pred.t - targets[k];
    out.loss += residual.squaredNorm();
    out.gradient.t += 2.0 * residual;
    grad_r += 2.0 * residual * sx.transpose();
    out.gradient.s += 2.0 * (r.transpose() * residual).cwiseProduct(x);
  }
  out.gradient.m = proj.backward(grad_r);
  return out;
}

/// Σ_x |T x - T̂ x|² for one object.
inline LossWithGradient<PoseGradient> pose_loss_rt_single(const Pose9DoF& gt, const PoseParams& pred, const PointCloud& cloud) {
  std::vector<Vec3> targets;
  targets.reserve(cloud.points.size());
  for (const Vec3& x : cloud.points) targets.push_back(apply_pose(gt, x));
  return correspondence_loss_with_gradient(pred, cloud, targets);
}

/// Σ_i Σ_{x∈P_i} |T_i x - T̂_i x|². With `normalized`, each object's sum is
/// divided by its point count and the total by the object count.
inline double pose_loss_rt(const std::vector<Pose9DoF>& gt, const std::vector<Pose9DoF>& pred,
                           const std::vector<PointCloud>& clouds, bool normalized = false) {
  detail::check_batch(gt.size(), pred.size());
  if (clouds.size() != gt.size()) throw MismatchedLengths("one point cloud per object required");
  double total = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    double sum = 0.0;
    for (const Vec3& x : clouds[i].points) sum += (apply_pose(gt[i], x) - apply_pose(pred[i], x)).squaredNorm();
    total += normalized && !clouds[i].points.empty() ? sum / clouds[i].points.size() : sum;
  }
  return normalized ? total / gt.size() : total;
}

inline double rot_loss_frobenius(const Rotation& gt, const Rotation& pred) { return (gt.matrix() - pred.matrix()).norm(); }

/// Smooth-L1 with threshold δ, summed over components.
inline double trans_loss_huber(const Vec3& gt, const Vec3& pred, double delta = 1.0) {
  double sum = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double e = std::abs(pred(k) - gt(k));
    sum += e < delta ? 0.5 * e * e / delta : e - 0.5 * delta;
  }
  return sum;
}

/// (1/M) Σ_i |s_i - ŝ_i|₁, gradient with respect to ŝ (sign, 0 at ties).
inline LossWithGradient<std::vector<Vec3>> scale_loss_with_gradient(const std::vector<Vec3>& gt, const std::vector<Vec3>& pred) {
  detail::check_batch(gt.size(), pred.size());
  const double m = static_cast<double>(gt.size());
  LossWithGradient<std::vector<Vec3>> r;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const Vec3 e = pred[i] - gt[i];
    r.loss += e.cwiseAbs().sum() / m;
    r.gradient.push_back(e.unaryExpr([m](double v) { return (v > 0.0 ? 1.0 : v < 0.0 ? -1.0 : 0.0) / m; }));
  }
  return r;
}

inline double scale_loss(const std::vector<Vec3>& gt, const std::vector<Vec3>& pred) {
  return scale_loss_with_gradient(gt, pred).loss;
}

/// Yaw classification into B equal bins over [0, 2π) plus smooth-L1
/// regression of the in-bin offset from the bin center.
inline double binned_rotation_loss(double yaw_gt, const Eigen::VectorXd& bin_logits, const Eigen::VectorXd& offset_preds,
                                   double huber_delta = 1.0) {
  const auto bins = bin_logits.size();
  if (bins < 2) throw InvalidArgument("at least two bins required");
  if (offset_preds.size() != bins) throw MismatchedLengths("one offset per bin required");
  const double two_pi = 2.0 * std::numbers::pi;
  const double width = two_pi / static_cast<double>(bins);
  double yaw = std::fmod(yaw_gt, two_pi);
  if (yaw < 0.0) yaw += two_pi;
  const auto bin = std::min<Eigen::Index>(static_cast<Eigen::Index>(yaw / width), bins - 1);
  const double ce = detail::log_sum_exp(bin_logits) - bin_logits(bin);
  const double target = yaw - (static_cast<double>(bin) + 0.5) * width;
  const double e = std::abs(offset_preds(bin) - target);
  const double reg = e < huber_delta ? 0.5 * e * e / huber_delta : e - 0.5 * huber_delta;
  return ce + reg;
}

// ---------------------------------------------------------------------------
// Multi-task objective

struct LossWeights {
  double rt = 10.0;
  double s = 10.0;
  double z = 0.1;
  double coll = 1.0;
};

struct LossParts {
  double key = 0.0;
  double rt = 0.0;
  double s = 0.0;
  double z = 0.0;
  double coll = 0.0;
};

/// Collision weight is forced to zero while iteration < warmup.
inline double effective_collision_weight(const LossWeights& w, long long iteration, long long warmup) {
  return iteration < warmup ? 0.0 : w.coll;
}

inline double total_objective(const LossParts& parts, const LossWeights& w, long long iteration, long long warmup) {
  if (w.rt < 0 || w.s < 0 || w.z < 0 || w.coll < 0) throw InvalidArgument("loss weights must be non-negative");
  return parts.key + w.rt * parts.rt + w.s * parts.s + w.z * parts.z +
         effective_collision_weight(w, iteration, warmup) * parts.coll;
}

}  // namespace shapesel
