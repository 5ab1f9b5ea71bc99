#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "shapesel/errors.hpp"

namespace shapesel {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Unconstrained 3x3 matrix, e.g. a regressed rotation before projection.
struct RawMatrix {
  Mat3 m = Mat3::Identity();
};

/// Proper rotation: m^T m = I and det(m) = +1.
class Rotation {
 public:
  Rotation() = default;

  /// Wraps a matrix that is already a rotation. Throws InvalidArgument when
  /// the orthogonality or determinant check fails by more than `tol`.
  static Rotation from_matrix(const Mat3& m, double tol = 1e-9) {
    if (!is_rotation(m, tol)) throw InvalidArgument("matrix is not a proper rotation");
    return Rotation(m);
  }

  static Rotation about_axis(const Vec3& axis, double angle) {
    return Rotation(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix());
  }

  static bool is_rotation(const Mat3& m, double tol = 1e-9) {
    return m.allFinite() && (m.transpose() * m - Mat3::Identity()).norm() <= tol &&
           std::abs(m.determinant() - 1.0) <= tol;
  }

  const Mat3& matrix() const { return m_; }

  Rotation operator*(const Rotation& other) const { return Rotation(m_ * other.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }
  Rotation inverse() const { return Rotation(m_.transpose()); }

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}
  friend struct SO3Projection;

  Mat3 m_ = Mat3::Identity();
};

/// Rotation, translation and per-axis scale. Maps canonical x to R (s ⊙ x) + t.
struct Pose9DoF {
  Rotation r;
  Vec3 t = Vec3::Zero();
  Vec3 s = Vec3::Ones();

  Mat4 homogeneous() const {
    Mat4 h = Mat4::Identity();
    h.topLeftCorner<3, 3>() = r.matrix() * s.asDiagonal();
    h.topRightCorner<3, 1>() = t;
    return h;
  }
};

inline Vec3 apply_pose(const Pose9DoF& p, const Vec3& x) {
  return p.r.matrix() * p.s.cwiseProduct(x) + p.t;
}

/// Cached SVD factors of a projection M = U Σ V^T onto SO(3). Keeping the
/// factors lets callers back-propagate through the projection.
struct SO3Projection {
  Mat3 u;
  Mat3 v;
  Vec3 sigma;  // descending, non-negative
  double det_sign = 1.0;
  Rotation r;

  static SO3Projection compute(const Mat3& m) {
    if (!m.allFinite()) throw DegenerateMatrix("non-finite entries");
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    SO3Projection p;
    p.u = svd.matrixU();
    p.v = svd.matrixV();
    p.sigma = svd.singularValues();
    if (p.sigma(1) < 1e-12 && p.sigma(2) < 1e-12)
      throw DegenerateMatrix("two smallest singular values vanish; nearest rotation is not unique");
    p.det_sign = (p.u * p.v.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    const Vec3 flip(1.0, 1.0, p.det_sign);
    p.r = Rotation(p.u * flip.asDiagonal() * p.v.transpose());
    return p;
  }

  /// Vector-Jacobian product: given dL/dR returns dL/dM.
  ///
  /// Derived from the SVD differential P = U^T dM V. With s' = (1, 1, det),
  /// the off-diagonal entries of U^T dR V are
  ///   s (P_ij - P_ji) / (σ_i + σ_j)        when s'_i = s'_j = s,
  ///   s'_j (P_ij + P_ji) / (σ_j - σ_i)     otherwise.
  Mat3 backward(const Mat3& grad_r) const {
    const Mat3 h = u.transpose() * grad_r * v;
    const Vec3 flip(1.0, 1.0, det_sign);
    Mat3 gp = Mat3::Zero();
    for (int i = 0; i < 3; ++i) {
      for (int j = i + 1; j < 3; ++j) {
        if (flip(i) == flip(j)) {
          const double c = flip(i) * (h(i, j) - h(j, i)) / (sigma(i) + sigma(j));
          gp(i, j) = c;
          gp(j, i) = -c;
        } else {
          const double c = flip(j) * (h(i, j) + h(j, i)) / (sigma(j) - sigma(i));
          gp(i, j) = c;
          gp(j, i) = c;
        }
      }
    }
    return u * gp * v.transpose();
  }
};

/// Nearest rotation in Frobenius norm: U diag(1, 1, det(U V^T)) V^T.
inline Rotation project_to_so3(const RawMatrix& m) { return SO3Projection::compute(m.m).r; }

/// Unconstrained pose parameters optimized in place of a Pose9DoF: the
/// rotation is the SO(3) projection of `m`.
struct PoseParams {
  Mat3 m = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  Vec3 s = Vec3::Ones();

  static PoseParams from_pose(const Pose9DoF& p) { return {p.r.matrix(), p.t, p.s}; }
  Pose9DoF to_pose() const { return {project_to_so3(RawMatrix{m}), t, s}; }
};

/// Gradient of a scalar with respect to PoseParams.
struct PoseGradient {
  Mat3 m = Mat3::Zero();
  Vec3 t = Vec3::Zero();
  Vec3 s = Vec3::Zero();

  PoseGradient& operator+=(const PoseGradient& o) {
    m += o.m;
    t += o.t;
    s += o.s;
    return *this;
  }
  PoseGradient operator*(double k) const { return {m * k, t * k, s * k}; }
};

/// Angle of a^T b, in [0, π]. Equal to arccos((tr(a^T b) - 1) / 2); evaluated
/// through atan2 so that small angles keep full precision.
inline double geodesic_distance(const Rotation& a, const Rotation& b) {
  const Mat3 q = a.matrix().transpose() * b.matrix();
  const double c = std::clamp((q.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3 axis(q(2, 1) - q(1, 2), q(0, 2) - q(2, 0), q(1, 0) - q(0, 1));
  return std::atan2(axis.norm() / 2.0, c);
}

}  // namespace shapesel
