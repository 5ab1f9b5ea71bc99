#pragma once

// Independent reference implementations used to check the library. Nothing
// here calls into the code under test except for plain data types.

#include <algorithm>
#include <cmath>
#include <random>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shapesel/geom.hpp"
#include "shapesel/mesh.hpp"
#include "shapesel/sdf.hpp"

namespace oracle {

using shapesel::Mat3;
using shapesel::Vec3;

/// Distance from p to triangle abc by dense barycentric sampling refined with
/// edge and vertex checks. Slow but obviously correct to ~1e-9.
inline double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  double best = std::numeric_limits<double>::infinity();
  // Interior: orthogonal projection onto the plane, if inside.
  const Vec3 n = (b - a).cross(c - a);
  if (n.norm() > 0) {
    const Vec3 nn = n.normalized();
    const Vec3 q = p - nn * nn.dot(p - a);
    const double area = n.norm();
    const double u = (c - b).cross(q - b).dot(nn) / area;
    const double v = (a - c).cross(q - c).dot(nn) / area;
    const double w = 1.0 - u - v;
    if (u >= 0 && v >= 0 && w >= 0) best = (p - q).norm();
  }
  auto segment = [&](const Vec3& s0, const Vec3& s1) {
    const Vec3 d = s1 - s0;
    const double len2 = d.squaredNorm();
    const double t = len2 > 0 ? std::clamp((p - s0).dot(d) / len2, 0.0, 1.0) : 0.0;
    return (p - (s0 + t * d)).norm();
  };
  best = std::min({best, segment(a, b), segment(b, c), segment(c, a)});
  return best;
}

inline double mesh_distance(const shapesel::TriMesh& m, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : m.triangles)
    best = std::min(best, point_triangle_distance(p, m.vertices[t(0)], m.vertices[t(1)], m.vertices[t(2)]));
  return best;
}

/// Trilinear interpolation as an explicit weighted sum over the 8 corners.
inline double trilinear(const shapesel::SdfGrid& g, const Vec3& x) {
  const Vec3 f = (x - g.spec.origin) / g.spec.spacing;
  const int i0 = std::min(static_cast<int>(std::floor(f.x())), g.spec.dims.x() - 2);
  const int j0 = std::min(static_cast<int>(std::floor(f.y())), g.spec.dims.y() - 2);
  const int k0 = std::min(static_cast<int>(std::floor(f.z())), g.spec.dims.z() - 2);
  double sum = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int di = c & 1, dj = (c >> 1) & 1, dk = (c >> 2) & 1;
    const double wx = di ? f.x() - i0 : 1.0 - (f.x() - i0);
    const double wy = dj ? f.y() - j0 : 1.0 - (f.y() - j0);
    const double wz = dk ? f.z() - k0 : 1.0 - (f.z() - k0);
    const auto idx = static_cast<std::size_t>(i0 + di) +
                     static_cast<std::size_t>(g.spec.dims.x()) *
                         (static_cast<std::size_t>(j0 + dj) + static_cast<std::size_t>(g.spec.dims.y()) * (k0 + dk));
    sum += wx * wy * wz * g.values[idx];
  }
  return sum;
}

/// Rotation angle from the quaternion of a^T b.
inline double rotation_angle(const Mat3& a, const Mat3& b) {
  const Eigen::Quaterniond q(Mat3(a.transpose() * b));
  return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
}

/// Pose applied through an explicit 4x4 product of T, R and S.
inline Vec3 homogeneous_apply(const Mat3& r, const Vec3& t, const Vec3& s, const Vec3& x) {
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity(), R = Eigen::Matrix4d::Identity(), S = Eigen::Matrix4d::Identity();
  T.topRightCorner<3, 1>() = t;
  R.topLeftCorner<3, 3>() = r;
  S.diagonal().head<3>() = s;
  const Eigen::Vector4d y = T * R * S * x.homogeneous();
  return y.head<3>();
}

/// Central finite-difference gradient of f at x.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// |a - b| / max(|a|, |b|, floor), taken as the worst component.
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-6) {
  const double scale = std::max({a.norm(), b.norm(), floor});
  return (a - b).norm() / scale;
}

/// Per-pixel focal loss written from the definition, one pixel at a time.
inline double focal_pixel(double yhat, double y, double alpha = 2.0, double beta = 4.0) {
  if (y == 1.0) return -std::pow(1.0 - yhat, alpha) * std::log(yhat);
  return -std::pow(1.0 - y, beta) * std::pow(yhat, alpha) * std::log(1.0 - yhat);
}

/// Softmax cross-entropy using a naive exp/sum (inputs kept small by callers).
inline double softmax_ce(const Eigen::VectorXd& z, int target) {
  double denom = 0.0;
  for (Eigen::Index k = 0; k < z.size(); ++k) denom += std::exp(z(k));
  return -std::log(std::exp(z(target)) / denom);
}

inline double sigmoid_bce(double z, double d, bool symmetric) {
  const double s = 1.0 / (1.0 + std::exp(-z));
  double v = -d * std::log(s);
  if (symmetric) v -= (1.0 - d) * std::log(1.0 - s);
  return v;
}

/// Exhaustive k-means optimum: minimum within-cluster sum of squares over
/// every partition of the data into exactly k non-empty clusters.
inline double best_partition_cost(const std::vector<Eigen::VectorXd>& data, int k, std::vector<int>* best_assign = nullptr) {
  const int n = static_cast<int>(data.size());
  std::vector<int> assign(n, 0);
  double best = std::numeric_limits<double>::infinity();
  // Restricted growth strings enumerate each set partition once.
  std::function<void(int, int)> rec = [&](int i, int used) {
    if (n - i < k - used) return;
    if (i == n) {
      if (used != k) return;
      double cost = 0.0;
      for (int c = 0; c < k; ++c) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(data[0].size());
        int cnt = 0;
        for (int p = 0; p < n; ++p)
          if (assign[p] == c) {
            mean += data[p];
            ++cnt;
          }
        mean /= cnt;
        for (int p = 0; p < n; ++p)
          if (assign[p] == c) cost += (data[p] - mean).squaredNorm();
      }
      if (cost < best) {
        best = cost;
        if (best_assign) *best_assign = assign;
      }
      return;
    }
    for (int c = 0; c <= std::min(used, k - 1); ++c) {
      assign[i] = c;
      rec(i + 1, std::max(used, c + 1));
    }
  };
  rec(0, 0);
  return best;
}

inline std::size_t stirling2(int n, int k) {
  std::vector<std::vector<std::size_t>> s(n + 1, std::vector<std::size_t>(k + 1, 0));
  s[0][0] = 1;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= k; ++j) s[i][j] = j * s[i - 1][j] + s[i - 1][j - 1];
  return s[n][k];
}

/// Monte-Carlo IoU of two posed unit cubes.
inline double monte_carlo_box_iou(const Mat3& ra, const Vec3& ta, const Vec3& sa, const Mat3& rb, const Vec3& tb,
                                  const Vec3& sb, int samples, unsigned seed) {
  auto inside = [](const Mat3& r, const Vec3& t, const Vec3& s, const Vec3& x) {
    const Vec3 l = (r.transpose() * (x - t)).cwiseQuotient(s);
    return std::abs(l.x()) <= 0.5 && std::abs(l.y()) <= 0.5 && std::abs(l.z()) <= 0.5;
  };
  // Sample inside A; IoU = |A∩B| / (|A| + |B| - |A∩B|) with volumes known exactly.
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  int hits = 0;
  for (int i = 0; i < samples; ++i) {
    const Vec3 local(u(gen), u(gen), u(gen));
    const Vec3 x = ra * local.cwiseProduct(sa) + ta;
    hits += inside(rb, tb, sb, x);
  }
  const double va = sa.prod(), vb = sb.prod();
  const double inter = va * hits / samples;
  return inter / (va + vb - inter);
}

/// Least-squares similarity via direct solve: for known rotation candidates
/// this computes the optimal scale and translation, then the residual.
inline double similarity_residual(const std::vector<Vec3>& src, const std::vector<Vec3>& dst, double c, const Mat3& r,
                                  const Vec3& t) {
  double sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) sum += (c * r * src[i] + t - dst[i]).squaredNorm();
  return sum;
}

/// Average precision from an explicit precision/recall table: precision at
/// every recall level is the maximum precision at any recall >= that level.
inline double ap_from_table(const std::vector<bool>& tp, int n_gt) {
  std::vector<double> p, r;
  int hits = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    hits += tp[i];
    p.push_back(double(hits) / double(i + 1));
    r.push_back(double(hits) / n_gt);
  }
  double ap = 0.0;
  double prev = 0.0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (!tp[i]) continue;
    double pmax = 0.0;
    for (std::size_t j = i; j < tp.size(); ++j) pmax = std::max(pmax, p[j]);
    ap += (r[i] - prev) * pmax;
    prev = r[i];
  }
  return ap;
}

}  // namespace oracle
