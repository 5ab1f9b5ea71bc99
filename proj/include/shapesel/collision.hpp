#pragma once

#include <memory>
#include <vector>

#include "shapesel/errors.hpp"
#include "shapesel/geom.hpp"
#include "shapesel/sampling.hpp"
#include "shapesel/sdf.hpp"

namespace shapesel {

/// Precomputed per-exemplar data for the collision energy, canonical frame.
struct CollisionShape {
  SdfGrid interior;  // max(-φ, 0)
  PointCloud points;

  static std::shared_ptr<const CollisionShape> from_sdf(const SdfGrid& sdf, PointCloud points) {
    return std::make_shared<const CollisionShape>(CollisionShape{clamp_interior(sdf), std::move(points)});
  }
};

struct SceneObject {
  int class_id = 0;
  int exemplar_index = 0;
  Pose9DoF pose;
  std::shared_ptr<const CollisionShape> shape;
};

/// Affine map y = a x + b.
struct AffineMap {
  Mat3 a = Mat3::Identity();
  Vec3 b = Vec3::Zero();

  Vec3 operator()(const Vec3& x) const { return a * x + b; }
};

inline void check_scale(const Pose9DoF& p) {
  if ((p.s.array() < 1e-12).any()) throw ZeroScale("pose scale component below 1e-12");
}

/// Maps canonical coordinates of object i into canonical coordinates of
/// object j: pose_j^{-1} ∘ pose_i.
inline AffineMap relative_transform(const Pose9DoF& pose_i, const Pose9DoF& pose_j) {
  check_scale(pose_j);
  const Mat3 to_j = pose_j.s.cwiseInverse().asDiagonal() * pose_j.r.matrix().transpose();
  return {to_j * pose_i.r.matrix() * pose_i.s.asDiagonal(), to_j * (pose_i.t - pose_j.t)};
}

inline AffineMap relative_transform(const SceneObject& i, const SceneObject& j) {
  return relative_transform(i.pose, j.pose);
}

/// Σ_j Σ_{x ∈ P_i} φ̃_j(T_ij x). Samples outside grid j contribute zero.
inline double collision_energy_single(const SceneObject& i, const std::vector<SceneObject>& others) {
  double energy = 0.0;
  for (const auto& j : others) {
    const AffineMap map = relative_transform(i, j);
    for (const Vec3& x : i.shape->points.points)
      if (auto s = try_trilinear_sample(j.shape->interior, map(x))) energy += s->value;
  }
  return energy;
}

/// Geman-McClure ρ(x) = (x²/2) / (1 + x²).
inline double geman_mcclure(double x) { return 0.5 * x * x / (1.0 + x * x); }
inline double geman_mcclure_derivative(double x) {
  const double d = 1.0 + x * x;
  return x / (d * d);
}

inline std::vector<double> per_object_energies(const std::vector<SceneObject>& scene) {
  std::vector<double> e(scene.size(), 0.0);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    std::vector<SceneObject> others;
    for (std::size_t j = 0; j < scene.size(); ++j)
      if (j != i) others.push_back(scene[j]);
    e[i] = collision_energy_single(scene[i], others);
  }
  return e;
}

/// Σ_i ρ(L_coll^i).
inline double collision_loss_total(const std::vector<SceneObject>& scene) {
  double total = 0.0;
  for (double e : per_object_energies(scene)) total += geman_mcclure(e);
  return total;
}

struct CollisionGradient {
  double loss = 0.0;
  std::vector<double> energies;
  std::vector<PoseGradient> gradients;
};

/// Collision loss of objects posed by `params` and its exact gradient with
/// respect to every object's (raw rotation, translation, scale).
inline CollisionGradient collision_gradient(const std::vector<PoseParams>& params,
                                            const std::vector<std::shared_ptr<const CollisionShape>>& shapes) {
  if (params.size() != shapes.size()) throw MismatchedLengths("one shape per object required");
  const std::size_t n = params.size();
  std::vector<SO3Projection> proj;
  proj.reserve(n);
  for (const auto& p : params) {
    proj.push_back(SO3Projection::compute(p.m));
    if ((p.s.array() < 1e-12).any()) throw ZeroScale("pose scale component below 1e-12");
  }

  struct Partial {
    Mat3 r = Mat3::Zero();
    Vec3 t = Vec3::Zero();
    Vec3 s = Vec3::Zero();
  };

  CollisionGradient out;
  out.energies.assign(n, 0.0);
  std::vector<Partial> grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    // dE_i / d(params of every object); scaled by ρ'(E_i) once E_i is known.
    std::vector<Partial> local(n);
    const Mat3& ri = proj[i].r.matrix();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const Mat3& rj = proj[j].r.matrix();
      const Vec3 inv_sj = params[j].s.cwiseInverse();
      for (const Vec3& x : shapes[i]->points.points) {
        const Vec3 sx = params[i].s.cwiseProduct(x);
        const Vec3 d = ri * sx + params[i].t - params[j].t;
        const Vec3 a = rj.transpose() * d;
        const Vec3 y = a.cwiseProduct(inv_sj);
        const auto sample = try_trilinear_sample(shapes[j]->interior, y);
        if (!sample) continue;
        out.energies[i] += sample->value;
        const Vec3 ga = sample->gradient.cwiseProduct(inv_sj);
        const Vec3 gw = rj * ga;
        local[j].s -= sample->gradient.cwiseProduct(a).cwiseProduct(inv_sj).cwiseProduct(inv_sj);
        local[j].r += d * ga.transpose();
        local[j].t -= gw;
        local[i].t += gw;
        local[i].r += gw * sx.transpose();
        local[i].s += (ri.transpose() * gw).cwiseProduct(x);
      }
    }
    const double w = geman_mcclure_derivative(out.energies[i]);
    out.loss += geman_mcclure(out.energies[i]);
    for (std::size_t k = 0; k < n; ++k) {
      grad[k].r += w * local[k].r;
      grad[k].t += w * local[k].t;
      grad[k].s += w * local[k].s;
    }
  }
  out.gradients.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.gradients[k].m = proj[k].backward(grad[k].r);
    out.gradients[k].t = grad[k].t;
    out.gradients[k].s = grad[k].s;
  }
  return out;
}

inline CollisionGradient collision_gradient(const std::vector<SceneObject>& scene) {
  std::vector<PoseParams> params;
  std::vector<std::shared_ptr<const CollisionShape>> shapes;
  for (const auto& o : scene) {
    params.push_back(PoseParams::from_pose(o.pose));
    shapes.push_back(o.shape);
  }
  return collision_gradient(params, shapes);
}

}  // namespace shapesel
