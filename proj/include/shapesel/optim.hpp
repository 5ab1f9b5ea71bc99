#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <ostream>
#include <vector>

#include "shapesel/collision.hpp"
#include "shapesel/errors.hpp"
#include "shapesel/geom.hpp"
#include "shapesel/losses.hpp"
#include "shapesel/scene.hpp"
#include "shapesel/shape_db.hpp"

namespace shapesel {

struct OptimConfig {
  double lr = 1e-2;
  int iterations = 500;
  long long warmup = 100;  // iterations with the collision weight forced to 0
  /// The run stops once the objective falls to this value.
  double tolerance = 1e-12;
  std::uint64_t seed = 0;
  bool freeze_rotation = false;
  bool freeze_translation = false;
  bool freeze_scale = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Halvings of the step tried before a non-decreasing step is accepted.
  int max_backtracks = 30;
  LossWeights weights;
};

struct TraceRow {
  int iteration = 0;
  double rt = 0.0;
  double coll = 0.0;
  double anchor = 0.0;
  double total = 0.0;
};

struct OptimResult {
  Scene scene;
  std::vector<TraceRow> trace;
  bool converged = false;
};

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out.precision(17);
  out << "iteration,rt,coll,anchor,total\n";
  for (const auto& r : trace) out << r.iteration << ',' << r.rt << ',' << r.coll << ',' << r.anchor << ',' << r.total << '\n';
}

/// Weighted scene objective over per-object PoseParams:
///   w_rt Σ_i Σ_k |T̂_i x_k - y_ik|² + λ_coll L_coll + w_anchor Σ_i |t_i - t_i⁰|².
struct SceneProblem {
  std::vector<PointCloud> clouds;               // canonical correspondences (pose term)
  std::vector<std::vector<Vec3>> targets;       // world targets; empty disables the pose term
  std::vector<std::shared_ptr<const CollisionShape>> shapes;  // empty disables the collision term
  std::vector<Vec3> anchors;
  double rt_weight = 1.0;
  double anchor_weight = 0.0;

  struct Evaluation {
    TraceRow row;
    std::vector<PoseGradient> gradient;
  };

  Evaluation evaluate(const std::vector<PoseParams>& x, double coll_weight) const {
    Evaluation e;
    e.gradient.resize(x.size());
    if (!targets.empty()) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        const auto r = correspondence_loss_with_gradient(x[i], clouds[i], targets[i]);
        e.row.rt += r.loss;
        e.gradient[i] += r.gradient * rt_weight;
      }
    }
    if (!shapes.empty() && coll_weight > 0.0) {
      const CollisionGradient c = collision_gradient(x, shapes);
      e.row.coll = c.loss;
      for (std::size_t i = 0; i < x.size(); ++i) e.gradient[i] += c.gradients[i] * coll_weight;
    } else if (!shapes.empty()) {
      std::vector<SceneObject> objs;
      for (std::size_t i = 0; i < x.size(); ++i) objs.push_back({0, 0, x[i].to_pose(), shapes[i]});
      e.row.coll = collision_loss_total(objs);
    }
    if (anchor_weight > 0.0) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        const Vec3 d = x[i].t - anchors[i];
        e.row.anchor += d.squaredNorm();
        e.gradient[i].t += 2.0 * anchor_weight * d;
      }
    }
    e.row.total = rt_weight * e.row.rt + coll_weight * e.row.coll + anchor_weight * e.row.anchor;
    return e;
  }
};

namespace detail {

inline bool all_finite(const std::vector<PoseParams>& x) {
  for (const auto& p : x)
    if (!p.m.allFinite() || !p.t.allFinite() || !p.s.allFinite()) return false;
  return true;
}

}  // namespace detail

/// Adam with bias correction on (raw rotation, translation, scale) of every
/// object. A step that would increase the objective is halved until it does
/// not, which keeps the trace non-increasing while the weights are fixed.
inline std::pair<std::vector<PoseParams>, std::vector<TraceRow>> minimize(const SceneProblem& problem,
                                                                           std::vector<PoseParams> x,
                                                                           const OptimConfig& cfg, bool* converged = nullptr) {
  if (!(cfg.lr > 0.0) || cfg.iterations < 0) throw InvalidArgument("step size must be positive and budget non-negative");
  const std::size_t n = x.size();
  auto coll_weight = [&](int it) { return effective_collision_weight(cfg.weights, it, cfg.warmup); };
  auto mask = [&](PoseGradient g) {
    if (cfg.freeze_rotation) g.m.setZero();
    if (cfg.freeze_translation) g.t.setZero();
    if (cfg.freeze_scale) g.s.setZero();
    return g;
  };

  std::vector<TraceRow> trace;
  auto current = problem.evaluate(x, coll_weight(0));
  if (!std::isfinite(current.row.total)) throw NonFinite("initial objective is not finite");
  trace.push_back(current.row);
  if (converged) *converged = false;

  std::vector<PoseGradient> m1(n), m2(n);
  for (int it = 1; it <= cfg.iterations; ++it) {
    if (current.row.total <= cfg.tolerance) {
      if (converged) *converged = true;
      break;
    }
    const double w = coll_weight(it);
    if (w != coll_weight(it - 1)) current = problem.evaluate(x, w);

    std::vector<PoseGradient> step(n);
    const double bc1 = 1.0 - std::pow(cfg.beta1, it), bc2 = 1.0 - std::pow(cfg.beta2, it);
    for (std::size_t i = 0; i < n; ++i) {
      const PoseGradient g = mask(current.gradient[i]);
      m1[i] = m1[i] * cfg.beta1;
      m1[i] += g * (1.0 - cfg.beta1);
      m2[i].m = cfg.beta2 * m2[i].m + (1.0 - cfg.beta2) * g.m.cwiseProduct(g.m);
      m2[i].t = cfg.beta2 * m2[i].t + (1.0 - cfg.beta2) * g.t.cwiseProduct(g.t);
      m2[i].s = cfg.beta2 * m2[i].s + (1.0 - cfg.beta2) * g.s.cwiseProduct(g.s);
      auto adam = [&](const auto& mom1, const auto& mom2) {
        return ((mom1 / bc1).array() / ((mom2 / bc2).array().sqrt() + cfg.epsilon)).matrix().eval();
      };
      step[i].m = adam(m1[i].m, m2[i].m);
      step[i].t = adam(m1[i].t, m2[i].t);
      step[i].s = adam(m1[i].s, m2[i].s);
    }

    auto try_step = [&](const std::vector<PoseGradient>& direction) {
      double lr = cfg.lr;
      for (int bt = 0; bt <= cfg.max_backtracks; ++bt, lr *= 0.5) {
        std::vector<PoseParams> candidate = x;
        for (std::size_t i = 0; i < n; ++i) {
          candidate[i].m -= lr * direction[i].m;
          candidate[i].t -= lr * direction[i].t;
          candidate[i].s -= lr * direction[i].s;
        }
        if (!detail::all_finite(candidate))
          throw NonFinite("parameters became non-finite at iteration " + std::to_string(it));
        SceneProblem::Evaluation e;
        try {
          e = problem.evaluate(candidate, w);
        } catch (const DegenerateMatrix&) {
          continue;
        } catch (const ZeroScale&) {
          continue;
        }
        if (!std::isfinite(e.row.total)) throw NonFinite("objective became non-finite at iteration " + std::to_string(it));
        if (e.row.total <= current.row.total) {
          x = std::move(candidate);
          current = std::move(e);
          return true;
        }
      }
      return false;
    };

    bool accepted = try_step(step);
    if (!accepted) {
      // Momentum pointed uphill: drop it and retry along the preconditioned
      // gradient, which is always a descent direction.
      for (std::size_t i = 0; i < n; ++i) {
        const PoseGradient g = mask(current.gradient[i]);
        m1[i] = PoseGradient{};
        auto precond = [&](const auto& grad, const auto& mom2) {
          return (grad.array() / ((mom2 / bc2).array().sqrt() + cfg.epsilon)).matrix().eval();
        };
        step[i].m = precond(g.m, m2[i].m);
        step[i].t = precond(g.t, m2[i].t);
        step[i].s = precond(g.s, m2[i].s);
      }
      accepted = try_step(step);
    }
    current.row.iteration = it;
    trace.push_back(current.row);
    if (!accepted) {
      if (converged) *converged = true;
      break;
    }
  }
  return {std::move(x), std::move(trace)};
}

/// World-frame targets T_i x for every canonical point x of each object's exemplar.
inline std::vector<PointCloud> world_targets(const Scene& gt, const ShapeDatabase& db) {
  std::vector<PointCloud> out;
  for (const auto& o : gt.objects) {
    PointCloud c;
    for (const auto& x : db.entry(o.exemplar).points.points) c.points.push_back(apply_pose(o.pose, x));
    out.push_back(std::move(c));
  }
  return out;
}

/// Recovers every object's 9-DoF pose from world-frame targets that
/// correspond point-by-point to the exemplar's stored surface samples.
inline OptimResult fit_poses(const Scene& init, const ShapeDatabase& db, const std::vector<PointCloud>& targets,
                             const OptimConfig& cfg) {
  if (targets.size() != init.objects.size()) throw MismatchedLengths("one target cloud per object required");
  SceneProblem problem;
  std::vector<PoseParams> x;
  for (std::size_t i = 0; i < init.objects.size(); ++i) {
    const auto& o = init.objects[i];
    problem.clouds.push_back(db.entry(o.exemplar).points);
    problem.targets.push_back(targets[i].points);
    if (targets[i].points.size() != problem.clouds.back().points.size())
      throw MismatchedLengths("target cloud " + std::to_string(i) + " does not match the exemplar's point count");
    x.push_back(PoseParams::from_pose(o.pose));
  }
  OptimResult r;
  auto [params, trace] = minimize(problem, std::move(x), cfg, &r.converged);
  r.scene = init;
  for (std::size_t i = 0; i < params.size(); ++i) r.scene.objects[i].pose = params[i].to_pose();
  r.trace = std::move(trace);
  return r;
}

/// Pushes interpenetrating objects apart by minimizing
/// λ_coll L_coll + anchor_weight Σ |t_i - t_i⁰|².
inline OptimResult resolve_collisions(const Scene& scene, const ShapeDatabase& db, const OptimConfig& cfg,
                                      double anchor_weight = 0.01) {
  SceneProblem problem;
  problem.anchor_weight = anchor_weight;
  std::vector<PoseParams> x;
  for (const auto& o : collision_objects(scene, db)) {
    problem.shapes.push_back(o.shape);
    problem.anchors.push_back(o.pose.t);
    x.push_back(PoseParams::from_pose(o.pose));
  }
  OptimResult r;
  r.scene = scene;
  if (x.empty()) return r;
  auto [params, trace] = minimize(problem, std::move(x), cfg, &r.converged);
  for (std::size_t i = 0; i < params.size(); ++i) {
    // Leave untouched objects bit-identical (the projection may perturb the last ulp).
    if (params[i].m != scene.objects[i].pose.r.matrix() || params[i].s != scene.objects[i].pose.s)
      r.scene.objects[i].pose.r = project_to_so3(RawMatrix{params[i].m});
    r.scene.objects[i].pose.t = params[i].t;
    r.scene.objects[i].pose.s = params[i].s;
  }
  r.trace = std::move(trace);
  return r;
}

}  // namespace shapesel
