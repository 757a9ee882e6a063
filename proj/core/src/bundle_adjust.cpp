#include "jm/bundle_adjust.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>

namespace jm {

namespace ba_detail {

CameraPose retract(const CameraPose& pose, const PoseDelta& delta) {
  CameraPose out = pose;
  out.set_rotation(pose.rotation() * quat_exp(delta.head<3>()));
  out.set_translation(pose.translation() + delta.segment<3>(3));
  if (delta(6) != 0.0) out.set_focal(pose.focal() + delta(6));
  return out;
}

Linearization linearize(const CameraPose& pose, const Vec3& world_point, const Vec2& uv) {
  Linearization lin;
  const Vec3 pc = pose.to_camera(world_point);
  if (!(pc.z() > kBehindCameraEpsilon)) return lin;

  const double f = pose.focal();
  const double inv_z = 1.0 / pc.z();
  const double xn = pc.x() * inv_z;
  const double yn = pc.y() * inv_z;
  lin.residual = Vec2(f * xn + pose.principal_point().x(), f * yn + pose.principal_point().y()) - uv;

  Eigen::Matrix<double, 2, 3> d_proj;
  d_proj << f * inv_z, 0.0, -f * xn * inv_z,
            0.0, f * inv_z, -f * yn * inv_z;
  const Mat3 rt = pose.rotation().conjugate().toRotationMatrix();
  lin.jacobian.block<2, 3>(0, 0) = d_proj * skew(pc);
  lin.jacobian.block<2, 3>(0, 3) = -d_proj * rt;
  lin.jacobian(0, 6) = xn;
  lin.jacobian(1, 6) = yn;
  lin.valid = true;
  return lin;
}

}  // namespace ba_detail

namespace {

double huber(double squared_norm, double delta) {
  const double d2 = delta * delta;
  if (squared_norm <= d2) return squared_norm;
  return 2.0 * delta * std::sqrt(squared_norm) - d2;
}

double huber_weight(double squared_norm, double delta) {
  if (squared_norm <= delta * delta) return 1.0;
  return delta / std::sqrt(squared_norm);
}

void validate(const BAProblem& problem) {
  const auto frames = static_cast<int>(problem.initial_poses.size());
  const auto points = static_cast<int>(problem.world_points.size());
  for (const Observation& obs : problem.observations) {
    if (obs.frame < 0 || obs.frame >= frames || obs.point < 0 || obs.point >= points)
      throw Error(ErrorCode::kInvalidArgument, "observation references an unknown frame or point");
    if (!(obs.weight >= 0.0) || !std::isfinite(obs.weight) || !obs.uv.allFinite())
      throw Error(ErrorCode::kInvalidArgument, "observation uv must be finite, weight finite and nonnegative");
  }
  for (const Vec3& p : problem.world_points)
    if (!p.allFinite()) throw Error(ErrorCode::kInvalidArgument, "world points must be finite");
  const BAOptions& o = problem.options;
  if (o.max_iterations < 0 || !(o.initial_damping > 0.0) || !(o.damping_up > 1.0) ||
      !(o.damping_down > 0.0 && o.damping_down < 1.0) || !(o.convergence_tol > 0.0) || !(o.huber_delta > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "invalid BA options");
}

}  // namespace

double robust_cost(std::span<const CameraPose> poses, std::span<const Vec3> world_points,
                   std::span<const Observation> observations, double huber_delta) {
  double cost = 0.0;
  for (const Observation& obs : observations) {
    if (obs.weight == 0.0) continue;
    const CameraPose& pose = poses[static_cast<std::size_t>(obs.frame)];
    const auto proj = try_project_camera(pose.to_camera(world_points[static_cast<std::size_t>(obs.point)]),
                                         pose.intrinsics());
    if (!proj) continue;
    cost += obs.weight * huber((proj->uv - obs.uv).squaredNorm(), huber_delta);
  }
  return cost;
}

RmseResult reprojection_rmse(std::span<const CameraPose> poses, std::span<const Vec3> world_points,
                             std::span<const Observation> observations) {
  double num = 0.0;
  double den = 0.0;
  for (const Observation& obs : observations) {
    if (obs.weight == 0.0) continue;
    const CameraPose& pose = poses[static_cast<std::size_t>(obs.frame)];
    const auto proj = try_project_camera(pose.to_camera(world_points[static_cast<std::size_t>(obs.point)]),
                                         pose.intrinsics());
    if (!proj) continue;
    num += obs.weight * (proj->uv - obs.uv).squaredNorm();
    den += obs.weight;
  }
  if (!(den > 0.0)) return {0.0, false};
  return {std::sqrt(num / den), true};
}

BAResult solve_ba(const BAProblem& problem) {
  validate(problem);
  const BAOptions& opt = problem.options;
  const auto frames = static_cast<int>(problem.initial_poses.size());
  const int block = opt.optimize_focal ? 7 : 6;

  std::vector<int> good_obs(static_cast<std::size_t>(frames), 0);
  double total_weight = 0.0;
  for (const Observation& obs : problem.observations) {
    if (obs.weight > kMinObservationWeight) ++good_obs[static_cast<std::size_t>(obs.frame)];
    total_weight += obs.weight;
  }

  BAResult result{problem.initial_poses, {}};
  BAReport& report = result.report;
  std::vector<int> param_index(static_cast<std::size_t>(frames), -1);
  int active = 0;
  for (int t = 0; t < frames; ++t) {
    if (t == 0 || good_obs[static_cast<std::size_t>(t)] < kMinObservationsPerFrame) {
      report.frozen_frames.push_back(t);
    } else {
      param_index[static_cast<std::size_t>(t)] = active++;
    }
  }
  if (active == 0) throw Error(ErrorCode::kInsufficientObservations, "every frame is frozen");

  std::vector<CameraPose>& poses = result.poses;
  double cost = robust_cost(poses, problem.world_points, problem.observations, opt.huber_delta);
  if (!std::isfinite(cost)) throw Error(ErrorCode::kNumericalFailure, "initial cost is not finite");
  report.cost_history.push_back(cost);
  report.initial_rmse = reprojection_rmse(poses, problem.world_points, problem.observations).rmse;

  // Already at the optimum to working precision.
  const double floor_cost = 1e-28 * std::max(total_weight, 1.0);
  const int dim = active * block;
  double damping = opt.initial_damping;

  while (cost > floor_cost && report.iterations_used < opt.max_iterations) {
    Eigen::MatrixXd hessian = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd gradient = Eigen::VectorXd::Zero(dim);
    for (const Observation& obs : problem.observations) {
      if (obs.weight == 0.0) continue;
      const int p = param_index[static_cast<std::size_t>(obs.frame)];
      if (p < 0) continue;
      const auto lin = ba_detail::linearize(poses[static_cast<std::size_t>(obs.frame)],
                                            problem.world_points[static_cast<std::size_t>(obs.point)], obs.uv);
      if (!lin.valid) continue;
      const double w = obs.weight * huber_weight(lin.residual.squaredNorm(), opt.huber_delta);
      const auto j = lin.jacobian.leftCols(block);
      hessian.block(p * block, p * block, block, block).noalias() += w * j.transpose() * j;
      gradient.segment(p * block, block).noalias() += w * j.transpose() * lin.residual;
    }

    ++report.iterations_used;
    Eigen::MatrixXd damped = hessian;
    for (int k = 0; k < dim; ++k) damped(k, k) += damping * std::max(hessian(k, k), 1e-12);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
    const Eigen::VectorXd step = ldlt.solve(-gradient);
    if (ldlt.info() != Eigen::Success || !step.allFinite())
      throw Error(ErrorCode::kNumericalFailure, "normal equations could not be solved");

    std::vector<CameraPose> candidate = poses;
    bool feasible = true;
    for (int t = 0; t < frames && feasible; ++t) {
      const int p = param_index[static_cast<std::size_t>(t)];
      if (p < 0) continue;
      ba_detail::PoseDelta delta = ba_detail::PoseDelta::Zero();
      delta.head(block) = step.segment(p * block, block);
      const CameraPose& current = poses[static_cast<std::size_t>(t)];
      if (!(current.focal() + delta(6) > 0.0)) feasible = false;
      else candidate[static_cast<std::size_t>(t)] = ba_detail::retract(current, delta);
    }
    const double new_cost = feasible
        ? robust_cost(candidate, problem.world_points, problem.observations, opt.huber_delta)
        : std::numeric_limits<double>::infinity();
    if (feasible && !std::isfinite(new_cost)) throw Error(ErrorCode::kNumericalFailure, "cost became non-finite");

    if (new_cost < cost) {
      const double relative = (cost - new_cost) / cost;
      poses = std::move(candidate);
      cost = new_cost;
      report.cost_history.push_back(cost);
      ++report.accepted_steps;
      damping = std::max(damping * opt.damping_down, 1e-15);
      if (relative < opt.convergence_tol) break;
    } else {
      damping *= opt.damping_up;
      if (damping > 1e12) break;
    }
  }

  report.final_rmse = reprojection_rmse(poses, problem.world_points, problem.observations).rmse;
  return result;
}

}  // namespace jm
