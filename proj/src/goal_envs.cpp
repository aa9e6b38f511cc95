#include "moc2her/goal_envs.hpp"

#include <algorithm>
#include <cmath>

#include "moc2her/contract.hpp"

namespace moc2her {

namespace {

constexpr double kStepSize = 0.05;
constexpr double kContactRadius = 0.06;
constexpr int kHorizon = 50;

VectorXd clamp_unit_box(VectorXd v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = std::clamp(v[i], 0.0, 1.0);
  return v;
}

VectorXd clamp_action(const VectorXd& a, int dim) {
  require(a.size() == dim, "env_step: action dimension mismatch");
  VectorXd c(dim);
  for (int i = 0; i < dim; ++i) c[i] = std::clamp(a[i], -1.0, 1.0);
  return c;
}

VectorXd draw_point(Rng& rng) {
  VectorXd p(2);
  p[0] = rng.uniform();
  p[1] = rng.uniform();
  return p;
}

}  // namespace

double compute_sparse_reward(const VectorXd& achieved, const VectorXd& desired,
                             double epsilon) {
  require(achieved.size() == desired.size(),
          "compute_sparse_reward: goal dimension mismatch");
  return (achieved - desired).norm() < epsilon ? 0.0 : -1.0;
}

VectorXd substitute_object_position(const VectorXd& state,
                                    const VectorXd& new_pos,
                                    const EnvDescriptor& desc) {
  require(desc.has_object,
          "substitute_object_position: descriptor has no object");
  require(state.size() == desc.state_dim &&
              new_pos.size() == desc.object_pos_indices.size(),
          "substitute_object_position: size mismatch");
  VectorXd out = state;
  out.segment(desc.object_pos_indices.begin, new_pos.size()) = new_pos;
  return out;
}

std::pair<VectorXd, std::optional<VectorXd>> extract_positions(
    const VectorXd& state, const EnvDescriptor& desc) {
  require(state.size() == desc.state_dim,
          "extract_positions: state length mismatch");
  VectorXd agent = state.segment(desc.agent_pos_indices.begin,
                                 desc.agent_pos_indices.size());
  if (!desc.has_object) return {agent, std::nullopt};
  VectorXd object = state.segment(desc.object_pos_indices.begin,
                                  desc.object_pos_indices.size());
  return {agent, object};
}

PointReachEnv::PointReachEnv() {
  desc_.id = "point-reach";
  desc_.state_dim = 4;
  desc_.goal_dim = 2;
  desc_.action_dim = 2;
  desc_.has_object = false;
  desc_.agent_pos_indices = {0, 2};
  desc_.epsilon_reward = 0.05;
  desc_.epsilon_success = 0.05;
  desc_.horizon = kHorizon;
  agent_ = VectorXd::Constant(2, 0.5);
  last_action_ = VectorXd::Zero(2);
  goal_ = VectorXd::Constant(2, 0.5);
}

GoalObservation PointReachEnv::observe() const {
  GoalObservation obs;
  obs.state.resize(4);
  obs.state << agent_, last_action_;
  obs.achieved_goal = agent_;
  obs.desired_goal = goal_;
  return obs;
}

GoalObservation PointReachEnv::reset(Rng& rng) {
  agent_ = draw_point(rng);
  goal_ = draw_point(rng);
  last_action_ = VectorXd::Zero(2);
  step_count_ = 0;
  return observe();
}

StepResult PointReachEnv::step(const VectorXd& action) {
  require(step_count_ < desc_.horizon, "env_step: episode past horizon");
  const VectorXd a = clamp_action(action, desc_.action_dim);
  agent_ = clamp_unit_box(agent_ + kStepSize * a);
  last_action_ = a;
  step_count_ += 1;
  StepResult result;
  result.observation = observe();
  result.reward = compute_sparse_reward(agent_, goal_, desc_.epsilon_reward);
  result.is_success = (agent_ - goal_).norm() < desc_.epsilon_success;
  return result;
}

PointPushEnv::PointPushEnv(Rng& construction_rng) {
  desc_.id = "point-push";
  desc_.state_dim = 6;
  desc_.goal_dim = 2;
  desc_.action_dim = 2;
  desc_.has_object = true;
  desc_.agent_pos_indices = {0, 2};
  desc_.object_pos_indices = {2, 4};
  desc_.epsilon_reward = 0.05;
  desc_.epsilon_success = 0.07;
  desc_.horizon = kHorizon;
  object_start_ = draw_point(construction_rng);
  agent_ = VectorXd::Constant(2, 0.5);
  object_ = object_start_;
  goal_ = VectorXd::Constant(2, 0.5);
}

GoalObservation PointPushEnv::observe() const {
  GoalObservation obs;
  obs.state.resize(6);
  obs.state << agent_, object_, agent_ - object_;
  obs.achieved_goal = object_;
  obs.desired_goal = goal_;
  return obs;
}

GoalObservation PointPushEnv::reset(Rng& rng) {
  agent_ = draw_point(rng);
  goal_ = draw_point(rng);
  object_ = object_start_;
  step_count_ = 0;
  return observe();
}

StepResult PointPushEnv::step(const VectorXd& action) {
  require(step_count_ < desc_.horizon, "env_step: episode past horizon");
  const VectorXd a = clamp_action(action, desc_.action_dim);
  const bool contact = (agent_ - object_).norm() < kContactRadius;
  const VectorXd before = agent_;
  agent_ = clamp_unit_box(agent_ + kStepSize * a);
  if (contact) {
    // The object follows the agent's realized displacement, so contact made
    // at a wall is preserved rather than pushed through it.
    object_ = clamp_unit_box(object_ + (agent_ - before));
  }
  step_count_ += 1;
  StepResult result;
  result.observation = observe();
  result.reward = compute_sparse_reward(object_, goal_, desc_.epsilon_reward);
  result.is_success = (object_ - goal_).norm() < desc_.epsilon_success;
  return result;
}

std::unique_ptr<GoalEnv> make_env(const std::string& id,
                                  Rng& construction_rng) {
  if (id == "point-reach") return std::make_unique<PointReachEnv>();
  if (id == "point-push") return std::make_unique<PointPushEnv>(construction_rng);
  throw ContractViolation("make_env: unknown environment id '" + id + "'");
}

}  // namespace moc2her
