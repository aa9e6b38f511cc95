#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "moc2her/rng.hpp"

namespace moc2her {

using Eigen::VectorXd;

// Multi-goal observation: the env state never embeds the desired goal; the
// agent concatenates it at the network boundary.
struct GoalObservation {
  VectorXd state;
  VectorXd achieved_goal;
  VectorXd desired_goal;
};

struct IndexRange {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
};

struct EnvDescriptor {
  std::string id;
  int state_dim = 0;
  int goal_dim = 0;
  int action_dim = 0;
  bool has_object = false;
  IndexRange agent_pos_indices;
  IndexRange object_pos_indices;  // meaningful only when has_object
  double epsilon_reward = 0.0;
  double epsilon_success = 0.0;
  int horizon = 0;
};

struct StepResult {
  GoalObservation observation;
  double reward = 0.0;  // in {0, -1}
  bool is_success = false;
};

// 0 iff the Euclidean distance is strictly below epsilon, else -1.
double compute_sparse_reward(const VectorXd& achieved, const VectorXd& desired,
                             double epsilon);

// Copy of state with only the object-position slice overwritten. Derived
// features computed from the object position are deliberately left stale.
VectorXd substitute_object_position(const VectorXd& state,
                                    const VectorXd& new_pos,
                                    const EnvDescriptor& desc);

std::pair<VectorXd, std::optional<VectorXd>> extract_positions(
    const VectorXd& state, const EnvDescriptor& desc);

class GoalEnv {
 public:
  virtual ~GoalEnv() = default;
  virtual const EnvDescriptor& descriptor() const = 0;
  // Re-draws agent position and desired goal uniformly over the workspace.
  virtual GoalObservation reset(Rng& rng) = 0;
  // Clamps the action to [-1,1]^d internally. Episodes run exactly horizon
  // steps; stepping further is a contract violation.
  virtual StepResult step(const VectorXd& action) = 0;
  virtual VectorXd agent_position() const = 0;
  virtual int steps_taken() const = 0;
};

// Point mass on the unit square reaching a goal position.
// State layout: [agent(2), last_clamped_action(2)].
class PointReachEnv : public GoalEnv {
 public:
  PointReachEnv();
  const EnvDescriptor& descriptor() const override { return desc_; }
  GoalObservation reset(Rng& rng) override;
  StepResult step(const VectorXd& action) override;
  VectorXd agent_position() const override { return agent_; }
  int steps_taken() const override { return step_count_; }

 private:
  GoalObservation observe() const;
  EnvDescriptor desc_;
  VectorXd agent_;
  VectorXd last_action_;
  VectorXd goal_;
  int step_count_ = 0;
};

// Point mass dragging a contact-coupled object to a goal position.
// State layout: [agent(2), object(2), agent-object(2)]. The object start is
// drawn once at construction and reused on every reset.
class PointPushEnv : public GoalEnv {
 public:
  explicit PointPushEnv(Rng& construction_rng);
  const EnvDescriptor& descriptor() const override { return desc_; }
  GoalObservation reset(Rng& rng) override;
  StepResult step(const VectorXd& action) override;
  VectorXd agent_position() const override { return agent_; }
  int steps_taken() const override { return step_count_; }
  VectorXd object_start() const { return object_start_; }

 private:
  GoalObservation observe() const;
  EnvDescriptor desc_;
  VectorXd object_start_;
  VectorXd agent_;
  VectorXd object_;
  VectorXd goal_;
  int step_count_ = 0;
};

// ids: "point-reach", "point-push". Unknown id is a contract violation.
std::unique_ptr<GoalEnv> make_env(const std::string& id,
                                  Rng& construction_rng);

}  // namespace moc2her
