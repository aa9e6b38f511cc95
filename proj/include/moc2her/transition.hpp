#pragma once

#include <Eigen/Dense>
#include <vector>

namespace moc2her {

using Eigen::VectorXd;

enum class Origin { real, her, her2 };

// One environment step, stored with everything relabeling and the update
// rules need. state_in/state_next are goal-concatenated; raw_state and
// raw_state_next are the bare env states kept for relabeling.
struct Transition {
  VectorXd state_in;
  int option = 0;
  VectorXd action;  // pre-clamp policy sample; its log density is behavior_logp
  double behavior_logp = 0.0;
  double reward = 0.0;
  VectorXd state_next;
  int prev_option = 0;
  int next_option = 0;
  VectorXd raw_state;
  VectorXd raw_state_next;
  VectorXd achieved_goal;
  VectorXd achieved_goal_next;
  VectorXd agent_pos_next;
  Origin origin = Origin::real;
};

struct Trajectory {
  std::vector<Transition> steps;
  bool success = false;
  double episode_return = 0.0;
};

}  // namespace moc2her
