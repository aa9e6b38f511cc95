#include "moc2her/hindsight.hpp"

#include <utility>

#include "moc2her/contract.hpp"

namespace moc2her {

int k_schedule(int iteration, const HindsightConfig& cfg) {
  require(iteration >= 0, "k_schedule: negative iteration");
  if (cfg.k_decay_interval <= 0) return cfg.k0;
  const int k = cfg.k0 - iteration / cfg.k_decay_interval;
  return k > 0 ? k : 0;
}

bool two_objective_active(int iteration, const HindsightConfig& cfg) {
  require(iteration >= 0, "two_objective_active: negative iteration");
  return cfg.disable_2her_at < 0 || iteration < cfg.disable_2her_at;
}

bool displacement_filter(const Trajectory& traj, double delta,
                         const EnvDescriptor& desc) {
  if (!desc.has_object) return true;
  require(!traj.steps.empty(), "displacement_filter: empty trajectory");
  const auto [a0, obj0] = extract_positions(traj.steps.front().raw_state, desc);
  const auto [aT, objT] =
      extract_positions(traj.steps.back().raw_state_next, desc);
  return (*objT - *obj0).norm() > delta;
}

std::vector<int> sample_future_indices(int t, int T, int k, Rng& rng) {
  require(t >= 0 && t < T, "sample_future_indices: need 0 <= t < T");
  require(k >= 0, "sample_future_indices: negative k");
  std::vector<int> out(k);
  for (int i = 0; i < k; ++i) out[i] = rng.uniform_int(t + 1, T);
  return out;
}

std::vector<int> sample_goal_indices(GoalStrategy strategy, int t, int T,
                                     int k, Rng& rng) {
  require(t >= 0 && t < T, "sample_goal_indices: need 0 <= t < T");
  require(k >= 0, "sample_goal_indices: negative k");
  std::vector<int> out(k);
  switch (strategy) {
    case GoalStrategy::final_state:
      for (int i = 0; i < k; ++i) out[i] = T;
      break;
    case GoalStrategy::future:
      return sample_future_indices(t, T, k, rng);
    case GoalStrategy::episode:
      for (int i = 0; i < k; ++i) out[i] = rng.uniform_int(1, T);
      break;
  }
  return out;
}

namespace {

// achieved goal of state s_j, j in {1, ..., T}
const VectorXd& achieved_at(const Trajectory& traj, int j) {
  return traj.steps[j - 1].achieved_goal_next;
}

// agent position at state s_j
const VectorXd& agent_at(const Trajectory& traj, int j) {
  return traj.steps[j - 1].agent_pos_next;
}

VectorXd concat_goal(const VectorXd& raw, const VectorXd& goal) {
  VectorXd out(raw.size() + goal.size());
  out << raw, goal;
  return out;
}

}  // namespace

std::vector<Transition> relabel_her(const Trajectory& traj,
                                    const HindsightConfig& cfg, int k,
                                    const RewardFn& reward_fn,
                                    const EnvDescriptor& desc, Rng& rng) {
  const int T = static_cast<int>(traj.steps.size());
  require(T > 0, "relabel_her: empty trajectory");
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(T) * static_cast<std::size_t>(k));
  for (int t = 0; t < T; ++t) {
    const Transition& src = traj.steps[t];
    const std::vector<int> goals =
        sample_goal_indices(cfg.strategy, t, T, k, rng);
    for (int j : goals) {
      const VectorXd& g = achieved_at(traj, j);
      Transition r = src;
      r.state_in = concat_goal(src.raw_state, g);
      r.state_next = concat_goal(src.raw_state_next, g);
      r.reward = reward_fn(src.achieved_goal_next, g);
      r.origin = Origin::her;
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<Transition> relabel_2her(const Trajectory& traj,
                                     const HindsightConfig& cfg, int k,
                                     const RewardFn& reward_fn,
                                     const EnvDescriptor& desc, Rng& rng) {
  if (!desc.has_object) return relabel_her(traj, cfg, k, reward_fn, desc, rng);
  const int T = static_cast<int>(traj.steps.size());
  require(T > 0, "relabel_2her: empty trajectory");
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(T) * static_cast<std::size_t>(k));
  for (int t = 0; t < T; ++t) {
    const Transition& src = traj.steps[t];
    const std::vector<int> goals =
        sample_goal_indices(cfg.strategy, t, T, k, rng);
    const std::vector<int> objects =
        sample_goal_indices(cfg.strategy, t, T, k, rng);
    if (cfg.split_2her_sets) {
      // Two-set mode: a plain goal-relabeled transition rewarded by the goal
      // term alone accompanies each combined transition below.
      for (int i = 0; i < k; ++i) {
        const VectorXd& g = achieved_at(traj, goals[i]);
        Transition r = src;
        r.state_in = concat_goal(src.raw_state, g);
        r.state_next = concat_goal(src.raw_state_next, g);
        r.reward = reward_fn(src.achieved_goal_next, g);
        r.origin = Origin::her;
        out.push_back(std::move(r));
      }
    }
    for (int i = 0; i < k; ++i) {
      const VectorXd& g = achieved_at(traj, goals[i]);
      const VectorXd& obj_pos = agent_at(traj, objects[i]);
      Transition r = src;
      r.raw_state_next =
          substitute_object_position(src.raw_state_next, obj_pos, desc);
      r.state_in = concat_goal(src.raw_state, g);
      r.state_next = concat_goal(r.raw_state_next, g);
      const double r_goal = reward_fn(src.achieved_goal_next, g);
      const double r_obj = reward_fn(src.agent_pos_next, obj_pos);
      r.reward = (1.0 - cfg.c_r) * r_goal + cfg.c_r * r_obj;
      r.origin = Origin::her2;
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<std::vector<Transition>> merge_shuffle_partition(
    std::vector<Transition> real, std::vector<Transition> relabeled,
    int minibatch_size, Rng& rng) {
  require(minibatch_size >= 1, "merge_shuffle_partition: minibatch_size < 1");
  std::vector<Transition> pool = std::move(real);
  pool.insert(pool.end(), std::make_move_iterator(relabeled.begin()),
              std::make_move_iterator(relabeled.end()));
  shuffle(pool, rng);
  std::vector<std::vector<Transition>> batches;
  for (std::size_t start = 0; start < pool.size();
       start += static_cast<std::size_t>(minibatch_size)) {
    const std::size_t stop =
        std::min(pool.size(), start + static_cast<std::size_t>(minibatch_size));
    batches.emplace_back(std::make_move_iterator(pool.begin() + start),
                         std::make_move_iterator(pool.begin() + stop));
  }
  return batches;
}

}  // namespace moc2her
