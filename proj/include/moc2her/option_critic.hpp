#pragma once

#include <limits>
#include <utility>
#include <vector>

#include "moc2her/diffnet.hpp"
#include "moc2her/goal_envs.hpp"
#include "moc2her/rng.hpp"
#include "moc2her/transition.hpp"

namespace moc2her {

inline constexpr int kHiddenUnits = 64;
inline constexpr double kGradClipNorm = 5.0;

// Four heads over a shared input layout (state with the goal concatenated):
// mu (option logits), beta (termination logits), q (per-option values), and
// one Gaussian policy per option (mean net plus free per-dim log stds).
struct AgentParams {
  int n_options = 0;
  int input_dim = 0;
  int action_dim = 0;
  Mlp mu;
  Mlp beta;
  Mlp q;
  std::vector<Mlp> pi;
  std::vector<VectorXd> log_std;

  // Head init order is fixed (mu, beta, q, pi[0..n)) so a seed fully
  // determines the parameters.
  static AgentParams make(int input_dim, int action_dim, int n_options,
                          Rng& rng);
};

// Parameter-group views, one group per head family. Gradient clipping and
// optimizer state operate per group.
std::vector<TensorView> theta_views(AgentParams& p);  // q
std::vector<TensorView> zeta_views(AgentParams& p);   // pi nets + log_stds
std::vector<TensorView> nu_views(AgentParams& p);     // beta
std::vector<TensorView> z_views(AgentParams& p);      // mu

struct AgentOptimizers {
  OptimizerState theta, zeta, nu, z;
  static AgentOptimizers make(AgentParams& p);
};

int select_option(const AgentParams& p, const VectorXd& s, Rng& rng);

struct ActionSample {
  VectorXd action;  // execution action, clamped to [-1,1]
  VectorXd raw;     // pre-clamp Gaussian sample; behavior_logp scores this
  double logp = 0.0;
};
ActionSample select_action(const AgentParams& p, const VectorXd& s, int o,
                           Rng& rng);

VectorXd option_probs(const AgentParams& p, const VectorXd& s);
VectorXd option_values(const AgentParams& p, const VectorXd& s);
double termination_prob(const AgentParams& p, const VectorXd& s, int o);
// V(s) = sum_o mu(o|s) Q(s,o)
double state_value(const AgentParams& p, const VectorXd& s);

// One-step option occupancy: (1-beta(s,o_bar)) 1[o_tilde==o_bar]
//                            + beta(s,o_bar) mu(o_tilde|s).
double option_transition_prob(const AgentParams& p, int o_tilde,
                              const VectorXd& s, int o_bar);

// target = r + gamma [(1-beta(s',o~)) Q(s',o~) + beta(s',o~) V(s')],
// rho = min(exp(logpi(a|s,o~) - behavior_logp), rho_max).
std::pair<double, double> td_target(const AgentParams& p, const Transition& tr,
                                    int o_tilde, double gamma, double rho_max);

// Column-major minibatch staging: column i is transition i.
struct Batch {
  MatrixXd s_in, s_next;
  MatrixXd actions;
  VectorXd rewards, behavior_logp;
  std::vector<int> option, prev_option, next_option;
  int size() const { return static_cast<int>(option.size()); }
  static Batch from(const std::vector<Transition>& transitions);
};

// Every update freezes its auxiliary quantities (targets, weights,
// advantages) from the parameters at entry; the loss is then a pure function
// of the live head, which keeps gradients finite-difference exact.

struct EvalAux {
  MatrixXd weight;  // occupancy * clipped importance ratio, n x B
  MatrixXd target;  // n x B
};
EvalAux compute_eval_aux(const AgentParams& p, const Batch& b, double gamma,
                         double rho_max, bool single_option);
double evaluation_loss(const AgentParams& p, const Batch& b,
                       const EvalAux& aux);
void evaluation_grad(const AgentParams& p, const Batch& b, const EvalAux& aux,
                     Mlp& q_grads);
void evaluation_step(AgentParams& p, AgentOptimizers& opt,
                     const std::vector<Transition>& batch, double gamma,
                     double alpha, double rho_max, bool single_option = false);

struct ImproveAux {
  MatrixXd weight;     // occupancy (or executed-option indicator), n x B
  MatrixXd advantage;  // n x B, frozen
  double entropy_coef = 0.0;
};
ImproveAux compute_improve_aux(const AgentParams& p, const Batch& b,
                               double gamma, double rho_max,
                               double entropy_coef, bool single_option,
                               bool raw_q_advantage);
double improvement_loss(const AgentParams& p, const Batch& b,
                        const ImproveAux& aux);
void improvement_grad(const AgentParams& p, const Batch& b,
                      const ImproveAux& aux, std::vector<Mlp>& pi_grads,
                      std::vector<VectorXd>& log_std_grads);
// log_std_floor projects each option's log-deviation upward after the
// optimizer step; -inf disables it. A floor keeps behavior stochastic when
// repeated data reuse would otherwise collapse the exploration noise.
// pi_gain_cap bounds each option's average mean-action norm over the
// minibatch by uniformly rescaling its output layer after the step; 0
// disables it. Executed actions are clamped to the unit box, so mean fields
// beyond that scale are observationally equivalent yet keep drifting outward
// (no restoring gradient); the rescale pins the policy inside the
// identifiable region while preserving the field's direction structure.
void improvement_step(AgentParams& p, AgentOptimizers& opt,
                      const std::vector<Transition>& batch, double gamma,
                      double alpha_zeta, double entropy_coef, double rho_max,
                      bool single_option = false, bool raw_q_advantage = false,
                      double log_std_floor =
                          -std::numeric_limits<double>::infinity(),
                      double pi_gain_cap = 0.0);

struct TermAux {
  VectorXd advantage;  // Q(s', o_executed) - V(s') per sample, frozen
};
TermAux compute_term_aux(const AgentParams& p, const Batch& b);
double termination_loss(const AgentParams& p, const Batch& b,
                        const TermAux& aux);
void termination_grad(const AgentParams& p, const Batch& b, const TermAux& aux,
                      Mlp& beta_grads);
void termination_update(AgentParams& p, AgentOptimizers& opt,
                        const std::vector<Transition>& batch, double alpha_nu);

struct MetaAux {
  VectorXd coeff;  // beta(s', o_executed) * Q(s', o_next) per sample, frozen
};
MetaAux compute_meta_aux(const AgentParams& p, const Batch& b);
double meta_loss(const AgentParams& p, const Batch& b, const MetaAux& aux);
void meta_grad(const AgentParams& p, const Batch& b, const MetaAux& aux,
               Mlp& mu_grads);
void meta_policy_update(AgentParams& p, AgentOptimizers& opt,
                        const std::vector<Transition>& batch, double alpha_z);

// Runs steps/horizon full episodes. Options persist until a sampled
// termination triggers re-selection through mu. The recorded next_option is
// the option acting at t+1; for the last step of an episode it is a fresh
// draw from mu(.|s'). Per-step rng order: action dims, then termination,
// then (on termination or final step) one option draw.
std::vector<Trajectory> collect_iteration(const AgentParams& p, GoalEnv& env,
                                          Rng& env_rng, Rng& agent_rng,
                                          int steps_per_iteration);

}  // namespace moc2her
