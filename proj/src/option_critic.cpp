#include "moc2her/option_critic.hpp"

#include <cmath>

#include "moc2her/contract.hpp"

namespace moc2her {

namespace {

MatrixXd sigmoid_matrix(const MatrixXd& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

// Column i gets the log density of actions.col(i) under N(mean.col(i), sigma).
VectorXd batched_gaussian_logp(const MatrixXd& mean, const VectorXd& log_std,
                               const MatrixXd& actions) {
  const Eigen::ArrayXd inv_std = (-log_std.array()).exp();
  const Eigen::ArrayXXd z =
      (actions - mean).array().colwise() * inv_std;
  VectorXd logp = (-0.5 * z.square()).colwise().sum();
  const double shift =
      log_std.sum() +
      0.5 * std::log(2.0 * M_PI) * static_cast<double>(log_std.size());
  logp.array() -= shift;
  return logp;
}

// r + gamma [(1-beta) Q + beta V] per (option, transition), all heads frozen.
MatrixXd compute_targets(const AgentParams& p, const Batch& b, double gamma) {
  const MatrixXd mu_next = softmax_columns(mlp_forward(p.mu, b.s_next));
  const MatrixXd q_next = mlp_forward(p.q, b.s_next);
  const MatrixXd beta_next = sigmoid_matrix(mlp_forward(p.beta, b.s_next));
  MatrixXd target(p.n_options, b.size());
  for (int i = 0; i < b.size(); ++i) {
    const double v = mu_next.col(i).dot(q_next.col(i));
    for (int o = 0; o < p.n_options; ++o) {
      const double bo = beta_next(o, i);
      target(o, i) =
          b.rewards[i] + gamma * ((1.0 - bo) * q_next(o, i) + bo * v);
    }
  }
  return target;
}

// p(o_tilde | s_in, prev_option) per column.
MatrixXd compute_occupancy(const AgentParams& p, const Batch& b) {
  const MatrixXd mu_in = softmax_columns(mlp_forward(p.mu, b.s_in));
  const MatrixXd beta_in = sigmoid_matrix(mlp_forward(p.beta, b.s_in));
  MatrixXd occ(p.n_options, b.size());
  for (int i = 0; i < b.size(); ++i) {
    const int bar = b.prev_option[i];
    const double bi = beta_in(bar, i);
    occ.col(i) = bi * mu_in.col(i);
    occ(bar, i) += 1.0 - bi;
  }
  return occ;
}

MatrixXd compute_rho(const AgentParams& p, const Batch& b, double rho_max) {
  MatrixXd rho(p.n_options, b.size());
  for (int o = 0; o < p.n_options; ++o) {
    const MatrixXd mean = mlp_forward(p.pi[o], b.s_in);
    const VectorXd logp = batched_gaussian_logp(mean, p.log_std[o], b.actions);
    for (int i = 0; i < b.size(); ++i)
      rho(o, i) = std::min(std::exp(logp[i] - b.behavior_logp[i]), rho_max);
  }
  return rho;
}

}  // namespace

AgentParams AgentParams::make(int input_dim, int action_dim, int n_options,
                              Rng& rng) {
  require(input_dim > 0 && action_dim > 0 && n_options >= 1,
          "AgentParams: bad dimensions");
  AgentParams p;
  p.n_options = n_options;
  p.input_dim = input_dim;
  p.action_dim = action_dim;
  p.mu = Mlp::make(input_dim, kHiddenUnits, n_options, rng);
  p.beta = Mlp::make(input_dim, kHiddenUnits, n_options, rng);
  p.q = Mlp::make(input_dim, kHiddenUnits, n_options, rng);
  p.pi.reserve(n_options);
  for (int o = 0; o < n_options; ++o)
    p.pi.push_back(Mlp::make(input_dim, kHiddenUnits, action_dim, rng));
  p.log_std.assign(n_options, VectorXd::Zero(action_dim));
  return p;
}

std::vector<TensorView> theta_views(AgentParams& p) { return views(p.q); }

std::vector<TensorView> zeta_views(AgentParams& p) {
  std::vector<TensorView> out;
  for (auto& net : p.pi)
    for (auto v : views(net)) out.push_back(v);
  for (auto& ls : p.log_std) out.push_back(view(ls));
  return out;
}

std::vector<TensorView> nu_views(AgentParams& p) { return views(p.beta); }

std::vector<TensorView> z_views(AgentParams& p) { return views(p.mu); }

AgentOptimizers AgentOptimizers::make(AgentParams& p) {
  AgentOptimizers opt;
  opt.theta = make_optimizer_state(theta_views(p));
  opt.zeta = make_optimizer_state(zeta_views(p));
  opt.nu = make_optimizer_state(nu_views(p));
  opt.z = make_optimizer_state(z_views(p));
  return opt;
}

int select_option(const AgentParams& p, const VectorXd& s, Rng& rng) {
  const VectorXd probs = option_probs(p, s);
  const double u = rng.uniform();
  double cum = 0.0;
  for (int o = 0; o < p.n_options; ++o) {
    cum += probs[o];
    if (u < cum) return o;
  }
  return p.n_options - 1;
}

ActionSample select_action(const AgentParams& p, const VectorXd& s, int o,
                           Rng& rng) {
  require(o >= 0 && o < p.n_options, "select_action: option out of range");
  const VectorXd mean = mlp_forward(p.pi[o], s);
  ActionSample out;
  out.raw.resize(p.action_dim);
  for (int d = 0; d < p.action_dim; ++d)
    out.raw[d] = mean[d] + std::exp(p.log_std[o][d]) * rng.normal();
  out.logp = gaussian_log_prob(mean, p.log_std[o], out.raw);
  out.action = out.raw.cwiseMax(-1.0).cwiseMin(1.0);
  return out;
}

VectorXd option_probs(const AgentParams& p, const VectorXd& s) {
  return softmax(mlp_forward(p.mu, s));
}

VectorXd option_values(const AgentParams& p, const VectorXd& s) {
  return mlp_forward(p.q, s);
}

double termination_prob(const AgentParams& p, const VectorXd& s, int o) {
  require(o >= 0 && o < p.n_options, "termination_prob: option out of range");
  return sigmoid(mlp_forward(p.beta, s)[o]);
}

double state_value(const AgentParams& p, const VectorXd& s) {
  return option_probs(p, s).dot(option_values(p, s));
}

double option_transition_prob(const AgentParams& p, int o_tilde,
                              const VectorXd& s, int o_bar) {
  require(o_tilde >= 0 && o_tilde < p.n_options && o_bar >= 0 &&
              o_bar < p.n_options,
          "option_transition_prob: option out of range");
  const double term = termination_prob(p, s, o_bar);
  const double stay = o_tilde == o_bar ? 1.0 - term : 0.0;
  return stay + term * option_probs(p, s)[o_tilde];
}

std::pair<double, double> td_target(const AgentParams& p, const Transition& tr,
                                    int o_tilde, double gamma,
                                    double rho_max) {
  require(gamma >= 0.0 && gamma < 1.0, "td_target: gamma outside [0,1)");
  const double beta_next = termination_prob(p, tr.state_next, o_tilde);
  const VectorXd q_next = option_values(p, tr.state_next);
  const double v_next = option_probs(p, tr.state_next).dot(q_next);
  const double target =
      tr.reward +
      gamma * ((1.0 - beta_next) * q_next[o_tilde] + beta_next * v_next);
  const VectorXd mean = mlp_forward(p.pi[o_tilde], tr.state_in);
  const double logp = gaussian_log_prob(mean, p.log_std[o_tilde], tr.action);
  const double rho = std::min(std::exp(logp - tr.behavior_logp), rho_max);
  return {target, rho};
}

Batch Batch::from(const std::vector<Transition>& transitions) {
  require(!transitions.empty(), "Batch: empty minibatch");
  const int B = static_cast<int>(transitions.size());
  const auto in_dim = transitions[0].state_in.size();
  const auto act_dim = transitions[0].action.size();
  Batch b;
  b.s_in.resize(in_dim, B);
  b.s_next.resize(in_dim, B);
  b.actions.resize(act_dim, B);
  b.rewards.resize(B);
  b.behavior_logp.resize(B);
  b.option.resize(B);
  b.prev_option.resize(B);
  b.next_option.resize(B);
  for (int i = 0; i < B; ++i) {
    const Transition& t = transitions[i];
    require(t.state_in.size() == in_dim && t.state_next.size() == in_dim,
            "Batch: inconsistent state dims");
    b.s_in.col(i) = t.state_in;
    b.s_next.col(i) = t.state_next;
    b.actions.col(i) = t.action;
    b.rewards[i] = t.reward;
    b.behavior_logp[i] = t.behavior_logp;
    b.option[i] = t.option;
    b.prev_option[i] = t.prev_option;
    b.next_option[i] = t.next_option;
  }
  return b;
}

EvalAux compute_eval_aux(const AgentParams& p, const Batch& b, double gamma,
                         double rho_max, bool single_option) {
  EvalAux aux;
  aux.target = compute_targets(p, b, gamma);
  const MatrixXd rho = compute_rho(p, b, rho_max);
  if (single_option) {
    aux.weight = MatrixXd::Zero(p.n_options, b.size());
    for (int i = 0; i < b.size(); ++i)
      aux.weight(b.option[i], i) = rho(b.option[i], i);
  } else {
    aux.weight = compute_occupancy(p, b).cwiseProduct(rho);
  }
  return aux;
}

double evaluation_loss(const AgentParams& p, const Batch& b,
                       const EvalAux& aux) {
  const MatrixXd q = mlp_forward(p.q, b.s_in);
  const MatrixXd err = aux.target - q;
  return (aux.weight.array() * err.array().square()).sum() /
         (2.0 * b.size());
}

void evaluation_grad(const AgentParams& p, const Batch& b, const EvalAux& aux,
                     Mlp& q_grads) {
  ForwardCache cache;
  const MatrixXd q = mlp_forward(p.q, b.s_in, &cache);
  const MatrixXd dq =
      aux.weight.cwiseProduct(q - aux.target) / static_cast<double>(b.size());
  mlp_backward(p.q, cache, dq, q_grads);
}

void evaluation_step(AgentParams& p, AgentOptimizers& opt,
                     const std::vector<Transition>& batch, double gamma,
                     double alpha, double rho_max, bool single_option) {
  require(!batch.empty(), "evaluation_step: empty minibatch");
  const Batch b = Batch::from(batch);
  const EvalAux aux = compute_eval_aux(p, b, gamma, rho_max, single_option);
  Mlp grads = Mlp::zeros_like(p.q);
  evaluation_grad(p, b, aux, grads);
  auto grad_views = views(grads);
  clip_global_norm(grad_views, kGradClipNorm);
  adam_update(theta_views(p), grad_views, opt.theta, alpha);
}

ImproveAux compute_improve_aux(const AgentParams& p, const Batch& b,
                               double gamma, double rho_max,
                               double entropy_coef, bool single_option,
                               bool raw_q_advantage) {
  (void)rho_max;
  ImproveAux aux;
  const MatrixXd target = compute_targets(p, b, gamma);
  if (raw_q_advantage) {
    aux.advantage = target;
  } else {
    aux.advantage = target - mlp_forward(p.q, b.s_in);
  }
  if (single_option) {
    aux.weight = MatrixXd::Zero(p.n_options, b.size());
    for (int i = 0; i < b.size(); ++i) aux.weight(b.option[i], i) = 1.0;
  } else {
    aux.weight = compute_occupancy(p, b);
  }
  aux.entropy_coef = entropy_coef;
  return aux;
}

double improvement_loss(const AgentParams& p, const Batch& b,
                        const ImproveAux& aux) {
  double objective = 0.0;
  for (int o = 0; o < p.n_options; ++o) {
    const MatrixXd mean = mlp_forward(p.pi[o], b.s_in);
    const VectorXd logp = batched_gaussian_logp(mean, p.log_std[o], b.actions);
    const double entropy = gaussian_entropy(p.log_std[o]);
    for (int i = 0; i < b.size(); ++i)
      objective += aux.weight(o, i) *
                   (logp[i] * aux.advantage(o, i) + aux.entropy_coef * entropy);
  }
  return -objective / static_cast<double>(b.size());
}

void improvement_grad(const AgentParams& p, const Batch& b,
                      const ImproveAux& aux, std::vector<Mlp>& pi_grads,
                      std::vector<VectorXd>& log_std_grads) {
  const double inv_b = 1.0 / static_cast<double>(b.size());
  for (int o = 0; o < p.n_options; ++o) {
    ForwardCache cache;
    const MatrixXd mean = mlp_forward(p.pi[o], b.s_in, &cache);
    const Eigen::ArrayXd inv_std = (-p.log_std[o].array()).exp();
    const Eigen::ArrayXXd diff = (b.actions - mean).array();
    MatrixXd dmean(p.action_dim, b.size());
    for (int i = 0; i < b.size(); ++i) {
      // coefficient of d logp / d param in the loss
      const double c = -aux.weight(o, i) * aux.advantage(o, i) * inv_b;
      const Eigen::ArrayXd z = diff.col(i) * inv_std;
      dmean.col(i) = c * (z * inv_std).matrix();
      log_std_grads[o].array() +=
          c * (z.square() - 1.0) -
          aux.weight(o, i) * aux.entropy_coef * inv_b;
    }
    mlp_backward(p.pi[o], cache, dmean, pi_grads[o]);
  }
}

void improvement_step(AgentParams& p, AgentOptimizers& opt,
                      const std::vector<Transition>& batch, double gamma,
                      double alpha_zeta, double entropy_coef, double rho_max,
                      bool single_option, bool raw_q_advantage,
                      double log_std_floor, double pi_gain_cap) {
  require(!batch.empty(), "improvement_step: empty minibatch");
  const Batch b = Batch::from(batch);
  const ImproveAux aux = compute_improve_aux(p, b, gamma, rho_max,
                                             entropy_coef, single_option,
                                             raw_q_advantage);
  std::vector<Mlp> pi_grads;
  std::vector<VectorXd> ls_grads;
  for (int o = 0; o < p.n_options; ++o) {
    pi_grads.push_back(Mlp::zeros_like(p.pi[o]));
    ls_grads.push_back(VectorXd::Zero(p.action_dim));
  }
  improvement_grad(p, b, aux, pi_grads, ls_grads);
  std::vector<TensorView> grad_views;
  for (auto& g : pi_grads)
    for (auto v : views(g)) grad_views.push_back(v);
  for (auto& g : ls_grads) grad_views.push_back(view(g));
  clip_global_norm(grad_views, kGradClipNorm);
  adam_update(zeta_views(p), grad_views, opt.zeta, alpha_zeta);
  if (pi_gain_cap > 0.0) {
    for (int o = 0; o < p.n_options; ++o) {
      const MatrixXd mean = mlp_forward(p.pi[o], b.s_in);
      const double gain = mean.colwise().norm().mean();
      if (gain > pi_gain_cap) {
        const double s = pi_gain_cap / gain;
        p.pi[o].out.w *= s;
        p.pi[o].out.b *= s;
      }
    }
  }
  if (std::isfinite(log_std_floor))
    for (int o = 0; o < p.n_options; ++o)
      p.log_std[o] = p.log_std[o].cwiseMax(log_std_floor);
}

TermAux compute_term_aux(const AgentParams& p, const Batch& b) {
  TermAux aux;
  const MatrixXd mu_next = softmax_columns(mlp_forward(p.mu, b.s_next));
  const MatrixXd q_next = mlp_forward(p.q, b.s_next);
  aux.advantage.resize(b.size());
  for (int i = 0; i < b.size(); ++i) {
    const double v = mu_next.col(i).dot(q_next.col(i));
    aux.advantage[i] = q_next(b.option[i], i) - v;
  }
  return aux;
}

double termination_loss(const AgentParams& p, const Batch& b,
                        const TermAux& aux) {
  const MatrixXd logits = mlp_forward(p.beta, b.s_next);
  double loss = 0.0;
  for (int i = 0; i < b.size(); ++i)
    loss += sigmoid(logits(b.option[i], i)) * aux.advantage[i];
  return loss / static_cast<double>(b.size());
}

void termination_grad(const AgentParams& p, const Batch& b, const TermAux& aux,
                      Mlp& beta_grads) {
  ForwardCache cache;
  const MatrixXd logits = mlp_forward(p.beta, b.s_next, &cache);
  MatrixXd dlogits = MatrixXd::Zero(p.n_options, b.size());
  const double inv_b = 1.0 / static_cast<double>(b.size());
  for (int i = 0; i < b.size(); ++i) {
    const double s = sigmoid(logits(b.option[i], i));
    dlogits(b.option[i], i) = inv_b * aux.advantage[i] * s * (1.0 - s);
  }
  mlp_backward(p.beta, cache, dlogits, beta_grads);
}

void termination_update(AgentParams& p, AgentOptimizers& opt,
                        const std::vector<Transition>& batch,
                        double alpha_nu) {
  require(!batch.empty(), "termination_update: empty minibatch");
  const Batch b = Batch::from(batch);
  const TermAux aux = compute_term_aux(p, b);
  Mlp grads = Mlp::zeros_like(p.beta);
  termination_grad(p, b, aux, grads);
  auto grad_views = views(grads);
  clip_global_norm(grad_views, kGradClipNorm);
  adam_update(nu_views(p), grad_views, opt.nu, alpha_nu);
}

MetaAux compute_meta_aux(const AgentParams& p, const Batch& b) {
  MetaAux aux;
  const MatrixXd beta_next = sigmoid_matrix(mlp_forward(p.beta, b.s_next));
  const MatrixXd q_next = mlp_forward(p.q, b.s_next);
  aux.coeff.resize(b.size());
  for (int i = 0; i < b.size(); ++i)
    aux.coeff[i] = beta_next(b.option[i], i) * q_next(b.next_option[i], i);
  return aux;
}

double meta_loss(const AgentParams& p, const Batch& b, const MetaAux& aux) {
  const MatrixXd probs = softmax_columns(mlp_forward(p.mu, b.s_next));
  double objective = 0.0;
  for (int i = 0; i < b.size(); ++i)
    objective += aux.coeff[i] * probs(b.next_option[i], i);
  return -objective / static_cast<double>(b.size());
}

void meta_grad(const AgentParams& p, const Batch& b, const MetaAux& aux,
               Mlp& mu_grads) {
  ForwardCache cache;
  const MatrixXd logits = mlp_forward(p.mu, b.s_next, &cache);
  const MatrixXd probs = softmax_columns(logits);
  MatrixXd dlogits(p.n_options, b.size());
  const double inv_b = 1.0 / static_cast<double>(b.size());
  for (int i = 0; i < b.size(); ++i) {
    const int star = b.next_option[i];
    const double c = aux.coeff[i] * probs(star, i) * inv_b;
    dlogits.col(i) = c * probs.col(i);
    dlogits(star, i) -= c;
  }
  mlp_backward(p.mu, cache, dlogits, mu_grads);
}

void meta_policy_update(AgentParams& p, AgentOptimizers& opt,
                        const std::vector<Transition>& batch, double alpha_z) {
  require(!batch.empty(), "meta_policy_update: empty minibatch");
  const Batch b = Batch::from(batch);
  const MetaAux aux = compute_meta_aux(p, b);
  Mlp grads = Mlp::zeros_like(p.mu);
  meta_grad(p, b, aux, grads);
  auto grad_views = views(grads);
  clip_global_norm(grad_views, kGradClipNorm);
  adam_update(z_views(p), grad_views, opt.z, alpha_z);
}

std::vector<Trajectory> collect_iteration(const AgentParams& p, GoalEnv& env,
                                          Rng& env_rng, Rng& agent_rng,
                                          int steps_per_iteration) {
  const int horizon = env.descriptor().horizon;
  require(steps_per_iteration > 0 && steps_per_iteration % horizon == 0,
          "collect_iteration: steps must be a positive multiple of horizon");
  const int episodes = steps_per_iteration / horizon;
  std::vector<Trajectory> out;
  out.reserve(episodes);
  for (int e = 0; e < episodes; ++e) {
    GoalObservation obs = env.reset(env_rng);
    const VectorXd goal = obs.desired_goal;
    VectorXd s(obs.state.size() + goal.size());
    s << obs.state, goal;
    int o = select_option(p, s, agent_rng);
    int prev = o;
    Trajectory traj;
    traj.steps.reserve(horizon);
    for (int t = 0; t < horizon; ++t) {
      const ActionSample a = select_action(p, s, o, agent_rng);
      const StepResult sr = env.step(a.action);
      VectorXd s_next(sr.observation.state.size() + goal.size());
      s_next << sr.observation.state, goal;

      Transition tr;
      tr.state_in = s;
      tr.option = o;
      tr.action = a.raw;
      tr.behavior_logp = a.logp;
      tr.reward = sr.reward;
      tr.state_next = s_next;
      tr.prev_option = prev;
      tr.raw_state = obs.state;
      tr.raw_state_next = sr.observation.state;
      tr.achieved_goal = obs.achieved_goal;
      tr.achieved_goal_next = sr.observation.achieved_goal;
      tr.agent_pos_next = env.agent_position();

      int next_o;
      if (t + 1 == horizon) {
        next_o = select_option(p, s_next, agent_rng);
      } else if (agent_rng.bernoulli(termination_prob(p, s_next, o))) {
        next_o = select_option(p, s_next, agent_rng);
      } else {
        next_o = o;
      }
      tr.next_option = next_o;
      traj.episode_return += sr.reward;
      traj.steps.push_back(std::move(tr));

      prev = o;
      o = next_o;
      obs = sr.observation;
      s = std::move(s_next);
      if (t + 1 == horizon) traj.success = sr.is_success;
    }
    out.push_back(std::move(traj));
  }
  return out;
}

}  // namespace moc2her
