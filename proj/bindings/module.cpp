#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>

#include "moc2her/contract.hpp"
#include "moc2her/goal_envs.hpp"
#include "moc2her/option_critic.hpp"
#include "moc2her/trainer.hpp"

namespace py = pybind11;
using namespace moc2her;

namespace {

// Owns the env together with the rngs driving resets and construction, so a
// (id, seed) pair fully determines every trajectory produced through it.
class EnvHandle {
 public:
  EnvHandle(const std::string& id, std::uint64_t seed)
      : construction_rng_(seed, 1), episode_rng_(seed, 2) {
    env_ = make_env(id, construction_rng_);
  }

  py::dict reset() {
    last_ = env_->reset(episode_rng_);
    return observation();
  }

  py::tuple step(const VectorXd& action) {
    const StepResult r = env_->step(action);
    last_ = r.observation;
    return py::make_tuple(observation(), r.reward, r.is_success);
  }

  py::dict observation() const {
    py::dict d;
    d["state"] = last_.state;
    d["achieved_goal"] = last_.achieved_goal;
    d["desired_goal"] = last_.desired_goal;
    return d;
  }

  const EnvDescriptor& desc() const { return env_->descriptor(); }

 private:
  Rng construction_rng_;
  Rng episode_rng_;
  std::unique_ptr<GoalEnv> env_;
  GoalObservation last_;
};

// Agent parameters plus a private rng; exposes the per-step decision
// operations used during rollouts.
class AgentHandle {
 public:
  AgentHandle(int input_dim, int action_dim, int n_options, std::uint64_t seed)
      : rng_(seed, 3),
        params_(AgentParams::make(input_dim, action_dim, n_options, rng_)) {}

  int select_option(const VectorXd& s) {
    return moc2her::select_option(params_, s, rng_);
  }

  py::tuple select_action(const VectorXd& s, int o) {
    const ActionSample a = moc2her::select_action(params_, s, o, rng_);
    return py::make_tuple(a.action, a.raw, a.logp);
  }

  double termination_prob(const VectorXd& s, int o) const {
    return moc2her::termination_prob(params_, s, o);
  }

  double state_value(const VectorXd& s) const {
    return moc2her::state_value(params_, s);
  }

  VectorXd option_values(const VectorXd& s) const {
    return moc2her::option_values(params_, s);
  }

  VectorXd option_probs(const VectorXd& s) const {
    return moc2her::option_probs(params_, s);
  }

 private:
  Rng rng_;
  AgentParams params_;
};

KeyValues to_key_values(const py::dict& d) {
  KeyValues kv;
  for (auto item : d)
    kv[py::str(item.first)] = py::str(item.second);
  return kv;
}

py::dict metrics_row(const IterationMetrics& m) {
  py::dict d;
  d["iteration"] = m.iteration;
  d["success_rate"] = m.success_rate;
  d["mean_return"] = m.mean_return;
  d["real_transitions"] = m.real_transitions;
  d["relabeled_transitions"] = m.relabeled_transitions;
  d["option_usage"] = m.option_usage;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Option-critic agents with hindsight relabeling on goal tasks";

  py::register_exception<ContractViolation>(m, "ContractViolation",
                                            PyExc_ValueError);

  py::class_<EnvHandle>(m, "Environment")
      .def(py::init<const std::string&, std::uint64_t>(), py::arg("id"),
           py::arg("seed") = 0)
      .def("reset", &EnvHandle::reset)
      .def("step", &EnvHandle::step, py::arg("action"))
      .def_property_readonly(
          "id", [](const EnvHandle& e) { return e.desc().id; })
      .def_property_readonly(
          "state_dim", [](const EnvHandle& e) { return e.desc().state_dim; })
      .def_property_readonly(
          "goal_dim", [](const EnvHandle& e) { return e.desc().goal_dim; })
      .def_property_readonly(
          "action_dim", [](const EnvHandle& e) { return e.desc().action_dim; })
      .def_property_readonly(
          "horizon", [](const EnvHandle& e) { return e.desc().horizon; })
      .def_property_readonly(
          "has_object", [](const EnvHandle& e) { return e.desc().has_object; })
      .def_property_readonly("epsilon_success", [](const EnvHandle& e) {
        return e.desc().epsilon_success;
      });

  py::class_<AgentHandle>(m, "Agent")
      .def(py::init<int, int, int, std::uint64_t>(), py::arg("input_dim"),
           py::arg("action_dim"), py::arg("n_options"), py::arg("seed") = 0)
      .def("select_option", &AgentHandle::select_option, py::arg("state"))
      .def("select_action", &AgentHandle::select_action, py::arg("state"),
           py::arg("option"))
      .def("termination_prob", &AgentHandle::termination_prob,
           py::arg("state"), py::arg("option"))
      .def("state_value", &AgentHandle::state_value, py::arg("state"))
      .def("option_values", &AgentHandle::option_values, py::arg("state"))
      .def("option_probs", &AgentHandle::option_probs, py::arg("state"));

  m.def(
      "resolved_config",
      [](const py::dict& overrides) {
        const ExperimentConfig cfg =
            resolve_config(KeyValues{}, to_key_values(overrides));
        return serialize_config(cfg);
      },
      py::arg("overrides") = py::dict(),
      "Round-trippable key=value text after default and override layering");

  m.def(
      "run_experiment",
      [](const py::dict& overrides) {
        const ExperimentConfig cfg =
            resolve_config(KeyValues{}, to_key_values(overrides));
        const std::vector<IterationMetrics> rows = run_experiment(cfg);
        py::list out;
        for (const auto& r : rows) out.append(metrics_row(r));
        return out;
      },
      py::arg("overrides") = py::dict(),
      "Train with the given config overrides; returns per-iteration metrics "
      "and writes metrics.csv, params.txt, config.resolved.txt to out_dir");

  m.def("moving_average", &moving_average, py::arg("series"),
        py::arg("window") = 20,
        "Trailing mean over min(window, t+1) entries at each index");
}
