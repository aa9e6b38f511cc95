#include "moc2her/diffnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "moc2her/contract.hpp"
#include "moc2her/rng.hpp"

namespace moc2her {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)
}

Dense make_dense(int out, int in, Rng& rng) {
  Dense layer;
  layer.w.resize(out, in);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (int r = 0; r < out; ++r)
    for (int c = 0; c < in; ++c) layer.w(r, c) = rng.uniform(-bound, bound);
  layer.b = VectorXd::Zero(out);
  return layer;
}

MatrixXd dense_forward(const Dense& layer, const MatrixXd& x) {
  require(x.rows() == layer.w.cols(), "dense_forward: input dim mismatch");
  return (layer.w * x).colwise() + layer.b;
}

MatrixXd dense_backward(const Dense& layer, const MatrixXd& x,
                        const MatrixXd& dy, Dense& grads) {
  require(x.cols() == dy.cols() && dy.rows() == layer.w.rows() &&
              x.rows() == layer.w.cols(),
          "dense_backward: shape mismatch");
  grads.w.noalias() += dy * x.transpose();
  grads.b.noalias() += dy.rowwise().sum();
  return layer.w.transpose() * dy;
}

Mlp Mlp::make(int in, int hidden_units, int out, Rng& rng) {
  Mlp net;
  net.hidden = make_dense(hidden_units, in, rng);
  net.out = make_dense(out, hidden_units, rng);
  return net;
}

Mlp Mlp::zeros_like(const Mlp& shape) {
  Mlp g;
  g.hidden.w = MatrixXd::Zero(shape.hidden.w.rows(), shape.hidden.w.cols());
  g.hidden.b = VectorXd::Zero(shape.hidden.b.size());
  g.out.w = MatrixXd::Zero(shape.out.w.rows(), shape.out.w.cols());
  g.out.b = VectorXd::Zero(shape.out.b.size());
  return g;
}

MatrixXd mlp_forward(const Mlp& net, const MatrixXd& x, ForwardCache* cache) {
  require(x.rows() == net.in_dim(), "mlp_forward: input dim mismatch");
  MatrixXd h = dense_forward(net.hidden, x).array().tanh();
  MatrixXd y = dense_forward(net.out, h);
  if (cache) {
    cache->input = x;
    cache->hidden_act = std::move(h);
  }
  return y;
}

VectorXd mlp_forward(const Mlp& net, const VectorXd& x, ForwardCache* cache) {
  return mlp_forward(net, MatrixXd(x), cache).col(0);
}

MatrixXd mlp_backward(const Mlp& net, const ForwardCache& cache,
                      const MatrixXd& dy, Mlp& grads) {
  require(cache.input.rows() == net.in_dim() &&
              cache.hidden_act.rows() == net.hidden_dim() &&
              cache.input.cols() == dy.cols() &&
              cache.hidden_act.cols() == dy.cols() &&
              dy.rows() == net.out_dim(),
          "mlp_backward: cache does not match network/dy");
  MatrixXd dh = dense_backward(net.out, cache.hidden_act, dy, grads.out);
  MatrixXd dpre =
      dh.array() * (1.0 - cache.hidden_act.array().square());
  return dense_backward(net.hidden, cache.input, dpre, grads.hidden);
}

VectorXd softmax(const VectorXd& logits) {
  const double m = logits.maxCoeff();
  VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

MatrixXd softmax_columns(const MatrixXd& logits) {
  MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c)
    out.col(c) = softmax(VectorXd(logits.col(c)));
  return out;
}

double sigmoid(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double gaussian_log_prob(const VectorXd& mean, const VectorXd& log_std,
                         const VectorXd& action) {
  require(mean.size() == log_std.size() && mean.size() == action.size(),
          "gaussian_log_prob: size mismatch");
  double logp = -0.5 * kLog2Pi * static_cast<double>(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double inv_std = std::exp(-log_std[i]);
    const double z = (action[i] - mean[i]) * inv_std;
    logp += -0.5 * z * z - log_std[i];
  }
  return logp;
}

GaussianLogProb gaussian_log_prob_grad(const VectorXd& mean,
                                       const VectorXd& log_std,
                                       const VectorXd& action) {
  require(mean.size() == log_std.size() && mean.size() == action.size(),
          "gaussian_log_prob_grad: size mismatch");
  GaussianLogProb out;
  out.logp = -0.5 * kLog2Pi * static_cast<double>(mean.size());
  out.dmean.resize(mean.size());
  out.dlog_std.resize(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double inv_std = std::exp(-log_std[i]);
    const double z = (action[i] - mean[i]) * inv_std;
    out.logp += -0.5 * z * z - log_std[i];
    out.dmean[i] = z * inv_std;
    out.dlog_std[i] = z * z - 1.0;
  }
  return out;
}

double gaussian_entropy(const VectorXd& log_std) {
  // sum_i (log_std_i + (1 + ln 2pi)/2)
  return log_std.sum() +
         0.5 * (1.0 + kLog2Pi) * static_cast<double>(log_std.size());
}

TensorView view(VectorXd& v) { return {v.data(), v.size()}; }
TensorView view(MatrixXd& m) { return {m.data(), m.size()}; }

std::vector<TensorView> views(Dense& layer) {
  return {view(layer.w), view(layer.b)};
}

std::vector<TensorView> views(Mlp& net) {
  return {view(net.hidden.w), view(net.hidden.b), view(net.out.w),
          view(net.out.b)};
}

double global_norm(const std::vector<TensorView>& grads) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (std::ptrdiff_t i = 0; i < g.size; ++i) sq += g.data[i] * g.data[i];
  return std::sqrt(sq);
}

void clip_global_norm(const std::vector<TensorView>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm <= max_norm || norm == 0.0) return;
  const double scale = max_norm / norm;
  for (const auto& g : grads)
    for (std::ptrdiff_t i = 0; i < g.size; ++i) g.data[i] *= scale;
}

OptimizerState make_optimizer_state(const std::vector<TensorView>& params) {
  OptimizerState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const auto& p : params) {
    state.m.push_back(VectorXd::Zero(p.size));
    state.v.push_back(VectorXd::Zero(p.size));
  }
  return state;
}

void adam_update(const std::vector<TensorView>& params,
                 const std::vector<TensorView>& grads, OptimizerState& state,
                 double lr) {
  require(params.size() == grads.size() && params.size() == state.m.size(),
          "adam_update: tensor count mismatch");
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    require(params[t].size == grads[t].size &&
                params[t].size == state.m[t].size(),
            "adam_update: tensor size mismatch");
    double* m = state.m[t].data();
    double* v = state.v[t].data();
    double* p = params[t].data;
    const double* g = grads[t].data;
    for (std::ptrdiff_t i = 0; i < params[t].size; ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

FiniteDiffReport finite_diff_check(const std::function<double()>& loss,
                                   const std::vector<TensorView>& params,
                                   const std::vector<TensorView>& analytic,
                                   double tol, double step) {
  require(params.size() == analytic.size(),
          "finite_diff_check: tensor count mismatch");
  FiniteDiffReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::ptrdiff_t i = 0; i < params[t].size; ++i) {
      double& p = params[t].data[i];
      const double saved = p;
      p = saved + step;
      const double up = loss();
      p = saved - step;
      const double down = loss();
      p = saved;
      const double fd = (up - down) / (2.0 * step);
      const double g = analytic[t].data[i];
      const double denom = std::max(std::abs(fd), std::abs(g));
      const double err = denom < 1e-6 ? 0.0 : std::abs(fd - g) / denom;
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_tensor = static_cast<int>(t);
        report.worst_index = i;
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

void write_params_header(std::ostream& os) { os << "moc2her-params 1\n"; }

void write_tensor(std::ostream& os, const std::string& name,
                  const Eigen::Ref<const MatrixXd>& t) {
  os << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
  char buf[40];
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", t(r, c));
      os << buf << (c + 1 == t.cols() ? '\n' : ' ');
    }
    if (t.cols() == 0) os << '\n';
  }
}

const MatrixXd& TensorFile::get(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw ContractViolation("parameter file: missing tensor " + name);
}

TensorFile read_params_text(std::istream& is) {
  std::string magic;
  int version = 0;
  is >> magic >> version;
  require(magic == "moc2her-params" && version == 1,
          "parameter file: unrecognized header");
  TensorFile file;
  std::string tag;
  while (is >> tag) {
    require(tag == "tensor", "parameter file: expected 'tensor' record");
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    is >> name >> rows >> cols;
    require(is.good() && rows >= 0 && cols >= 0,
            "parameter file: bad tensor shape");
    MatrixXd t(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) is >> t(r, c);
    require(!is.fail(), "parameter file: truncated tensor values");
    file.tensors.emplace_back(std::move(name), std::move(t));
  }
  return file;
}

}  // namespace moc2her
