#pragma once

#include <Eigen/Core>

#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace moc2her {

class Rng;

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Dense layers and the two-layer perceptron used by every network head.
// Batched calls treat matrix columns as samples.
// ---------------------------------------------------------------------------

struct Dense {
  MatrixXd w;  // out x in
  VectorXd b;  // out
};

// Weights uniform in +-1/sqrt(fan_in), zero bias. Row-major draw order.
Dense make_dense(int out, int in, Rng& rng);

MatrixXd dense_forward(const Dense& layer, const MatrixXd& x);
// Gradients of sum_j y_j . dy_j; accumulates into grads, returns dx.
MatrixXd dense_backward(const Dense& layer, const MatrixXd& x,
                        const MatrixXd& dy, Dense& grads);

// One tanh hidden layer, linear output.
struct Mlp {
  Dense hidden;
  Dense out;

  int in_dim() const { return static_cast<int>(hidden.w.cols()); }
  int hidden_dim() const { return static_cast<int>(hidden.w.rows()); }
  int out_dim() const { return static_cast<int>(out.w.rows()); }

  static Mlp make(int in, int hidden_units, int out, Rng& rng);
  static Mlp zeros_like(const Mlp& shape);
};

// Activations recorded by a forward pass, consumed by the matching backward.
struct ForwardCache {
  MatrixXd input;       // in x batch
  MatrixXd hidden_act;  // tanh output, hidden x batch
};

MatrixXd mlp_forward(const Mlp& net, const MatrixXd& x,
                     ForwardCache* cache = nullptr);
VectorXd mlp_forward(const Mlp& net, const VectorXd& x,
                     ForwardCache* cache = nullptr);

// Exact gradients of sum_j y_j . dy_j with respect to parameters and input.
// Accumulates into grads; returns dx.
MatrixXd mlp_backward(const Mlp& net, const ForwardCache& cache,
                      const MatrixXd& dy, Mlp& grads);

// ---------------------------------------------------------------------------
// Probability heads.
// ---------------------------------------------------------------------------

// Max-subtracted, overflow-safe. Columns are independent in the batched form.
VectorXd softmax(const VectorXd& logits);
MatrixXd softmax_columns(const MatrixXd& logits);
double sigmoid(double x);

struct GaussianLogProb {
  double logp;
  VectorXd dmean;
  VectorXd dlog_std;
};

// Diagonal-Gaussian log density and its exact gradients.
GaussianLogProb gaussian_log_prob_grad(const VectorXd& mean,
                                       const VectorXd& log_std,
                                       const VectorXd& action);
double gaussian_log_prob(const VectorXd& mean, const VectorXd& log_std,
                         const VectorXd& action);
// Closed-form entropy of the diagonal Gaussian; gradient wrt each log_std
// component is exactly 1.
double gaussian_entropy(const VectorXd& log_std);

// ---------------------------------------------------------------------------
// Flat parameter views, gradient clipping, optimizer.
// ---------------------------------------------------------------------------

struct TensorView {
  double* data = nullptr;
  std::ptrdiff_t size = 0;
};

TensorView view(VectorXd& v);
TensorView view(MatrixXd& m);
std::vector<TensorView> views(Dense& layer);
std::vector<TensorView> views(Mlp& net);

double global_norm(const std::vector<TensorView>& grads);
// Scales grads in place so their global norm is at most max_norm.
void clip_global_norm(const std::vector<TensorView>& grads, double max_norm);

// Adaptive-moment optimizer state, one moment pair per tensor.
struct OptimizerState {
  std::vector<VectorXd> m;
  std::vector<VectorXd> v;
  long step = 0;
};

OptimizerState make_optimizer_state(const std::vector<TensorView>& params);

// Standard update, decay rates 0.9 / 0.999, epsilon 1e-8.
void adam_update(const std::vector<TensorView>& params,
                 const std::vector<TensorView>& grads, OptimizerState& state,
                 double lr);

// ---------------------------------------------------------------------------
// Gradient verification.
// ---------------------------------------------------------------------------

struct FiniteDiffReport {
  double max_rel_err = 0.0;
  bool pass = true;
  int worst_tensor = -1;
  std::ptrdiff_t worst_index = -1;
};

// Central differences of `loss` against the analytic gradient. `params` are
// perturbed in place and restored; `loss` must be deterministic. Entries
// where both gradients are below 1e-6 in magnitude are treated as matching.
FiniteDiffReport finite_diff_check(const std::function<double()>& loss,
                                   const std::vector<TensorView>& params,
                                   const std::vector<TensorView>& analytic,
                                   double tol, double step = 1e-5);

// ---------------------------------------------------------------------------
// Parameter text format: a version header, then per tensor one line
// "tensor <name> <rows> <cols>" followed by rows of row-major values printed
// with 17 significant digits (lossless double round-trip).
// ---------------------------------------------------------------------------

void write_params_header(std::ostream& os);
void write_tensor(std::ostream& os, const std::string& name,
                  const Eigen::Ref<const MatrixXd>& t);

struct TensorFile {
  std::vector<std::pair<std::string, MatrixXd>> tensors;
  const MatrixXd& get(const std::string& name) const;
};

TensorFile read_params_text(std::istream& is);

}  // namespace moc2her
