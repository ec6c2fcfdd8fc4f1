#pragma once

#include "uasabi/numerics.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace uasabi {

using ParamsRef = Eigen::Ref<Eigen::VectorXd>;
using ConstParamsRef = Eigen::Ref<const Eigen::VectorXd>;

enum class Activation { Tanh, Relu, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Dense network. widths = {in, hidden..., out}; hidden layers use `hidden`,
/// the final layer is always linear. Parameters are laid out per layer as W
/// (out x in, column-major) followed by b.
struct MlpSpec {
  std::vector<int> widths;
  Activation hidden = Activation::Tanh;

  int in() const { return widths.front(); }
  int out() const { return widths.back(); }
  int n_layers() const { return static_cast<int>(widths.size()) - 1; }
  Eigen::Index n_params() const;
  bool operator==(const MlpSpec&) const = default;
};

struct MlpCache {
  /// act[0] is the input, act[l] the output of layer l.
  std::vector<Eigen::MatrixXd> act;
};

/// Forward pass on a batch (columns are samples).
Eigen::MatrixXd mlp_apply(const MlpSpec& spec, ConstParamsRef w,
                          const Eigen::MatrixXd& input, MlpCache* cache = nullptr);

/// Reverse pass: accumulates dL/dW into `grad` (same layout as the weights)
/// and returns dL/dinput.
Eigen::MatrixXd mlp_grad(const MlpSpec& spec, ConstParamsRef w, const MlpCache& cache,
                         const Eigen::MatrixXd& dout, ParamsRef grad);

/// Uniform(-sqrt(3/fan_in), sqrt(3/fan_in)) weights, zero biases; optionally a
/// zero final layer.
void mlp_init(const MlpSpec& spec, ParamsRef w, RngStream& rng, bool zero_final);

/// A set of (x, y) observations; row j of x and y is element j.
struct ObservationSet {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;

  Eigen::Index size() const { return y.rows(); }
  void validate() const;
};

struct DeepSetSpec {
  MlpSpec element_net;
  MlpSpec post_net;
  int summary_dim() const { return post_net.out(); }
  Eigen::Index n_params() const { return element_net.n_params() + post_net.n_params(); }
};

/// Conditional affine coupling flow on an augmented parameter vector.
struct CouplingFlowSpec {
  int param_dim = 1;
  int augmented_dim = 2;
  int n_blocks = 4;
  int summary_dim = 10;
  std::vector<int> hidden{32, 32};
  Activation activation = Activation::Tanh;
  double clamp = 1.9;

  static CouplingFlowSpec make(int param_dim, int summary_dim, int n_blocks = 4,
                               std::vector<int> hidden = {32, 32}, double clamp = 1.9);

  /// Coordinate i conditions block k iff (i + k) is even; the rest transform.
  std::vector<int> conditioners(int block) const;
  std::vector<int> transformed(int block) const;
  MlpSpec block_net(int block) const;
  Eigen::Index block_offset(int block) const;
  Eigen::Index n_params() const;
};

struct FlowResult {
  Eigen::MatrixXd z;
  Eigen::VectorXd log_det;
};

/// omega (augmented_dim x B) -> base z. Summary is summary_dim x B.
FlowResult coupling_forward(const CouplingFlowSpec& spec, ConstParamsRef w,
                            const Eigen::MatrixXd& omega, const Eigen::MatrixXd& summary);
Eigen::MatrixXd coupling_inverse(const CouplingFlowSpec& spec, ConstParamsRef w,
                                 const Eigen::MatrixXd& z, const Eigen::MatrixXd& summary);
/// log N(z; 0, I) + log_det per column.
Eigen::VectorXd coupling_log_density(const CouplingFlowSpec& spec, ConstParamsRef w,
                                     const Eigen::MatrixXd& omega,
                                     const Eigen::MatrixXd& summary);

/// Mean negative log density of a batch and its gradient w.r.t. the flow
/// weights and the summary inputs.
double coupling_nll_grad(const CouplingFlowSpec& spec, ConstParamsRef w,
                         const Eigen::MatrixXd& omega, const Eigen::MatrixXd& summary,
                         ParamsRef grad_w, Eigen::MatrixXd* grad_summary);

/// Per-coordinate affine standardization.
struct Standardization {
  Eigen::VectorXd x_mean, x_sd;
  Eigen::VectorXd y_mean, y_sd;
  Eigen::VectorXd omega_mean, omega_sd;
};

struct NpeArchitecture {
  std::vector<int> element_hidden{10, 10};
  int element_out = 10;
  std::vector<int> post_hidden{10};
  int summary_dim = 10;
  int coupling_blocks = 4;
  std::vector<int> coupling_hidden{32, 32};
  double clamp = 1.9;
  Activation activation = Activation::Tanh;
};

struct NpeSpec {
  int x_dim = 1;
  int y_dim = 1;
  int param_dim = 1;
  DeepSetSpec deepset;
  CouplingFlowSpec flow;

  static NpeSpec make(int x_dim, int y_dim, int param_dim, const NpeArchitecture& arch = {});
  Eigen::Index n_params() const { return deepset.n_params() + flow.n_params(); }
};

struct NpeProvenance {
  std::string mode;
  std::uint64_t seed = 0;
  int epochs = 0;
  int batches_per_epoch = 0;
  int batch_size = 0;
  double learning_rate = 0.0;
  double lr_alpha = 0.0;
  int observations_per_set = 0;
};

/// Summary network weights followed by flow weights in one flat vector.
struct NpeModel {
  NpeSpec spec;
  Eigen::VectorXd weights;
  Standardization stats;
  NpeProvenance provenance;

  auto element_weights() const {
    return weights.segment(0, spec.deepset.element_net.n_params());
  }
  auto post_weights() const {
    return weights.segment(spec.deepset.element_net.n_params(), spec.deepset.post_net.n_params());
  }
  auto flow_weights() const {
    return weights.segment(spec.deepset.n_params(), spec.flow.n_params());
  }
};

/// Fresh model: summary nets randomly initialized, flow scale/shift nets with
/// zero final layers so the flow starts at the identity. Standardization is
/// the identity until set by the trainer.
NpeModel init_npe(const NpeSpec& spec, RngStream& rng);

/// Summary of already-standardized sets (columns of the result). Elements are
/// pooled in a canonical order so the mean is exactly permutation invariant.
Eigen::MatrixXd deepset_summary_batch(const DeepSetSpec& spec, ConstParamsRef element_w,
                                      ConstParamsRef post_w,
                                      const std::vector<ObservationSet>& sets);

/// Summary vector for one set in raw units (standardized with stored stats).
Eigen::VectorXd deepset_summary(const NpeModel& model, const ObservationSet& set);

/// Standardizes a raw set with the model's stats.
ObservationSet standardize(const NpeModel& model, const ObservationSet& set);

/// Training loss: mean over the batch of -log q(omega_std, aux | S(set)).
/// `omega` is B x param_dim in raw units; `aux` is B x (augmented - param).
double npe_loss(const NpeModel& model, const std::vector<ObservationSet>& sets,
                const Eigen::MatrixXd& omega, const Eigen::MatrixXd& aux,
                Eigen::VectorXd* grad);

/// log q(omega | S(set)) in raw parameter units. For augmented flows the
/// auxiliary coordinate is integrated out on a quadrature grid.
double flow_log_density(const NpeModel& model, const Eigen::VectorXd& omega,
                        const ObservationSet& set);
/// n draws (rows) from q(. | S(set)) in raw units.
Eigen::MatrixXd flow_sample(const NpeModel& model, const ObservationSet& set,
                            Eigen::Index n, RngStream& rng);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(Eigen::Index n = 0)
      : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

/// Bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, ParamsRef params, const Eigen::VectorXd& grad, double lr);

/// lr0*alpha + 0.5*lr0*(1-alpha)*(1+cos(pi*t/T)); t > T clamps to lr0*alpha.
double cosine_lr(long step, long total_steps, double lr0, double alpha);

}  // namespace uasabi
