#pragma once

#include "afd/common.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace afd {

enum class Activation { tanh, identity };

struct MlpArchitecture {
  Eigen::Index inputs = 0;
  std::vector<Eigen::Index> hidden;
  Eigen::Index outputs = 0;
  Activation activation = Activation::tanh;

  bool operator==(const MlpArchitecture&) const = default;
};

/// Fully connected network over column batches (features × samples). Parameters live in
/// one flat vector laid out layer by layer as [W (column-major), b].
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpArchitecture arch);

  const MlpArchitecture& architecture() const { return arch_; }
  Eigen::Index parameter_count() const { return theta_.size(); }
  const Vector& parameters() const { return theta_; }
  void set_parameters(const Vector& theta);

  /// Orthogonal init; hidden layers with unit gain, final layer scaled by `output_gain`.
  void initialize(Rng& rng, double output_gain);

  /// Activations needed by backward/jvp.
  struct Trace {
    std::vector<Matrix> activations;  // activations[0] = input, last = output
  };

  Matrix forward(const Matrix& inputs) const;
  Matrix forward(const Matrix& inputs, Trace& trace) const;

  /// Gradient of Σ_{ij} output_grad(i,j)·out(i,j) with respect to the flat parameters.
  Vector backward(const Trace& trace, const Matrix& output_grad) const;

  /// Directional derivative of the outputs along a parameter tangent.
  Matrix jvp(const Trace& trace, const Vector& tangent) const;

 private:
  struct LayerOffsets {
    Eigen::Index weights, bias, rows, cols;
  };
  Eigen::Map<const Matrix> weights(std::size_t layer) const;
  Eigen::Map<const Vector> bias(std::size_t layer) const;

  MlpArchitecture arch_;
  std::vector<LayerOffsets> layers_;
  Vector theta_;
};

/// Gradient of a scalar objective with respect to the Gaussian head outputs.
struct HeadGradient {
  double value = 0.0;
  Matrix d_mean;    // n_u × N
  Vector d_log_std; // n_u, w.r.t. the clamped log-std
};
using HeadObjective = std::function<HeadGradient(const Matrix& mean, const Vector& log_std)>;

constexpr double kLogStdMin = -20.0;
constexpr double kLogStdMax = 2.0;

/// Diagonal Gaussian policy: mean = action_scale ⊙ mlp(obs), state-independent log-std.
/// Flat parameters are [mlp parameters | log_std].
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(MlpArchitecture net, Vector action_scale, Vector log_std);

  Eigen::Index action_dim() const { return log_std_.size(); }
  Eigen::Index observation_dim() const { return net_.architecture().inputs; }
  Eigen::Index parameter_count() const { return net_.parameter_count() + log_std_.size(); }
  Vector parameters() const;
  void set_parameters(const Vector& theta);

  const Mlp& network() const { return net_; }
  Mlp& network() { return net_; }
  const Vector& action_scale() const { return action_scale_; }
  const Vector& raw_log_std() const { return log_std_; }

  Vector log_std() const;  // clamped
  Vector std() const;

  Matrix mean(const Matrix& observations) const;
  Vector mean(const Vector& observation) const;

  Vector sample(const Vector& observation, Rng& rng) const;
  double log_prob(const Vector& observation, const Vector& action) const;
  Vector log_prob(const Matrix& observations, const Matrix& actions) const;

  /// Exact gradient of objective(mean(obs), log_std) + ½ l2 ‖θ‖².
  Vector grad(const Matrix& observations, const HeadObjective& objective, double l2 = 0.0,
              double* value = nullptr) const;

 private:
  Mlp net_;
  Vector action_scale_;
  Vector log_std_;
};

/// Batch-mean KL(π_new(·|s) ‖ π_old(·|s)).
double kl(const GaussianPolicy& new_policy, const GaussianPolicy& old_policy,
          const Matrix& observations);

/// Gradient of kl(new, old, obs) with respect to the parameters of `new_policy`.
Vector kl_gradient(const GaussianPolicy& new_policy, const GaussianPolicy& old_policy,
                   const Matrix& observations);

/// v ↦ H v + damping v, H = ∇²_θ' KL(π_θ' ‖ π_θ) at θ' = θ over a fixed batch.
/// The network trace is computed once; each product costs one jvp and one backward pass.
class FisherOperator {
 public:
  FisherOperator(const GaussianPolicy& policy, const Matrix& observations, double damping);
  Vector operator()(const Vector& v) const;
  Eigen::Index size() const { return size_; }

 private:
  GaussianPolicy policy_;
  Mlp::Trace trace_;
  Vector inv_var_;
  Vector active_log_std_;  // 1 where the log-std clamp is inactive
  double damping_;
  Eigen::Index size_;
  double batch_;
};

Vector fisher_vector_product(const GaussianPolicy& policy, const Matrix& observations,
                             const Vector& v, double damping);

/// Scalar regressor for reward/cost values.
class ValueFunction {
 public:
  ValueFunction() = default;
  explicit ValueFunction(MlpArchitecture arch);

  Mlp& network() { return net_; }
  const Mlp& network() const { return net_; }
  Vector predict(const Matrix& observations) const;

  /// Mean squared error ½·mean((V - target)²) and its gradient.
  double mse(const Matrix& observations, const Vector& targets, Vector* gradient = nullptr) const;

 private:
  Mlp net_;
};

/// Running mean/variance of observations (parallel Welford merge).
class RunningNormalizer {
 public:
  RunningNormalizer() = default;
  explicit RunningNormalizer(Eigen::Index dim);

  void update(const Matrix& batch);  // columns are samples
  Vector normalize(const Vector& observation) const;
  Matrix normalize(const Matrix& observations) const;

  Eigen::Index dim() const { return mean_.size(); }
  double count() const { return count_; }
  const Vector& mean() const { return mean_; }
  Vector variance() const;

  void set_state(double count, Vector mean, Vector m2);
  const Vector& m2() const { return m2_; }

  static constexpr double kEpsilon = 1e-12;
  static constexpr double kClip = 10.0;

 private:
  double count_ = 0.0;
  Vector mean_;
  Vector m2_;
};

struct AdamState {
  Vector m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;

  explicit AdamState(Eigen::Index n = 0) : m(Vector::Zero(n)), v(Vector::Zero(n)) {}
  /// Descent step on `params` for gradient `g`.
  void apply(Vector& params, const Vector& g, double learning_rate);
};

/// Everything needed to resume or evaluate a trained agent.
struct Checkpoint {
  GaussianPolicy policy;
  ValueFunction reward_value;
  ValueFunction cost_value;
  RunningNormalizer normalizer;
  int update_index = 0;
};

constexpr int kCheckpointVersion = 1;

nlohmann::json architecture_json(const MlpArchitecture& arch);
MlpArchitecture architecture_from_json(const nlohmann::json& j);
nlohmann::json checkpoint_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace afd
