#pragma once

#include "afd/common.hpp"
#include "afd/diffnet.hpp"

#include <functional>
#include <string>
#include <vector>

namespace afd {

/// On-policy samples from a set of complete episodes, stored column-wise.
struct TrajectoryBatch {
  Matrix observations;  // n_obs × N, already normalized as seen by the policy
  Matrix actions;       // n_u × N, pre-clip samples
  Vector log_probs;     // under the collection policy
  Vector rewards;
  Vector costs;
  std::vector<Eigen::Index> episode_starts;  // ascending, first entry 0
  Matrix critic_observations;  // value-function inputs; empty → observations

  const Matrix& critic_inputs() const {
    return critic_observations.size() > 0 ? critic_observations : observations;
  }

  // Filled by estimate_advantages.
  Vector reward_advantages;  // normalized
  Vector cost_advantages;    // raw
  Vector reward_targets;
  Vector cost_targets;
  double reward_return_mean = 0.0;  // mean per-episode discounted reward return
  double cost_return_mean = 0.0;    // J_C estimate
  double mean_episode_length = 0.0;

  Eigen::Index size() const { return rewards.size(); }
  Eigen::Index episode_count() const { return static_cast<Eigen::Index>(episode_starts.size()); }
  Eigen::Index episode_end(Eigen::Index k) const;
  void validate() const;
};

struct ValueFitConfig {
  int epochs = 20;
  int minibatches = 16;
  double step_size = 1e-3;
  int max_retries = 3;
};

struct CpoConfig {
  double trust_radius = 0.01;
  double cost_limit = 6.0;
  double gamma = 0.99;
  double gamma_c = 1.0;
  double lambda = 0.97;
  int cg_iterations = 10;
  double cg_tolerance = 1e-8;
  double damping = 0.1;
  double backtrack_factor = 0.8;
  int max_backtracks = 10;
  double cost_slack = 0.0;
  ValueFitConfig value_fit;

  void validate() const;
};

/// GAE for both streams with zero bootstrap at episode ends; fills advantages, targets and
/// the per-episode return means.
void estimate_advantages(TrajectoryBatch& batch, const ValueFunction& reward_value,
                         const ValueFunction& cost_value, double gamma, double gamma_c,
                         double lambda);

/// Same recursion from precomputed value predictions.
void estimate_advantages(TrajectoryBatch& batch, const Vector& reward_values,
                         const Vector& cost_values, double gamma, double gamma_c, double lambda);

struct CgResult {
  Vector x;
  double residual = 0.0;  // ‖Hx - g‖ / ‖g‖, 0 for g = 0
  int iterations = 0;
};

using LinearOperator = std::function<Vector(const Vector&)>;

CgResult cg_solve(const LinearOperator& h, const Vector& g, int iterations, double tol);

enum class StepType { feasible, recovery, rejected };
std::string to_string(StepType type);

struct UpdateDiagnostics {
  int index = 0;
  double mean_return = 0.0;
  double mean_cost_return = 0.0;
  double kl = 0.0;
  StepType step_type = StepType::feasible;
  int qp_case = 0;  // 0 recovery, 1 boundary infeasible-start, 2 boundary feasible, 3 interior, 4 no constraint gradient
  double cg_residual_reward = 0.0;
  double cg_residual_cost = 0.0;
  int line_search_steps = 0;
  double step_fraction = 0.0;
  double reward_surrogate_gain = 0.0;
  double cost_surrogate_change = 0.0;  // predicted change of J_C
  double lagrange_trust = 0.0;
  double lagrange_cost = 0.0;
  double reward_value_loss = 0.0;
  double cost_value_loss = 0.0;
};

struct CpoResult {
  GaussianPolicy policy;
  UpdateDiagnostics diagnostics;
};

/// One constrained trust-region step. The batch must carry advantages.
CpoResult cpo_update(const TrajectoryBatch& batch, const GaussianPolicy& policy,
                     const CpoConfig& config);

/// Importance-weighted surrogate mean(ρ·advantage) with ρ = π(a|s) / π_collect(a|s).
double surrogate(const GaussianPolicy& policy, const TrajectoryBatch& batch, const Vector& advantages);
Vector surrogate_gradient(const GaussianPolicy& policy, const TrajectoryBatch& batch,
                          const Vector& advantages);

/// Per-unit scaling of a per-step advantage into an episode cost-return change.
double cost_surrogate_factor(double gamma_c, double mean_episode_length);

struct ValueFitReport {
  double pre_loss = 0.0;
  double post_loss = 0.0;
  int retries = 0;
  bool diverged = false;  // every retry diverged; parameters left unchanged
};

/// Adam minibatch regression on ½·mean((V - target)²).
ValueFitReport fit_values(ValueFunction& value, const Matrix& observations, const Vector& targets,
                          const ValueFitConfig& config, Rng& rng);

}  // namespace afd
