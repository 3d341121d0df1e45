#pragma once

// One-step constrained bandit with a known optimum, used to check CPO end to end.
//
// Action a ∈ R², reward -‖a - target‖², cost wᵀa, constraint E[wᵀa] ≤ limit.
// The policy is a linear-Gaussian head on a constant zero observation, so its mean is the
// output bias. Optimum of the mean: projection of target onto {μ : wᵀμ ≤ limit}.

#include "afd/cpo.hpp"
#include "afd/diffnet.hpp"

#include <vector>

namespace afd::testing {

struct ToyCmdp {
  Vector target = (Vector(2) << 1.0, 1.0).finished();
  Vector weight = (Vector(2) << 1.0, 0.0).finished();
  double limit = 0.5;
  int samples = 2000;
  int updates = 100;
  Vector initial_mean = Vector::Zero(2);
  double initial_std = 0.2;
  CpoConfig cpo;

  ToyCmdp() {
    cpo.trust_radius = 0.02;
    cpo.cost_limit = limit;
    cpo.gamma = cpo.gamma_c = 1.0;
    cpo.lambda = 1.0;
  }

  Vector optimum() const {
    const double excess = weight.dot(target) - limit;
    if (excess <= 0.0) return target;
    return target - excess * weight / weight.squaredNorm();
  }

  GaussianPolicy initial_policy() const {
    GaussianPolicy policy(MlpArchitecture{1, {}, 2, Activation::identity}, Vector::Ones(2),
                          Vector::Constant(2, std::log(initial_std)));
    Vector net = Vector::Zero(policy.network().parameter_count());
    net.tail(2) = initial_mean;  // layout [W (2×1), b (2)]
    policy.network().set_parameters(net);
    return policy;
  }

  TrajectoryBatch collect(const GaussianPolicy& policy, Rng& rng) const {
    TrajectoryBatch b;
    b.observations = Matrix::Zero(1, samples);
    b.actions.resize(2, samples);
    b.log_probs.resize(samples);
    b.rewards.resize(samples);
    b.costs.resize(samples);
    for (int i = 0; i < samples; ++i) {
      const Vector obs = Vector::Zero(1);
      const Vector a = policy.sample(obs, rng);
      b.actions.col(i) = a;
      b.log_probs[i] = policy.log_prob(obs, a);
      b.rewards[i] = -(a - target).squaredNorm();
      b.costs[i] = weight.dot(a);
      b.episode_starts.push_back(i);
    }
    // Constant critics at the batch means.
    estimate_advantages(b, Vector::Constant(samples, b.rewards.mean()),
                        Vector::Constant(samples, b.costs.mean()), 1.0, 1.0, 1.0);
    return b;
  }

  struct Record {
    Vector mean;
    double cost_return = 0.0;  // J_C of the batch collected before the update
    UpdateDiagnostics diagnostics;
  };

  std::vector<Record> run(std::uint64_t seed) const {
    Rng rng(seed);
    GaussianPolicy policy = initial_policy();
    std::vector<Record> out;
    for (int u = 0; u < updates; ++u) {
      const TrajectoryBatch batch = collect(policy, rng);
      CpoResult r = cpo_update(batch, policy, cpo);
      r.diagnostics.index = u + 1;
      policy = r.policy;
      out.push_back({policy.mean(Vector(Vector::Zero(1))), batch.cost_return_mean, r.diagnostics});
    }
    return out;
  }
};

}  // namespace afd::testing
