#include "afd/cpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace afd {

Eigen::Index TrajectoryBatch::episode_end(Eigen::Index k) const {
  return k + 1 < episode_count() ? episode_starts[static_cast<std::size_t>(k + 1)] : size();
}

void TrajectoryBatch::validate() const {
  const auto n = size();
  require(costs.size() == n && log_probs.size() == n && observations.cols() == n &&
              actions.cols() == n,
          "batch: per-step arrays differ in length");
  require(critic_observations.size() == 0 || critic_observations.cols() == n,
          "batch: critic observations differ in length");
  require(n == 0 || (!episode_starts.empty() && episode_starts.front() == 0),
          "batch: episode boundaries must start at 0");
  for (std::size_t k = 1; k < episode_starts.size(); ++k)
    require(episode_starts[k] > episode_starts[k - 1], "batch: episode boundaries must be ascending");
  require(episode_starts.empty() || episode_starts.back() < n,
          "batch: episode boundary beyond the last step");
}

void CpoConfig::validate() const {
  if (!(trust_radius > 0.0)) throw ConfigError("cpo.trust_radius: must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("cpo.gamma: must lie in (0, 1]");
  if (!(gamma_c > 0.0 && gamma_c <= 1.0)) throw ConfigError("cpo.gamma_c: must lie in (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("cpo.lambda: must lie in [0, 1]");
  if (cg_iterations < 1) throw ConfigError("cpo.cg_iterations: must be at least 1");
  if (!(cg_tolerance > 0.0)) throw ConfigError("cpo.cg_tolerance: must be positive");
  if (!(damping >= 0.0)) throw ConfigError("cpo.damping: must be non-negative");
  if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0))
    throw ConfigError("cpo.backtrack_factor: must lie in (0, 1)");
  if (max_backtracks < 0) throw ConfigError("cpo.max_backtracks: must be non-negative");
  if (!(cost_slack >= 0.0)) throw ConfigError("cpo.cost_slack: must be non-negative");
  if (value_fit.epochs < 0) throw ConfigError("cpo.value_fit.epochs: must be non-negative");
  if (value_fit.minibatches < 1) throw ConfigError("cpo.value_fit.minibatches: must be at least 1");
  if (!(value_fit.step_size > 0.0)) throw ConfigError("cpo.value_fit.step_size: must be positive");
}

// ---------------------------------------------------------------------------------------------
// Advantages

void estimate_advantages(TrajectoryBatch& batch, const ValueFunction& reward_value,
                         const ValueFunction& cost_value, double gamma, double gamma_c,
                         double lambda) {
  estimate_advantages(batch, reward_value.predict(batch.critic_inputs()),
                      cost_value.predict(batch.critic_inputs()), gamma, gamma_c, lambda);
}

namespace {

void gae(const Vector& signal, const Vector& values, Eigen::Index begin, Eigen::Index end,
         double gamma, double lambda, Vector& advantages, Vector& targets) {
  double running = 0.0;
  for (Eigen::Index t = end; t-- > begin;) {
    const double next_value = t + 1 < end ? values[t + 1] : 0.0;
    const double td = signal[t] + gamma * next_value - values[t];
    running = td + gamma * lambda * running;
    advantages[t] = running;
    targets[t] = running + values[t];
  }
}

double discounted_sum(const Vector& signal, Eigen::Index begin, Eigen::Index end, double gamma) {
  double total = 0.0, weight = 1.0;
  for (Eigen::Index t = begin; t < end; ++t, weight *= gamma) total += weight * signal[t];
  return total;
}

}  // namespace

void estimate_advantages(TrajectoryBatch& batch, const Vector& reward_values,
                         const Vector& cost_values, double gamma, double gamma_c, double lambda) {
  batch.validate();
  const auto n = batch.size();
  require(reward_values.size() == n && cost_values.size() == n,
          "estimate_advantages: value predictions misaligned with the batch");
  batch.reward_advantages.resize(n);
  batch.cost_advantages.resize(n);
  batch.reward_targets.resize(n);
  batch.cost_targets.resize(n);
  batch.reward_return_mean = batch.cost_return_mean = batch.mean_episode_length = 0.0;
  if (n == 0) return;

  const auto episodes = batch.episode_count();
  for (Eigen::Index k = 0; k < episodes; ++k) {
    const auto begin = batch.episode_starts[static_cast<std::size_t>(k)];
    const auto end = batch.episode_end(k);
    gae(batch.rewards, reward_values, begin, end, gamma, lambda, batch.reward_advantages,
        batch.reward_targets);
    gae(batch.costs, cost_values, begin, end, gamma_c, lambda, batch.cost_advantages,
        batch.cost_targets);
    batch.reward_return_mean += discounted_sum(batch.rewards, begin, end, gamma);
    batch.cost_return_mean += discounted_sum(batch.costs, begin, end, gamma_c);
  }
  batch.reward_return_mean /= static_cast<double>(episodes);
  batch.cost_return_mean /= static_cast<double>(episodes);
  batch.mean_episode_length = static_cast<double>(n) / static_cast<double>(episodes);

  const double mean = batch.reward_advantages.mean();
  batch.reward_advantages.array() -= mean;
  const double sd = std::sqrt(batch.reward_advantages.squaredNorm() / static_cast<double>(n));
  if (sd > 1e-12) batch.reward_advantages /= sd;
}

// ---------------------------------------------------------------------------------------------
// Conjugate gradient

CgResult cg_solve(const LinearOperator& h, const Vector& g, int iterations, double tol) {
  require(iterations >= 1, "cg_solve: iterations must be at least 1");
  if (!g.allFinite()) throw NumericalError("cg_solve: non-finite right-hand side");
  CgResult out;
  out.x = Vector::Zero(g.size());
  const double g_norm = g.norm();
  if (g_norm == 0.0) return out;

  Vector r = g, p = g;
  double rr = r.squaredNorm();
  for (int k = 0; k < iterations; ++k) {
    const Vector hp = h(p);
    const double php = p.dot(hp);
    if (!std::isfinite(php)) throw NumericalError("cg_solve: non-finite operator output");
    if (php <= 0.0) break;  // operator not positive definite along p
    const double alpha = rr / php;
    out.x += alpha * p;
    r -= alpha * hp;
    out.iterations = k + 1;
    const double rr_next = r.squaredNorm();
    if (std::sqrt(rr_next) <= tol * g_norm) {
      rr = rr_next;
      break;
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  if (!out.x.allFinite()) throw NumericalError("cg_solve: non-finite iterate");
  out.residual = (h(out.x) - g).norm() / g_norm;
  return out;
}

// ---------------------------------------------------------------------------------------------
// Surrogates

namespace {

HeadObjective surrogate_objective(const TrajectoryBatch& batch, const Vector& advantages) {
  return [&batch, &advantages](const Matrix& mu, const Vector& ls) {
    const Eigen::Index n = mu.cols();
    const Vector inv_var = (-2.0 * ls.array()).exp();
    const Matrix diff = batch.actions - mu;
    const Vector z2 = (inv_var.asDiagonal() * diff.cwiseAbs2()).colwise().sum().transpose();
    const double norm = -ls.sum() - 0.5 * 1.8378770664093454836 * static_cast<double>(ls.size());
    const Vector log_p = (-0.5 * z2.array() + norm).matrix();
    const Vector weight = ((log_p - batch.log_probs).array().exp() * advantages.array()).matrix() /
                          static_cast<double>(n);
    HeadGradient h;
    h.value = weight.sum();
    h.d_mean = inv_var.asDiagonal() * diff * weight.asDiagonal();
    h.d_log_std = ((inv_var.asDiagonal() * diff.cwiseAbs2()).array() - 1.0).matrix() * weight;
    return h;
  };
}

}  // namespace

double surrogate(const GaussianPolicy& policy, const TrajectoryBatch& batch, const Vector& advantages) {
  require(advantages.size() == batch.size(), "surrogate: advantages misaligned with the batch");
  if (batch.size() == 0) return 0.0;
  const Vector log_p = policy.log_prob(batch.observations, batch.actions);
  return ((log_p - batch.log_probs).array().exp() * advantages.array()).mean();
}

Vector surrogate_gradient(const GaussianPolicy& policy, const TrajectoryBatch& batch,
                          const Vector& advantages) {
  require(advantages.size() == batch.size(), "surrogate: advantages misaligned with the batch");
  return policy.grad(batch.observations, surrogate_objective(batch, advantages));
}

double cost_surrogate_factor(double gamma_c, double mean_episode_length) {
  if (gamma_c >= 1.0) return mean_episode_length;
  return (1.0 - std::pow(gamma_c, mean_episode_length)) / (1.0 - gamma_c);
}

// ---------------------------------------------------------------------------------------------
// Trust-region subproblem

namespace {

struct QpSolution {
  int qp_case = 3;
  double lambda = 0.0;  // trust-region multiplier
  double nu = 0.0;      // cost multiplier
  double v_scale = 0.0; // step = v_scale·H⁻¹g + w_scale·H⁻¹b
  double w_scale = 0.0;
};

constexpr double kTiny = 1e-8;

// maximize gᵀx  s.t.  c + bᵀx ≤ 0,  ½ xᵀHx ≤ δ, from q = gᵀH⁻¹g, r = gᵀH⁻¹b, s = bᵀH⁻¹b.
QpSolution solve_qp(double q, double r, double s, double c, double delta) {
  QpSolution out;
  auto unconstrained = [&](int which) {
    out.qp_case = which;
    if (q <= 0.0) return out;
    out.lambda = std::sqrt(q / (2.0 * delta));
    out.v_scale = 1.0 / out.lambda;
    return out;
  };
  if (s <= kTiny && c < 0.0) return unconstrained(4);
  const double big_a = std::max(q - r * r / s, 0.0);
  const double big_b = 2.0 * delta - c * c / s;
  if (c < 0.0 && big_b < 0.0) return unconstrained(3);
  if (c >= 0.0 && big_b < 0.0) {
    out.qp_case = 0;
    if (s > 0.0) out.w_scale = -std::sqrt(2.0 * delta / s);
    return out;
  }
  out.qp_case = c < 0.0 ? 2 : 1;

  // Dual pieces: ν > 0 on Λ_a = {λ : λc + r > 0}, ν = 0 on its complement Λ_b.
  constexpr double inf = std::numeric_limits<double>::infinity();
  double a_lo = 0.0, a_hi = inf, b_lo = 0.0, b_hi = inf;
  bool a_empty = false, b_empty = false;
  if (c == 0.0) {
    (r > 0.0 ? b_empty : a_empty) = true;
  } else {
    const double mid = -r / c;
    if (c > 0.0) {
      a_lo = std::max(0.0, mid);
      b_hi = mid;
      b_empty = mid <= 0.0;
    } else {
      a_hi = mid;
      a_empty = mid <= 0.0;
      b_lo = std::max(0.0, mid);
    }
  }
  const double floor = 1e-12;
  double best_lambda = 0.0, best_value = inf;
  if (!a_empty) {
    const double lam = std::clamp(std::sqrt(big_a / std::max(big_b, floor)), std::max(a_lo, floor),
                                  std::max(a_hi, floor));
    const double value = big_a / (2.0 * lam) + big_b * lam / 2.0 - r * c / s;
    if (value < best_value) best_value = value, best_lambda = lam;
  }
  if (!b_empty) {
    const double lam = std::clamp(std::sqrt(q / (2.0 * delta)), std::max(b_lo, floor),
                                  std::max(b_hi, floor));
    const double value = q / (2.0 * lam) + lam * delta;
    if (value < best_value) best_value = value, best_lambda = lam;
  }
  out.lambda = best_lambda;
  out.nu = std::max(0.0, (best_lambda * c + r) / s);
  out.v_scale = 1.0 / best_lambda;
  out.w_scale = -out.nu / best_lambda;
  return out;
}

}  // namespace

std::string to_string(StepType type) {
  switch (type) {
    case StepType::feasible: return "feasible";
    case StepType::recovery: return "recovery";
    case StepType::rejected: return "rejected";
  }
  return "unknown";
}

CpoResult cpo_update(const TrajectoryBatch& batch, const GaussianPolicy& policy,
                     const CpoConfig& config) {
  config.validate();
  batch.validate();
  require(batch.size() > 0, "cpo_update: empty batch");
  require(batch.reward_advantages.size() == batch.size() &&
              batch.cost_advantages.size() == batch.size(),
          "cpo_update: advantages missing; run estimate_advantages first");

  CpoResult result{policy, {}};
  auto& diag = result.diagnostics;
  diag.mean_return = batch.reward_return_mean;
  diag.mean_cost_return = batch.cost_return_mean;

  const double factor = cost_surrogate_factor(config.gamma_c, batch.mean_episode_length);
  const Vector g = surrogate_gradient(policy, batch, batch.reward_advantages);
  const Vector b = factor * surrogate_gradient(policy, batch, batch.cost_advantages);
  if (!g.allFinite() || !b.allFinite()) throw NumericalError("cpo_update: non-finite surrogate gradient");
  const double c = batch.cost_return_mean - config.cost_limit;

  const FisherOperator fisher(policy, batch.observations, config.damping);
  const LinearOperator h = [&fisher](const Vector& x) { return fisher(x); };
  const CgResult v = cg_solve(h, g, config.cg_iterations, config.cg_tolerance);
  const CgResult w = cg_solve(h, b, config.cg_iterations, config.cg_tolerance);
  diag.cg_residual_reward = v.residual;
  diag.cg_residual_cost = w.residual;

  const double delta = config.trust_radius;
  const QpSolution qp = solve_qp(g.dot(v.x), g.dot(w.x), b.dot(w.x), c, delta);
  diag.qp_case = qp.qp_case;
  diag.lagrange_trust = qp.lambda;
  diag.lagrange_cost = qp.nu;
  const Vector step = qp.v_scale * v.x + qp.w_scale * w.x;
  if (!step.allFinite()) throw NumericalError("cpo_update: non-finite step");

  const bool recovery = qp.qp_case == 0;
  const bool require_improvement = qp.qp_case >= 2;
  const Vector theta = policy.parameters();
  const double reward_before = surrogate(policy, batch, batch.reward_advantages);
  const double cost_before = surrogate(policy, batch, batch.cost_advantages);
  const double cost_allowance = std::max(-c, 0.0) + config.cost_slack;

  double fraction = 1.0;
  GaussianPolicy candidate = policy;
  for (int k = 0; k <= config.max_backtracks; ++k, fraction *= config.backtrack_factor) {
    candidate.set_parameters(theta + fraction * step);
    const double kl_value = kl(candidate, policy, batch.observations);
    const double reward_gain = surrogate(candidate, batch, batch.reward_advantages) - reward_before;
    const double cost_change =
        factor * (surrogate(candidate, batch, batch.cost_advantages) - cost_before);
    if (!std::isfinite(kl_value) || !std::isfinite(reward_gain) || !std::isfinite(cost_change))
      continue;
    const bool ok = kl_value <= delta && cost_change <= cost_allowance &&
                    (!require_improvement || reward_gain >= 0.0);
    if (ok) {
      result.policy = candidate;
      diag.step_type = recovery ? StepType::recovery : StepType::feasible;
      diag.kl = kl_value;
      diag.line_search_steps = k;
      diag.step_fraction = fraction;
      diag.reward_surrogate_gain = reward_gain;
      diag.cost_surrogate_change = cost_change;
      return result;
    }
  }
  diag.step_type = StepType::rejected;
  diag.line_search_steps = config.max_backtracks + 1;
  return result;
}

// ---------------------------------------------------------------------------------------------
// Value regression

ValueFitReport fit_values(ValueFunction& value, const Matrix& observations, const Vector& targets,
                          const ValueFitConfig& config, Rng& rng) {
  require(targets.size() == observations.cols(), "fit_values: target count mismatch");
  ValueFitReport report;
  report.pre_loss = report.post_loss = value.mse(observations, targets);
  const auto n = observations.cols();
  if (config.epochs == 0 || n == 0) return report;

  const Vector start = value.network().parameters();
  const Eigen::Index batches = std::min<Eigen::Index>(config.minibatches, n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  double step_size = config.step_size;

  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    value.network().set_parameters(start);
    AdamState adam(start.size());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    bool diverged = false;
    for (int epoch = 0; epoch < config.epochs && !diverged; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (Eigen::Index m = 0; m < batches; ++m) {
        const Eigen::Index lo = m * n / batches, hi = (m + 1) * n / batches;
        Matrix obs(observations.rows(), hi - lo);
        Vector tgt(hi - lo);
        for (Eigen::Index i = lo; i < hi; ++i) {
          obs.col(i - lo) = observations.col(order[static_cast<std::size_t>(i)]);
          tgt[i - lo] = targets[order[static_cast<std::size_t>(i)]];
        }
        Vector grad;
        value.mse(obs, tgt, &grad);
        Vector params = value.network().parameters();
        adam.apply(params, grad, step_size);
        value.network().set_parameters(params);
      }
      const double loss = value.mse(observations, targets);
      diverged = !std::isfinite(loss) || loss > 10.0 * report.pre_loss;
    }
    const double loss = value.mse(observations, targets);
    if (!diverged && loss <= report.pre_loss) {
      report.post_loss = loss;
      return report;
    }
    ++report.retries;
    step_size *= 0.5;
  }
  value.network().set_parameters(start);
  report.diverged = true;
  report.post_loss = report.pre_loss;
  report.retries = config.max_retries;
  return report;
}

}  // namespace afd
