#include "afd/env.hpp"

#include <cmath>

namespace afd {

using nlohmann::json;

Vector ReferenceSchedule::at(int t, Eigen::Index n_y) const {
  Vector current = Vector::Zero(n_y);
  for (std::size_t k = 0; k < switch_steps.size() && k < values.size(); ++k) {
    if (switch_steps[k] > t) break;
    current = values[k];
  }
  return current;
}

void EpisodeConfig::validate(Eigen::Index n_x, Eigen::Index n_u, Eigen::Index n_y) const {
  if (horizon < 1) throw ConfigError("episode.horizon: must be at least 1");
  if (horizon_max != 0 && horizon_max < horizon)
    throw ConfigError("episode.horizon_max: must not be below horizon");
  if (!(dy_max > 0.0)) throw ConfigError("episode.dy_max: must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("episode.gamma: must lie in (0, 1]");
  if (!(gamma_c > 0.0 && gamma_c <= 1.0)) throw ConfigError("episode.gamma_c: must lie in (0, 1]");
  if (init_radius < 0.0) throw ConfigError("episode.init_radius: must be non-negative");
  if (prior.mu_x.size() != n_x || prior.mu_z.size() != n_u)
    throw ConfigError("episode.prior: dimensions do not match the plant");
  try {
    prior.validate();
    faults.validate(n_u);
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("episode: ") + e.what());
  }
  for (const auto& v : reference.values)
    if (v.size() != n_y) throw ConfigError("episode.reference: values must have n_y entries");
  if (reference.switch_steps.size() != reference.values.size())
    throw ConfigError("episode.reference: steps and values differ in length");
}

Belief default_prior(Eigen::Index n_x, Eigen::Index n_u, double init_radius) {
  // Covariance of the uniform ball: r² / (n + 2) per axis.
  const double state_var = init_radius * init_radius / static_cast<double>(n_x + 2);
  return {Vector::Zero(n_x), state_var * Matrix::Identity(n_x, n_x), Vector::Constant(n_u, 0.5),
          Matrix::Identity(n_u, n_u)};
}

EpisodeConfig default_episode_config(const LinearFaultPlant& plant) {
  EpisodeConfig cfg;
  cfg.prior = default_prior(plant.state_dim(), plant.input_dim(), cfg.init_radius);
  return cfg;
}

Environment::Environment(LinearFaultPlant plant_, FaultWalkModel walk, EpisodeConfig config_)
    : plant(std::move(plant_)),
      observer(ObserverModel::from_plant(plant, std::move(walk))),
      config(std::move(config_)) {
  config.validate(plant.state_dim(), plant.input_dim(), plant.output_dim());
  require(observer.walk.mu_xi.size() == plant.input_dim(), "environment: walk model shape mismatch");
}

Vector ObservationLayout::pack(const Belief& belief, const Vector& y_ref, const Vector& y) const {
  Vector obs(size());
  obs.segment(mu_x_offset(), n_x) = belief.mu_x;
  obs.segment(sigma_x_offset(), triu_size(n_x)) = triu(belief.sigma_x);
  obs.segment(mu_z_offset(), n_u) = belief.mu_z;
  obs.segment(sigma_z_offset(), triu_size(n_u)) = triu(belief.sigma_z);
  obs.segment(y_ref_offset(), n_y) = y_ref;
  obs.segment(y_offset(), n_y) = y;
  return obs;
}

ObservationLayout::Unpacked ObservationLayout::unpack(const Vector& obs) const {
  require(obs.size() == size(), "observation: length does not match layout");
  Unpacked out;
  out.belief.mu_x = obs.segment(mu_x_offset(), n_x);
  out.belief.sigma_x = from_triu(obs.segment(sigma_x_offset(), triu_size(n_x)), n_x);
  out.belief.mu_z = obs.segment(mu_z_offset(), n_u);
  out.belief.sigma_z = from_triu(obs.segment(sigma_z_offset(), triu_size(n_u)), n_u);
  out.y_ref = obs.segment(y_ref_offset(), n_y);
  out.y = obs.segment(y_offset(), n_y);
  return out;
}

ObservationLayout ObservationLayout::of(const LinearFaultPlant& plant) {
  return {plant.state_dim(), plant.input_dim(), plant.output_dim()};
}

Vector mask_state(const EnvState& state) {
  const ObservationLayout layout{state.belief.mu_x.size(), state.belief.mu_z.size(), state.y.size()};
  return layout.pack(state.belief, state.y_ref, state.y);
}

double reward(const Belief& belief, const Vector& z_true) {
  require(z_true.size() == belief.mu_z.size(), "reward: fault dimension mismatch");
  return -belief.sigma_z.trace() - (z_true - belief.mu_z).squaredNorm();
}

double cost(const Vector& y, const Vector& y_ref, double dy_max) {
  require(y.size() == y_ref.size(), "cost: output dimension mismatch");
  require(dy_max > 0.0, "cost: dy_max must be positive");
  return (y - y_ref).lpNorm<Eigen::Infinity>() > dy_max ? 1.0 : 0.0;
}

ResetResult reset(const Environment& env, Rng& rng) {
  const auto& cfg = env.config;
  const auto& plant = env.plant;
  const auto nu = plant.input_dim();

  EnvState s;
  s.plant.z.resize(nu);
  for (Eigen::Index i = 0; i < nu; ++i) s.plant.z[i] = uniform01(rng);
  s.plant.fault_age = 0;

  const double horizon_draw = uniform01(rng);
  s.horizon = cfg.horizon;
  if (cfg.horizon_max > cfg.horizon) {
    const int span = cfg.horizon_max - cfg.horizon + 1;
    s.horizon = cfg.horizon + std::min(span - 1, static_cast<int>(horizon_draw * span));
  }

  s.plant.x = sample_ball(rng, plant.state_dim(), cfg.init_radius);
  s.y = measure(plant, s.plant.x, rng);
  s.y_ref = cfg.reference.at(0, plant.output_dim());
  s.t = 0;

  // Condition the state prior on y_0; the fault prior is untouched (no input applied yet).
  s.belief = cfg.prior;
  const PredictedState prior{cfg.prior.mu_x, cfg.prior.sigma_x,
                             Matrix::Zero(plant.state_dim(), nu)};
  StatePosterior post = correct_state(prior, s.y, env.observer.c, env.observer.sigma_v);
  s.belief.mu_x = std::move(post.mu_x);
  s.belief.sigma_x = condition_covariance(post.sigma_x, env.observer.jitter);

  Vector obs = mask_state(s);
  return {std::move(s), std::move(obs)};
}

StepResult env_step(const Environment& env, const EnvState& state, const Vector& action, Rng& rng) {
  if (state.t >= state.horizon) throw ContractViolation("env_step: episode already finished");
  require(action.size() == env.plant.input_dim(), "env_step: action dimension mismatch");
  require(action.allFinite(), "env_step: non-finite action");

  StepResult out;
  out.applied_action = clip_action(action, env.plant);
  PlantStep ps = step_plant(env.plant, env.config.faults, state.plant, out.applied_action, rng);

  out.next.plant = std::move(ps.next);
  out.next.y = std::move(ps.y);
  out.next.t = state.t + 1;
  out.next.horizon = state.horizon;
  out.next.y_ref = env.config.reference.at(out.next.t, env.plant.output_dim());
  out.next.belief = observer_step(state.belief, out.applied_action, out.next.y, env.observer);

  out.reward = reward(out.next.belief, out.next.plant.z);
  out.cost = cost(out.next.y, out.next.y_ref, env.config.dy_max);
  out.done = out.next.t == out.next.horizon;
  out.observation = mask_state(out.next);
  return out;
}

EpisodeSummary run_episode(const Environment& env, const Controller& controller, Rng& env_rng,
                           Rng& controller_rng, EpisodeTrace* trace) {
  ResetResult start = reset(env, env_rng);
  EnvState state = std::move(start.state);
  Vector obs = std::move(start.observation);
  if (trace) {
    trace->dy_max = env.config.dy_max;
    trace->steps.clear();
    trace->steps.reserve(static_cast<std::size_t>(state.horizon));
  }
  EpisodeSummary summary;
  for (;;) {
    const Vector action = controller(obs, controller_rng);
    StepResult step = env_step(env, state, action, env_rng);
    summary.reward_sum += step.reward;
    summary.cost_sum += step.cost;
    ++summary.steps;
    if (trace) {
      TraceStep rec;
      rec.t = step.next.t;
      rec.z_true = step.next.plant.z;
      rec.mu_z = step.next.belief.mu_z;
      rec.sigma_z_diag = step.next.belief.sigma_z.diagonal();
      rec.y = step.next.y;
      rec.y_ref = step.next.y_ref;
      rec.action = step.applied_action;
      rec.reward = step.reward;
      rec.cost = step.cost;
      rec.fault_jump = step.next.plant.z != state.plant.z;
      trace->steps.push_back(std::move(rec));
    }
    if (step.done) break;
    state = std::move(step.next);
    obs = std::move(step.observation);
  }
  return summary;
}

FaultProcess fault_process_from_json(const json& config, Eigen::Index n_u) {
  if (!config.is_object()) throw ConfigError("faults: expected an object");
  const std::string kind = config.value("kind", std::string("constant"));
  FaultProcess p;
  if (kind == "constant") {
    p = FaultProcess::constant();
  } else if (kind == "jump") {
    p = FaultProcess::jump(config.value("min_dwell", 30), config.value("hazard", 1.0 / 30.0));
  } else if (kind == "random_walk") {
    const Vector mean = config.contains("mean") ? json_vector(config["mean"], "faults.mean")
                                                : Vector(Vector::Zero(n_u));
    const Matrix cov = config.contains("cov") ? json_covariance(config["cov"], "faults.cov", n_u)
                                              : Matrix(1e-4 * Matrix::Identity(n_u, n_u));
    p = FaultProcess::random_walk(mean, cov);
  } else {
    throw ConfigError("faults.kind: expected constant, jump or random_walk");
  }
  try {
    p.validate(n_u);
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("faults: ") + e.what());
  }
  return p;
}

EpisodeConfig episode_config_from_json(const json& config, const LinearFaultPlant& plant) {
  if (!config.is_object()) throw ConfigError("episode: expected an object");
  EpisodeConfig cfg = default_episode_config(plant);
  auto number = [&](const char* key, double fallback) {
    if (!config.contains(key)) return fallback;
    if (!config[key].is_number()) throw ConfigError(std::string("episode.") + key + ": expected a number");
    return config[key].get<double>();
  };
  cfg.horizon = static_cast<int>(number("horizon", cfg.horizon));
  cfg.horizon_max = static_cast<int>(number("horizon_max", cfg.horizon_max));
  cfg.dy_max = number("dy_max", cfg.dy_max);
  cfg.cost_limit = number("cost_limit", cfg.cost_limit);
  cfg.gamma = number("gamma", cfg.gamma);
  cfg.gamma_c = number("gamma_c", cfg.gamma_c);
  cfg.init_radius = number("init_radius", cfg.init_radius);
  const auto nx = plant.state_dim(), nu = plant.input_dim();
  cfg.prior = default_prior(nx, nu, cfg.init_radius);
  if (config.contains("faults")) cfg.faults = fault_process_from_json(config["faults"], nu);
  if (config.contains("prior")) {
    const json& p = config["prior"];
    if (p.contains("mu_z")) cfg.prior.mu_z = json_vector(p["mu_z"], "episode.prior.mu_z");
    if (p.contains("sigma_z")) cfg.prior.sigma_z = json_covariance(p["sigma_z"], "episode.prior.sigma_z", nu);
    if (p.contains("mu_x")) cfg.prior.mu_x = json_vector(p["mu_x"], "episode.prior.mu_x");
    if (p.contains("sigma_x")) cfg.prior.sigma_x = json_covariance(p["sigma_x"], "episode.prior.sigma_x", nx);
  }
  if (config.contains("reference")) {
    for (const auto& seg : config["reference"]) {
      if (!seg.contains("step") || !seg.contains("value"))
        throw ConfigError("episode.reference: each segment needs step and value");
      cfg.reference.switch_steps.push_back(seg["step"].get<int>());
      cfg.reference.values.push_back(json_vector(seg["value"], "episode.reference.value"));
    }
  }
  cfg.validate(nx, nu, plant.output_dim());
  return cfg;
}

}  // namespace afd
