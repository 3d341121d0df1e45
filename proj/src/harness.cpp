#include "afd/harness.hpp"

#include "afd/csv.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace afd {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  if (training.updates < 1) throw ConfigError("training.updates: must be at least 1");
  if (training.episodes_per_update < 1)
    throw ConfigError("training.episodes_per_update: must be at least 1");
  if (training.checkpoint_every < 0) throw ConfigError("training.checkpoint_every: must be non-negative");
  if (training.warmup_episodes < 0) throw ConfigError("training.warmup_episodes: must be non-negative");
  if (!(training.init_std_fraction > 0.0)) throw ConfigError("training.init_std_fraction: must be positive");
  for (auto h : training.hidden)
    if (h < 1) throw ConfigError("training.hidden: widths must be positive");
  if (evaluation.episodes < 0) throw ConfigError("evaluation.episodes: must be non-negative");
  if (evaluation.horizon_min < 1 || evaluation.horizon_max < evaluation.horizon_min)
    throw ConfigError("evaluation.horizon: need 1 <= horizon_min <= horizon_max");
  if (evaluation.min_dwell < 1) throw ConfigError("evaluation.min_dwell: must be at least 1");
  if (!(evaluation.jump_hazard >= 0.0 && evaluation.jump_hazard <= 1.0))
    throw ConfigError("evaluation.jump_hazard: must lie in [0, 1]");
  if (!(walk_variance >= 0.0)) throw ConfigError("observer.walk_variance: must be non-negative");
  if (tuning_episodes < 1) throw ConfigError("baseline.tuning_episodes: must be at least 1");
  if (grid.gain_scales.empty() || grid.perturbations.empty())
    throw ConfigError("baseline: gain_scales and perturbations must be non-empty");
  for (double kp : grid.perturbations)
    if (kp < 0.0) throw ConfigError("baseline.perturbations: must be non-negative");
  if (sweep.updates < 1 || sweep.episodes_per_update < 1 || sweep.evaluation_episodes < 0 ||
      sweep.drift_rollouts < 1)
    throw ConfigError("sweep: counts must be positive");
  cpo.validate();
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& target, const std::string& scope) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(scope + "." + key + ": wrong type");
  }
}

void expect_object(const json& j, const std::string& scope) {
  if (!j.is_object()) throw ConfigError(scope + ": expected an object");
}

std::vector<double> number_list(const json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError(key + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw ConfigError(key + ": non-numeric entry");
    out.push_back(v.get<double>());
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& j, const std::string& base_dir) {
  expect_object(j, "config");
  ExperimentConfig c;
  c.grid.gain_scales = {0.5, 1.0, 2.0, 4.0};
  c.grid.perturbations = {0.0, 0.0025, 0.005, 0.0075, 0.01, 0.015, 0.02};

  if (j.contains("plant")) {
    if (j["plant"].is_string()) {
      const fs::path path = fs::path(base_dir) / j["plant"].get<std::string>();
      std::ifstream in(path);
      if (!in) throw ConfigError("plant: cannot open " + path.string());
      try {
        c.plant = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError("plant: parse error in " + path.string() + ": " + e.what());
      }
    } else {
      c.plant = j["plant"];
    }
    expect_object(c.plant, "plant");
  }
  if (j.contains("episode")) {
    c.episode = j["episode"];
    expect_object(c.episode, "episode");
  }
  if (j.contains("observer")) {
    expect_object(j["observer"], "observer");
    read(j["observer"], "walk_variance", c.walk_variance, "observer");
  }
  if (j.contains("cpo")) {
    const json& p = j["cpo"];
    expect_object(p, "cpo");
    read(p, "trust_radius", c.cpo.trust_radius, "cpo");
    read(p, "lambda", c.cpo.lambda, "cpo");
    read(p, "cg_iterations", c.cpo.cg_iterations, "cpo");
    read(p, "cg_tolerance", c.cpo.cg_tolerance, "cpo");
    read(p, "damping", c.cpo.damping, "cpo");
    read(p, "backtrack_factor", c.cpo.backtrack_factor, "cpo");
    read(p, "max_backtracks", c.cpo.max_backtracks, "cpo");
    read(p, "cost_slack", c.cpo.cost_slack, "cpo");
    if (p.contains("value_fit")) {
      const json& v = p["value_fit"];
      expect_object(v, "cpo.value_fit");
      read(v, "epochs", c.cpo.value_fit.epochs, "cpo.value_fit");
      read(v, "minibatches", c.cpo.value_fit.minibatches, "cpo.value_fit");
      read(v, "step_size", c.cpo.value_fit.step_size, "cpo.value_fit");
      read(v, "max_retries", c.cpo.value_fit.max_retries, "cpo.value_fit");
    }
  }
  if (j.contains("training")) {
    const json& t = j["training"];
    expect_object(t, "training");
    read(t, "updates", c.training.updates, "training");
    read(t, "episodes_per_update", c.training.episodes_per_update, "training");
    read(t, "checkpoint_every", c.training.checkpoint_every, "training");
    read(t, "init_std_fraction", c.training.init_std_fraction, "training");
    read(t, "output_gain", c.training.output_gain, "training");
    read(t, "warmup_episodes", c.training.warmup_episodes, "training");
    if (t.contains("hidden")) {
      c.training.hidden.clear();
      for (double h : number_list(t["hidden"], "training.hidden"))
        c.training.hidden.push_back(static_cast<Eigen::Index>(h));
    }
  }
  if (j.contains("evaluation")) {
    const json& e = j["evaluation"];
    expect_object(e, "evaluation");
    read(e, "episodes", c.evaluation.episodes, "evaluation");
    read(e, "horizon_min", c.evaluation.horizon_min, "evaluation");
    read(e, "horizon_max", c.evaluation.horizon_max, "evaluation");
    read(e, "min_dwell", c.evaluation.min_dwell, "evaluation");
    read(e, "jump_hazard", c.evaluation.jump_hazard, "evaluation");
    read(e, "stochastic", c.evaluation.stochastic, "evaluation");
  }
  if (j.contains("baseline")) {
    const json& b = j["baseline"];
    expect_object(b, "baseline");
    if (b.contains("nominal_gain")) c.grid.nominal_gain = json_matrix(b["nominal_gain"], "baseline.nominal_gain");
    if (b.contains("gain_scales")) c.grid.gain_scales = number_list(b["gain_scales"], "baseline.gain_scales");
    if (b.contains("perturbations"))
      c.grid.perturbations = number_list(b["perturbations"], "baseline.perturbations");
    read(b, "tuning_episodes", c.tuning_episodes, "baseline");
  }
  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    expect_object(s, "sweep");
    if (s.contains("thresholds")) c.sweep.thresholds = number_list(s["thresholds"], "sweep.thresholds");
    read(s, "updates", c.sweep.updates, "sweep");
    read(s, "episodes_per_update", c.sweep.episodes_per_update, "sweep");
    read(s, "evaluation_episodes", c.sweep.evaluation_episodes, "sweep");
    read(s, "drift_rollouts", c.sweep.drift_rollouts, "sweep");
  }
  read(j, "seed", c.seed, "config");
  read(j, "output_dir", c.output_dir, "config");

  // Cost limit and discounts have a single source: the episode block.
  const LinearFaultPlant plant = make_plant(c);
  const EpisodeConfig episode = episode_config_from_json(c.episode, plant);
  c.cpo.cost_limit = episode.cost_limit;
  c.cpo.gamma = episode.gamma;
  c.cpo.gamma_c = episode.gamma_c;
  if (c.grid.nominal_gain.size() == 0) c.grid.nominal_gain = default_nominal_gain(plant);
  if (c.grid.nominal_gain.rows() != plant.input_dim() || c.grid.nominal_gain.cols() != plant.output_dim())
    throw ConfigError("baseline.nominal_gain: expected n_u x n_y");
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: parse error in " + path + ": " + e.what());
  }
  return experiment_config_from_json(j, fs::path(path).parent_path().string());
}

LinearFaultPlant make_plant(const ExperimentConfig& config) { return plant_from_json(config.plant); }

Environment training_environment(const ExperimentConfig& config) {
  LinearFaultPlant plant = make_plant(config);
  EpisodeConfig episode = episode_config_from_json(config.episode, plant);
  const auto nu = plant.input_dim();
  return {std::move(plant), FaultWalkModel::isotropic(nu, config.walk_variance), std::move(episode)};
}

Environment test_environment(const ExperimentConfig& config) {
  LinearFaultPlant plant = make_plant(config);
  EpisodeConfig episode = episode_config_from_json(config.episode, plant);
  episode.faults = FaultProcess::jump(config.evaluation.min_dwell, config.evaluation.jump_hazard);
  episode.horizon = config.evaluation.horizon_min;
  episode.horizon_max = config.evaluation.horizon_max;
  const auto nu = plant.input_dim();
  return {std::move(plant), FaultWalkModel::isotropic(nu, config.walk_variance), std::move(episode)};
}

Matrix default_nominal_gain(const LinearFaultPlant& plant) {
  const Matrix cb = plant.c() * plant.b();
  return 0.2 * cb.completeOrthogonalDecomposition().pseudoInverse();
}

std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream) {
  return derive_seed(seed, static_cast<std::uint64_t>(stream));
}

// ---------------------------------------------------------------------------------------------
// Training

Checkpoint initial_agent(const ExperimentConfig& config, const LinearFaultPlant& plant) {
  const auto layout = ObservationLayout::of(plant);
  const auto nu = plant.input_dim();
  const Vector range = plant.u_max() - plant.u_min();
  Rng rng(stream_seed(config.seed, SeedStream::init));

  Checkpoint agent;
  const MlpArchitecture policy_arch{layout.size(), config.training.hidden, nu, Activation::tanh};
  agent.policy = GaussianPolicy(policy_arch, 0.5 * range,
                                (config.training.init_std_fraction * range).array().log().matrix());
  agent.policy.network().initialize(rng, config.training.output_gain);
  // Critics also see the remaining fraction of the episode: cost-to-go depends on it.
  const MlpArchitecture value_arch{layout.size() + 1, config.training.hidden, 1, Activation::tanh};
  agent.reward_value = ValueFunction(value_arch);
  agent.reward_value.network().initialize(rng, 1.0);
  agent.cost_value = ValueFunction(value_arch);
  agent.cost_value.network().initialize(rng, 1.0);
  agent.normalizer = RunningNormalizer(layout.size());
  return agent;
}

namespace {

struct Collected {
  TrajectoryBatch batch;
  Matrix raw_observations;
  LearningCurvePoint curve;
};

// Episodes under the current (frozen) policy and normalizer.
Collected collect(const Environment& env, const Checkpoint& agent, int episodes,
                  std::uint64_t seed, std::uint64_t update) {
  std::vector<Vector> raw, acts;
  std::vector<double> logp, rew, cst, remaining;
  Collected out;
  double reward_per_step = 0.0, cost_per_episode = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Rng env_rng(derive_seed(seed, update, 2 * static_cast<std::uint64_t>(e)));
    Rng act_rng(derive_seed(seed, update, 2 * static_cast<std::uint64_t>(e) + 1));
    out.batch.episode_starts.push_back(static_cast<Eigen::Index>(rew.size()));
    ResetResult start = reset(env, env_rng);
    EnvState state = std::move(start.state);
    Vector obs = std::move(start.observation);
    double ep_reward = 0.0, ep_cost = 0.0;
    int steps = 0;
    for (;;) {
      const Vector normalized = agent.normalizer.normalize(obs);
      const Vector action = agent.policy.sample(normalized, act_rng);
      raw.push_back(obs);
      remaining.push_back(static_cast<double>(state.horizon - state.t) / state.horizon);
      acts.push_back(action);
      logp.push_back(agent.policy.log_prob(normalized, action));
      StepResult step = env_step(env, state, action, env_rng);
      rew.push_back(step.reward);
      cst.push_back(step.cost);
      ep_reward += step.reward;
      ep_cost += step.cost;
      ++steps;
      if (step.done) break;
      state = std::move(step.next);
      obs = std::move(step.observation);
    }
    reward_per_step += ep_reward / steps;
    cost_per_episode += ep_cost;
  }
  const auto n = static_cast<Eigen::Index>(rew.size());
  out.raw_observations.resize(raw.front().size(), n);
  out.batch.actions.resize(acts.front().size(), n);
  out.batch.log_probs.resize(n);
  out.batch.rewards.resize(n);
  out.batch.costs.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out.raw_observations.col(i) = raw[k];
    out.batch.actions.col(i) = acts[k];
    out.batch.log_probs[i] = logp[k];
    out.batch.rewards[i] = rew[k];
    out.batch.costs[i] = cst[k];
  }
  out.batch.observations = agent.normalizer.normalize(out.raw_observations);
  out.batch.critic_observations.resize(out.batch.observations.rows() + 1, n);
  out.batch.critic_observations.topRows(out.batch.observations.rows()) = out.batch.observations;
  out.batch.critic_observations.bottomRows(1) =
      Eigen::Map<const Eigen::RowVectorXd>(remaining.data(), n);
  out.curve.mean_reward_per_step = reward_per_step / episodes;
  out.curve.mean_cost_per_episode = cost_per_episode / episodes;
  return out;
}

std::string checkpoint_name(int update) {
  std::ostringstream name;
  name << "checkpoint_" << std::setw(5) << std::setfill('0') << update << ".json";
  return name.str();
}

bool agent_finite(const Checkpoint& a) {
  return a.policy.parameters().allFinite() && a.reward_value.network().parameters().allFinite() &&
         a.cost_value.network().parameters().allFinite() && a.normalizer.mean().allFinite() &&
         a.normalizer.m2().allFinite();
}

}  // namespace

std::vector<std::string> training_log_header() {
  return {"update",           "mean_reward_per_step", "mean_cost_per_episode", "mean_return",
          "mean_cost_return", "kl",                   "step_type",             "qp_case",
          "cg_residual_reward", "cg_residual_cost",  "line_search_steps",     "step_fraction",
          "reward_surrogate_gain", "cost_surrogate_change", "lagrange_trust",  "lagrange_cost",
          "reward_value_loss", "cost_value_loss"};
}

std::vector<std::string> training_log_row(const UpdateDiagnostics& d, const LearningCurvePoint& p) {
  return {std::to_string(d.index),
          format_double(p.mean_reward_per_step),
          format_double(p.mean_cost_per_episode),
          format_double(d.mean_return),
          format_double(d.mean_cost_return),
          format_double(d.kl),
          to_string(d.step_type),
          std::to_string(d.qp_case),
          format_double(d.cg_residual_reward),
          format_double(d.cg_residual_cost),
          std::to_string(d.line_search_steps),
          format_double(d.step_fraction),
          format_double(d.reward_surrogate_gain),
          format_double(d.cost_surrogate_change),
          format_double(d.lagrange_trust),
          format_double(d.lagrange_cost),
          format_double(d.reward_value_loss),
          format_double(d.cost_value_loss)};
}

json diagnostics_json(const UpdateDiagnostics& d, const LearningCurvePoint& p) {
  const auto header = training_log_header();
  const auto row = training_log_row(d, p);
  json j = json::object();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "step_type") {
      j[header[i]] = row[i];
    } else if (header[i] == "update" || header[i] == "qp_case" || header[i] == "line_search_steps") {
      j[header[i]] = std::stoi(row[i]);
    } else {
      j[header[i]] = std::stod(row[i]);
    }
  }
  return j;
}

TrainingOutput train(const ExperimentConfig& config) {
  config.validate();
  const Environment env = training_environment(config);
  CpoConfig cpo = config.cpo;
  cpo.cost_limit = env.config.cost_limit;
  cpo.gamma = env.config.gamma;
  cpo.gamma_c = env.config.gamma_c;

  const bool write = !config.output_dir.empty();
  const fs::path out_dir(config.output_dir);
  std::ofstream csv_log, json_log;
  if (write) {
    fs::create_directories(out_dir / "checkpoints");
    csv_log.open(out_dir / "training_log.csv", std::ios::binary);
    json_log.open(out_dir / "training_log.jsonl", std::ios::binary);
    if (!csv_log || !json_log) throw ConfigError("train: cannot write logs in " + out_dir.string());
    write_csv_row(csv_log, training_log_header());
  }

  TrainingOutput output;
  Checkpoint agent = initial_agent(config, env.plant);
  const std::uint64_t seed = stream_seed(config.seed, SeedStream::training);

  // Normalizer warm-up on episodes of the initial policy; these samples are not trained on.
  {
    const int warmup = config.training.warmup_episodes > 0 ? config.training.warmup_episodes
                                                           : config.training.episodes_per_update;
    const Collected w = collect(env, agent, warmup, stream_seed(config.seed, SeedStream::init), 0);
    agent.normalizer.update(w.raw_observations);
  }

  for (int u = 0; u < config.training.updates; ++u) {
    const Checkpoint last_good = agent;
    try {
      Collected data = collect(env, agent, config.training.episodes_per_update, seed,
                               static_cast<std::uint64_t>(u));
      TrajectoryBatch& batch = data.batch;
      estimate_advantages(batch, agent.reward_value, agent.cost_value, cpo.gamma, cpo.gamma_c,
                          cpo.lambda);
      CpoResult step = cpo_update(batch, agent.policy, cpo);
      agent.policy = std::move(step.policy);
      Rng fit_rng(derive_seed(seed, static_cast<std::uint64_t>(u), 1ull << 32));
      const ValueFitReport rv =
          fit_values(agent.reward_value, batch.critic_inputs(), batch.reward_targets, cpo.value_fit, fit_rng);
      const ValueFitReport cv =
          fit_values(agent.cost_value, batch.critic_inputs(), batch.cost_targets, cpo.value_fit, fit_rng);
      agent.normalizer.update(data.raw_observations);
      agent.update_index = u + 1;
      if (!agent_finite(agent)) throw NumericalError("train: non-finite parameters after update");

      UpdateDiagnostics& d = step.diagnostics;
      d.index = u + 1;
      d.reward_value_loss = rv.post_loss;
      d.cost_value_loss = cv.post_loss;
      data.curve.update = u + 1;
      output.diagnostics.push_back(d);
      output.curve.push_back(data.curve);
      if (write) {
        write_csv_row(csv_log, training_log_row(d, data.curve));
        json_log << diagnostics_json(d, data.curve).dump() << '\n';
        csv_log.flush();
        json_log.flush();
        if (config.training.checkpoint_every > 0 && (u + 1) % config.training.checkpoint_every == 0)
          save_checkpoint(agent, (out_dir / "checkpoints" / checkpoint_name(u + 1)).string());
      }
    } catch (const NumericalError& e) {
      if (write) {
        save_checkpoint(last_good, (out_dir / "checkpoint_last_good.json").string());
        json_log << json{{"update", u + 1}, {"error", e.what()}}.dump() << '\n';
      }
      throw TrainingAborted(std::string("training aborted at update ") + std::to_string(u + 1) +
                                ": " + e.what(),
                            u + 1);
    }
  }
  output.checkpoint = agent;
  if (write) save_checkpoint(agent, (out_dir / "checkpoint_final.json").string());
  return output;
}

// ---------------------------------------------------------------------------------------------
// Evaluation

Controller policy_controller(const Checkpoint& agent, bool stochastic) {
  return [policy = agent.policy, normalizer = agent.normalizer, stochastic](const Vector& obs, Rng& rng) {
    const Vector normalized = normalizer.normalize(obs);
    return stochastic ? policy.sample(normalized, rng) : policy.mean(normalized);
  };
}

void check_agent_matches(const Checkpoint& agent, const LinearFaultPlant& plant) {
  const auto layout = ObservationLayout::of(plant);
  if (agent.policy.observation_dim() != layout.size() || agent.policy.action_dim() != plant.input_dim() ||
      agent.normalizer.dim() != layout.size())
    throw ConfigError("checkpoint: observation/action dimensions do not match the plant (expected " +
                      std::to_string(layout.size()) + " inputs and " +
                      std::to_string(plant.input_dim()) + " actions)");
}

std::pair<int, int> jump_recovery(const EpisodeTrace& trace, int window) {
  int events = 0, recovered = 0;
  const auto n = static_cast<int>(trace.steps.size());
  for (int i = 0; i < n; ++i) {
    if (!trace.steps[static_cast<std::size_t>(i)].fault_jump) continue;
    const int end = i + window - 1;
    if (end >= n) continue;
    bool clean = true;
    for (int k = i + 1; k <= end; ++k) clean = clean && !trace.steps[static_cast<std::size_t>(k)].fault_jump;
    if (!clean) continue;
    const auto& a = trace.steps[static_cast<std::size_t>(i)];
    const auto& b = trace.steps[static_cast<std::size_t>(end)];
    ++events;
    if ((b.mu_z - b.z_true).norm() < (a.mu_z - a.z_true).norm()) ++recovered;
  }
  return {events, recovered};
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return {mean, sd};
}

}  // namespace

MetricsRecord evaluate(const Environment& env, const Controller& controller, int episodes,
                       std::uint64_t seed) {
  require(episodes >= 0, "evaluate: negative episode count");
  MetricsRecord m;
  m.episodes = episodes;
  m.empty = episodes == 0;
  if (m.empty) return m;
  std::vector<double> cost_per_step;
  EpisodeTrace trace;
  for (int e = 0; e < episodes; ++e) {
    Rng env_rng(derive_seed(seed, static_cast<std::uint64_t>(e), 0));
    Rng ctl_rng(derive_seed(seed, static_cast<std::uint64_t>(e), 1));
    const EpisodeSummary s = run_episode(env, controller, env_rng, ctl_rng, &trace);
    m.episode_rewards.push_back(s.mean_reward());
    m.episode_costs.push_back(s.cost_sum);
    m.episode_lengths.push_back(s.steps);
    cost_per_step.push_back(s.cost_sum / s.steps);
    const auto [events, recovered] = jump_recovery(trace);
    m.jump_events += events;
    m.jump_events_recovered += recovered;
  }
  std::tie(m.mean_reward, m.std_reward) = mean_std(m.episode_rewards);
  std::tie(m.mean_cost, m.std_cost) = mean_std(cost_per_step);
  std::tie(m.mean_cost_return, m.std_cost_return) = mean_std(m.episode_costs);
  return m;
}

void write_metrics_csv(std::ostream& out, const MetricsRecord& m) {
  write_csv_row(out, {"episodes", "empty", "mean_reward_per_step", "std_reward_per_step",
                      "mean_cost_per_step", "std_cost_per_step", "mean_cost_per_episode",
                      "std_cost_per_episode", "jump_events", "jump_events_recovered"});
  write_csv_row(out, {std::to_string(m.episodes), m.empty ? "1" : "0", format_double(m.mean_reward),
                      format_double(m.std_reward), format_double(m.mean_cost),
                      format_double(m.std_cost), format_double(m.mean_cost_return),
                      format_double(m.std_cost_return), std::to_string(m.jump_events),
                      std::to_string(m.jump_events_recovered)});
}

void write_episode_metrics_csv(std::ostream& out, const MetricsRecord& m) {
  write_csv_row(out, {"episode", "steps", "mean_reward_per_step", "cost_return"});
  for (std::size_t e = 0; e < m.episode_rewards.size(); ++e)
    write_csv_row(out, {std::to_string(e), std::to_string(m.episode_lengths[e]),
                        format_double(m.episode_rewards[e]), format_double(m.episode_costs[e])});
}

// ---------------------------------------------------------------------------------------------
// Threshold sweep

double drift_violation_probability(const Environment& env, int rollouts, std::uint64_t seed) {
  require(rollouts >= 1, "drift_violation_probability: need at least one rollout");
  const Vector zero = Vector::Zero(env.plant.input_dim());
  const Controller idle = [&zero](const Vector&, Rng&) { return zero; };
  int violated = 0;
  for (int i = 0; i < rollouts; ++i) {
    Rng env_rng(derive_seed(seed, static_cast<std::uint64_t>(i), 0));
    Rng unused(0);
    if (run_episode(env, idle, env_rng, unused).cost_sum > 0.0) ++violated;
  }
  return static_cast<double>(violated) / rollouts;
}

std::vector<SweepPoint> sweep_tracking_threshold(const ExperimentConfig& config,
                                                 const std::vector<double>& thresholds) {
  require(!thresholds.empty(), "sweep: threshold list is empty");
  std::vector<SweepPoint> points;
  for (const double threshold : thresholds) {
    SweepPoint p;
    p.threshold = threshold;
    ExperimentConfig c = config;
    c.episode["dy_max"] = threshold;
    c.training.updates = config.sweep.updates;
    c.training.episodes_per_update = config.sweep.episodes_per_update;
    c.output_dir.clear();
    try {
      const Environment test = test_environment(c);
      p.drift_probability = drift_violation_probability(test, config.sweep.drift_rollouts,
                                                        stream_seed(config.seed, SeedStream::drift));
      const TrainingOutput trained = train(c);
      p.trained = true;
      p.metrics = evaluate(test, policy_controller(trained.checkpoint, c.evaluation.stochastic),
                           config.sweep.evaluation_episodes,
                           stream_seed(config.seed, SeedStream::evaluation));
    } catch (const std::exception& e) {
      p.error = e.what();
    }
    points.push_back(std::move(p));
  }
  return points;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points) {
  write_csv_row(out, {"threshold", "episode", "mean_reward_per_step", "cost_return", "drift_probability"});
  for (const auto& p : points)
    for (std::size_t e = 0; e < p.metrics.episode_rewards.size(); ++e)
      write_csv_row(out, {format_double(p.threshold), std::to_string(e),
                          format_double(p.metrics.episode_rewards[e]),
                          format_double(p.metrics.episode_costs[e]), format_double(p.drift_probability)});
}

void write_sweep_summary_csv(std::ostream& out, const std::vector<SweepPoint>& points) {
  write_csv_row(out, {"threshold", "trained", "mean_reward_per_step", "std_reward_per_step",
                      "mean_cost_per_episode", "drift_probability", "error"});
  for (const auto& p : points)
    write_csv_row(out, {format_double(p.threshold), p.trained ? "1" : "0",
                        format_double(p.metrics.mean_reward), format_double(p.metrics.std_reward),
                        format_double(p.metrics.mean_cost_return), format_double(p.drift_probability),
                        p.error});
}

// ---------------------------------------------------------------------------------------------
// Figure data

namespace {

std::string indexed(const std::string& stem, Eigen::Index i) { return stem + std::to_string(i); }

void check_trace(const EpisodeTrace& trace) {
  if (trace.steps.empty()) throw ConfigError("trace: no steps recorded");
  const auto& first = trace.steps.front();
  const auto nu = first.z_true.size(), ny = first.y.size();
  std::vector<std::string> missing;
  auto check = [&](const Vector& v, Eigen::Index n, const char* stem) {
    if (v.size() == n && n > 0) return;
    for (Eigen::Index i = 0; i < std::max<Eigen::Index>(n, 1); ++i) {
      const std::string name = indexed(stem, i);
      if (std::find(missing.begin(), missing.end(), name) == missing.end()) missing.push_back(name);
    }
  };
  for (const auto& s : trace.steps) {
    check(s.z_true, nu, "z");
    check(s.mu_z, nu, "mu_z");
    check(s.sigma_z_diag, nu, "var_z");
    check(s.y, ny, "y");
    check(s.y_ref, ny, "y_ref");
    check(s.action, nu, "u");
  }
  if (!missing.empty()) {
    std::string msg = "trace: incomplete, missing columns:";
    for (const auto& m : missing) msg += " " + m;
    throw ConfigError(msg);
  }
}

void append(std::vector<std::string>& row, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(format_double(v[i]));
}

}  // namespace

void write_trace_csv(std::ostream& out, const EpisodeTrace& trace) {
  check_trace(trace);
  const auto nu = trace.steps.front().z_true.size(), ny = trace.steps.front().y.size();
  std::vector<std::string> header{"t"};
  for (const char* stem : {"z", "mu_z", "var_z"})
    for (Eigen::Index i = 0; i < nu; ++i) header.push_back(indexed(stem, i));
  for (const char* stem : {"y", "y_ref"})
    for (Eigen::Index i = 0; i < ny; ++i) header.push_back(indexed(stem, i));
  for (Eigen::Index i = 0; i < nu; ++i) header.push_back(indexed("u", i));
  header.insert(header.end(), {"reward", "cost", "jump"});
  write_csv_row(out, header);
  for (const auto& s : trace.steps) {
    std::vector<std::string> row{std::to_string(s.t)};
    append(row, s.z_true);
    append(row, s.mu_z);
    append(row, s.sigma_z_diag);
    append(row, s.y);
    append(row, s.y_ref);
    append(row, s.action);
    row.insert(row.end(), {format_double(s.reward), format_double(s.cost), s.fault_jump ? "1" : "0"});
    write_csv_row(out, row);
  }
}

EpisodeTrace read_trace_csv(std::istream& in, double dy_max) {
  const CsvTable table = read_csv(in);
  auto count = [&](const std::string& stem) {
    Eigen::Index n = 0;
    while (table.column(indexed(stem, n)) >= 0) ++n;
    return n;
  };
  const Eigen::Index nu = std::max<Eigen::Index>(count("z"), 1);
  const Eigen::Index ny = std::max<Eigen::Index>(count("y"), 1);
  std::vector<std::string> missing;
  auto need = [&](const std::string& name) {
    if (table.column(name) < 0) missing.push_back(name);
  };
  need("t");
  for (const char* stem : {"z", "mu_z", "var_z", "u"})
    for (Eigen::Index i = 0; i < nu; ++i) need(indexed(stem, i));
  for (const char* stem : {"y", "y_ref"})
    for (Eigen::Index i = 0; i < ny; ++i) need(indexed(stem, i));
  for (const char* name : {"reward", "cost", "jump"}) need(name);
  if (!missing.empty()) {
    std::string msg = "trace csv: missing columns:";
    for (const auto& m : missing) msg += " " + m;
    throw ConfigError(msg);
  }

  EpisodeTrace trace;
  trace.dy_max = dy_max;
  for (const auto& row : table.rows) {
    auto field = [&](const std::string& name) -> const std::string& {
      return row.at(static_cast<std::size_t>(table.column(name)));
    };
    auto vec = [&](const char* stem, Eigen::Index n) {
      Vector v(n);
      for (Eigen::Index i = 0; i < n; ++i) v[i] = std::stod(field(indexed(stem, i)));
      return v;
    };
    TraceStep s;
    s.t = std::stoi(field("t"));
    s.z_true = vec("z", nu);
    s.mu_z = vec("mu_z", nu);
    s.sigma_z_diag = vec("var_z", nu);
    s.y = vec("y", ny);
    s.y_ref = vec("y_ref", ny);
    s.action = vec("u", nu);
    s.reward = std::stod(field("reward"));
    s.cost = std::stod(field("cost"));
    s.fault_jump = field("jump") == "1";
    trace.steps.push_back(std::move(s));
  }
  return trace;
}

void emit_episode_figure_data(const EpisodeTrace& trace, const std::string& directory) {
  check_trace(trace);
  const fs::path dir(directory);
  fs::create_directories(dir);
  const auto nu = trace.steps.front().z_true.size(), ny = trace.steps.front().y.size();

  std::ostringstream fault, tracking, action, full;
  std::vector<std::string> fh{"t"}, th{"t"}, ah{"t"};
  for (Eigen::Index i = 0; i < nu; ++i)
    fh.insert(fh.end(), {indexed("z", i), indexed("mu_z", i), indexed("lo", i), indexed("hi", i)});
  for (Eigen::Index i = 0; i < ny; ++i) th.push_back(indexed("err", i));
  th.insert(th.end(), {"dy_max", "violation"});
  for (Eigen::Index i = 0; i < nu; ++i) ah.push_back(indexed("u", i));
  write_csv_row(fault, fh);
  write_csv_row(tracking, th);
  write_csv_row(action, ah);
  for (const auto& s : trace.steps) {
    const std::string t = std::to_string(s.t);
    std::vector<std::string> fr{t}, tr{t}, ar{t};
    for (Eigen::Index i = 0; i < nu; ++i) {
      const double sd = std::sqrt(std::max(s.sigma_z_diag[i], 0.0));
      fr.insert(fr.end(), {format_double(s.z_true[i]), format_double(s.mu_z[i]),
                           format_double(s.mu_z[i] - sd), format_double(s.mu_z[i] + sd)});
    }
    for (Eigen::Index i = 0; i < ny; ++i) tr.push_back(format_double(s.y[i] - s.y_ref[i]));
    tr.insert(tr.end(), {format_double(trace.dy_max), format_double(s.cost)});
    append(ar, s.action);
    write_csv_row(fault, fr);
    write_csv_row(tracking, tr);
    write_csv_row(action, ar);
  }
  write_trace_csv(full, trace);
  write_text(dir / "fault.csv", fault.str());
  write_text(dir / "tracking.csv", tracking.str());
  write_text(dir / "action.csv", action.str());
  write_text(dir / "trace.csv", full.str());
}

}  // namespace afd
