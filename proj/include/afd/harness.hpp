#pragma once

#include "afd/baseline.hpp"
#include "afd/common.hpp"
#include "afd/cpo.hpp"
#include "afd/diffnet.hpp"
#include "afd/env.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace afd {

struct TrainingConfig {
  int updates = 1000;
  int episodes_per_update = 90;
  int checkpoint_every = 50;  // 0 disables periodic checkpoints
  std::vector<Eigen::Index> hidden{64, 64};
  double init_std_fraction = 0.01;  // initial action std as a fraction of the input range
  double output_gain = 0.01;    // final-layer init scale of the policy mean
  int warmup_episodes = 0;      // normalizer warm-up; 0 → episodes_per_update
};

struct EvaluationConfig {
  int episodes = 10000;
  int horizon_min = 90;
  int horizon_max = 180;
  int min_dwell = 30;
  double jump_hazard = 1.0 / 30.0;
  bool stochastic = false;  // sample actions instead of using the policy mean
};

struct SweepConfig {
  std::vector<double> thresholds{0.05, 0.1, 0.5};
  int updates = 200;
  int episodes_per_update = 30;
  int evaluation_episodes = 1000;
  int drift_rollouts = 10000;
};

struct ExperimentConfig {
  nlohmann::json plant = nlohmann::json::object();    // plant_from_json input
  nlohmann::json episode = nlohmann::json::object();  // episode_config_from_json input (training)
  double walk_variance = 1e-3;  // observer random-walk variance per fault channel
  CpoConfig cpo;
  TrainingConfig training;
  EvaluationConfig evaluation;
  BaselineGrid grid;      // nominal gain empty → default for the plant
  int tuning_episodes = 200;
  SweepConfig sweep;
  std::uint64_t seed = 1;
  std::string output_dir;

  void validate() const;
};

/// Reads a config file; a string "plant" entry is a path relative to the config file.
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");

LinearFaultPlant make_plant(const ExperimentConfig& config);
/// Training episodes: constant faults, fixed horizon; cost limit shared with CPO.
Environment training_environment(const ExperimentConfig& config);
/// Test episodes: jump faults with minimum dwell and a random horizon.
Environment test_environment(const ExperimentConfig& config);

/// K₀ for a plant: maps each output error to the input of the channel it is wired to, scaled so
/// that a unit gain corrects 20% of the error per step.
Matrix default_nominal_gain(const LinearFaultPlant& plant);

/// Sub-seeds for the independent random streams of an experiment.
enum class SeedStream : std::uint64_t { init = 1, training = 2, evaluation = 3, tuning = 4, drift = 5 };
std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream);

// ---------------------------------------------------------------------------------------------
// Training

struct LearningCurvePoint {
  int update = 0;
  double mean_reward_per_step = 0.0;
  double mean_cost_per_episode = 0.0;
};

struct TrainingOutput {
  Checkpoint checkpoint;
  std::vector<UpdateDiagnostics> diagnostics;
  std::vector<LearningCurvePoint> curve;
};

/// Thrown when training hits non-finite state; the last good checkpoint has been written.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, int update) : NumericalError(what), update(update) {}
  int update;
};

/// Builds the initial agent for a plant.
Checkpoint initial_agent(const ExperimentConfig& config, const LinearFaultPlant& plant);

/// Full training loop. With a non-empty output_dir writes training_log.csv, training_log.jsonl,
/// checkpoints/ and checkpoint_final.json.
TrainingOutput train(const ExperimentConfig& config);

/// Structured log renderings of one update.
nlohmann::json diagnostics_json(const UpdateDiagnostics& d, const LearningCurvePoint& p);
std::vector<std::string> training_log_header();
std::vector<std::string> training_log_row(const UpdateDiagnostics& d, const LearningCurvePoint& p);

// ---------------------------------------------------------------------------------------------
// Evaluation

/// Masked observation → normalized → policy mean (or sample when stochastic).
Controller policy_controller(const Checkpoint& agent, bool stochastic);

struct MetricsRecord {
  bool empty = true;
  int episodes = 0;
  double mean_reward = 0.0;  // per step, mean over episodes of the per-episode average
  double std_reward = 0.0;
  double mean_cost = 0.0;    // per step
  double std_cost = 0.0;
  double mean_cost_return = 0.0;  // per episode
  double std_cost_return = 0.0;
  std::vector<double> episode_rewards;  // per-episode mean reward per step
  std::vector<double> episode_costs;    // per-episode cost return (violation count)
  std::vector<int> episode_lengths;
  int jump_events = 0;            // jumps followed by a full dwell window inside the episode
  int jump_events_recovered = 0;  // of those, estimate error lower at the end of the window
};

constexpr int kJumpWindow = 30;

/// Runs `episodes` episodes seeded from `seed`; results do not depend on execution order.
MetricsRecord evaluate(const Environment& env, const Controller& controller, int episodes,
                       std::uint64_t seed);

/// Counts jump events in a trace and how many of them show a lower fault-estimate error at the
/// end of the following dwell window.
std::pair<int, int> jump_recovery(const EpisodeTrace& trace, int window = kJumpWindow);

/// Throws ConfigError if the checkpoint does not fit the plant's observation/action sizes.
void check_agent_matches(const Checkpoint& agent, const LinearFaultPlant& plant);

void write_metrics_csv(std::ostream& out, const MetricsRecord& m);
void write_episode_metrics_csv(std::ostream& out, const MetricsRecord& m);

// ---------------------------------------------------------------------------------------------
// Threshold sweep

struct SweepPoint {
  double threshold = 0.0;
  bool trained = false;
  std::string error;
  MetricsRecord metrics;
  double drift_probability = 0.0;
};

/// Probability that an uncontrolled (u = 0) episode violates the tracking bound at least once.
double drift_violation_probability(const Environment& env, int rollouts, std::uint64_t seed);

std::vector<SweepPoint> sweep_tracking_threshold(const ExperimentConfig& config,
                                                 const std::vector<double>& thresholds);
void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points);
void write_sweep_summary_csv(std::ostream& out, const std::vector<SweepPoint>& points);

// ---------------------------------------------------------------------------------------------
// Figure data

/// Full trace CSV columns: t, z{i}, mu_z{i}, var_z{i}, y{i}, y_ref{i}, u{i}, reward, cost, jump.
void write_trace_csv(std::ostream& out, const EpisodeTrace& trace);
/// Parses a trace CSV; missing columns are listed in the ConfigError message.
EpisodeTrace read_trace_csv(std::istream& in, double dy_max);

/// Writes fault.csv (t, z{i}, mu_z{i}, lo{i}, hi{i}), tracking.csv (t, err{i}, dy_max,
/// violation), action.csv (t, u{i}) and trace.csv into `directory`, each with one row per step.
void emit_episode_figure_data(const EpisodeTrace& trace, const std::string& directory);

}  // namespace afd
