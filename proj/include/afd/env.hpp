#pragma once

#include "afd/common.hpp"
#include "afd/linsys.hpp"
#include "afd/observer.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <vector>

namespace afd {

/// Piecewise-constant output reference in deviation coordinates. Empty → zero.
struct ReferenceSchedule {
  std::vector<int> switch_steps;  // ascending; segment k starts at switch_steps[k]
  std::vector<Vector> values;

  Vector at(int t, Eigen::Index n_y) const;
};

struct EpisodeConfig {
  int horizon = 40;
  int horizon_max = 0;  // > horizon: horizon drawn uniformly from [horizon, horizon_max]
  double dy_max = 0.1;
  double cost_limit = 6.0;
  double gamma = 0.99;
  double gamma_c = 1.0;
  FaultProcess faults;        // true fault evolution within the episode
  double init_radius = 0.1;   // initial state sampled uniformly in this ball around x*
  Belief prior;               // observer prior at t = 0
  ReferenceSchedule reference;

  void validate(Eigen::Index n_x, Eigen::Index n_u, Eigen::Index n_y) const;
};

/// Default prior: mu_z = 0.5, Σ_z = I, mu_x = 0 and Σ_x matching the initial-state ball.
Belief default_prior(Eigen::Index n_x, Eigen::Index n_u, double init_radius);
EpisodeConfig default_episode_config(const LinearFaultPlant& plant);

/// Read-only definition shared by all episodes.
struct Environment {
  LinearFaultPlant plant;
  ObserverModel observer;
  EpisodeConfig config;

  Environment(LinearFaultPlant plant, FaultWalkModel walk, EpisodeConfig config);
};

struct EnvState {
  PlantState plant;  // hidden from the agent
  Belief belief;
  Vector y;
  Vector y_ref;
  int t = 0;
  int horizon = 0;
};

/// Packing of the masked observation [mu_x | triu Σ_x | mu_z | triu Σ_z | y_ref | y].
struct ObservationLayout {
  Eigen::Index n_x, n_u, n_y;

  Eigen::Index size() const { return n_x + triu_size(n_x) + n_u + triu_size(n_u) + 2 * n_y; }
  Eigen::Index mu_x_offset() const { return 0; }
  Eigen::Index sigma_x_offset() const { return n_x; }
  Eigen::Index mu_z_offset() const { return n_x + triu_size(n_x); }
  Eigen::Index sigma_z_offset() const { return mu_z_offset() + n_u; }
  Eigen::Index y_ref_offset() const { return sigma_z_offset() + triu_size(n_u); }
  Eigen::Index y_offset() const { return y_ref_offset() + n_y; }

  Vector pack(const Belief& belief, const Vector& y_ref, const Vector& y) const;

  struct Unpacked {
    Belief belief;
    Vector y_ref;
    Vector y;
  };
  Unpacked unpack(const Vector& observation) const;

  static ObservationLayout of(const LinearFaultPlant& plant);
};

struct ResetResult {
  EnvState state;
  Vector observation;
};

struct StepResult {
  EnvState next;
  Vector observation;
  Vector applied_action;  // after clipping
  double reward = 0.0;
  double cost = 0.0;
  bool done = false;
};

ResetResult reset(const Environment& env, Rng& rng);
StepResult env_step(const Environment& env, const EnvState& state, const Vector& action, Rng& rng);

/// -E‖z_true - z‖² under z ~ N(mu_z, Σ_z) = -trace Σ_z - ‖z_true - mu_z‖².
double reward(const Belief& belief, const Vector& z_true);

/// 1 when ‖y - y_ref‖_∞ exceeds dy_max, else 0.
double cost(const Vector& y, const Vector& y_ref, double dy_max);

Vector mask_state(const EnvState& state);

/// Controller seen by the environment: masked observation in, raw (pre-clip) action out.
using Controller = std::function<Vector(const Vector& observation, Rng& rng)>;

/// Post-step record of one environment transition.
struct TraceStep {
  int t = 0;  // step index after the transition (1-based)
  Vector z_true;
  Vector mu_z;
  Vector sigma_z_diag;
  Vector y;
  Vector y_ref;
  Vector action;  // applied (clipped)
  double reward = 0.0;
  double cost = 0.0;
  bool fault_jump = false;  // true fault changed during this transition
};

struct EpisodeTrace {
  double dy_max = 0.0;
  std::vector<TraceStep> steps;
};

struct EpisodeSummary {
  int steps = 0;
  double reward_sum = 0.0;
  double cost_sum = 0.0;
  double mean_reward() const { return steps > 0 ? reward_sum / steps : 0.0; }
};

/// Runs one complete episode. Environment and controller randomness use separate streams so
/// that plant noise, initial state and faults do not depend on the controller.
EpisodeSummary run_episode(const Environment& env, const Controller& controller, Rng& env_rng,
                           Rng& controller_rng, EpisodeTrace* trace = nullptr);

EpisodeConfig episode_config_from_json(const nlohmann::json& config, const LinearFaultPlant& plant);
FaultProcess fault_process_from_json(const nlohmann::json& config, Eigen::Index n_u);

}  // namespace afd
