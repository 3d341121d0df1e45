#pragma once

#include "afd/common.hpp"
#include "afd/env.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <ostream>
#include <vector>

namespace afd {

/// Proportional output feedback with a uniform input perturbation.
struct BaselineSpec {
  Matrix gain;           // n_u × n_y
  double perturbation = 0.0;  // K_p ≥ 0
  double gain_scale = 1.0;    // k in gain = k·K₀, kept for reporting

  void validate() const;
};

/// u = clip(K (y_ref - y) + Δu), Δu uniform on [-K_p, K_p]^{n_u}. Always draws n_u uniforms.
Vector baseline_action(const BaselineSpec& spec, const Vector& y, const Vector& y_ref,
                       const LinearFaultPlant& plant, Rng& rng);

/// Adapter reading y and y_ref out of the masked observation.
Controller baseline_controller(const BaselineSpec& spec, const Environment& env);

struct BaselineGrid {
  Matrix nominal_gain;  // K₀
  std::vector<double> gain_scales;
  std::vector<double> perturbations;
};

struct TuningPoint {
  double gain_scale = 0.0;
  double perturbation = 0.0;
  double mean_reward = 0.0;  // per step, averaged over episodes
  double mean_cost = 0.0;    // per episode
  bool feasible = false;
};

struct TuningResult {
  BaselineSpec spec;
  bool infeasible = false;  // no grid point met the budget; the minimum-cost point was chosen
  std::size_t selected = 0;
  std::vector<TuningPoint> points;
};

constexpr double kTuningTieTolerance = 1e-6;

/// Evaluates every grid point on `episodes` seeded episodes of `env` (the same episode seeds for
/// every point) and keeps the best feasible one.
TuningResult tune_baseline(const Environment& env, const BaselineGrid& grid, int episodes,
                           std::uint64_t seed);

/// Selection rule on already-evaluated points; exposed for testing.
std::size_t select_tuning_point(const std::vector<TuningPoint>& points, bool* infeasible);

void write_tuning_csv(std::ostream& out, const TuningResult& result);

nlohmann::json baseline_json(const BaselineSpec& spec);
BaselineSpec baseline_from_json(const nlohmann::json& j);

}  // namespace afd
