#include "afd/baseline.hpp"

#include "afd/csv.hpp"

#include <limits>

namespace afd {

void BaselineSpec::validate() const {
  require(perturbation >= 0.0, "baseline: K_p must be non-negative");
  require(gain.allFinite(), "baseline: gain must be finite");
}

Vector baseline_action(const BaselineSpec& spec, const Vector& y, const Vector& y_ref,
                       const LinearFaultPlant& plant, Rng& rng) {
  require(spec.gain.rows() == plant.input_dim() && spec.gain.cols() == y.size() &&
              y.size() == y_ref.size(),
          "baseline_action: gain or output shape mismatch");
  Vector u = spec.gain * (y_ref - y);
  for (Eigen::Index i = 0; i < u.size(); ++i)
    u[i] += spec.perturbation * (2.0 * uniform01(rng) - 1.0);
  return clip_action(u, plant);
}

Controller baseline_controller(const BaselineSpec& spec, const Environment& env) {
  spec.validate();
  const ObservationLayout layout = ObservationLayout::of(env.plant);
  return [spec, layout, &env](const Vector& obs, Rng& rng) {
    const Vector y_ref = obs.segment(layout.y_ref_offset(), layout.n_y);
    const Vector y = obs.segment(layout.y_offset(), layout.n_y);
    return baseline_action(spec, y, y_ref, env.plant, rng);
  };
}

std::size_t select_tuning_point(const std::vector<TuningPoint>& points, bool* infeasible) {
  require(!points.empty(), "tune_baseline: empty grid");
  std::size_t best = points.size();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].feasible) continue;
    if (best == points.size()) {
      best = i;
      continue;
    }
    const double gap = points[i].mean_reward - points[best].mean_reward;
    if (gap > kTuningTieTolerance ||
        (std::abs(gap) <= kTuningTieTolerance && points[i].mean_cost < points[best].mean_cost))
      best = i;
  }
  if (infeasible) *infeasible = best == points.size();
  if (best != points.size()) return best;
  best = 0;
  for (std::size_t i = 1; i < points.size(); ++i)
    if (points[i].mean_cost < points[best].mean_cost) best = i;
  return best;
}

TuningResult tune_baseline(const Environment& env, const BaselineGrid& grid, int episodes,
                           std::uint64_t seed) {
  require(!grid.gain_scales.empty() && !grid.perturbations.empty(), "tune_baseline: empty grid");
  require(episodes >= 1, "tune_baseline: need at least one episode per grid point");
  require(grid.nominal_gain.rows() == env.plant.input_dim() &&
              grid.nominal_gain.cols() == env.plant.output_dim(),
          "tune_baseline: nominal gain shape mismatch");

  TuningResult result;
  for (const double k : grid.gain_scales) {
    for (const double kp : grid.perturbations) {
      const BaselineSpec spec{k * grid.nominal_gain, kp, k};
      const Controller controller = baseline_controller(spec, env);
      TuningPoint point{k, kp, 0.0, 0.0, false};
      for (int e = 0; e < episodes; ++e) {
        Rng env_rng(derive_seed(seed, static_cast<std::uint64_t>(e), 0));
        Rng ctl_rng(derive_seed(seed, static_cast<std::uint64_t>(e), 1));
        const EpisodeSummary s = run_episode(env, controller, env_rng, ctl_rng);
        point.mean_reward += s.mean_reward();
        point.mean_cost += s.cost_sum;
      }
      point.mean_reward /= episodes;
      point.mean_cost /= episodes;
      point.feasible = point.mean_cost <= env.config.cost_limit;
      result.points.push_back(point);
    }
  }
  result.selected = select_tuning_point(result.points, &result.infeasible);
  const TuningPoint& best = result.points[result.selected];
  result.spec = {best.gain_scale * grid.nominal_gain, best.perturbation, best.gain_scale};
  return result;
}

void write_tuning_csv(std::ostream& out, const TuningResult& result) {
  write_csv_row(out, {"gain_scale", "perturbation", "mean_reward_per_step", "mean_cost_per_episode",
                      "feasible", "selected"});
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    const TuningPoint& p = result.points[i];
    write_csv_row(out, {format_double(p.gain_scale), format_double(p.perturbation),
                        format_double(p.mean_reward), format_double(p.mean_cost),
                        p.feasible ? "1" : "0", i == result.selected ? "1" : "0"});
  }
}

nlohmann::json baseline_json(const BaselineSpec& spec) {
  return {{"gain", matrix_json(spec.gain)},
          {"perturbation", spec.perturbation},
          {"gain_scale", spec.gain_scale}};
}

BaselineSpec baseline_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("gain")) throw ConfigError("baseline: expected an object with gain");
  BaselineSpec spec;
  spec.gain = json_matrix(j["gain"], "baseline.gain");
  spec.perturbation = j.value("perturbation", 0.0);
  spec.gain_scale = j.value("gain_scale", 1.0);
  if (spec.perturbation < 0.0) throw ConfigError("baseline.perturbation: must be non-negative");
  return spec;
}

}  // namespace afd
