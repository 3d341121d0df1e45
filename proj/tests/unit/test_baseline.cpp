#include "afd/baseline.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace afd;

namespace {

// x⁺ = z u, y = x + v: more perturbation means more excitation and larger output excursions.
Environment scalar_env() {
  const LinearFaultPlant plant(Matrix::Zero(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Zero(1, 1),
                               Matrix::Constant(1, 1, 1e-6), Vector::Constant(1, -1.0), Vector::Constant(1, 1.0),
                               1.0);
  EpisodeConfig cfg = default_episode_config(plant);
  cfg.horizon = 20;
  cfg.dy_max = 0.25;
  cfg.cost_limit = 6.0;
  return Environment(plant, FaultWalkModel::isotropic(1, 1e-3), cfg);
}

TuningPoint point(double reward, double cost, bool feasible) {
  return {1.0, 0.0, reward, cost, feasible};
}

}  // namespace

TEST(BaselineAction, ProportionalFeedbackWithoutPerturbation) {
  const LinearFaultPlant plant = default_three_tank();
  const BaselineSpec spec{0.1 * Matrix::Identity(2, 2), 0.0, 1.0};
  Rng rng(1);
  const Vector y = (Vector(2) << -0.05, 0.01).finished();
  const Vector u = baseline_action(spec, y, Vector::Zero(2), plant, rng);
  EXPECT_NEAR(u[0], 0.005, 1e-17);
  EXPECT_NEAR(u[1], -0.001, 1e-17);
  // Saturates at the input bounds.
  const Vector big = baseline_action(spec, Vector::Constant(2, -1.0), Vector::Zero(2), plant, rng);
  EXPECT_EQ(big, plant.u_max());
}

TEST(BaselineAction, PerturbationIsBoundedAndConsumesFixedDraws) {
  const LinearFaultPlant plant(Matrix::Zero(1, 1), Matrix::Ones(1, 2), Matrix::Ones(1, 1), Matrix::Zero(1, 1),
                               Matrix::Identity(1, 1), Vector::Constant(2, -10.0), Vector::Constant(2, 10.0), 1.0);
  const BaselineSpec noisy{Matrix::Zero(2, 1), 0.3, 1.0}, quiet{Matrix::Zero(2, 1), 0.0, 1.0};
  Rng a(2), b(2);
  double lo = 1.0, hi = -1.0;
  for (int i = 0; i < 10000; ++i) {
    const Vector u = baseline_action(noisy, Vector::Zero(1), Vector::Zero(1), plant, a);
    baseline_action(quiet, Vector::Zero(1), Vector::Zero(1), plant, b);
    lo = std::min(lo, u.minCoeff());
    hi = std::max(hi, u.maxCoeff());
  }
  EXPECT_GE(lo, -0.3);
  EXPECT_LE(hi, 0.3);
  EXPECT_LT(lo, -0.29);
  EXPECT_GT(hi, 0.29);
  EXPECT_EQ(a(), b());  // same stream position regardless of K_p
}

TEST(BaselineController, ReadsOutputsFromObservation) {
  const Environment env(default_three_tank(), FaultWalkModel::isotropic(2, 1e-3),
                        default_episode_config(default_three_tank()));
  const BaselineSpec spec{Matrix::Identity(2, 2), 0.0, 1.0};
  const Controller ctl = baseline_controller(spec, env);
  Rng rng(3);
  const ResetResult r = reset(env, rng);
  Rng c1(4), c2(4);
  EXPECT_EQ(ctl(r.observation, c1), baseline_action(spec, r.state.y, r.state.y_ref, env.plant, c2));
}

TEST(Selection, BestFeasibleRewardWithCostTieBreak) {
  bool infeasible = true;
  EXPECT_EQ(select_tuning_point({point(-0.5, 1.0, true), point(-0.2, 9.0, false), point(-0.3, 2.0, true)},
                                &infeasible),
            2u);
  EXPECT_FALSE(infeasible);
  // Rewards within the tie tolerance: lower cost wins.
  EXPECT_EQ(select_tuning_point({point(-0.3, 2.0, true), point(-0.3 + 0.5 * kTuningTieTolerance, 1.0, true)},
                                &infeasible),
            1u);
  EXPECT_EQ(select_tuning_point({point(-0.3 + 0.5 * kTuningTieTolerance, 2.0, true), point(-0.3, 1.0, true)},
                                &infeasible),
            1u);
  // Equal reward and cost: first point kept.
  EXPECT_EQ(select_tuning_point({point(-0.3, 1.0, true), point(-0.3, 1.0, true)}, &infeasible), 0u);
}

TEST(Selection, NoFeasiblePointFallsBackToMinimumCost) {
  bool infeasible = false;
  EXPECT_EQ(select_tuning_point({point(-0.1, 9.0, false), point(-0.9, 7.0, false), point(-0.2, 8.0, false)},
                                &infeasible),
            1u);
  EXPECT_TRUE(infeasible);
  EXPECT_THROW(select_tuning_point({}, &infeasible), ContractViolation);
}

TEST(Tuning, SingletonGridReturnsThatPoint) {
  const Environment env = scalar_env();
  const BaselineGrid grid{Matrix::Constant(1, 1, 0.5), {2.0}, {0.1}};
  const TuningResult r = tune_baseline(env, grid, 5, 11);
  ASSERT_EQ(r.points.size(), 1u);
  EXPECT_EQ(r.selected, 0u);
  EXPECT_EQ(r.spec.gain, Matrix::Constant(1, 1, 1.0));
  EXPECT_EQ(r.spec.perturbation, 0.1);
  EXPECT_EQ(r.spec.gain_scale, 2.0);
}

TEST(Tuning, PicksLargestPerturbationWithinBudget) {
  const Environment env = scalar_env();
  const BaselineGrid grid{Matrix::Zero(1, 1), {1.0}, {0.0, 0.1, 0.3, 1.0}};
  const TuningResult r = tune_baseline(env, grid, 200, 12);
  ASSERT_EQ(r.points.size(), 4u);
  // Expected cost per episode: 0, 0, ≈0.29, ≈8.1 against a budget of 6.
  EXPECT_TRUE(r.points[0].feasible && r.points[1].feasible && r.points[2].feasible);
  EXPECT_FALSE(r.points[3].feasible);
  EXPECT_NEAR(r.points[3].mean_cost, 20.0 * (0.75 + 0.25 * std::log(0.25)), 1.0);
  for (std::size_t i = 1; i < r.points.size(); ++i) {
    EXPECT_GT(r.points[i].mean_reward, r.points[i - 1].mean_reward);
    EXPECT_GE(r.points[i].mean_cost, r.points[i - 1].mean_cost);
  }
  EXPECT_EQ(r.selected, 2u);
  EXPECT_FALSE(r.infeasible);
}

TEST(Tuning, DeterministicForSeed) {
  const Environment env = scalar_env();
  const BaselineGrid grid{Matrix::Zero(1, 1), {1.0}, {0.2, 0.4}};
  std::ostringstream a, b;
  write_tuning_csv(a, tune_baseline(env, grid, 20, 5));
  write_tuning_csv(b, tune_baseline(env, grid, 20, 5));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')),
            "gain_scale,perturbation,mean_reward_per_step,mean_cost_per_episode,feasible,selected");
}

TEST(BaselineJson, RoundTripAndErrors) {
  const BaselineSpec spec{(Matrix(2, 2) << 0.1, 0.0, 0.0, 0.2).finished(), 0.005, 2.0};
  const BaselineSpec back = baseline_from_json(baseline_json(spec));
  EXPECT_EQ(back.gain, spec.gain);
  EXPECT_EQ(back.perturbation, spec.perturbation);
  EXPECT_EQ(back.gain_scale, spec.gain_scale);
  EXPECT_THROW(baseline_from_json(nlohmann::json::parse(R"({"perturbation": 0.1})")), ConfigError);
  EXPECT_THROW(baseline_from_json(nlohmann::json::parse(R"({"gain": [[1]], "perturbation": -1})")), ConfigError);
}
