// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero if
// any criterion fails. Tolerances are fixed here on purpose; do not read them from config.

#include "afd/baseline.hpp"
#include "afd/cpo.hpp"
#include "afd/csv.hpp"
#include "afd/diffnet.hpp"
#include "afd/env.hpp"
#include "afd/harness.hpp"
#include "afd/observer.hpp"

#include "toy_cmdp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace afd;
namespace fs = std::filesystem;

namespace {

// ---- pinned tolerances ------------------------------------------------------------------------

constexpr int kParticles = 100000;
constexpr int kFilterSteps = 50;
constexpr double kFilterMeanTol = 0.05;
constexpr double kFilterVarLo = 0.5, kFilterVarHi = 2.0;

constexpr int kKalmanSteps = 100;
constexpr double kKalmanTol = 1e-10;

constexpr int kRewardInstances = 100;
constexpr int kRewardSamples = 1000000;
constexpr double kRewardSigmas = 3.0;

constexpr double kGradientTol = 1e-4;
constexpr double kFisherTol = 1e-3;
constexpr Eigen::Index kFisherMaxParams = 30;

constexpr double kToyOptimumTol = 1e-3;
constexpr int kToyMaxUpdates = 100;
constexpr double kToyKlFactor = 1.5;
constexpr double kToyCostFactor = 1.05;

constexpr int kTestEpisodes = 1000;
constexpr double kCostFactor = 1.25;
constexpr double kRecoveryFraction = 0.8;
constexpr double kSweepSpan = 10.0;

// ---- reporting --------------------------------------------------------------------------------

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;
std::vector<int> selected;  // empty → all criteria

void report(int id, const std::string& name, const std::function<Verdict()>& check) {
  if (!selected.empty() && std::find(selected.begin(), selected.end(), id) == selected.end()) return;
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!v.pass) ++failures;
  std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << v.detail
            << " [" << std::fixed << std::setprecision(1) << seconds << " s]" << std::defaultfloat
            << std::endl;
}

std::string num(double x) {
  std::ostringstream s;
  s << std::setprecision(6) << x;
  return s.str();
}

fs::path output_root() {
  const char* env = std::getenv("AFD_ACCEPTANCE_OUT");
  const fs::path root = env ? fs::path(env) : fs::temp_directory_path() / "afd_acceptance";
  fs::create_directories(root);
  return root;
}

fs::path config_dir() {
  const char* env = std::getenv("AFD_CONFIG_DIR");
  return env ? fs::path(env) : fs::path("config");
}

double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

// ---- 1: closed-form fault posterior vs particle filter -------------------------------------------

Verdict particle_filter_check() {
  const double a = 0.9, b = 1.0, c = 1.0, sw = 1e-2, sv = 1e-2, sxi = 1e-3, z_true = 0.7;
  ObserverModel model;
  model.a = Matrix::Constant(1, 1, a);
  model.b = Matrix::Constant(1, 1, b);
  model.c = Matrix::Constant(1, 1, c);
  model.sigma_w = Matrix::Constant(1, 1, sw);
  model.sigma_v = Matrix::Constant(1, 1, sv);
  model.walk = FaultWalkModel::isotropic(1, sxi);
  Belief belief{Vector::Zero(1), Matrix::Constant(1, 1, 0.1), Vector::Constant(1, 0.5),
                Matrix::Identity(1, 1)};

  Rng data_rng(101), pf_rng(202);
  std::vector<double> px(kParticles), pz(kParticles), w(kParticles), nx(kParticles), nz(kParticles);
  for (int i = 0; i < kParticles; ++i) {
    px[i] = std::sqrt(0.1) * standard_normal(pf_rng);
    pz[i] = 0.5 + standard_normal(pf_rng);
  }
  double x = std::sqrt(0.1) * standard_normal(data_rng);

  double abs_dev = 0.0, worst_dev = 0.0, ratio_lo = 1e300, ratio_hi = 0.0;
  for (int t = 0; t < kFilterSteps; ++t) {
    const double u = t % 2 == 0 ? 1.0 : -1.0;
    x = a * x + b * z_true * u + std::sqrt(sw) * standard_normal(data_rng);
    const double y = c * x + std::sqrt(sv) * standard_normal(data_rng);
    belief = observer_step(belief, Vector::Constant(1, u), Vector::Constant(1, y), model);

    // Bootstrap filter on the joint (x, z) model the observer assumes.
    double max_log = -1e300;
    for (int i = 0; i < kParticles; ++i) {
      px[i] = a * px[i] + b * pz[i] * u + std::sqrt(sw) * standard_normal(pf_rng);
      const double r = y - c * px[i];
      w[i] = -0.5 * r * r / sv;
      max_log = std::max(max_log, w[i]);
    }
    double total = 0.0;
    for (int i = 0; i < kParticles; ++i) total += (w[i] = std::exp(w[i] - max_log));
    // Systematic resampling, then the random-walk step of z.
    const double offset = uniform01(pf_rng) / kParticles;
    double cumulative = w[0] / total;
    int j = 0;
    for (int i = 0; i < kParticles; ++i) {
      const double target = offset + static_cast<double>(i) / kParticles;
      while (cumulative < target && j + 1 < kParticles) cumulative += w[++j] / total;
      nx[i] = px[j];
      nz[i] = pz[j] + std::sqrt(sxi) * standard_normal(pf_rng);
    }
    std::swap(px, nx);
    std::swap(pz, nz);

    double mean = 0.0;
    for (double v : pz) mean += v;
    mean /= kParticles;
    double var = 0.0;
    for (double v : pz) var += (v - mean) * (v - mean);
    var /= kParticles - 1;

    const double dev = std::abs(belief.mu_z[0] - mean);
    abs_dev += dev;
    worst_dev = std::max(worst_dev, dev);
    const double ratio = belief.sigma_z(0, 0) / var;
    ratio_lo = std::min(ratio_lo, ratio);
    ratio_hi = std::max(ratio_hi, ratio);
  }
  const double mad = abs_dev / kFilterSteps;
  const bool pass = mad < kFilterMeanTol && ratio_lo >= kFilterVarLo && ratio_hi <= kFilterVarHi;
  return {pass, "mean |mu_z - pf| = " + num(mad) + " (max " + num(worst_dev) + "), variance ratio in [" +
                    num(ratio_lo) + ", " + num(ratio_hi) + "]"};
}

// ---- 2: Kalman reduction ------------------------------------------------------------------------

Verdict kalman_check() {
  const LinearFaultPlant plant = default_three_tank();
  ObserverModel model = ObserverModel::from_plant(plant, FaultWalkModel::isotropic(2, 0.0));
  model.jitter = 0.0;  // Σ_z = 0 must stay exactly zero for the reduction to be exact
  const Vector z = (Vector(2) << 0.8, 0.35).finished();
  const double init_var = 0.1 * 0.1 / 5.0;
  Belief belief{Vector::Zero(3), init_var * Matrix::Identity(3, 3), z, Matrix::Zero(2, 2)};

  Vector mu = belief.mu_x;
  Matrix p = belief.sigma_x;
  Rng rng(303);
  PlantState state{sample_ball(rng, 3, 0.1), z, 0};
  double worst = 0.0;
  for (int t = 0; t < kKalmanSteps; ++t) {
    const Vector u = clip_action((Vector(2) << 0.02 * uniform01(rng), 0.02 * uniform01(rng)).finished(), plant);
    const PlantStep step = step_plant(plant, FaultProcess::constant(), state, u, rng);
    state = step.next;

    const Vector mu_pred = plant.a() * mu + plant.b() * z.cwiseProduct(u);
    const Matrix p_pred = plant.a() * p * plant.a().transpose() + plant.sigma_w();
    const Matrix s = plant.c() * p_pred * plant.c().transpose() + plant.sigma_v();
    const Matrix k = p_pred * plant.c().transpose() * s.inverse();
    mu = mu_pred + k * (step.y - plant.c() * mu_pred);
    p = (Matrix::Identity(3, 3) - k * plant.c()) * p_pred;

    belief = observer_step(belief, u, step.y, model);
    worst = std::max(worst, (belief.mu_x - mu).cwiseAbs().maxCoeff());
    worst = std::max(worst, (belief.sigma_x - p).cwiseAbs().maxCoeff());
  }
  return {worst <= kKalmanTol, "max |difference| over mean and covariance = " + num(worst)};
}

// ---- 3: reward closed form vs Monte Carlo --------------------------------------------------------

Verdict reward_check() {
  Rng rng(404);
  int inside = 0;
  double worst_sigmas = 0.0;
  for (int k = 0; k < kRewardInstances; ++k) {
    const Eigen::Index nu = 1 + k % 3;
    Matrix l = Matrix::Zero(nu, nu);
    for (Eigen::Index i = 0; i < nu; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) l(i, j) = 0.3 * standard_normal(rng);
    Vector mu(nu), z_true(nu);
    for (Eigen::Index i = 0; i < nu; ++i) {
      mu[i] = uniform01(rng);
      z_true[i] = uniform01(rng);
    }
    const Belief belief{Vector::Zero(1), Matrix::Identity(1, 1), mu, l * l.transpose()};
    double sum = 0.0, sum_sq = 0.0;
    for (int s = 0; s < kRewardSamples; ++s) {
      const Vector z = mu + l * standard_normal_vector(rng, nu);
      const double r = -(z_true - z).squaredNorm();
      sum += r;
      sum_sq += r * r;
    }
    const double mean = sum / kRewardSamples;
    const double se = std::sqrt((sum_sq / kRewardSamples - mean * mean) / (kRewardSamples - 1.0));
    const double sigmas = std::abs(reward(belief, z_true) - mean) / se;
    worst_sigmas = std::max(worst_sigmas, sigmas);
    if (sigmas <= kRewardSigmas) ++inside;
  }
  return {inside == kRewardInstances, std::to_string(inside) + "/" + std::to_string(kRewardInstances) +
                                          " instances within 3 SE (worst " + num(worst_sigmas) + " SE)"};
}

// ---- 4: gradients and Fisher-vector products -----------------------------------------------------

template <typename F>
Vector central_gradient(F f, const Vector& x, double h = 1e-6) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

Verdict gradient_check() {
  Rng rng(505);
  auto random_matrix = [&rng](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
    return m;
  };
  std::vector<std::pair<std::string, double>> errors;

  GaussianPolicy policy({3, {4}, 2, Activation::tanh}, (Vector(2) << 0.011, 0.011).finished(),
                        (Vector(2) << -1.0, -0.5).finished());
  policy.network().initialize(rng, 1.0);
  const Matrix obs = random_matrix(3, 12);
  const Matrix actions = policy.mean(obs) + 0.5 * random_matrix(2, 12);
  auto with = [&policy](const Vector& theta) {
    GaussianPolicy q = policy;
    q.set_parameters(theta);
    return q;
  };

  {  // network reverse mode
    const Matrix weights = random_matrix(2, 12);
    Mlp::Trace trace;
    policy.network().forward(obs, trace);
    const Vector analytic = policy.network().backward(trace, weights);
    const Vector numeric = central_gradient(
        [&](const Vector& t) {
          Mlp m = policy.network();
          m.set_parameters(t);
          return (m.forward(obs).array() * weights.array()).sum();
        },
        policy.network().parameters());
    errors.emplace_back("mlp backward", relative_error(analytic, numeric));
    const Vector v = standard_normal_vector(rng, policy.network().parameter_count());
    Mlp plus = policy.network(), minus = policy.network();
    plus.set_parameters(policy.network().parameters() + 1e-6 * v);
    minus.set_parameters(policy.network().parameters() - 1e-6 * v);
    const Matrix jvp_numeric = (plus.forward(obs) - minus.forward(obs)) / 2e-6;
    const Matrix jvp = policy.network().jvp(trace, v);
    errors.emplace_back("mlp jvp", (jvp - jvp_numeric).norm() / std::max(jvp.norm(), jvp_numeric.norm()));
  }
  {  // surrogate gradient (importance-weighted log-likelihood)
    TrajectoryBatch batch;
    batch.observations = obs;
    batch.actions = actions;
    batch.log_probs = policy.log_prob(obs, actions);
    batch.rewards = batch.costs = Vector::Zero(12);
    batch.episode_starts = {0};
    const Vector adv = standard_normal_vector(rng, 12);
    GaussianPolicy moved = with(policy.parameters() + 0.05 * standard_normal_vector(rng, policy.parameter_count()));
    const Vector analytic = surrogate_gradient(moved, batch, adv);
    const Vector numeric = central_gradient([&](const Vector& t) { return surrogate(with(t), batch, adv); },
                                            moved.parameters());
    errors.emplace_back("surrogate", relative_error(analytic, numeric));
  }
  GaussianPolicy old_policy = with(policy.parameters() + 0.1 * standard_normal_vector(rng, policy.parameter_count()));
  {  // KL gradient
    const Vector analytic = kl_gradient(policy, old_policy, obs);
    const Vector numeric = central_gradient([&](const Vector& t) { return kl(with(t), old_policy, obs); },
                                            policy.parameters());
    errors.emplace_back("kl", relative_error(analytic, numeric));
  }
  {  // value regression
    ValueFunction value({3, {5}, 1, Activation::tanh});
    value.network().initialize(rng, 1.0);
    const Vector targets = standard_normal_vector(rng, 12);
    Vector analytic;
    value.mse(obs, targets, &analytic);
    const Vector numeric = central_gradient(
        [&](const Vector& t) {
          ValueFunction v = value;
          v.network().set_parameters(t);
          return v.mse(obs, targets);
        },
        value.network().parameters());
    errors.emplace_back("value mse", relative_error(analytic, numeric));
  }

  // Fisher-vector product vs the dense Hessian of KL(π_θ' ‖ π_θ) at θ' = θ.
  const Eigen::Index n = policy.parameter_count();
  if (n > kFisherMaxParams) return {false, "Fisher test net has too many parameters"};
  Matrix hessian(n, n), dense(n, n);
  const double h = 1e-5;
  for (Eigen::Index j = 0; j < n; ++j) {
    Vector tp = policy.parameters(), tm = tp;
    tp[j] += h;
    tm[j] -= h;
    hessian.col(j) = (kl_gradient(with(tp), policy, obs) - kl_gradient(with(tm), policy, obs)) / (2 * h);
  }
  const FisherOperator fisher(policy, obs, 0.0);
  for (Eigen::Index j = 0; j < n; ++j) dense.col(j) = fisher(Vector::Unit(n, j));
  const double fisher_error = (dense - hessian).norm() / hessian.norm();

  bool pass = fisher_error <= kFisherTol;
  std::string detail;
  for (const auto& [name, err] : errors) {
    pass = pass && err <= kGradientTol;
    detail += name + " " + num(err) + ", ";
  }
  detail += "fisher (" + std::to_string(n) + " params) " + num(fisher_error);
  return {pass, detail};
}

// ---- 5: CPO on a toy CMDP ----------------------------------------------------------------------

Verdict toy_cmdp_check() {
  afd::testing::ToyCmdp toy;
  toy.updates = kToyMaxUpdates;
  const auto records = toy.run(606);
  const Vector opt = toy.optimum();
  double worst_kl = 0.0;
  int first_within = -1;
  for (const auto& r : records) {
    if (r.diagnostics.step_type != StepType::rejected) worst_kl = std::max(worst_kl, r.diagnostics.kl);
    if (first_within < 0 && (r.mean - opt).norm() <= kToyOptimumTol) first_within = r.diagnostics.index;
  }
  const double final_error = (records.back().mean - opt).norm();
  const double final_cost = toy.weight.dot(records.back().mean);  // exact J_C of the mean-only policy
  const bool pass = final_error <= kToyOptimumTol && worst_kl <= kToyKlFactor * toy.cpo.trust_radius &&
                    final_cost <= kToyCostFactor * toy.limit;
  return {pass, "final |mu - mu*| = " + num(final_error) + " (first within tolerance at update " +
                    std::to_string(first_within) + "), max accepted KL = " + num(worst_kl) + " (delta " +
                    num(toy.cpo.trust_radius) + "), J_C = " + num(final_cost) + " (d " + num(toy.limit) + ")"};
}

// ---- 6 and 7: desk-scale training vs the tuned baseline --------------------------------------------

struct DeskRun {
  bool done = false;
  std::string error;
  MetricsRecord rl_test, baseline_test, rl_training;
  TuningResult tuning;
  double cost_limit = 0.0;
};

DeskRun& desk_run() {
  static DeskRun run;
  if (run.done) return run;
  run.done = true;
  try {
    ExperimentConfig config = load_experiment_config((config_dir() / "desk.json").string());
    config.output_dir = (output_root() / "desk").string();
    fs::create_directories(config.output_dir);
    run.cost_limit = config.cpo.cost_limit;

    const TrainingOutput trained = train(config);
    const Environment train_env = training_environment(config);
    const Environment test_env = test_environment(config);
    const std::uint64_t eval_seed = stream_seed(config.seed, SeedStream::evaluation);
    const Controller rl = policy_controller(trained.checkpoint, config.evaluation.stochastic);

    run.tuning = tune_baseline(train_env, config.grid, config.tuning_episodes,
                               stream_seed(config.seed, SeedStream::tuning));
    const Controller baseline = baseline_controller(run.tuning.spec, test_env);
    run.rl_test = evaluate(test_env, rl, kTestEpisodes, eval_seed);
    run.baseline_test = evaluate(test_env, baseline, kTestEpisodes, eval_seed);
    run.rl_training = evaluate(train_env, rl, kTestEpisodes, eval_seed);

    const fs::path dir(config.output_dir);
    std::ofstream tuning(dir / "tuning.csv"), rl_m(dir / "rl_test_metrics.csv"),
        base_m(dir / "baseline_test_metrics.csv"), rl_t(dir / "rl_training_metrics.csv");
    write_tuning_csv(tuning, run.tuning);
    write_metrics_csv(rl_m, run.rl_test);
    write_metrics_csv(base_m, run.baseline_test);
    write_metrics_csv(rl_t, run.rl_training);
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

Verdict desk_check() {
  const DeskRun& run = desk_run();
  if (!run.error.empty()) return {false, "desk run failed: " + run.error};
  const double limit = kCostFactor * run.cost_limit;
  const bool pass = run.rl_test.mean_reward > run.baseline_test.mean_reward &&
                    run.rl_training.mean_cost_return <= limit;
  const TuningPoint& p = run.tuning.points[run.tuning.selected];
  return {pass, "test reward/step RL " + num(run.rl_test.mean_reward) + " ± " + num(run.rl_test.std_reward) +
                    " vs baseline " + num(run.baseline_test.mean_reward) + " ± " +
                    num(run.baseline_test.std_reward) + " (k " + num(p.gain_scale) + ", K_p " +
                    num(p.perturbation) + "); RL cost/episode on training episodes " +
                    num(run.rl_training.mean_cost_return) + " <= " + num(limit) +
                    " required (on jump test episodes: RL " + num(run.rl_test.mean_cost_return) +
                    ", baseline " + num(run.baseline_test.mean_cost_return) + ")"};
}

Verdict recovery_check() {
  const DeskRun& run = desk_run();
  if (!run.error.empty()) return {false, "desk run failed: " + run.error};
  const MetricsRecord& m = run.rl_test;
  if (m.jump_events == 0) return {false, "no jump events observed"};
  const double fraction = static_cast<double>(m.jump_events_recovered) / m.jump_events;
  return {fraction >= kRecoveryFraction, std::to_string(m.jump_events_recovered) + "/" +
                                             std::to_string(m.jump_events) + " jump events recovered (" +
                                             num(fraction) + ")"};
}

// ---- 8: tracking-threshold sweep ------------------------------------------------------------------

Verdict sweep_check() {
  ExperimentConfig config = load_experiment_config((config_dir() / "desk.json").string());
  std::vector<double> thresholds = config.sweep.thresholds;
  std::sort(thresholds.begin(), thresholds.end());
  if (thresholds.size() < 3) return {false, "fewer than three thresholds configured"};
  if (thresholds.back() < kSweepSpan * thresholds.front())
    return {false, "thresholds span less than a factor of ten"};
  const auto points = sweep_tracking_threshold(config, thresholds);
  const fs::path dir = output_root() / "sweep";
  fs::create_directories(dir);
  std::ofstream summary(dir / "sweep_summary.csv");
  write_sweep_summary_csv(summary, points);

  bool pass = true;
  std::string detail;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const SweepPoint& p = points[i];
    if (!p.trained) return {false, "training failed at dy_max " + num(p.threshold) + ": " + p.error};
    if (i > 0 && p.metrics.mean_reward < points[i - 1].metrics.mean_reward) pass = false;
    detail += (i ? ", " : "") + std::string("dy_max ") + num(p.threshold) + " -> " + num(p.metrics.mean_reward) +
              " (drift " + num(p.drift_probability) + ")";
  }
  return {pass, detail};
}

// ---- 9: CLI determinism --------------------------------------------------------------------------

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict cli_check() {
  const char* bin = std::getenv("AFDRL_BIN");
  if (!bin) return {false, "AFDRL_BIN not set"};
  const fs::path root = output_root() / "cli";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path config = root / "config.json";
  std::ofstream(config) << R"({
    "plant": )" << nlohmann::json(fs::absolute(config_dir() / "three_tank.json").string()).dump() << R"(,
    "episode": {"horizon": 20, "dy_max": 0.1, "cost_limit": 6},
    "training": {"updates": 3, "episodes_per_update": 4, "hidden": [16, 16], "init_std_fraction": 0.25},
    "evaluation": {"episodes": 20, "horizon_min": 40, "horizon_max": 60, "stochastic": true},
    "baseline": {"gain_scales": [1, 2], "perturbations": [0, 0.01], "tuning_episodes": 5},
    "sweep": {"thresholds": [0.05, 0.5], "updates": 2, "episodes_per_update": 3,
              "evaluation_episodes": 5, "drift_rollouts": 20},
    "seed": 9
  })";

  std::vector<std::string> compared;
  for (const char* run : {"a", "b"}) {
    const fs::path out = root / run;
    const std::string common = " --config " + config.string() + " --out ";
    const std::vector<std::string> commands{
        "train" + common + out.string(),
        "evaluate" + common + (out / "eval").string() + " --checkpoint " + (out / "checkpoint_final.json").string(),
        "tune-baseline" + common + (out / "tune").string(),
        "evaluate" + common + (out / "eval_baseline").string() + " --baseline " + (out / "tune" / "baseline.json").string(),
        "sweep" + common + (out / "sweep").string(),
        "emit-figures" + common + (out / "figures").string() + " --checkpoint " +
            (out / "checkpoint_final.json").string() + " --episode 2"};
    for (const auto& cmd : commands) {
      const std::string line = std::string(bin) + " " + cmd + " > /dev/null 2>&1";
      if (std::system(line.c_str()) != 0) return {false, "command failed: afdrl " + cmd};
    }
  }
  int files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), root / "a");
    const std::string ext = rel.extension().string();
    if (ext != ".csv" && ext != ".json" && ext != ".jsonl") continue;
    if (slurp(entry.path()) != slurp(root / "b" / rel)) return {false, "differs: " + rel.string()};
    ++files;
  }
  return {files >= 10, std::to_string(files) + " output files byte-identical across two runs of every subcommand"};
}

}  // namespace

// Optional arguments restrict the run to the listed criterion numbers.
int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  std::cout << "acceptance outputs in " << output_root().string() << std::endl;
  report(1, "fault posterior vs particle filter", particle_filter_check);
  report(2, "Kalman reduction", kalman_check);
  report(3, "reward closed form vs Monte Carlo", reward_check);
  report(4, "gradient and Fisher contracts", gradient_check);
  report(5, "CPO on a toy CMDP", toy_cmdp_check);
  report(6, "desk-scale training beats the tuned baseline", desk_check);
  report(7, "recovery after fault jumps", recovery_check);
  report(8, "tracking-threshold sweep trend", sweep_check);
  report(9, "CLI determinism", cli_check);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
