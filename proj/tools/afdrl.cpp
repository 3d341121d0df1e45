// Command-line front end: train, evaluate, tune-baseline, sweep, emit-figures.

#include "afd/baseline.hpp"
#include "afd/csv.hpp"
#include "afd/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace afd;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Override the config seed");
  cmd->add_option("--out", c.out, "Output directory (default: config output_dir or .)");
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig config = load_experiment_config(c.config_path);
  if (c.seed) config.seed = *c.seed;
  if (!c.out.empty()) config.output_dir = c.out;
  if (config.output_dir.empty()) config.output_dir = ".";
  fs::create_directories(config.output_dir);
  return config;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

template <typename Writer>
void write_csv_file(const fs::path& path, Writer writer) {
  std::ostringstream text;
  writer(text);
  write_file(path, text.str());
}

BaselineSpec load_baseline(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("baseline: cannot open " + path);
  try {
    return baseline_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("baseline: parse error in " + path + ": " + e.what());
  }
}

struct AgentChoice {
  std::string checkpoint;
  std::string baseline;
  std::string protocol = "test";
};

// Holds whichever controller was requested; the environment must outlive it.
Controller make_controller(const AgentChoice& choice, const ExperimentConfig& config,
                           const Environment& env) {
  if (!choice.checkpoint.empty()) {
    const Checkpoint agent = load_checkpoint(choice.checkpoint);
    check_agent_matches(agent, env.plant);
    return policy_controller(agent, config.evaluation.stochastic);
  }
  if (!choice.baseline.empty()) {
    const BaselineSpec spec = load_baseline(choice.baseline);
    if (spec.gain.rows() != env.plant.input_dim() || spec.gain.cols() != env.plant.output_dim())
      throw ConfigError("baseline: gain shape does not match the plant");
    return baseline_controller(spec, env);
  }
  throw ConfigError("need --checkpoint or --baseline");
}

Environment protocol_environment(const std::string& protocol, const ExperimentConfig& config) {
  if (protocol == "test") return test_environment(config);
  if (protocol == "training") return training_environment(config);
  throw ConfigError("--protocol: expected test or training");
}

int run_train(const Common& common) {
  const ExperimentConfig config = load(common);
  const TrainingOutput out = train(config);
  const auto& last = out.curve.back();
  std::cout << "trained " << out.diagnostics.size() << " updates; final mean reward/step "
            << format_double(last.mean_reward_per_step) << ", cost/episode "
            << format_double(last.mean_cost_per_episode) << "\n";
  return 0;
}

int run_evaluate(const Common& common, const AgentChoice& choice, std::optional<int> episodes) {
  const ExperimentConfig config = load(common);
  const Environment env = protocol_environment(choice.protocol, config);
  const Controller controller = make_controller(choice, config, env);
  const MetricsRecord m = evaluate(env, controller, episodes.value_or(config.evaluation.episodes),
                                   stream_seed(config.seed, SeedStream::evaluation));
  const fs::path dir(config.output_dir);
  write_csv_file(dir / "metrics.csv", [&](std::ostream& o) { write_metrics_csv(o, m); });
  write_csv_file(dir / "episodes.csv", [&](std::ostream& o) { write_episode_metrics_csv(o, m); });
  std::cout << "episodes " << m.episodes << ": reward/step " << format_double(m.mean_reward) << " ± "
            << format_double(m.std_reward) << ", cost/step " << format_double(m.mean_cost)
            << ", cost/episode " << format_double(m.mean_cost_return) << "\n";
  return 0;
}

int run_tune(const Common& common) {
  const ExperimentConfig config = load(common);
  const Environment env = training_environment(config);
  const TuningResult r = tune_baseline(env, config.grid, config.tuning_episodes,
                                       stream_seed(config.seed, SeedStream::tuning));
  const fs::path dir(config.output_dir);
  write_csv_file(dir / "tuning.csv", [&](std::ostream& o) { write_tuning_csv(o, r); });
  write_file(dir / "baseline.json", baseline_json(r.spec).dump(1) + "\n");
  const TuningPoint& p = r.points[r.selected];
  std::cout << "selected gain scale " << format_double(p.gain_scale) << ", K_p "
            << format_double(p.perturbation) << ": reward/step " << format_double(p.mean_reward)
            << ", cost/episode " << format_double(p.mean_cost)
            << (r.infeasible ? " (no grid point meets the cost limit)" : "") << "\n";
  return 0;
}

int run_sweep(const Common& common) {
  const ExperimentConfig config = load(common);
  const auto points = sweep_tracking_threshold(config, config.sweep.thresholds);
  const fs::path dir(config.output_dir);
  write_csv_file(dir / "sweep.csv", [&](std::ostream& o) { write_sweep_csv(o, points); });
  write_csv_file(dir / "sweep_summary.csv", [&](std::ostream& o) { write_sweep_summary_csv(o, points); });
  for (const auto& p : points)
    std::cout << "dy_max " << format_double(p.threshold) << ": "
              << (p.trained ? "reward/step " + format_double(p.metrics.mean_reward) : "failed: " + p.error)
              << ", drift probability " << format_double(p.drift_probability) << "\n";
  return 0;
}

int run_figures(const Common& common, const AgentChoice& choice, int episode) {
  const ExperimentConfig config = load(common);
  const Environment env = protocol_environment(choice.protocol, config);
  const Controller controller = make_controller(choice, config, env);
  const std::uint64_t seed = stream_seed(config.seed, SeedStream::evaluation);
  Rng env_rng(derive_seed(seed, static_cast<std::uint64_t>(episode), 0));
  Rng ctl_rng(derive_seed(seed, static_cast<std::uint64_t>(episode), 1));
  EpisodeTrace trace;
  run_episode(env, controller, env_rng, ctl_rng, &trace);
  emit_episode_figure_data(trace, config.output_dir);
  std::cout << "wrote " << trace.steps.size() << "-step episode panels to " << config.output_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active fault diagnosis with constrained policy optimization"};
  app.require_subcommand(1);

  Common train_opts, eval_opts, tune_opts, sweep_opts, fig_opts;
  AgentChoice eval_agent, fig_agent;
  std::optional<int> eval_episodes;
  int fig_episode = 0;

  auto* train_cmd = app.add_subcommand("train", "Train a policy with CPO");
  add_common(train_cmd, train_opts);

  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint or baseline");
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_option("--checkpoint", eval_agent.checkpoint, "Policy checkpoint");
  eval_cmd->add_option("--baseline", eval_agent.baseline, "Baseline parameters (baseline.json from tune-baseline)");
  eval_cmd->add_option("--episodes", eval_episodes, "Override evaluation.episodes");
  eval_cmd->add_option("--protocol", eval_agent.protocol, "test (jump faults) or training")
      ->check(CLI::IsMember({"test", "training"}));

  auto* tune_cmd = app.add_subcommand("tune-baseline", "Grid-search the perturbed P controller");
  add_common(tune_cmd, tune_opts);

  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate over tracking thresholds");
  add_common(sweep_cmd, sweep_opts);

  auto* fig_cmd = app.add_subcommand("emit-figures", "Write per-panel CSVs for one episode");
  add_common(fig_cmd, fig_opts);
  fig_cmd->add_option("--checkpoint", fig_agent.checkpoint, "Policy checkpoint");
  fig_cmd->add_option("--baseline", fig_agent.baseline, "Baseline parameters (baseline.json from tune-baseline)");
  fig_cmd->add_option("--episode", fig_episode, "Evaluation episode index to trace");
  fig_cmd->add_option("--protocol", fig_agent.protocol, "test (jump faults) or training")
      ->check(CLI::IsMember({"test", "training"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return run_train(train_opts);
    if (*eval_cmd) return run_evaluate(eval_opts, eval_agent, eval_episodes);
    if (*tune_cmd) return run_tune(tune_opts);
    if (*sweep_cmd) return run_sweep(sweep_opts);
    if (*fig_cmd) return run_figures(fig_opts, fig_agent, fig_episode);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
