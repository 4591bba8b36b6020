// dronenet: command-line front end for the simulator, trainer and tools.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dronenet/dronenet.hpp"

namespace {

using namespace dronenet;
namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kOutputRootEnv = "DRONENET_OUTPUT_ROOT";

// Flags shared by train and sweep; unset flags leave the config untouched.
struct RunFlags {
  std::string config_path;
  std::string output;
  std::optional<int> episodes;
  std::vector<std::uint64_t> seeds;
  std::optional<int> psi;
  std::optional<int> tasks;
  std::optional<int> hidden;
  std::optional<double> learning_rate;
  std::optional<int> sync_period;
  std::optional<int> window;
  std::optional<int> stride;
  bool fixed_locations = false;
  bool random_locations = false;
  bool fixed_lengths = false;
  bool random_lengths = false;
  int jobs = 1;
  int progress = 0;
  bool no_checkpoints = false;
  bool dry_run = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file (a manifest also works)")
      ->check(CLI::ExistingFile);
  cmd->add_option("-o,--output", f.output, "Output directory");
  cmd->add_option("--episodes", f.episodes, "Episodes per run (0: until epsilon hits its floor)");
  cmd->add_option("--seed", f.seeds, "Seed; repeat for several runs");
  cmd->add_option("--psi", f.psi, "Warm-up multiplier");
  cmd->add_option("--tasks", f.tasks, "Number of tasks (and drones)");
  cmd->add_option("--hidden", f.hidden, "Width of both hidden layers");
  cmd->add_option("--learning-rate", f.learning_rate, "Adam step size");
  cmd->add_option("--sync-period", f.sync_period, "Learning steps between target syncs");
  cmd->add_option("--window", f.window, "Sliding window for metrics");
  cmd->add_option("--stride", f.stride, "Episodes between metrics rows");
  auto* fl = cmd->add_flag("--fixed-locations", f.fixed_locations, "Use the fixed task layout");
  auto* rl = cmd->add_flag("--random-locations", f.random_locations,
                           "Draw task locations uniformly");
  fl->excludes(rl);
  auto* fn = cmd->add_flag("--fixed-lengths", f.fixed_lengths, "All tasks have the fixed length");
  auto* rn = cmd->add_flag("--random-lengths", f.random_lengths, "Draw task lengths uniformly");
  fn->excludes(rn);
  cmd->add_option("-j,--jobs", f.jobs, "Runs trained in parallel")->check(CLI::PositiveNumber);
  cmd->add_option("--progress", f.progress, "Report to stderr every N episodes (0: quiet)");
  cmd->add_flag("--no-checkpoints", f.no_checkpoints, "Do not save trained networks");
  cmd->add_flag("--dry-run", f.dry_run, "Validate and print the resolved config, then exit");
}

RunConfig resolve_config(const RunFlags& f) {
  RunConfig c;
  if (!f.config_path.empty()) merge_json(c, read_json_file(f.config_path));
  auto& s = c.spec;
  if (f.episodes) s.episodes = *f.episodes;
  if (!f.seeds.empty()) s.seeds = f.seeds;
  if (f.psi) s.agent.warmup_multiplier = *f.psi;
  if (f.tasks) s.layout.task_count = *f.tasks;
  if (f.hidden) s.agent.hidden1 = s.agent.hidden2 = *f.hidden;
  if (f.learning_rate) s.agent.learning_rate = *f.learning_rate;
  if (f.sync_period) s.agent.sync_period = *f.sync_period;
  if (f.window) s.window = *f.window;
  if (f.stride) s.report_stride = *f.stride;
  if (f.fixed_locations) s.layout.location_mode = experiments::LocationMode::Fixed;
  if (f.random_locations) s.layout.location_mode = experiments::LocationMode::Uniform;
  if (f.fixed_lengths) s.layout.length_mode = experiments::LengthMode::Fixed;
  if (f.random_lengths) s.layout.length_mode = experiments::LengthMode::Uniform;
  if (!f.output.empty()) c.output_dir = f.output;
  return c;
}

fs::path output_dir(const RunConfig& c, const std::string& fallback_name) {
  if (!c.output_dir.empty()) return c.output_dir;
  const char* root = std::getenv(kOutputRootEnv);
  return fs::path(root && *root ? root : "runs") / fallback_name;
}

void prepare_output(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw io::IoError("cannot create output directory " + dir.string());
}

json manifest(const RunConfig& c, const std::string& command, int argc, char** argv) {
  json args = json::array();
  for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
  return {{"schema", "dronenet-manifest"}, {"schema_version", io::kSchemaVersion},
          {"version", kVersion},           {"command", command},
          {"argv", args},                  {"config", to_json(c)}};
}

fs::path checkpoint_dir(const fs::path& out, const std::string& label, std::uint64_t seed) {
  return out / "checkpoints" / label / ("seed-" + std::to_string(seed));
}

std::string fmt(double x) { return io::format_real(x); }

void print_summary(const std::vector<experiments::RunResult>& runs, int window) {
  std::printf("%-20s %6s %9s %8s %13s %19s\n", "sweep_point", "seed", "episodes", "epsilon",
              "success_rate", "avg_success_reward");
  for (const auto& r : runs) {
    const auto t = io::trailing(r.records, window);
    std::printf("%-20s %6llu %9d %8.4f %13.4f %19s\n", r.point.label.c_str(),
                static_cast<unsigned long long>(r.seed), t.episodes, t.epsilon, t.success_rate,
                t.avg_success_reward ? fmt(*t.avg_success_reward).c_str() : "-");
  }
}

void write_outputs(const fs::path& out, const std::vector<experiments::RunResult>& runs,
                   int window) {
  io::write_episodes_csv(out / "episodes.csv", runs);
  io::write_metrics_csv(out / "metrics.csv", runs);
  io::write_json(out / "summary.json", io::summary_json(runs, window));
}

auto progress_printer(int every) {
  return [every](const std::string& label, std::uint64_t seed, const experiments::EpisodeRecord& r) {
    if (every <= 0 || (r.episode_index + 1) % every != 0) return;
    std::fprintf(stderr, "[%s seed %llu] episode %d eps %.4f %s reward %s\n", label.c_str(),
                 static_cast<unsigned long long>(seed), r.episode_index + 1, r.epsilon_at_end,
                 r.success ? "success" : "failure", fmt(r.accumulated_reward).c_str());
  };
}

int run_training(const RunConfig& config, const RunFlags& flags, const std::string& command,
                 int argc, char** argv) {
  const fs::path out = output_dir(config, command + "-" +
                                             std::string(experiments::to_string(config.spec.kind)));
  experiments::validate(config.spec);
  RunConfig recorded = config;
  recorded.output_dir = out.string();
  if (flags.dry_run) {
    std::cout << to_json(recorded).dump(2) << '\n';
    return 0;
  }
  prepare_output(out);
  io::write_json(out / "manifest.json", manifest(recorded, command, argc, argv));

  experiments::RunOptions options;
  options.jobs = flags.jobs;
  options.on_episode = progress_printer(flags.progress);
  if (!flags.no_checkpoints)
    options.on_run_finished = [&](const experiments::TrainingRun& run) {
      io::save_checkpoint(checkpoint_dir(out, run.point().label, run.seed()), recorded, run);
    };
  const auto runs = experiments::run_experiment(config.spec, options);
  write_outputs(out, runs, config.spec.window);
  print_summary(runs, config.spec.window);
  std::fprintf(stderr, "wrote %s\n", out.string().c_str());
  return 0;
}

int run_resume(const std::string& checkpoint, const RunFlags& flags, int argc, char** argv) {
  auto ck = io::load_checkpoint(checkpoint);
  RunConfig config = ck.config;
  if (flags.episodes) config.spec.episodes = *flags.episodes;
  if (flags.window) config.spec.window = *flags.window;
  if (flags.stride) config.spec.report_stride = *flags.stride;
  config.output_dir = flags.output;
  const fs::path out = output_dir(config, "train-resumed");
  experiments::validate(config.spec);
  prepare_output(out);
  RunConfig recorded = config;
  recorded.output_dir = out.string();
  json m = manifest(recorded, "train", argc, argv);
  m["resumed_from"] = {{"checkpoint", fs::absolute(checkpoint).string()},
                       {"global_step", ck.global_step},
                       {"episodes_done", ck.episodes_done}};
  io::write_json(out / "manifest.json", m);

  experiments::TrainingRun run(config.spec, ck.point, ck.seed, std::move(ck.agents),
                               ck.global_step, ck.episodes_done);
  experiments::RunResult result{run.point(), run.seed(), {}, {}, 0, {}};
  const auto report = progress_printer(flags.progress);
  experiments::train(run, config.spec.episodes, result.records,
                     [&](const experiments::EpisodeRecord& r) {
                       report(run.point().label, run.seed(), r);
                     });
  if (result.records.empty()) throw UsageError("the checkpoint's schedule is already finished");
  result.series =
      experiments::compute_series(result.records, config.spec.window, config.spec.report_stride);
  result.global_step = run.global_step();
  if (!flags.no_checkpoints)
    io::save_checkpoint(checkpoint_dir(out, run.point().label, run.seed()), recorded, run);
  const std::vector<experiments::RunResult> runs = {std::move(result)};
  write_outputs(out, runs, config.spec.window);
  print_summary(runs, config.spec.window);
  std::fprintf(stderr, "wrote %s\n", out.string().c_str());
  return 0;
}

struct EvalFlags {
  std::string checkpoint;
  int episodes = 100;
  double epsilon = 0.0;
  std::uint64_t seed = 1;
  bool as_json = false;
};

int run_eval(const EvalFlags& f) {
  if (f.episodes <= 0) throw UsageError("--episodes must be positive");
  if (!(f.epsilon >= 0.0 && f.epsilon <= 1.0)) throw UsageError("--epsilon must lie in [0, 1]");
  const auto ck = io::load_checkpoint(f.checkpoint);
  const auto& spec = ck.config.spec;
  ck.point.layout.validate(spec.grid);
  const Environment env{spec.grid, energy::scaled_rates(), spec.coefs};
  Rng tasks_rng(derive_seed(f.seed, {1}));
  Rng explore_rng(derive_seed(f.seed, {2}));
  std::vector<experiments::EpisodeRecord> records;
  for (int i = 0; i < f.episodes; ++i) {
    const auto tasks = ck.point.layout.sample(env.config, tasks_rng);
    records.push_back(experiments::evaluate_episode(env, tasks, ck.agents, f.epsilon, explore_rng));
    records.back().episode_index = i;
  }
  const double sr = experiments::success_rate(records);
  const auto avg = experiments::avg_success_reward(records);
  if (f.as_json) {
    std::cout << json{{"episodes", f.episodes},
                      {"epsilon", f.epsilon},
                      {"seed", f.seed},
                      {"success_rate", sr},
                      {"avg_success_reward", avg ? json(*avg) : json(nullptr)}}
                     .dump(2)
              << '\n';
  } else {
    std::printf("episodes            %d\n", f.episodes);
    std::printf("epsilon             %s\n", fmt(f.epsilon).c_str());
    std::printf("success_rate        %s\n", fmt(sr).c_str());
    std::printf("avg_success_reward  %s\n", avg ? fmt(*avg).c_str() : "-");
  }
  return 0;
}

struct PhysicsFlags {
  energy::PhysicsParams params;
  bool as_json = false;
};

int run_physics(const PhysicsFlags& f) {
  energy::validate(f.params);
  const double vs = energy::solve_induced_velocity(f.params);
  const double hover = energy::hover_power(f.params);
  const double forward = energy::forward_power(f.params, vs);
  const auto scaled = energy::scaled_rates();
  if (f.as_json) {
    std::cout << json{{"induced_velocity", vs},
                      {"physical", {{"hover", hover}, {"forward", forward}}},
                      {"scaled",
                       {{"hover", scaled.hover},
                        {"forward", scaled.forward},
                        {"facilities", scaled.facilities}}}}
                     .dump(2)
              << '\n';
    return 0;
  }
  std::printf("induced velocity  %s m/s\n", fmt(vs).c_str());
  std::printf("hover power       %s W\n", fmt(hover).c_str());
  std::printf("forward power     %s W\n", fmt(forward).c_str());
  std::printf("scaled rates      hover %s  forward %s  facilities %s\n",
              fmt(scaled.hover).c_str(), fmt(scaled.forward).c_str(),
              fmt(scaled.facilities).c_str());
  return 0;
}

struct OracleFlags {
  int side = 3;
  std::vector<std::string> tasks;
  std::optional<int> drones;
  int horizon = 3;
  double gamma = 1.0;
  double beta = 1.0;
  double budget = 1e8;
  bool as_json = false;
};

TaskSpec parse_task(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw UsageError("task '" + s + "' must look like LOC:LEN");
  try {
    std::size_t used = 0;
    TaskSpec t{std::stoi(s.substr(0, colon), &used), 0};
    if (used != colon) throw std::invalid_argument(s);
    const auto len = s.substr(colon + 1);
    t.length = std::stoi(len, &used);
    if (used != len.size()) throw std::invalid_argument(s);
    return t;
  } catch (const std::logic_error&) {
    throw UsageError("task '" + s + "' must look like LOC:LEN");
  }
}

int run_oracle(const OracleFlags& f) {
  GridConfig grid;
  grid.side_points = f.side;
  grid.validate();
  std::vector<TaskSpec> tasks;
  for (const auto& t : f.tasks) tasks.push_back(parse_task(t));
  const int drones = f.drones.value_or(static_cast<int>(tasks.size()));
  oracle::SearchOptions options;
  options.node_budget = f.budget;
  const auto r = oracle::solve_exhaustive(grid, tasks, drones, f.horizon, {f.gamma, f.beta},
                                          energy::scaled_rates(), options);
  if (f.as_json) {
    json seqs = json::array();
    for (const auto& seq : r.best_action_sequences) {
      json names = json::array();
      for (Action a : seq) names.push_back(std::string(to_string(a)));
      seqs.push_back(names);
    }
    std::cout << json{{"best_accumulated_reward", r.best_accumulated_reward},
                      {"best_action_sequences", seqs},
                      {"explored_nodes", r.explored_nodes}}
                     .dump(2)
              << '\n';
    return 0;
  }
  std::printf("best accumulated reward  %s\n", fmt(r.best_accumulated_reward).c_str());
  std::printf("explored nodes           %lld\n", static_cast<long long>(r.explored_nodes));
  for (std::size_t d = 0; d < r.best_action_sequences.size(); ++d) {
    std::printf("drone %zu:", d);
    for (Action a : r.best_action_sequences[d])
      std::printf(" %.*s", static_cast<int>(to_string(a).size()), to_string(a).data());
    std::printf("\n");
  }
  return 0;
}

struct ExportFlags {
  std::string records;
  int window = 100;
  int stride = 1;
  std::string output;
};

int run_export(const ExportFlags& f) {
  if (f.window < 1 || f.stride < 1) throw UsageError("--window and --stride must be >= 1");
  const auto groups = io::read_episodes_csv(f.records);
  std::string text = std::string(io::kMetricsHeader) + '\n';
  for (const auto& [key, recs] : groups)
    text += io::metrics_rows(key.point, key.seed, experiments::compute_series(recs, f.window, f.stride));
  if (f.output.empty() || f.output == "-")
    std::cout << text;
  else
    io::write_text(f.output, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-drone task execution: simulator, DQN training and tools"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  PhysicsFlags physics;
  auto* physics_cmd = app.add_subcommand("physics", "Compute power rates from drone physics");
  auto& p = physics.params;
  physics_cmd->add_option("--diameter", p.rotor_diameter_m, "Rotor diameter [m]")
      ->capture_default_str();
  physics_cmd->add_option("--mass", p.drone_mass_kg, "Drone mass [kg]")->capture_default_str();
  physics_cmd->add_option("--speed", p.ground_speed_mps, "Ground speed [m/s]")
      ->capture_default_str();
  physics_cmd->add_option("--pitch", p.pitch_angle_rad, "Pitch angle [rad]")
      ->capture_default_str();
  physics_cmd->add_option("--eta", p.power_efficiency, "Power efficiency")->capture_default_str();
  physics_cmd->add_option("--rho", p.air_density_kgpm3, "Air density [kg/m^3]")
      ->capture_default_str();
  physics_cmd->add_option("--rotors", p.rotor_count, "Number of rotors")->capture_default_str();
  physics_cmd->add_option("--drag", p.drag_force_N, "Drag force [N]")->capture_default_str();
  physics_cmd->add_option("--gravity", p.gravity_mps2, "Gravity [m/s^2]")->capture_default_str();
  physics_cmd->add_flag("--json", physics.as_json, "Print JSON");

  RunFlags train_flags;
  std::string resume;
  auto* train_cmd = app.add_subcommand("train", "Train one configuration");
  add_run_flags(train_cmd, train_flags);
  train_cmd->add_option("--resume", resume, "Continue from a checkpoint directory")
      ->check(CLI::ExistingDirectory);

  RunFlags sweep_flags;
  std::string sweep_kind;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train every point of a parameter sweep");
  add_run_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--kind", sweep_kind, "threshold, geometry or density")
      ->check(CLI::IsMember({"threshold", "geometry", "density"}));

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint without learning");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--episodes", eval.episodes, "Episodes to play")->capture_default_str();
  eval_cmd->add_option("--epsilon", eval.epsilon, "Exploration rate")->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed, "Seed for tasks and exploration")
      ->capture_default_str();
  eval_cmd->add_flag("--json", eval.as_json, "Print JSON");

  OracleFlags oracle_flags;
  auto* oracle_cmd = app.add_subcommand("oracle", "Exhaustive optimum of a tiny instance");
  oracle_cmd->add_option("--side", oracle_flags.side, "Grid points per side")
      ->capture_default_str();
  oracle_cmd->add_option("--task", oracle_flags.tasks, "Task as LOC:LEN; repeat per task")
      ->required();
  oracle_cmd->add_option("--drones", oracle_flags.drones, "Drone count (default: task count)");
  oracle_cmd->add_option("--horizon", oracle_flags.horizon, "Search depth in steps")
      ->capture_default_str();
  oracle_cmd->add_option("--gamma", oracle_flags.gamma, "Completion reward weight")
      ->capture_default_str();
  oracle_cmd->add_option("--beta", oracle_flags.beta, "Progress reward weight")
      ->capture_default_str();
  oracle_cmd->add_option("--budget", oracle_flags.budget, "Maximum estimated nodes")
      ->capture_default_str();
  oracle_cmd->add_flag("--json", oracle_flags.as_json, "Print JSON");

  ExportFlags export_flags;
  auto* export_cmd = app.add_subcommand("export", "Recompute metrics from an episodes file");
  export_cmd->add_option("--records", export_flags.records, "episodes.csv")
      ->required()
      ->check(CLI::ExistingFile);
  export_cmd->add_option("--window", export_flags.window, "Sliding window")
      ->capture_default_str();
  export_cmd->add_option("--stride", export_flags.stride, "Episodes between rows")
      ->capture_default_str();
  export_cmd->add_option("-o,--output", export_flags.output, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*physics_cmd) return run_physics(physics);
    if (*train_cmd) {
      if (!resume.empty()) {
        if (!train_flags.config_path.empty() || !train_flags.seeds.empty())
          throw UsageError("--resume takes its configuration from the checkpoint");
        return run_resume(resume, train_flags, argc, argv);
      }
      return run_training(resolve_config(train_flags), train_flags, "train", argc, argv);
    }
    if (*sweep_cmd) {
      RunConfig config = resolve_config(sweep_flags);
      if (!sweep_kind.empty()) config.spec.kind = experiments::kind_from_string(sweep_kind);
      if (config.spec.kind == experiments::Kind::Single)
        throw UsageError("sweep needs --kind (or a sweep kind in the config)");
      return run_training(config, sweep_flags, "sweep", argc, argv);
    }
    if (*eval_cmd) return run_eval(eval);
    if (*oracle_cmd) return run_oracle(oracle_flags);
    if (*export_cmd) return run_export(export_flags);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
