#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "dronenet/dqn.hpp"
#include "dronenet/error.hpp"
#include "dronenet/rng.hpp"
#include "dronenet/world.hpp"

namespace dronenet::experiments {

enum class Kind { Single, ThresholdSweep, Geometry, Density };
enum class LocationMode { Fixed, Uniform };
enum class LengthMode { Fixed, Uniform };

// 5x5 grid, base at point 0 (top-left corner): four task points spread over
// the grid, used whenever locations are fixed.
inline const std::vector<int> kDefaultFixedLocations = {8, 11, 19, 22};

inline std::vector<int> all_non_base_points(const GridConfig& grid) {
  std::vector<int> pts;
  for (int p = 0; p < grid.point_count(); ++p)
    if (p != grid.base_index) pts.push_back(p);
  return pts;
}

// How each episode's mission is drawn.
struct TaskLayout {
  int task_count = 4;
  LocationMode location_mode = LocationMode::Fixed;
  LengthMode length_mode = LengthMode::Fixed;
  int fixed_length = 5;
  int min_length = 1;
  int max_length = 5;
  std::vector<int> fixed_locations = kDefaultFixedLocations;
  std::vector<int> candidate_locations;  // empty: every non-base point

  void validate(const GridConfig& grid) const {
    if (task_count < 1) throw ConfigError("task count must be >= 1");
    if (location_mode == LocationMode::Fixed) {
      if (static_cast<int>(fixed_locations.size()) != task_count)
        throw ConfigError("fixed layout lists " + std::to_string(fixed_locations.size()) +
                          " locations for " + std::to_string(task_count) + " tasks");
      std::vector<TaskSpec> probe;
      for (int l : fixed_locations) probe.push_back({l, 1});
      validate_tasks(grid, probe);
    } else {
      const auto cands = candidates(grid);
      if (static_cast<int>(cands.size()) < task_count)
        throw ConfigError("not enough candidate locations for " + std::to_string(task_count) +
                          " tasks");
      std::vector<TaskSpec> probe;
      for (int l : cands) probe.push_back({l, 1});
      validate_tasks(grid, probe);
    }
    if (length_mode == LengthMode::Fixed && fixed_length < 1)
      throw ConfigError("fixed task length must be >= 1");
    if (length_mode == LengthMode::Uniform && (min_length < 1 || max_length < min_length))
      throw ConfigError("task length range must satisfy 1 <= min <= max");
  }

  std::vector<int> candidates(const GridConfig& grid) const {
    return candidate_locations.empty() ? all_non_base_points(grid) : candidate_locations;
  }

  std::vector<TaskSpec> sample(const GridConfig& grid, Rng& rng) const {
    std::vector<int> locs;
    if (location_mode == LocationMode::Fixed) {
      locs = fixed_locations;
    } else {
      auto pool = candidates(grid);
      for (int i = 0; i < task_count; ++i) {
        const auto j = i + static_cast<int>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
      }
      locs.assign(pool.begin(), pool.begin() + task_count);
    }
    std::vector<TaskSpec> tasks;
    for (int l : locs) {
      const int len = length_mode == LengthMode::Fixed ? fixed_length
                                                       : rng.between(min_length, max_length);
      tasks.push_back({l, len});
    }
    return tasks;
  }
};

struct GeometryVariant {
  LocationMode location_mode = LocationMode::Fixed;
  LengthMode length_mode = LengthMode::Uniform;
};

struct ExperimentSpec {
  Kind kind = Kind::Single;
  GridConfig grid;
  RewardCoefs coefs;
  dqn::AgentConfig agent;
  dqn::EpsilonSchedule epsilon;
  TaskLayout layout;
  // 0: keep starting episodes until epsilon has decayed to its floor.
  int episodes = 0;
  int window = 100;
  int report_stride = 1;
  std::vector<int> psi_values = {1, 2, 5, 10};
  std::vector<int> task_counts = {2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<GeometryVariant> variants = {{LocationMode::Fixed, LengthMode::Uniform},
                                           {LocationMode::Uniform, LengthMode::Fixed},
                                           {LocationMode::Uniform, LengthMode::Uniform}};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
};

inline std::string_view to_string(Kind k) {
  switch (k) {
    case Kind::Single: return "single";
    case Kind::ThresholdSweep: return "threshold";
    case Kind::Geometry: return "geometry";
    case Kind::Density: return "density";
  }
  return "?";
}
inline std::string_view to_string(LocationMode m) {
  return m == LocationMode::Fixed ? "fixed" : "uniform";
}
inline std::string_view to_string(LengthMode m) {
  return m == LengthMode::Fixed ? "fixed" : "uniform";
}
inline Kind kind_from_string(std::string_view s) {
  for (Kind k : {Kind::Single, Kind::ThresholdSweep, Kind::Geometry, Kind::Density})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown experiment kind '" + std::string(s) + "'");
}
inline LocationMode location_mode_from_string(std::string_view s) {
  if (s == "fixed") return LocationMode::Fixed;
  if (s == "uniform") return LocationMode::Uniform;
  throw ConfigError("unknown location mode '" + std::string(s) + "'");
}
inline LengthMode length_mode_from_string(std::string_view s) {
  if (s == "fixed") return LengthMode::Fixed;
  if (s == "uniform") return LengthMode::Uniform;
  throw ConfigError("unknown length mode '" + std::string(s) + "'");
}

// One configuration inside a sweep.
struct SweepPoint {
  std::string label;
  dqn::AgentConfig agent;
  TaskLayout layout;
};

inline std::vector<SweepPoint> sweep_points(const ExperimentSpec& spec) {
  std::vector<SweepPoint> pts;
  switch (spec.kind) {
    case Kind::Single:
      pts.push_back({"psi" + std::to_string(spec.agent.warmup_multiplier), spec.agent, spec.layout});
      break;
    case Kind::ThresholdSweep:
      for (int psi : spec.psi_values) {
        SweepPoint p{"psi" + std::to_string(psi), spec.agent, spec.layout};
        p.agent.warmup_multiplier = psi;
        pts.push_back(std::move(p));
      }
      break;
    case Kind::Geometry:
      for (const auto& v : spec.variants) {
        SweepPoint p{"loc-" + std::string(to_string(v.location_mode)) + "_len-" +
                         std::string(to_string(v.length_mode)),
                     spec.agent, spec.layout};
        p.layout.location_mode = v.location_mode;
        p.layout.length_mode = v.length_mode;
        pts.push_back(std::move(p));
      }
      break;
    case Kind::Density:
      for (int n : spec.task_counts) {
        SweepPoint p{"tasks" + std::to_string(n), spec.agent, spec.layout};
        p.layout.task_count = n;
        p.layout.location_mode = LocationMode::Uniform;
        pts.push_back(std::move(p));
      }
      break;
  }
  return pts;
}

inline void validate(const ExperimentSpec& spec) {
  spec.grid.validate();
  spec.agent.validate();
  spec.epsilon.validate();
  if (spec.episodes < 0) throw ConfigError("episodes must be >= 0");
  if (spec.window < 1) throw ConfigError("metrics window must be >= 1");
  if (spec.report_stride < 1) throw ConfigError("report stride must be >= 1");
  if (spec.seeds.empty()) throw ConfigError("at least one seed is required");
  if (spec.kind == Kind::ThresholdSweep && spec.psi_values.empty())
    throw ConfigError("threshold sweep needs psi values");
  if (spec.kind == Kind::Density && spec.task_counts.empty())
    throw ConfigError("density sweep needs task counts");
  if (spec.kind == Kind::Geometry && spec.variants.empty())
    throw ConfigError("geometry sweep needs variants");
  for (const auto& p : sweep_points(spec)) {
    p.agent.validate();
    p.layout.validate(spec.grid);
  }
}

struct EpisodeRecord {
  int episode_index = 0;
  bool success = false;
  double accumulated_reward = 0.0;
  int steps_used = 0;
  std::vector<double> final_batteries;
  double epsilon_at_start = 0.0;
  double epsilon_at_end = 0.0;

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

inline double success_rate(std::span<const EpisodeRecord> window) {
  if (window.empty()) throw UsageError("success rate of an empty window");
  const auto ok = std::count_if(window.begin(), window.end(),
                                [](const EpisodeRecord& r) { return r.success; });
  return static_cast<double>(ok) / static_cast<double>(window.size());
}

inline std::optional<double> avg_success_reward(std::span<const EpisodeRecord> window) {
  double total = 0.0;
  int n = 0;
  for (const auto& r : window) {
    if (r.success) {
      total += r.accumulated_reward;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return total / n;
}

// Sliding-window metrics. Entry i covers the up-to-`window` episodes ending
// at window_end_episode[i] (1-based, inclusive).
struct MetricsSeries {
  int window = 100;
  std::vector<int> window_end_episode;
  std::vector<int> episodes_in_window;
  std::vector<double> epsilon;
  std::vector<double> success_rate_series;
  std::vector<std::optional<double>> avg_success_reward_series;

  friend bool operator==(const MetricsSeries&, const MetricsSeries&) = default;
};

inline MetricsSeries compute_series(std::span<const EpisodeRecord> records, int window,
                                    int stride = 1) {
  if (window < 1 || stride < 1) throw UsageError("window and stride must be >= 1");
  MetricsSeries m;
  m.window = window;
  const int n = static_cast<int>(records.size());
  for (int end = 1; end <= n; ++end) {
    if (end % stride != 0 && end != n) continue;
    const int begin = std::max(0, end - window);
    const auto w = records.subspan(begin, end - begin);
    m.window_end_episode.push_back(end);
    m.episodes_in_window.push_back(end - begin);
    m.epsilon.push_back(records[end - 1].epsilon_at_end);
    m.success_rate_series.push_back(success_rate(w));
    m.avg_success_reward_series.push_back(avg_success_reward(w));
  }
  return m;
}

// Chooses the joint action for a state. `obs` is the encoded state.
using JointPolicy =
    std::function<void(const WorldState& state, std::span<const double> obs, std::span<Action> out)>;

// Called after every environment step with the shared observation pair.
using StepHook = std::function<void(std::span<const double> obs, std::span<const Action> actions,
                                    const StepOutcome& outcome, std::span<const double> next_obs)>;

// Plays one episode to termination and returns its record (episode_index
// and epsilon fields are left for the caller).
inline EpisodeRecord rollout(const Environment& env, std::span<const TaskSpec> tasks,
                             const JointPolicy& policy, const StepHook& hook = {}) {
  WorldState s = env.reset(tasks);
  const int k = s.drone_count();
  std::vector<double> obs(static_cast<std::size_t>(observation_size(k)));
  std::vector<double> next_obs(obs.size());
  std::vector<Action> actions(static_cast<std::size_t>(k));
  encode_observation(s, env.config, obs);

  EpisodeRecord rec;
  while (true) {
    policy(s, obs, actions);
    StepOutcome out = env.step(s, actions);
    encode_observation(out.next_state, env.config, next_obs);
    rec.accumulated_reward += out.reward;
    ++rec.steps_used;
    if (hook) hook(obs, actions, out, next_obs);
    s = std::move(out.next_state);
    obs.swap(next_obs);
    if (out.done) {
      rec.success = out.success;
      break;
    }
  }
  rec.final_batteries = s.batteries;
  return rec;
}

// Random streams of one training run; each is seeded independently.
struct RunStreams {
  Rng tasks;
  Rng explore;
  Rng replay;

  static RunStreams from_seed(std::uint64_t run_seed) {
    return {Rng(derive_seed(run_seed, {1})), Rng(derive_seed(run_seed, {2})),
            Rng(derive_seed(run_seed, {3}))};
  }
};

// One learning episode: every step each drone picks an epsilon-greedy
// action from the shared observation, the environment advances once on the
// joint action, and then each drone in turn stores its transition and runs
// one learning step. Epsilon follows the schedule in global steps.
//
// A transition is terminal only when the mission ended (all tasks done);
// hitting the step limit truncates without a terminal mark.
inline EpisodeRecord run_episode(const Environment& env, std::span<const TaskSpec> tasks,
                                 std::vector<dqn::Agent>& agents,
                                 const dqn::EpsilonSchedule& schedule, std::int64_t& global_step,
                                 Rng& explore_rng, Rng& replay_rng) {
  if (agents.size() != tasks.size())
    throw UsageError("agent count must equal the number of drones");
  const double eps_start = schedule.at(global_step);
  auto policy = [&](const WorldState&, std::span<const double> obs, std::span<Action> out) {
    const double eps = schedule.at(global_step);
    for (std::size_t d = 0; d < agents.size(); ++d)
      out[d] = agents[d].select_action(obs, eps, explore_rng);
  };
  auto learn = [&](std::span<const double> obs, std::span<const Action> actions,
                   const StepOutcome& out, std::span<const double> next_obs) {
    const bool terminal = out.done && std::all_of(out.next_state.remaining_lengths.begin(),
                                                  out.next_state.remaining_lengths.end(),
                                                  [](int r) { return r == 0; });
    for (std::size_t d = 0; d < agents.size(); ++d) {
      agents[d].store(obs, actions[d], out.reward, next_obs, terminal);
      agents[d].learn_step(replay_rng);
    }
    ++global_step;
  };
  EpisodeRecord rec = rollout(env, tasks, policy, learn);
  rec.epsilon_at_start = eps_start;
  rec.epsilon_at_end = schedule.at(global_step);
  return rec;
}

// Evaluation episode: fixed epsilon, no storing or learning.
inline EpisodeRecord evaluate_episode(const Environment& env, std::span<const TaskSpec> tasks,
                                      const std::vector<dqn::Agent>& agents, double epsilon,
                                      Rng& explore_rng) {
  if (agents.size() != tasks.size())
    throw UsageError("agent count must equal the number of drones");
  auto policy = [&](const WorldState&, std::span<const double> obs, std::span<Action> out) {
    for (std::size_t d = 0; d < agents.size(); ++d)
      out[d] = agents[d].select_action(obs, epsilon, explore_rng);
  };
  EpisodeRecord rec = rollout(env, tasks, policy);
  rec.epsilon_at_start = rec.epsilon_at_end = epsilon;
  return rec;
}

// 64-bit FNV-1a, used to give each sweep point its own seed stream.
constexpr std::uint64_t label_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  return h;
}

inline std::uint64_t run_seed(const SweepPoint& point, std::uint64_t seed) {
  return derive_seed(seed, {label_hash(point.label)});
}

// State of one (sweep point, seed) training run. Can be stepped episode by
// episode, checkpointed, and resumed.
class TrainingRun {
 public:
  TrainingRun(const ExperimentSpec& spec, SweepPoint point, std::uint64_t seed)
      : env_{spec.grid, energy::scaled_rates(), spec.coefs},
        schedule_(spec.epsilon),
        point_(std::move(point)),
        seed_(seed),
        streams_(RunStreams::from_seed(run_seed(point_, seed))) {
    const int k = point_.layout.task_count;
    for (int d = 0; d < k; ++d)
      agents_.emplace_back(point_.agent, observation_size(k),
                           derive_seed(run_seed(point_, seed), {4, static_cast<std::uint64_t>(d)}));
  }

  // Continues a run from restored agents at `global_step`. The random
  // streams are re-derived from the resume position.
  TrainingRun(const ExperimentSpec& spec, SweepPoint point, std::uint64_t seed,
              std::vector<dqn::Agent> agents, std::int64_t global_step, int episodes_done)
      : env_{spec.grid, energy::scaled_rates(), spec.coefs},
        schedule_(spec.epsilon),
        point_(std::move(point)),
        seed_(seed),
        streams_(RunStreams::from_seed(
            derive_seed(run_seed(point_, seed), {5, static_cast<std::uint64_t>(global_step)}))),
        agents_(std::move(agents)),
        global_step_(global_step),
        episodes_done_(episodes_done) {
    if (static_cast<int>(agents_.size()) != point_.layout.task_count)
      throw ConfigError("checkpoint holds " + std::to_string(agents_.size()) +
                        " agents for a " + std::to_string(point_.layout.task_count) +
                        "-task layout");
  }

  EpisodeRecord next_episode() {
    const auto tasks = point_.layout.sample(env_.config, streams_.tasks);
    EpisodeRecord rec = run_episode(env_, tasks, agents_, schedule_, global_step_,
                                    streams_.explore, streams_.replay);
    rec.episode_index = episodes_done_++;
    return rec;
  }

  bool schedule_finished() const { return global_step_ >= schedule_.steps_to_floor(); }

  const Environment& environment() const { return env_; }
  const SweepPoint& point() const { return point_; }
  std::uint64_t seed() const { return seed_; }
  std::int64_t global_step() const { return global_step_; }
  int episodes_done() const { return episodes_done_; }
  const dqn::EpsilonSchedule& schedule() const { return schedule_; }
  std::vector<dqn::Agent>& agents() { return agents_; }
  const std::vector<dqn::Agent>& agents() const { return agents_; }

 private:
  Environment env_;
  dqn::EpsilonSchedule schedule_;
  SweepPoint point_;
  std::uint64_t seed_;
  RunStreams streams_;
  std::vector<dqn::Agent> agents_;
  std::int64_t global_step_ = 0;
  int episodes_done_ = 0;
};

struct RunResult {
  SweepPoint point;
  std::uint64_t seed = 0;
  std::vector<EpisodeRecord> records;
  MetricsSeries series;
  std::int64_t global_step = 0;
  std::vector<dqn::Agent> agents;
};

// Trains until `episodes` more episodes ran, or (episodes == 0) until the
// epsilon schedule reaches its floor.
inline void train(TrainingRun& run, int episodes, std::vector<EpisodeRecord>& records,
                  const std::function<void(const EpisodeRecord&)>& on_episode = {}) {
  int played = 0;
  while (episodes > 0 ? played < episodes : !run.schedule_finished()) {
    records.push_back(run.next_episode());
    ++played;
    if (on_episode) on_episode(records.back());
  }
}

struct RunOptions {
  int jobs = 1;
  // Receives (point label, seed, record) after every episode; may be called
  // from worker threads, serialized by an internal mutex.
  std::function<void(const std::string&, std::uint64_t, const EpisodeRecord&)> on_episode;
  // Receives each finished run before its replay memories are released;
  // called from worker threads without locking.
  std::function<void(const TrainingRun&)> on_run_finished;
};

// Runs every (sweep point, seed) pair. Each pair is independent and owns its
// random streams, so results do not depend on `jobs`.
inline std::vector<RunResult> run_experiment(const ExperimentSpec& spec,
                                             const RunOptions& options = {}) {
  validate(spec);
  const auto points = sweep_points(spec);
  std::vector<RunResult> results;
  for (const auto& p : points)
    for (auto seed : spec.seeds) results.push_back({p, seed, {}, {}, 0, {}});

  std::mutex report_mutex;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < results.size();) {
      RunResult& r = results[i];
      try {
        TrainingRun run(spec, r.point, r.seed);
        train(run, spec.episodes, r.records, [&](const EpisodeRecord& rec) {
          if (!options.on_episode) return;
          std::lock_guard lock(report_mutex);
          options.on_episode(r.point.label, r.seed, rec);
        });
        if (options.on_run_finished) options.on_run_finished(run);
        r.series = compute_series(r.records, spec.window, spec.report_stride);
        r.global_step = run.global_step();
        r.agents = std::move(run.agents());
        for (auto& a : r.agents) a.release_memory();
      } catch (...) {
        std::lock_guard lock(report_mutex);
        if (!failure) failure = std::current_exception();
        next = results.size();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(results.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace dronenet::experiments
