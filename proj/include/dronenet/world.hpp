#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dronenet/energy.hpp"
#include "dronenet/error.hpp"

namespace dronenet {

// The ten-action set: eight unit moves, hover, execute. The enumerator value
// is the network output index.
enum class Action : std::uint8_t {
  MoveUp,
  MoveDown,
  MoveLeft,
  MoveRight,
  MoveUpLeft,
  MoveUpRight,
  MoveDownLeft,
  MoveDownRight,
  Hover,
  Execute,
};

inline constexpr int kActionCount = 10;

inline constexpr std::array<std::string_view, kActionCount> kActionNames = {
    "MoveUp",       "MoveDown",      "MoveLeft", "MoveRight", "MoveUpLeft",
    "MoveUpRight",  "MoveDownLeft",  "MoveDownRight", "Hover", "Execute"};

constexpr int index_of(Action a) { return static_cast<int>(a); }

inline Action action_from_index(int i) {
  if (i < 0 || i >= kActionCount) throw UsageError("action index out of range");
  return static_cast<Action>(i);
}

inline std::string_view to_string(Action a) { return kActionNames[index_of(a)]; }

inline Action action_from_string(std::string_view name) {
  for (int i = 0; i < kActionCount; ++i)
    if (kActionNames[i] == name) return static_cast<Action>(i);
  throw FormatError("unknown action '" + std::string(name) + "'");
}

constexpr bool is_move(Action a) { return index_of(a) < index_of(Action::Hover); }

constexpr bool is_diagonal(Action a) {
  return a == Action::MoveUpLeft || a == Action::MoveUpRight || a == Action::MoveDownLeft ||
         a == Action::MoveDownRight;
}

// Row/column displacement of a move; rows grow downward.
constexpr std::array<int, 2> move_delta(Action a) {
  switch (a) {
    case Action::MoveUp: return {-1, 0};
    case Action::MoveDown: return {1, 0};
    case Action::MoveLeft: return {0, -1};
    case Action::MoveRight: return {0, 1};
    case Action::MoveUpLeft: return {-1, -1};
    case Action::MoveUpRight: return {-1, 1};
    case Action::MoveDownLeft: return {1, -1};
    case Action::MoveDownRight: return {1, 1};
    default: return {0, 0};
  }
}

// Square grid of side_points x side_points trajectory points, indexed
// row-major. The base station sits at base_index.
struct GridConfig {
  int side_points = 5;
  double cell_side = 1.0;
  int base_index = 0;
  double battery_capacity = 1800.0;
  int episode_length = 600;

  int point_count() const { return side_points * side_points; }
  // Diagonal of one square: the farthest a drone travels in one time step.
  double d_max() const { return cell_side * std::numbers::sqrt2; }
  int row(int point) const { return point / side_points; }
  int col(int point) const { return point % side_points; }
  bool valid_point(int point) const { return point >= 0 && point < point_count(); }
  double distance(int a, int b) const {
    const double dr = row(a) - row(b);
    const double dc = col(a) - col(b);
    return cell_side * std::sqrt(dr * dr + dc * dc);
  }

  void validate() const {
    if (side_points < 1) throw ConfigError("grid side must be >= 1");
    if (!(cell_side > 0)) throw ConfigError("cell side must be > 0");
    if (!valid_point(base_index)) throw ConfigError("base index outside the grid");
    if (!(battery_capacity > 0)) throw ConfigError("battery capacity must be > 0");
    if (episode_length < 1) throw ConfigError("episode length must be >= 1");
  }
};

// Shared-reward coefficients: gamma scales the remaining-energy bonus on
// success, beta the per-stranded-drone penalty.
struct RewardCoefs {
  double gamma = 1.0;
  double beta = 1.0;
};

struct TaskSpec {
  int location = 0;
  int length = 1;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

// Full environment state. Per-task vectors share an index k, as do per-drone
// vectors; a mission has as many drones as tasks.
struct WorldState {
  std::vector<int> task_locations;
  std::vector<int> original_lengths;
  std::vector<int> drone_locations;
  std::vector<Action> last_actions;
  std::vector<int> remaining_lengths;
  std::vector<double> batteries;
  int clock = 0;
  bool terminal = false;

  int drone_count() const { return static_cast<int>(drone_locations.size()); }
  int task_count() const { return static_cast<int>(task_locations.size()); }

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct StepOutcome {
  WorldState next_state;
  double reward = 0.0;
  bool done = false;
  bool success = false;
};

struct MissionStatus {
  bool all_tasks_done = false;
  bool all_can_return = false;
};

inline void validate_tasks(const GridConfig& config, std::span<const TaskSpec> tasks) {
  std::vector<bool> used(static_cast<std::size_t>(config.point_count()), false);
  for (const auto& t : tasks) {
    if (!config.valid_point(t.location))
      throw ConfigError("task location " + std::to_string(t.location) + " outside the grid");
    if (t.location == config.base_index)
      throw ConfigError("task placed at the base station");
    if (used[t.location])
      throw ConfigError("two tasks at point " + std::to_string(t.location));
    if (t.length < 1) throw ConfigError("task length must be >= 1");
    used[t.location] = true;
  }
}

// Launch state: every drone at the base, fully charged, last action Hover.
inline WorldState reset(const GridConfig& config, std::span<const TaskSpec> tasks,
                        int drone_count) {
  config.validate();
  validate_tasks(config, tasks);
  if (drone_count != static_cast<int>(tasks.size()))
    throw ConfigError("drone count " + std::to_string(drone_count) + " must equal task count " +
                      std::to_string(tasks.size()));
  if (drone_count < 1) throw ConfigError("a mission needs at least one task");

  WorldState s;
  for (const auto& t : tasks) {
    s.task_locations.push_back(t.location);
    s.original_lengths.push_back(t.length);
    s.remaining_lengths.push_back(t.length);
  }
  s.drone_locations.assign(drone_count, config.base_index);
  s.last_actions.assign(drone_count, Action::Hover);
  s.batteries.assign(drone_count, config.battery_capacity);
  return s;
}

// Energy one action draws during one time step. A straight move covers
// cell_side of the d_max a step allows; the drone flies that fraction of
// the step and hovers for the rest.
inline double action_cost(Action action, bool at_base, const energy::PowerRates& rates,
                          double cell_side) {
  switch (action) {
    case Action::Execute: return rates.hover + rates.facilities;
    case Action::Hover: return at_base ? 0.0 : rates.hover;
    default: break;
  }
  if (is_diagonal(action)) return rates.forward;
  const double fraction = cell_side / (cell_side * std::numbers::sqrt2);
  return rates.forward * fraction + rates.hover * (1.0 - fraction);
}

// Energy to fly straight home from `location` at one d_max per time step.
inline double return_energy(int location, const GridConfig& config,
                            const energy::PowerRates& rates) {
  return config.distance(location, config.base_index) / config.d_max() * rates.forward;
}

inline MissionStatus mission_complete(const WorldState& s, const GridConfig& config,
                                      const energy::PowerRates& rates) {
  MissionStatus m;
  m.all_tasks_done = std::all_of(s.remaining_lengths.begin(), s.remaining_lengths.end(),
                                 [](int r) { return r == 0; });
  m.all_can_return = true;
  for (int k = 0; k < s.drone_count(); ++k)
    if (s.batteries[k] < return_energy(s.drone_locations[k], config, rates))
      m.all_can_return = false;
  return m;
}

// Task units completed between two consecutive states.
inline double execution_progress(const WorldState& prev, const WorldState& next) {
  if (prev.remaining_lengths.size() != next.remaining_lengths.size())
    throw UsageError("states have different task counts");
  int total = 0;
  for (std::size_t i = 0; i < prev.remaining_lengths.size(); ++i)
    total += prev.remaining_lengths[i] - next.remaining_lengths[i];
  return total;
}

// Shared reward for the transition prev -> next.
inline double reward(const WorldState& prev, const WorldState& next, const GridConfig& config,
                     const energy::PowerRates& rates, const RewardCoefs& coefs) {
  const double progress = execution_progress(prev, next);
  const MissionStatus m = mission_complete(next, config, rates);
  if (!m.all_tasks_done) return progress;

  const int k = next.drone_count();
  if (m.all_can_return) {
    double total = 0.0;
    for (double b : next.batteries) total += b;
    return progress + coefs.gamma * total / (k * config.battery_capacity);
  }
  int stranded = 0;
  for (int d = 0; d < k; ++d)
    if (next.batteries[d] < return_energy(next.drone_locations[d], config, rates)) ++stranded;
  return progress - coefs.beta * stranded;
}

// Replaces moves that would leave the grid with Hover.
inline Action effective_action(Action a, int location, const GridConfig& config) {
  if (!is_move(a)) return a;
  const auto [dr, dc] = move_delta(a);
  const int r = config.row(location) + dr;
  const int c = config.col(location) + dc;
  if (r < 0 || r >= config.side_points || c < 0 || c >= config.side_points) return Action::Hover;
  return a;
}

inline int apply_move(Action a, int location, const GridConfig& config) {
  const auto [dr, dc] = move_delta(a);
  return (config.row(location) + dr) * config.side_points + config.col(location) + dc;
}

// Advances every drone simultaneously by one time step.
//
// Execute decrements the task at the drone's point by one unit; several
// drones on one task are credited in drone order until it reaches zero, and
// extra executors still pay. The episode ends as soon as every task is done
// (the return flight is judged from the remaining batteries) or when the
// clock reaches episode_length.
inline StepOutcome step(const WorldState& state, std::span<const Action> joint_actions,
                        const GridConfig& config, const energy::PowerRates& rates,
                        const RewardCoefs& coefs) {
  if (state.terminal) throw UsageError("step called on a terminal state");
  const int k = state.drone_count();
  if (static_cast<int>(joint_actions.size()) != k)
    throw UsageError("expected " + std::to_string(k) + " actions, got " +
                     std::to_string(joint_actions.size()));

  StepOutcome out;
  WorldState& next = out.next_state;
  next = state;
  for (int d = 0; d < k; ++d) {
    const int loc = state.drone_locations[d];
    const Action a = effective_action(joint_actions[d], loc, config);
    next.batteries[d] -= action_cost(a, loc == config.base_index, rates, config.cell_side);
    if (is_move(a)) {
      next.drone_locations[d] = apply_move(a, loc, config);
    } else if (a == Action::Execute) {
      for (int t = 0; t < next.task_count(); ++t) {
        if (next.task_locations[t] == loc) {
          if (next.remaining_lengths[t] > 0) --next.remaining_lengths[t];
          break;
        }
      }
    }
    next.last_actions[d] = a;
  }
  ++next.clock;

  const MissionStatus m = mission_complete(next, config, rates);
  out.reward = reward(state, next, config, rates, coefs);
  out.done = m.all_tasks_done || next.clock >= config.episode_length;
  out.success = m.all_tasks_done && m.all_can_return;
  next.terminal = out.done;
  return out;
}

inline int observation_size(int drone_count) { return 16 * drone_count; }

// Flattens a state into the network input. Layout, K = drone count:
//   [0, 2K)    task (x, y) scaled to [0, 1]
//   [2K, 4K)   drone (x, y) scaled to [0, 1]
//   [4K, 14K)  one-hot last action per drone, 10 wide
//   [14K, 15K) remaining / original task length
//   [15K, 16K) battery / capacity
inline void encode_observation(const WorldState& s, const GridConfig& config,
                               std::span<double> out) {
  const int k = s.drone_count();
  if (static_cast<int>(out.size()) != observation_size(k))
    throw UsageError("observation buffer has the wrong size");
  const double scale = 1.0 / std::max(config.side_points - 1, 1);
  std::fill(out.begin(), out.end(), 0.0);
  for (int i = 0; i < k; ++i) {
    out[2 * i] = config.col(s.task_locations[i]) * scale;
    out[2 * i + 1] = config.row(s.task_locations[i]) * scale;
    out[2 * k + 2 * i] = config.col(s.drone_locations[i]) * scale;
    out[2 * k + 2 * i + 1] = config.row(s.drone_locations[i]) * scale;
    out[4 * k + kActionCount * i + index_of(s.last_actions[i])] = 1.0;
    out[14 * k + i] = s.original_lengths[i] > 0
                          ? static_cast<double>(s.remaining_lengths[i]) / s.original_lengths[i]
                          : 0.0;
    out[15 * k + i] = s.batteries[i] / config.battery_capacity;
  }
}

inline std::vector<double> encode_observation(const WorldState& s, const GridConfig& config) {
  std::vector<double> v(static_cast<std::size_t>(observation_size(s.drone_count())));
  encode_observation(s, config, v);
  return v;
}

// Convenience bundle of the static parameters of one environment.
struct Environment {
  GridConfig config;
  energy::PowerRates rates = energy::scaled_rates();
  RewardCoefs coefs;

  WorldState reset(std::span<const TaskSpec> tasks) const {
    return dronenet::reset(config, tasks, static_cast<int>(tasks.size()));
  }
  StepOutcome step(const WorldState& s, std::span<const Action> actions) const {
    return dronenet::step(s, actions, config, rates, coefs);
  }
};

}  // namespace dronenet
