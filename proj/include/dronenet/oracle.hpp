#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dronenet/error.hpp"
#include "dronenet/world.hpp"

namespace dronenet::oracle {

struct OracleResult {
  double best_accumulated_reward = 0.0;
  // best_action_sequences[k] is drone k's action list, one per time step.
  std::vector<std::vector<Action>> best_action_sequences;
  std::int64_t explored_nodes = 0;
};

// Called for every transition the search evaluates.
using TransitionObserver =
    std::function<void(const WorldState& prev, std::span<const Action> actions,
                       const StepOutcome& outcome)>;

struct SearchOptions {
  double node_budget = 1e8;
  bool prune = true;
  TransitionObserver observer;
};

// Upper bound on step() calls without pruning: sum over depths of 10^(K d).
inline double estimate_nodes(int drone_count, int horizon) {
  double total = 0.0;
  for (int d = 1; d <= horizon; ++d) total += std::pow(10.0, drone_count * d);
  return total;
}

namespace detail {

struct KeyHash {
  std::size_t operator()(const std::vector<std::uint64_t>& v) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto x : v) h = (h ^ x) * 0x100000001b3ULL ^ (x >> 29);
    return static_cast<std::size_t>(h);
  }
};

struct Entry {
  double value = 0.0;
  std::int64_t joint = -1;  // -1: leaf
};

class Search {
 public:
  Search(const GridConfig& config, const energy::PowerRates& rates, const RewardCoefs& coefs,
         int horizon, const SearchOptions& options)
      : config_(config), rates_(rates), coefs_(coefs), horizon_(horizon), options_(options) {}

  // Best achievable sum of rewards from `s` until the horizon or episode end.
  Entry solve(const WorldState& s) {
    if (s.terminal || s.clock >= horizon_) return {};
    std::vector<std::uint64_t> key;
    if (options_.prune) {
      key = make_key(s);
      if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    }

    const int k = s.drone_count();
    const std::int64_t joint_count = ipow10(k);
    std::vector<Action> actions(static_cast<std::size_t>(k));
    Entry best;
    for (std::int64_t j = 0; j < joint_count; ++j) {
      decode(j, actions);
      const StepOutcome out = step(s, actions, config_, rates_, coefs_);
      ++explored_;
      if (options_.observer) options_.observer(s, actions, out);
      const double v = out.reward + solve(out.next_state).value;
      if (best.joint < 0 || v > best.value) best = {v, j};
    }
    if (options_.prune) memo_.emplace(std::move(key), best);
    return best;
  }

  static void decode(std::int64_t joint, std::vector<Action>& actions) {
    for (auto& a : actions) {
      a = static_cast<Action>(joint % kActionCount);
      joint /= kActionCount;
    }
  }

  std::int64_t explored() const { return explored_; }

 private:
  static std::int64_t ipow10(int e) {
    std::int64_t r = 1;
    for (int i = 0; i < e; ++i) r *= kActionCount;
    return r;
  }

  // Future rewards depend on positions, batteries, remaining work and the
  // clock, not on the previous actions, so last_actions is left out of the
  // key. States differing only there share one subtree value.
  static std::vector<std::uint64_t> make_key(const WorldState& s) {
    std::vector<std::uint64_t> key;
    key.reserve(1 + 3 * s.drone_locations.size());
    key.push_back(static_cast<std::uint64_t>(s.clock));
    for (int l : s.drone_locations) key.push_back(static_cast<std::uint64_t>(l));
    for (int r : s.remaining_lengths) key.push_back(static_cast<std::uint64_t>(r));
    for (double b : s.batteries) key.push_back(std::bit_cast<std::uint64_t>(b));
    return key;
  }

  const GridConfig& config_;
  const energy::PowerRates& rates_;
  const RewardCoefs& coefs_;
  int horizon_;
  const SearchOptions& options_;
  std::int64_t explored_ = 0;
  std::unordered_map<std::vector<std::uint64_t>, Entry, KeyHash> memo_;
};

}  // namespace detail

// Exact maximum accumulated reward over every joint-action sequence of
// `horizon` steps (fewer if the episode ends first), found by depth-first
// enumeration with memoization on equivalent states.
//
// The reported reward is re-accumulated by replaying the optimal sequence
// from the start, so it matches a forward replay bit for bit.
inline OracleResult solve_exhaustive(const GridConfig& config, std::span<const TaskSpec> tasks,
                                     int drone_count, int horizon, const RewardCoefs& coefs,
                                     const energy::PowerRates& rates = energy::scaled_rates(),
                                     const SearchOptions& options = {}) {
  if (horizon < 0) throw UsageError("horizon must be >= 0");
  const WorldState root = reset(config, tasks, drone_count);
  const double estimate = estimate_nodes(drone_count, horizon);
  if (estimate > options.node_budget)
    throw BudgetError("search would explore up to " + std::to_string(estimate) +
                          " nodes, budget is " + std::to_string(options.node_budget),
                      estimate);

  detail::Search search(config, rates, coefs, horizon, options);
  search.solve(root);

  OracleResult result;
  result.best_action_sequences.assign(static_cast<std::size_t>(drone_count), {});
  // Walk the optimal path. Re-solving a memoized state is a table lookup.
  WorldState s = root;
  std::vector<Action> actions(static_cast<std::size_t>(drone_count));
  const SearchOptions quiet{options.node_budget, options.prune, {}};
  detail::Search replay(config, rates, coefs, horizon, quiet);
  while (true) {
    const detail::Entry e = options.prune ? search.solve(s) : replay.solve(s);
    if (e.joint < 0) break;
    detail::Search::decode(e.joint, actions);
    for (int k = 0; k < drone_count; ++k) result.best_action_sequences[k].push_back(actions[k]);
    const StepOutcome out = step(s, actions, config, rates, coefs);
    result.best_accumulated_reward += out.reward;
    s = out.next_state;
  }
  result.explored_nodes = search.explored();
  return result;
}

}  // namespace dronenet::oracle
