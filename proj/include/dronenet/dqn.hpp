#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dronenet/error.hpp"
#include "dronenet/nn.hpp"
#include "dronenet/rng.hpp"
#include "dronenet/world.hpp"

namespace dronenet::dqn {

struct Transition {
  std::vector<double> state_obs;
  Action action = Action::Hover;
  double reward = 0.0;
  std::vector<double> next_state_obs;
  bool terminal = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct Batch {
  nn::Matrix states;       // obs_dim x n
  nn::Matrix next_states;  // obs_dim x n
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<std::uint8_t> terminal;
};

// Fixed-capacity ring of transitions; once full, each store overwrites the
// oldest entry. Observations live in two flat arrays so a sampled batch is
// a set of column copies.
class ReplayMemory {
 public:
  ReplayMemory(std::size_t capacity, int obs_dim)
      : capacity_(capacity), obs_dim_(obs_dim) {
    if (capacity == 0) throw ConfigError("replay capacity must be positive");
    if (obs_dim < 1) throw ConfigError("observation size must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return count_; }
  int obs_dim() const { return obs_dim_; }

  void store(std::span<const double> state, Action action, double reward,
             std::span<const double> next_state, bool terminal) {
    if (static_cast<int>(state.size()) != obs_dim_ ||
        static_cast<int>(next_state.size()) != obs_dim_)
      throw UsageError("transition observation has the wrong size");
    if (head_ == actions_.size()) grow();
    const std::size_t off = head_ * static_cast<std::size_t>(obs_dim_);
    std::copy(state.begin(), state.end(), states_.begin() + off);
    std::copy(next_state.begin(), next_state.end(), next_states_.begin() + off);
    actions_[head_] = index_of(action);
    rewards_[head_] = reward;
    terminal_[head_] = terminal ? 1 : 0;
    head_ = (head_ + 1) % capacity_;
    count_ = std::min(count_ + 1, capacity_);
  }

  void store(const Transition& t) {
    store(t.state_obs, t.action, t.reward, t.next_state_obs, t.terminal);
  }

  // Drops every transition and frees the storage.
  void clear() {
    states_ = {};
    next_states_ = {};
    actions_ = {};
    rewards_ = {};
    terminal_ = {};
    head_ = count_ = 0;
  }

  // i-th stored transition, oldest first.
  Transition at(std::size_t i) const {
    if (i >= count_) throw UsageError("replay index out of range");
    return read(slot(i));
  }

  // Uniform sample of n transitions, drawn with replacement.
  Batch sample(std::size_t n, Rng& rng) const {
    if (count_ == 0) throw UsageError("cannot sample from an empty replay memory");
    Batch b;
    b.states.resize(obs_dim_, static_cast<Eigen::Index>(n));
    b.next_states.resize(obs_dim_, static_cast<Eigen::Index>(n));
    b.actions.resize(n);
    b.rewards.resize(n);
    b.terminal.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t s = slot(rng.below(count_));
      const std::size_t off = s * static_cast<std::size_t>(obs_dim_);
      std::copy_n(states_.begin() + off, obs_dim_, b.states.col(j).data());
      std::copy_n(next_states_.begin() + off, obs_dim_, b.next_states.col(j).data());
      b.actions[j] = actions_[s];
      b.rewards[j] = rewards_[s];
      b.terminal[j] = terminal_[s];
    }
    return b;
  }

 private:
  std::size_t slot(std::size_t i) const {
    return count_ < capacity_ ? i : (head_ + i) % capacity_;
  }

  // Storage grows geometrically until it reaches the capacity.
  void grow() {
    const std::size_t rows = std::min(capacity_, std::max<std::size_t>(1024, 2 * actions_.size()));
    states_.resize(rows * static_cast<std::size_t>(obs_dim_));
    next_states_.resize(states_.size());
    actions_.resize(rows);
    rewards_.resize(rows);
    terminal_.resize(rows);
  }

  Transition read(std::size_t s) const {
    const std::size_t off = s * static_cast<std::size_t>(obs_dim_);
    Transition t;
    t.state_obs.assign(states_.begin() + off, states_.begin() + off + obs_dim_);
    t.next_state_obs.assign(next_states_.begin() + off, next_states_.begin() + off + obs_dim_);
    t.action = action_from_index(actions_[s]);
    t.reward = rewards_[s];
    t.terminal = terminal_[s] != 0;
    return t;
  }

  std::size_t capacity_;
  int obs_dim_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
  std::vector<double> states_;
  std::vector<double> next_states_;
  std::vector<int> actions_;
  std::vector<double> rewards_;
  std::vector<std::uint8_t> terminal_;
};

// Linear decay from `start` by `decrement_per_step` per environment step,
// clamped at `floor`.
struct EpsilonSchedule {
  double start = 0.5;
  double decrement_per_step = 3e-6;
  double floor = 0.2;

  double at(std::int64_t global_step) const {
    if (global_step < 0) throw UsageError("global step must be >= 0");
    return std::max(floor, start - decrement_per_step * static_cast<double>(global_step));
  }

  // First global step at which the schedule sits on its floor.
  std::int64_t steps_to_floor() const {
    if (decrement_per_step <= 0.0 || start <= floor) return 0;
    auto n = static_cast<std::int64_t>(std::ceil((start - floor) / decrement_per_step));
    while (n > 0 && at(n - 1) <= floor) --n;
    while (at(n) > floor) ++n;
    return n;
  }

  void validate() const {
    if (!(start >= 0.0 && start <= 1.0)) throw ConfigError("epsilon start must lie in [0, 1]");
    if (!(floor >= 0.0 && floor <= start)) throw ConfigError("epsilon floor must lie in [0, start]");
    if (!(decrement_per_step >= 0.0)) throw ConfigError("epsilon decrement must be >= 0");
  }
};

inline double epsilon_at(const EpsilonSchedule& schedule, std::int64_t global_step) {
  return schedule.at(global_step);
}

struct AgentConfig {
  int batch_size = 32;
  int warmup_multiplier = 5;  // learning starts once stored > batch_size * this
  int sync_period = 200;      // learn steps between target-network syncs
  double discount = 0.95;
  int hidden1 = 128;
  int hidden2 = 128;
  double learning_rate = 1e-3;
  int replay_capacity = 50000;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (warmup_multiplier < 1) throw ConfigError("warmup multiplier must be positive");
    if (sync_period < 1) throw ConfigError("sync period must be positive");
    if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError("discount must lie in [0, 1)");
    if (hidden1 < 1 || hidden2 < 1) throw ConfigError("hidden sizes must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (replay_capacity < 1) throw ConfigError("replay capacity must be positive");
  }

  std::size_t warmup_threshold() const {
    return static_cast<std::size_t>(batch_size) * static_cast<std::size_t>(warmup_multiplier);
  }
};

// Index of the largest entry; ties go to the lowest index.
inline int argmax(const nn::Vector& q) {
  int best = 0;
  for (int i = 1; i < q.size(); ++i)
    if (q(i) > q(best)) best = i;
  return best;
}

// One drone's learner: its own replay memory, policy network and target
// network.
class Agent {
 public:
  Agent(const AgentConfig& config, int obs_dim, std::uint64_t init_seed)
      : config_(config),
        policy_(nn::Mlp::init({obs_dim, config.hidden1, config.hidden2, kActionCount},
                              init_seed)),
        target_(policy_),
        optimizer_(nn::AdamState::for_network(policy_, config.learning_rate)),
        memory_(static_cast<std::size_t>(config.replay_capacity), obs_dim) {
    config.validate();
  }

  // Restores an agent from saved networks; the replay memory starts empty.
  Agent(const AgentConfig& config, nn::Mlp policy, nn::Mlp target, std::int64_t learn_steps)
      : config_(config),
        policy_(std::move(policy)),
        target_(std::move(target)),
        optimizer_(nn::AdamState::for_network(policy_, config.learning_rate)),
        memory_(static_cast<std::size_t>(config.replay_capacity), policy_.input_size()),
        learn_steps_(learn_steps) {
    config.validate();
    if (policy_.dims() != target_.dims()) throw FormatError("policy/target dimensions differ");
    if (policy_.output_size() != kActionCount)
      throw FormatError("network output must have one entry per action");
  }

  const AgentConfig& config() const { return config_; }
  const nn::Mlp& policy() const { return policy_; }
  nn::Mlp& policy() { return policy_; }
  const nn::Mlp& target() const { return target_; }
  const ReplayMemory& memory() const { return memory_; }
  void release_memory() { memory_.clear(); }
  std::int64_t learn_steps() const { return learn_steps_; }
  int obs_dim() const { return policy_.input_size(); }

  Action greedy_action(std::span<const double> obs) const {
    return action_from_index(argmax(policy_.forward(obs)));
  }

  // Explores (uniform action) when a uniform draw is <= epsilon.
  Action select_action(std::span<const double> obs, double epsilon, Rng& rng) const {
    if (rng.uniform() <= epsilon)
      return action_from_index(static_cast<int>(rng.below(kActionCount)));
    return greedy_action(obs);
  }

  // y = r for terminal transitions, else r + discount * max_a Q_target(s', a).
  std::vector<double> bellman_targets(const Batch& b) const {
    const nn::Matrix next_q = target_.forward_batch(b.next_states);
    std::vector<double> y(b.rewards.size());
    for (std::size_t j = 0; j < y.size(); ++j) {
      y[j] = b.rewards[j];
      if (!b.terminal[j])
        y[j] += config_.discount * next_q.col(static_cast<Eigen::Index>(j)).maxCoeff();
    }
    return y;
  }

  void store(const Transition& t) { memory_.store(t); }
  void store(std::span<const double> state, Action action, double reward,
             std::span<const double> next_state, bool terminal) {
    memory_.store(state, action, reward, next_state, terminal);
  }

  // One minibatch update; nothing happens until the memory holds more than
  // batch_size * warmup_multiplier transitions. Returns the batch loss.
  std::optional<double> learn_step(Rng& rng) {
    if (memory_.size() <= config_.warmup_threshold()) return std::nullopt;
    if (learn_steps_ % config_.sync_period == 0) nn::copy_parameters(policy_, target_);
    ++learn_steps_;

    const Batch b = memory_.sample(static_cast<std::size_t>(config_.batch_size), rng);
    const std::vector<double> y = bellman_targets(b);
    auto g = nn::backward_selected(policy_, b.states, y, b.actions);
    nn::adam_step(policy_, optimizer_, g.gradients);
    return g.loss;
  }

 private:
  AgentConfig config_;
  nn::Mlp policy_;
  nn::Mlp target_;
  nn::AdamState optimizer_;
  ReplayMemory memory_;
  std::int64_t learn_steps_ = 0;
};

}  // namespace dronenet::dqn
