#include <gtest/gtest.h>

#include <set>
#include <vector>

#include "dronenet/experiments.hpp"
#include "dronenet/oracle.hpp"

namespace {

using namespace dronenet;
using namespace dronenet::experiments;

EpisodeRecord rec(bool success, double reward) {
  EpisodeRecord r;
  r.success = success;
  r.accumulated_reward = reward;
  return r;
}

// Tiny networks and a short schedule keep learning runs fast.
ExperimentSpec tiny_spec() {
  ExperimentSpec s;
  s.agent.hidden1 = 8;
  s.agent.hidden2 = 8;
  s.agent.batch_size = 4;
  s.agent.warmup_multiplier = 2;
  s.agent.replay_capacity = 500;
  s.grid.episode_length = 40;
  s.episodes = 3;
  s.window = 2;
  s.seeds = {1, 2};
  return s;
}

TEST(Metrics, SuccessRate) {
  const std::vector<EpisodeRecord> mixed = {rec(true, 1), rec(false, 0), rec(true, 1),
                                            rec(true, 1)};
  EXPECT_DOUBLE_EQ(success_rate(mixed), 0.75);
  const std::vector<EpisodeRecord> fails = {rec(false, 1), rec(false, 2)};
  EXPECT_EQ(success_rate(fails), 0.0);
  const std::vector<EpisodeRecord> wins = {rec(true, 1), rec(true, 2)};
  EXPECT_EQ(success_rate(wins), 1.0);
  EXPECT_THROW(success_rate(std::span<const EpisodeRecord>()), UsageError);
}

TEST(Metrics, AverageSuccessReward) {
  const std::vector<EpisodeRecord> mixed = {rec(true, 10), rec(false, 99), rec(true, 20),
                                            rec(false, -4)};
  EXPECT_EQ(avg_success_reward(mixed), 15.0);
  const std::vector<EpisodeRecord> fails = {rec(false, 3)};
  EXPECT_FALSE(avg_success_reward(fails).has_value());
  const std::vector<EpisodeRecord> one = {rec(true, 7.5)};
  EXPECT_EQ(avg_success_reward(one), 7.5);
}

TEST(Metrics, SlidingWindowSeries) {
  std::vector<EpisodeRecord> rs;
  for (int i = 0; i < 7; ++i) {
    rs.push_back(rec(i % 2 == 0, i));
    rs.back().epsilon_at_end = 0.5 - 0.01 * i;
  }
  const auto m = compute_series(rs, 3, 2);
  EXPECT_EQ(m.window_end_episode, (std::vector<int>{2, 4, 6, 7}));
  EXPECT_EQ(m.episodes_in_window, (std::vector<int>{2, 3, 3, 3}));
  EXPECT_DOUBLE_EQ(m.success_rate_series[0], 0.5);
  EXPECT_DOUBLE_EQ(m.success_rate_series[3], 2.0 / 3);
  EXPECT_EQ(m.avg_success_reward_series[3], 5.0);  // episodes 4 and 6
  EXPECT_DOUBLE_EQ(m.epsilon[3], 0.44);
  EXPECT_EQ(compute_series(rs, 3, 2), m);
}

TEST(Layout, UniformSamplingRespectsRanges) {
  GridConfig g;
  TaskLayout layout;
  layout.task_count = 10;
  layout.location_mode = LocationMode::Uniform;
  layout.length_mode = LengthMode::Uniform;
  layout.validate(g);
  Rng rng(3);
  std::set<int> lengths;
  for (int i = 0; i < 200; ++i) {
    const auto tasks = layout.sample(g, rng);
    ASSERT_EQ(tasks.size(), 10u);
    EXPECT_NO_THROW(validate_tasks(g, tasks));
    for (const auto& t : tasks) lengths.insert(t.length);
  }
  EXPECT_EQ(lengths, (std::set<int>{1, 2, 3, 4, 5}));
}

TEST(Layout, FixedLayoutIsReturnedVerbatim) {
  GridConfig g;
  TaskLayout layout;
  Rng rng(1);
  const auto tasks = layout.sample(g, rng);
  ASSERT_EQ(tasks.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(tasks[i].location, kDefaultFixedLocations[i]);
    EXPECT_EQ(tasks[i].length, 5);
  }
}

TEST(Layout, RejectsImpossibleLayouts) {
  GridConfig g;
  TaskLayout layout;
  layout.task_count = 3;  // four fixed locations listed
  EXPECT_THROW(layout.validate(g), ConfigError);
  layout = {};
  layout.location_mode = LocationMode::Uniform;
  layout.task_count = 25;
  EXPECT_THROW(layout.validate(g), ConfigError);
  layout = {};
  layout.fixed_locations = {0, 1, 2, 3};
  EXPECT_THROW(layout.validate(g), ConfigError);
}

TEST(Sweep, PointsPerKind) {
  ExperimentSpec s;
  s.kind = Kind::ThresholdSweep;
  auto pts = sweep_points(s);
  ASSERT_EQ(pts.size(), 4u);
  EXPECT_EQ(pts[2].agent.warmup_multiplier, 5);
  EXPECT_EQ(pts[3].label, "psi10");

  s.kind = Kind::Density;
  pts = sweep_points(s);
  ASSERT_EQ(pts.size(), 9u);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(pts[i].layout.task_count, static_cast<int>(i) + 2);
    EXPECT_EQ(pts[i].layout.location_mode, LocationMode::Uniform);
  }

  s.kind = Kind::Geometry;
  s.variants = {{LocationMode::Fixed, LengthMode::Uniform}};
  pts = sweep_points(s);
  ASSERT_EQ(pts.size(), 1u);
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto tasks = pts[0].layout.sample(s.grid, rng);
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      EXPECT_EQ(tasks[k].location, kDefaultFixedLocations[k]);
      EXPECT_GE(tasks[k].length, 1);
      EXPECT_LE(tasks[k].length, 5);
    }
  }
}

TEST(Sweep, PointsUseDistinctStreams) {
  ExperimentSpec s;
  s.kind = Kind::ThresholdSweep;
  std::set<std::uint64_t> seeds;
  for (const auto& p : sweep_points(s))
    for (std::uint64_t seed : {1, 2, 3}) seeds.insert(run_seed(p, seed));
  EXPECT_EQ(seeds.size(), 12u);
}

TEST(Episode, UntrainedAgentsTerminateWithinTheStepLimit) {
  Environment env;
  const std::vector<TaskSpec> tasks = {{1, 1}, {5, 1}};
  dqn::AgentConfig cfg;
  cfg.hidden1 = cfg.hidden2 = 16;
  std::vector<dqn::Agent> agents;
  for (int d = 0; d < 2; ++d) agents.emplace_back(cfg, observation_size(2), 10 + d);
  const dqn::EpsilonSchedule pure{1.0, 0.0, 1.0};
  std::int64_t global_step = 0;
  Rng explore(1), replay(2);
  const auto r = run_episode(env, tasks, agents, pure, global_step, explore, replay);
  EXPECT_LE(r.steps_used, 600);
  EXPECT_EQ(global_step, r.steps_used);
  EXPECT_EQ(agents[0].memory().size(), static_cast<std::size_t>(r.steps_used));
  EXPECT_EQ(r.final_batteries.size(), 2u);
}

TEST(Episode, DeterministicGivenSeeds) {
  const ExperimentSpec s = tiny_spec();
  const auto point = sweep_points(s)[0];
  auto play = [&] {
    TrainingRun run(s, point, 7);
    std::vector<EpisodeRecord> out;
    for (int i = 0; i < 4; ++i) out.push_back(run.next_episode());
    return out;
  };
  EXPECT_EQ(play(), play());
}

TEST(Episode, ScriptedOracleSequenceEarnsTheOptimum) {
  Environment env;
  env.config.side_points = 3;
  const std::vector<std::vector<TaskSpec>> instances = {{{4, 1}}, {{4, 1}, {8, 1}},
                                                        {{1, 1}, {3, 1}}};
  for (const auto& tasks : instances) {
    const int k = static_cast<int>(tasks.size());
    const auto best = oracle::solve_exhaustive(env.config, tasks, k, 3, env.coefs);
    auto script = [&](const WorldState& s, std::span<const double>, std::span<Action> out) {
      for (int d = 0; d < k; ++d) out[d] = best.best_action_sequences[d].at(s.clock);
    };
    const auto r = rollout(env, tasks, script);
    EXPECT_TRUE(r.success);
    EXPECT_EQ(r.accumulated_reward, best.best_accumulated_reward);
  }
}

TEST(Experiment, RunsEveryPointAndSeedIndependentOfJobs) {
  ExperimentSpec s = tiny_spec();
  s.kind = Kind::Density;
  s.task_counts = {2, 3};
  const auto serial = run_experiment(s, {.jobs = 1});
  const auto parallel = run_experiment(s, {.jobs = 3});
  ASSERT_EQ(serial.size(), 4u);
  ASSERT_EQ(parallel.size(), 4u);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].records, parallel[i].records);
    EXPECT_EQ(serial[i].records.size(), 3u);
    EXPECT_EQ(serial[i].agents.size(), static_cast<std::size_t>(serial[i].point.layout.task_count));
    for (const auto& r : serial[i].records)
      EXPECT_EQ(r.final_batteries.size(), serial[i].agents.size());
    EXPECT_EQ(serial[i].series, compute_series(serial[i].records, s.window, s.report_stride));
  }
}

TEST(Experiment, AutoLengthStopsAtTheEpsilonFloor) {
  ExperimentSpec s = tiny_spec();
  s.episodes = 0;
  s.epsilon = {0.5, 0.01, 0.2};
  s.seeds = {1};
  const auto r = run_experiment(s);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_GE(r[0].global_step, s.epsilon.steps_to_floor());
  EXPECT_EQ(r[0].records.back().epsilon_at_end, 0.2);
  EXPECT_GT(r[0].records.back().epsilon_at_start, 0.2 - 1e-12);
}

TEST(Experiment, ResumedRunContinuesTheSchedule) {
  ExperimentSpec s = tiny_spec();
  const auto point = sweep_points(s)[0];
  TrainingRun run(s, point, 1);
  std::vector<EpisodeRecord> first;
  train(run, 2, first);
  TrainingRun resumed(s, point, 1, run.agents(), run.global_step(), run.episodes_done());
  const auto next = resumed.next_episode();
  EXPECT_EQ(next.episode_index, 2);
  EXPECT_EQ(next.epsilon_at_start, s.epsilon.at(run.global_step()));
}

TEST(Experiment, InvalidSpecIsRejected) {
  ExperimentSpec s = tiny_spec();
  s.window = 0;
  EXPECT_THROW(run_experiment(s), ConfigError);
  s = tiny_spec();
  s.seeds.clear();
  EXPECT_THROW(run_experiment(s), ConfigError);
}

}  // namespace
