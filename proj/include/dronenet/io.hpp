#pragma once

// On-disk formats of a run directory.
//
// episodes.csv (schema 1), one row per episode:
//   sweep_point,seed,episode_index,success,accumulated_reward,steps_used,
//   epsilon_at_start,epsilon_at_end,final_batteries
// final_batteries is ';'-separated. Reals use %.17g so they round-trip.
//
// metrics.csv (schema 1), one row per (sweep_point, seed, window end):
//   sweep_point,seed,window_end_episode,epsilon,success_rate,
//   avg_success_reward,episodes
// avg_success_reward is empty when the window holds no successful episode;
// episodes is the number of episodes inside the window.
//
// summary.json (schema 1): trailing-window metrics per sweep point and seed.
//
// Checkpoint directory: drone-<k>.policy.bin / drone-<k>.target.bin in the
// network parameter format, plus agent.json with the run config, seed,
// sweep point, global step, episode count and per-drone learn steps.

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dronenet/config.hpp"
#include "dronenet/dqn.hpp"
#include "dronenet/error.hpp"
#include "dronenet/experiments.hpp"
#include "dronenet/nn.hpp"

namespace dronenet::io {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

class IoError : public Error {
 public:
  using Error::Error;
};

inline std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_real(const std::string& s) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || (errno == ERANGE && std::isinf(v)))
    throw FormatError("bad number '" + s + "'");
  return v;
}

inline std::ofstream open_out(const fs::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

inline constexpr const char* kEpisodesHeader =
    "sweep_point,seed,episode_index,success,accumulated_reward,steps_used,epsilon_at_start,"
    "epsilon_at_end,final_batteries";
inline constexpr const char* kMetricsHeader =
    "sweep_point,seed,window_end_episode,epsilon,success_rate,avg_success_reward,episodes";

inline std::string episode_row(const std::string& point, std::uint64_t seed,
                               const experiments::EpisodeRecord& r) {
  std::string batteries;
  for (std::size_t i = 0; i < r.final_batteries.size(); ++i) {
    if (i) batteries += ';';
    batteries += format_real(r.final_batteries[i]);
  }
  return point + ',' + std::to_string(seed) + ',' + std::to_string(r.episode_index) + ',' +
         (r.success ? "1" : "0") + ',' + format_real(r.accumulated_reward) + ',' +
         std::to_string(r.steps_used) + ',' + format_real(r.epsilon_at_start) + ',' +
         format_real(r.epsilon_at_end) + ',' + batteries;
}

// Records of one run, keyed for grouping.
struct RunKey {
  std::string point;
  std::uint64_t seed = 0;
  friend auto operator<=>(const RunKey&, const RunKey&) = default;
};

inline void write_episodes_csv(const fs::path& path,
                               const std::vector<experiments::RunResult>& runs) {
  std::string text = std::string(kEpisodesHeader) + '\n';
  for (const auto& run : runs)
    for (const auto& r : run.records) text += episode_row(run.point.label, run.seed, r) + '\n';
  write_text(path, text);
}

inline std::map<RunKey, std::vector<experiments::EpisodeRecord>> read_episodes_csv(
    const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || split(line, ',') != split(kEpisodesHeader, ','))
    throw FormatError(path.string() + ": not an episodes file");
  std::map<RunKey, std::vector<experiments::EpisodeRecord>> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 9)
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 9 fields");
    try {
      experiments::EpisodeRecord r;
      r.episode_index = std::stoi(f[2]);
      r.success = f[3] == "1";
      r.accumulated_reward = parse_real(f[4]);
      r.steps_used = std::stoi(f[5]);
      r.epsilon_at_start = parse_real(f[6]);
      r.epsilon_at_end = parse_real(f[7]);
      if (!f[8].empty())
        for (const auto& b : split(f[8], ';')) r.final_batteries.push_back(parse_real(b));
      out[{f[0], std::stoull(f[1])}].push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad field");
    }
  }
  return out;
}

inline std::string metrics_rows(const std::string& point, std::uint64_t seed,
                                const experiments::MetricsSeries& m) {
  std::string text;
  for (std::size_t i = 0; i < m.window_end_episode.size(); ++i) {
    const auto& avg = m.avg_success_reward_series[i];
    text += point + ',' + std::to_string(seed) + ',' + std::to_string(m.window_end_episode[i]) +
            ',' + format_real(m.epsilon[i]) + ',' + format_real(m.success_rate_series[i]) + ',' +
            (avg ? format_real(*avg) : std::string()) + ',' +
            std::to_string(m.episodes_in_window[i]) + '\n';
  }
  return text;
}

inline void write_metrics_csv(const fs::path& path,
                              const std::vector<experiments::RunResult>& runs) {
  std::string text = std::string(kMetricsHeader) + '\n';
  for (const auto& run : runs) text += metrics_rows(run.point.label, run.seed, run.series);
  write_text(path, text);
}

// Trailing-window metrics of one run.
struct TrailingMetrics {
  double success_rate = 0.0;
  std::optional<double> avg_success_reward;
  double epsilon = 0.0;
  int episodes = 0;
};

inline TrailingMetrics trailing(const std::vector<experiments::EpisodeRecord>& records,
                                int window) {
  if (records.empty()) throw UsageError("no episodes recorded");
  const std::size_t n = std::min(records.size(), static_cast<std::size_t>(window));
  const std::span<const experiments::EpisodeRecord> w(records.data() + records.size() - n, n);
  return {experiments::success_rate(w), experiments::avg_success_reward(w),
          records.back().epsilon_at_end, static_cast<int>(records.size())};
}

inline nlohmann::json summary_json(const std::vector<experiments::RunResult>& runs, int window) {
  using nlohmann::json;
  json points = json::object();
  for (const auto& run : runs) {
    const auto t = trailing(run.records, window);
    json entry = {{"seed", run.seed},
                  {"episodes", t.episodes},
                  {"global_steps", run.global_step},
                  {"final_epsilon", t.epsilon},
                  {"success_rate", t.success_rate},
                  {"avg_success_reward",
                   t.avg_success_reward ? json(*t.avg_success_reward) : json(nullptr)}};
    points[run.point.label].push_back(entry);
  }
  return {{"schema", "dronenet-summary"}, {"schema_version", kSchemaVersion},
          {"window", window}, {"sweep_points", points}};
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + '\n');
}

inline void save_binary(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  auto out = open_out(path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<std::uint8_t> load_binary(const fs::path& path) {
  const std::string s = read_text(path);
  return {s.begin(), s.end()};
}

inline nlohmann::json agent_config_json(const dqn::AgentConfig& a) {
  return {{"batch_size", a.batch_size},       {"warmup_multiplier", a.warmup_multiplier},
          {"sync_period", a.sync_period},     {"discount", a.discount},
          {"hidden1", a.hidden1},             {"hidden2", a.hidden2},
          {"learning_rate", a.learning_rate}, {"replay_capacity", a.replay_capacity}};
}

struct Checkpoint {
  RunConfig config;
  experiments::SweepPoint point;
  std::uint64_t seed = 0;
  std::int64_t global_step = 0;
  int episodes_done = 0;
  std::vector<dqn::Agent> agents;
};

inline void save_checkpoint(const fs::path& dir, const RunConfig& config,
                            const experiments::TrainingRun& run) {
  using nlohmann::json;
  json learn_steps = json::array();
  for (std::size_t d = 0; d < run.agents().size(); ++d) {
    const auto& a = run.agents()[d];
    save_binary(dir / ("drone-" + std::to_string(d) + ".policy.bin"),
                nn::save_parameters(a.policy()));
    save_binary(dir / ("drone-" + std::to_string(d) + ".target.bin"),
                nn::save_parameters(a.target()));
    learn_steps.push_back(a.learn_steps());
  }
  // The sweep point's own agent/layout settings are stored as a single-run
  // config so the checkpoint is self-describing.
  RunConfig point_config = config;
  point_config.spec.kind = experiments::Kind::Single;
  point_config.spec.agent = run.point().agent;
  point_config.spec.layout = run.point().layout;
  json sidecar = {{"schema", "dronenet-checkpoint"},
                  {"schema_version", kSchemaVersion},
                  {"sweep_point", run.point().label},
                  {"seed", run.seed()},
                  {"drones", run.agents().size()},
                  {"global_step", run.global_step()},
                  {"epsilon", run.schedule().at(run.global_step())},
                  {"episodes_done", run.episodes_done()},
                  {"learn_steps", learn_steps},
                  {"agent", agent_config_json(run.point().agent)},
                  {"config", to_json(point_config)}};
  write_json(dir / "agent.json", sidecar);
}

inline Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path sidecar_path = dir / "agent.json";
  if (!fs::exists(sidecar_path)) throw IoError("no checkpoint at " + dir.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(sidecar_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(sidecar_path.string() + ": " + e.what());
  }
  if (j.value("schema", "") != "dronenet-checkpoint" ||
      j.value("schema_version", 0) != kSchemaVersion)
    throw FormatError(sidecar_path.string() + ": unsupported checkpoint schema");
  Checkpoint c;
  try {
    c.config = config_from_json(j.at("config"));
    c.point = {j.at("sweep_point").get<std::string>(), c.config.spec.agent,
               c.config.spec.layout};
    c.seed = j.at("seed").get<std::uint64_t>();
    c.global_step = j.at("global_step").get<std::int64_t>();
    c.episodes_done = j.at("episodes_done").get<int>();
    const auto drones = j.at("drones").get<std::size_t>();
    const auto steps = j.at("learn_steps").get<std::vector<std::int64_t>>();
    if (steps.size() != drones) throw FormatError("learn_steps length mismatch");
    for (std::size_t d = 0; d < drones; ++d) {
      const auto stem = "drone-" + std::to_string(d);
      auto policy = nn::load_parameters(load_binary(dir / (stem + ".policy.bin")));
      auto target = nn::load_parameters(load_binary(dir / (stem + ".target.bin")));
      c.agents.emplace_back(c.point.agent, std::move(policy), std::move(target), steps[d]);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(sidecar_path.string() + ": " + e.what());
  }
  return c;
}

}  // namespace dronenet::io
