#pragma once

// RunConfig: the single JSON document that fully describes a run.
//
//   {
//     "grid":       {"side_points", "cell_side", "base_index",
//                    "battery_capacity", "episode_length"},
//     "reward":     {"gamma", "beta"},
//     "agent":      {"batch_size", "warmup_multiplier", "sync_period",
//                    "discount", "hidden1", "hidden2", "learning_rate",
//                    "replay_capacity"},
//     "epsilon":    {"start", "decrement_per_step", "floor"},
//     "tasks":      {"count", "location_mode", "length_mode", "fixed_length",
//                    "min_length", "max_length", "fixed_locations",
//                    "candidate_locations"},
//     "experiment": {"kind", "episodes", "window", "report_stride",
//                    "psi_values", "task_counts", "variants", "seeds"},
//     "output_dir": string
//   }
//
// Every key is optional; missing keys keep their defaults. Unknown keys are
// rejected so that typos do not silently fall back to defaults. A manifest
// written by a previous run is also accepted: its "config" member is used.

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "dronenet/error.hpp"
#include "dronenet/experiments.hpp"

namespace dronenet {

struct RunConfig {
  experiments::ExperimentSpec spec;
  std::string output_dir;
};

namespace config_detail {

using nlohmann::json;

inline void check_keys(const json& j, std::string_view where,
                       std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + std::string(where));
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace config_detail

inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  const auto& s = c.spec;
  json variants = json::array();
  for (const auto& v : s.variants)
    variants.push_back({{"location_mode", experiments::to_string(v.location_mode)},
                        {"length_mode", experiments::to_string(v.length_mode)}});
  return json{
      {"grid",
       {{"side_points", s.grid.side_points},
        {"cell_side", s.grid.cell_side},
        {"base_index", s.grid.base_index},
        {"battery_capacity", s.grid.battery_capacity},
        {"episode_length", s.grid.episode_length}}},
      {"reward", {{"gamma", s.coefs.gamma}, {"beta", s.coefs.beta}}},
      {"agent",
       {{"batch_size", s.agent.batch_size},
        {"warmup_multiplier", s.agent.warmup_multiplier},
        {"sync_period", s.agent.sync_period},
        {"discount", s.agent.discount},
        {"hidden1", s.agent.hidden1},
        {"hidden2", s.agent.hidden2},
        {"learning_rate", s.agent.learning_rate},
        {"replay_capacity", s.agent.replay_capacity}}},
      {"epsilon",
       {{"start", s.epsilon.start},
        {"decrement_per_step", s.epsilon.decrement_per_step},
        {"floor", s.epsilon.floor}}},
      {"tasks",
       {{"count", s.layout.task_count},
        {"location_mode", experiments::to_string(s.layout.location_mode)},
        {"length_mode", experiments::to_string(s.layout.length_mode)},
        {"fixed_length", s.layout.fixed_length},
        {"min_length", s.layout.min_length},
        {"max_length", s.layout.max_length},
        {"fixed_locations", s.layout.fixed_locations},
        {"candidate_locations", s.layout.candidate_locations}}},
      {"experiment",
       {{"kind", experiments::to_string(s.kind)},
        {"episodes", s.episodes},
        {"window", s.window},
        {"report_stride", s.report_stride},
        {"psi_values", s.psi_values},
        {"task_counts", s.task_counts},
        {"variants", variants},
        {"seeds", s.seeds}}},
      {"output_dir", c.output_dir}};
}

// Applies the keys present in `j` on top of `c`.
inline void merge_json(RunConfig& c, const nlohmann::json& doc) {
  using namespace config_detail;
  const json& j = doc.contains("config") && doc.contains("schema") ? doc.at("config") : doc;
  check_keys(j, "config", {"grid", "reward", "agent", "epsilon", "tasks", "experiment",
                           "output_dir"});
  auto& s = c.spec;
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    check_keys(g, "grid", {"side_points", "cell_side", "base_index", "battery_capacity",
                           "episode_length"});
    read(g, "side_points", s.grid.side_points);
    read(g, "cell_side", s.grid.cell_side);
    read(g, "base_index", s.grid.base_index);
    read(g, "battery_capacity", s.grid.battery_capacity);
    read(g, "episode_length", s.grid.episode_length);
  }
  if (j.contains("reward")) {
    const auto& r = j["reward"];
    check_keys(r, "reward", {"gamma", "beta"});
    read(r, "gamma", s.coefs.gamma);
    read(r, "beta", s.coefs.beta);
  }
  if (j.contains("agent")) {
    const auto& a = j["agent"];
    check_keys(a, "agent", {"batch_size", "warmup_multiplier", "sync_period", "discount",
                            "hidden1", "hidden2", "learning_rate", "replay_capacity"});
    read(a, "batch_size", s.agent.batch_size);
    read(a, "warmup_multiplier", s.agent.warmup_multiplier);
    read(a, "sync_period", s.agent.sync_period);
    read(a, "discount", s.agent.discount);
    read(a, "hidden1", s.agent.hidden1);
    read(a, "hidden2", s.agent.hidden2);
    read(a, "learning_rate", s.agent.learning_rate);
    read(a, "replay_capacity", s.agent.replay_capacity);
  }
  if (j.contains("epsilon")) {
    const auto& e = j["epsilon"];
    check_keys(e, "epsilon", {"start", "decrement_per_step", "floor"});
    read(e, "start", s.epsilon.start);
    read(e, "decrement_per_step", s.epsilon.decrement_per_step);
    read(e, "floor", s.epsilon.floor);
  }
  if (j.contains("tasks")) {
    const auto& t = j["tasks"];
    check_keys(t, "tasks", {"count", "location_mode", "length_mode", "fixed_length",
                            "min_length", "max_length", "fixed_locations",
                            "candidate_locations"});
    read(t, "count", s.layout.task_count);
    std::string mode;
    if (t.contains("location_mode")) {
      read(t, "location_mode", mode);
      s.layout.location_mode = experiments::location_mode_from_string(mode);
    }
    if (t.contains("length_mode")) {
      read(t, "length_mode", mode);
      s.layout.length_mode = experiments::length_mode_from_string(mode);
    }
    read(t, "fixed_length", s.layout.fixed_length);
    read(t, "min_length", s.layout.min_length);
    read(t, "max_length", s.layout.max_length);
    read(t, "fixed_locations", s.layout.fixed_locations);
    read(t, "candidate_locations", s.layout.candidate_locations);
  }
  if (j.contains("experiment")) {
    const auto& x = j["experiment"];
    check_keys(x, "experiment", {"kind", "episodes", "window", "report_stride", "psi_values",
                                 "task_counts", "variants", "seeds"});
    if (x.contains("kind")) {
      std::string kind;
      read(x, "kind", kind);
      s.kind = experiments::kind_from_string(kind);
    }
    read(x, "episodes", s.episodes);
    read(x, "window", s.window);
    read(x, "report_stride", s.report_stride);
    read(x, "psi_values", s.psi_values);
    read(x, "task_counts", s.task_counts);
    read(x, "seeds", s.seeds);
    if (x.contains("variants")) {
      s.variants.clear();
      for (const auto& v : x["variants"]) {
        check_keys(v, "variant", {"location_mode", "length_mode"});
        s.variants.push_back(
            {experiments::location_mode_from_string(v.value("location_mode", "fixed")),
             experiments::length_mode_from_string(v.value("length_mode", "fixed"))});
      }
    }
  }
  read(j, "output_dir", c.output_dir);
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  merge_json(c, j);
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace dronenet
