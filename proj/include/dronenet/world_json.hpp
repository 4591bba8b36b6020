#pragma once

// JSON shape of a WorldState, used for trajectory dumps and replays:
//   {"L_task": [int], "T": [int], "L_drone": [int], "A": [string],
//    "tau": [int], "B": [double], "t": int, "terminal": bool}
// L_task/T/tau are per task, L_drone/A/B per drone. "T" holds the original
// task lengths, "A" the action names of the previous step.

#include <nlohmann/json.hpp>

#include "dronenet/world.hpp"

namespace dronenet {

inline void to_json(nlohmann::json& j, const WorldState& s) {
  std::vector<std::string> actions;
  for (Action a : s.last_actions) actions.emplace_back(to_string(a));
  j = nlohmann::json{{"L_task", s.task_locations}, {"T", s.original_lengths},
                     {"L_drone", s.drone_locations}, {"A", actions},
                     {"tau", s.remaining_lengths},    {"B", s.batteries},
                     {"t", s.clock},                  {"terminal", s.terminal}};
}

inline void from_json(const nlohmann::json& j, WorldState& s) {
  try {
    s.task_locations = j.at("L_task").get<std::vector<int>>();
    s.original_lengths = j.at("T").get<std::vector<int>>();
    s.drone_locations = j.at("L_drone").get<std::vector<int>>();
    s.last_actions.clear();
    for (const auto& a : j.at("A")) s.last_actions.push_back(action_from_string(a.get<std::string>()));
    s.remaining_lengths = j.at("tau").get<std::vector<int>>();
    s.batteries = j.at("B").get<std::vector<double>>();
    s.clock = j.at("t").get<int>();
    s.terminal = j.value("terminal", false);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad world state: ") + e.what());
  }
  const auto k = s.drone_locations.size();
  if (s.task_locations.size() != k || s.original_lengths.size() != k ||
      s.last_actions.size() != k || s.remaining_lengths.size() != k || s.batteries.size() != k)
    throw FormatError("world state lists have inconsistent lengths");
}

}  // namespace dronenet
