#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "helpdp/keys.hpp"

namespace helpdp {

struct RolloutStep {
  std::string state;
  std::string action;  // environment command, e.g. "explore" or "goto:3"
  int intervention = 0;  // 0 when the base actor acted, i for help_i

  ActionKind kind() const { return ActionKind::from_index(intervention); }
  bool operator==(const RolloutStep&) const = default;
};

// One episode. `terminal` is the key of the final state; an episode that was
// cut short before reaching a terminal key has an empty `terminal`.
struct Episode {
  std::string task_id;
  std::uint64_t seed = 0;
  std::vector<RolloutStep> steps;
  std::string terminal;

  std::size_t length() const { return steps.size(); }
  TerminalFlag outcome() const { return terminal_flag(terminal); }
  bool succeeded() const { return outcome() == TerminalFlag::success; }
  int interventions() const;
  std::string id() const;
  bool operator==(const Episode&) const = default;
};

using RolloutLog = std::vector<Episode>;

}  // namespace helpdp
