#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "helpdp/keys.hpp"
#include "helpdp/models.hpp"

namespace helpdp {

using Rng = std::mt19937_64;

// Multi-room object search on a ring of rooms. The agent starts in
// `start_room`, may move to an adjacent room or explore its current room, and
// succeeds by exploring the room that holds the object at that step. The hint
// names a set of rooms that contains the object's initial room; scheduled
// moves relocate the object mid-episode.
struct EnvConfig {
  int room_count = 8;
  int max_steps = 6;
  int start_room = 0;
  // Weight of hint size 1, 2, ... (normalized).
  std::vector<double> hint_size_weights{0.1, 0.2, 0.3, 0.4};
  double move_probability = 0.8;
  int move_step_min = 1;
  int move_step_max = 4;
  double base_noise = 0.35;
  double strong_noise = 0.05;
  double mcts_c = 0.25;
  int mcts_k = 5;
  double mcts_q_noise = 0.1;

  void validate() const;
};

struct SplitSizes {
  int train = 1000;
  int val = 40;
  int test = 40;
};

struct Task {
  std::string task_id;
  std::string split;
  int room_count = 8;
  int start_room = 0;
  int object_location = 0;  // initial room
  std::vector<int> hint;    // sorted, contains object_location
  std::vector<std::pair<int, int>> move_schedule;  // (step, new room), by step
  int max_steps = 6;
  int optimal_length = 1;

  // Room holding the object when `elapsed` steps have been taken.
  int object_room_at(int elapsed) const;
  bool operator==(const Task&) const = default;
};

using TaskSet = std::vector<Task>;

struct EnvState {
  int elapsed = 0;
  int agent_room = 0;
  std::uint32_t explored = 0;  // bit per room, monotone within an episode
  bool found = false;
  bool moved = false;
  TerminalFlag status = TerminalFlag::none;

  bool terminal() const { return status != TerminalFlag::none; }
  bool operator==(const EnvState&) const = default;
};

struct EnvAction {
  enum class Kind { explore, go };
  Kind kind = Kind::explore;
  int room = 0;  // destination for go

  static EnvAction explore() { return {Kind::explore, 0}; }
  static EnvAction go(int room) { return {Kind::go, room}; }
  static EnvAction parse(std::string_view text);
  std::string str() const;
  bool operator==(const EnvAction&) const = default;
};

// Ring distance between rooms, computed by breadth-first search.
int room_distance(int room_count, int from, int to);
std::vector<int> neighbors(int room_count, int room);

int compute_optimal_length(const Task& task);

// Deterministic in `seed`; task ids are "<split>-<index>".
TaskSet generate_tasks(const EnvConfig& config, const SplitSizes& sizes,
                       std::uint64_t seed);

EnvState initial_state(const Task& task);
// Explore first, then moves in ascending room order.
std::vector<EnvAction> legal_actions(const Task& task, const EnvState& state);
EnvState env_step(const Task& task, const EnvState& state,
                  const EnvAction& action);
std::string state_key(const Task& task, const EnvState& state);

// Action laws over legal_actions(task, state): (1 - noise) on the greedy
// action plus noise spread uniformly over all legal actions.
std::vector<double> base_action_distribution(const Task& task,
                                             const EnvState& state,
                                             double noise);
// Greedy towards the object's current room.
std::vector<double> strong_action_distribution(const Task& task,
                                               const EnvState& state,
                                               double noise);

EnvAction sample_action(const std::vector<EnvAction>& actions,
                        const std::vector<double>& probs, Rng& rng);
EnvAction base_actor(const Task& task, const EnvState& state, Rng& rng,
                     double noise);
EnvAction strong_actor(const Task& task, const EnvState& state, Rng& rng,
                       double noise);

// Visit counts for the depth-1 tree search, per task and episode.
class UctCounts {
 public:
  std::uint64_t state_visits(const std::string& state) const;
  std::uint64_t action_visits(const std::string& state,
                              const std::string& action) const;
  void add(const std::string& state, const std::string& action,
           std::uint64_t n = 1);

 private:
  struct Node {
    std::uint64_t visits = 0;
    std::map<std::string, std::uint64_t> actions;
  };
  std::map<std::string, Node> nodes_;
};

using QFunction =
    std::function<double(const Task&, const EnvState&, const EnvAction&)>;

// argmax over candidates of Q(s,a) + c sqrt(ln N(s) / N(s,a)), with N(s,a)
// floored at 1 and ln N(s) taken as 0 for a fresh state. Ties go to the
// lowest candidate index. Updates the counts for the chosen action.
EnvAction mcts_intervene(const Task& task, const EnvState& state,
                         const std::vector<EnvAction>& candidates,
                         const QFunction& q, UctCounts& counts, double c);

// Samples k candidates from the base actor at full temperature and runs
// mcts_intervene over them.
EnvAction mcts_actor(const Task& task, const EnvState& state, const QFunction& q,
                     UctCounts& counts, Rng& rng, const EnvConfig& config);

// Exact success probability of the base actor from any state, memoized by
// state key (keys carry the task context). Safe to share between threads.
class BaseSuccessOracle {
 public:
  explicit BaseSuccessOracle(double base_noise) : noise_(base_noise) {}
  double operator()(const Task& task, const EnvState& state);
  double noise() const { return noise_; }

 private:
  double noise_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, double> memo_;
};

// Ground-truth p(step(s,a)) perturbed by a deterministic per-(state, action)
// offset in [-noise, noise], clamped to [0,1].
QFunction noisy_ground_truth_q(std::shared_ptr<BaseSuccessOracle> oracle,
                               double noise);

enum class InterventionKind { strong, mcts };

std::string_view to_string(InterventionKind kind);
InterventionKind parse_intervention(std::string_view text);

struct ExactModels {
  TransitionModel transitions;
  SuccessModel success{Provenance::exact};
  std::map<std::string, std::string> starts;  // task id -> initial key
  std::size_t state_count = 0;
};

// Enumerates every state reachable from each task's start under the base
// actor (nohelp) and the strong actor (help1), producing exact next-state laws
// and exact p(s,a): the branch's action law at s followed by the base actor.
ExactModels exact_models(const TaskSet& tasks, const EnvConfig& config,
                         std::size_t state_cap = 2'000'000);

std::uint64_t fnv1a(std::string_view text,
                    std::uint64_t hash = 1469598103934665603ULL);

}  // namespace helpdp
