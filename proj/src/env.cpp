#include "helpdp/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <set>
#include <stdexcept>

namespace helpdp {

void EnvConfig::validate() const {
  if (room_count < 1 || room_count > 32) {
    throw std::invalid_argument("room_count must lie in [1, 32]");
  }
  if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  if (start_room < 0 || start_room >= room_count) {
    throw std::invalid_argument("start_room out of range");
  }
  if (hint_size_weights.empty()) {
    throw std::invalid_argument("hint_size_weights is empty");
  }
  if (static_cast<int>(hint_size_weights.size()) > room_count) {
    throw std::invalid_argument("hint larger than room count");
  }
  double total = 0.0;
  for (double w : hint_size_weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("negative hint weight");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("hint weights sum to zero");
  if (!(move_probability >= 0.0 && move_probability <= 1.0)) {
    throw std::invalid_argument("move_probability must lie in [0, 1]");
  }
  if (move_probability > 0.0 &&
      (move_step_min < 1 || move_step_max < move_step_min)) {
    throw std::invalid_argument("invalid move step range");
  }
  if (move_probability > 0.0 && room_count < 2) {
    throw std::invalid_argument("moves need at least two rooms");
  }
  for (double eta : {base_noise, strong_noise}) {
    if (!(eta >= 0.0 && eta <= 1.0)) {
      throw std::invalid_argument("actor noise must lie in [0, 1]");
    }
  }
  if (mcts_k < 1) throw std::invalid_argument("mcts_k must be >= 1");
  if (!(mcts_c >= 0.0)) throw std::invalid_argument("mcts_c must be >= 0");
  if (!(mcts_q_noise >= 0.0)) throw std::invalid_argument("mcts_q_noise < 0");
}

int Task::object_room_at(int elapsed) const {
  int room = object_location;
  for (const auto& [step, to] : move_schedule) {
    if (step <= elapsed) room = to;
  }
  return room;
}

EnvAction EnvAction::parse(std::string_view text) {
  if (text == "explore") return explore();
  if (text.starts_with("goto:")) {
    return go(std::stoi(std::string(text.substr(5))));
  }
  throw std::invalid_argument("unknown env action '" + std::string(text) + "'");
}

std::string EnvAction::str() const {
  return kind == Kind::explore ? std::string("explore")
                               : "goto:" + std::to_string(room);
}

std::vector<int> neighbors(int room_count, int room) {
  std::set<int> out;
  if (room_count > 1) {
    out.insert((room + 1) % room_count);
    out.insert((room + room_count - 1) % room_count);
  }
  out.erase(room);
  return {out.begin(), out.end()};
}

int room_distance(int room_count, int from, int to) {
  std::vector<int> dist(static_cast<std::size_t>(room_count), -1);
  std::deque<int> queue{from};
  dist[static_cast<std::size_t>(from)] = 0;
  while (!queue.empty()) {
    const int room = queue.front();
    queue.pop_front();
    if (room == to) return dist[static_cast<std::size_t>(room)];
    for (int next : neighbors(room_count, room)) {
      if (dist[static_cast<std::size_t>(next)] < 0) {
        dist[static_cast<std::size_t>(next)] =
            dist[static_cast<std::size_t>(room)] + 1;
        queue.push_back(next);
      }
    }
  }
  return -1;
}

int compute_optimal_length(const Task& task) {
  // Exploring the object's room at step e needs the agent there after e steps.
  for (int e = 0; e < task.max_steps; ++e) {
    const int d =
        room_distance(task.room_count, task.start_room, task.object_room_at(e));
    if (d >= 0 && d <= e) return e + 1;
  }
  return task.max_steps + 1;
}

TaskSet generate_tasks(const EnvConfig& config, const SplitSizes& sizes,
                       std::uint64_t seed) {
  config.validate();
  if (sizes.train < 0 || sizes.val < 0 || sizes.test < 0) {
    throw std::invalid_argument("split sizes must be >= 0");
  }
  Rng rng(seed);
  std::discrete_distribution<int> hint_size(config.hint_size_weights.begin(),
                                            config.hint_size_weights.end());
  std::uniform_int_distribution<int> room(0, config.room_count - 1);
  std::bernoulli_distribution moves(config.move_probability);

  TaskSet tasks;
  const std::pair<const char*, int> splits[] = {
      {"train", sizes.train}, {"val", sizes.val}, {"test", sizes.test}};
  for (const auto& [split, count] : splits) {
    for (int i = 0; i < count; ++i) {
      Task task;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%04d", split, i);
      task.task_id = id;
      task.split = split;
      task.room_count = config.room_count;
      task.start_room = config.start_room;
      task.max_steps = config.max_steps;
      task.object_location = room(rng);

      std::vector<int> others;
      for (int r = 0; r < config.room_count; ++r) {
        if (r != task.object_location) others.push_back(r);
      }
      const int extra = hint_size(rng);
      for (int j = 0; j < extra; ++j) {
        const auto pick = std::uniform_int_distribution<std::size_t>(
            static_cast<std::size_t>(j), others.size() - 1)(rng);
        std::swap(others[static_cast<std::size_t>(j)], others[pick]);
      }
      task.hint.assign(others.begin(), others.begin() + extra);
      task.hint.push_back(task.object_location);
      std::sort(task.hint.begin(), task.hint.end());

      if (moves(rng)) {
        const int step = std::uniform_int_distribution<int>(
            config.move_step_min, config.move_step_max)(rng);
        const auto to = std::uniform_int_distribution<std::size_t>(
            0, others.size() - 1)(rng);
        // `others` was permuted above; index from a sorted copy instead.
        std::vector<int> sorted_others = others;
        std::sort(sorted_others.begin(), sorted_others.end());
        task.move_schedule.emplace_back(step, sorted_others[to]);
      }
      task.optimal_length = compute_optimal_length(task);
      if (task.optimal_length > task.max_steps) {
        throw std::invalid_argument("infeasible config: task " + task.task_id +
                                    " cannot be solved within max_steps");
      }
      tasks.push_back(std::move(task));
    }
  }
  return tasks;
}

EnvState initial_state(const Task& task) {
  EnvState state;
  state.agent_room = task.start_room;
  for (const auto& [step, to] : task.move_schedule) {
    if (step <= 0) state.moved = true;
  }
  return state;
}

std::vector<EnvAction> legal_actions(const Task& task, const EnvState& state) {
  std::vector<EnvAction> out{EnvAction::explore()};
  for (int room : neighbors(task.room_count, state.agent_room)) {
    out.push_back(EnvAction::go(room));
  }
  return out;
}

EnvState env_step(const Task& task, const EnvState& state,
                  const EnvAction& action) {
  if (state.terminal()) throw std::invalid_argument("step from terminal state");
  const auto legal = legal_actions(task, state);
  if (std::find(legal.begin(), legal.end(), action) == legal.end()) {
    throw std::invalid_argument("illegal action " + action.str());
  }
  EnvState next = state;
  if (action.kind == EnvAction::Kind::explore) {
    if (state.agent_room == task.object_room_at(state.elapsed)) {
      next.found = true;
    }
    next.explored |= 1u << state.agent_room;
  } else {
    next.agent_room = action.room;
  }
  next.elapsed = state.elapsed + 1;
  for (const auto& [step, to] : task.move_schedule) {
    if (step <= next.elapsed) next.moved = true;
  }
  if (next.found) {
    next.status = TerminalFlag::success;
  } else if (next.elapsed >= task.max_steps) {
    next.status = TerminalFlag::failure;
  }
  return next;
}

namespace {

std::string join_rooms(const std::vector<int>& rooms) {
  if (rooms.empty()) return "-";
  std::string out;
  for (int r : rooms) {
    if (!out.empty()) out += ',';
    out += std::to_string(r);
  }
  return out;
}

std::vector<int> rooms_in(std::uint32_t mask, int room_count) {
  std::vector<int> out;
  for (int r = 0; r < room_count; ++r) {
    if (mask & (1u << r)) out.push_back(r);
  }
  return out;
}

std::string schedule_text(const Task& task) {
  if (task.move_schedule.empty()) return "-";
  std::string out;
  for (const auto& [step, to] : task.move_schedule) {
    if (!out.empty()) out += ',';
    out += std::to_string(step) + ":" + std::to_string(to);
  }
  return out;
}

// Move from `from` one room closer to `target`; ties to the lower room.
EnvAction step_towards(const Task& task, int from, int target) {
  if (from == target) return EnvAction::explore();
  int best = -1;
  int best_d = 0;
  for (int nb : neighbors(task.room_count, from)) {
    const int d = room_distance(task.room_count, nb, target);
    if (best < 0 || d < best_d) {
      best = nb;
      best_d = d;
    }
  }
  return EnvAction::go(best);
}

EnvAction base_greedy(const Task& task, const EnvState& state) {
  const std::uint32_t all = (task.room_count >= 32)
                                ? 0xffffffffu
                                : ((1u << task.room_count) - 1u);
  std::uint32_t hint = 0;
  for (int r : task.hint) hint |= 1u << r;
  std::uint32_t candidates = hint & ~state.explored;
  if (candidates == 0) candidates = all & ~state.explored;
  if (candidates == 0) candidates = 1u << state.agent_room;
  if (candidates & (1u << state.agent_room)) return EnvAction::explore();
  int target = -1;
  int target_d = 0;
  for (int r : rooms_in(candidates, task.room_count)) {
    const int d = room_distance(task.room_count, state.agent_room, r);
    if (target < 0 || d < target_d) {
      target = r;
      target_d = d;
    }
  }
  return step_towards(task, state.agent_room, target);
}

EnvAction strong_greedy(const Task& task, const EnvState& state) {
  return step_towards(task, state.agent_room,
                      task.object_room_at(state.elapsed));
}

std::vector<double> noisy_law(const std::vector<EnvAction>& legal,
                              const EnvAction& greedy, double noise) {
  std::vector<double> probs(legal.size(),
                            noise / static_cast<double>(legal.size()));
  const auto it = std::find(legal.begin(), legal.end(), greedy);
  probs[static_cast<std::size_t>(it - legal.begin())] += 1.0 - noise;
  return probs;
}

}  // namespace

std::string state_key(const Task& task, const EnvState& state) {
  KeyBuilder key;
  key.set("at", state.agent_room)
      .set("explored", join_rooms(rooms_in(state.explored, task.room_count)))
      .set("hint", join_rooms(task.hint))
      .set("horizon", task.max_steps)
      .set("moved", state.moved ? 1 : 0)
      .set("moves", schedule_text(task))
      .set("obj", task.object_location)
      .set("rooms", task.room_count)
      .set("t", state.elapsed)
      .terminal(state.status);
  return key.str();
}

std::vector<double> base_action_distribution(const Task& task,
                                             const EnvState& state,
                                             double noise) {
  return noisy_law(legal_actions(task, state), base_greedy(task, state), noise);
}

std::vector<double> strong_action_distribution(const Task& task,
                                               const EnvState& state,
                                               double noise) {
  return noisy_law(legal_actions(task, state), strong_greedy(task, state),
                   noise);
}

EnvAction sample_action(const std::vector<EnvAction>& actions,
                        const std::vector<double>& probs, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    acc += probs[i];
    if (u < acc) return actions[i];
  }
  // u landed in the rounding slack above the last cumulative sum.
  for (std::size_t i = actions.size(); i-- > 0;) {
    if (probs[i] > 0.0) return actions[i];
  }
  throw std::invalid_argument("empty action law");
}

EnvAction base_actor(const Task& task, const EnvState& state, Rng& rng,
                     double noise) {
  return sample_action(legal_actions(task, state),
                       base_action_distribution(task, state, noise), rng);
}

EnvAction strong_actor(const Task& task, const EnvState& state, Rng& rng,
                       double noise) {
  return sample_action(legal_actions(task, state),
                       strong_action_distribution(task, state, noise), rng);
}

std::uint64_t UctCounts::state_visits(const std::string& state) const {
  const auto it = nodes_.find(state);
  return it == nodes_.end() ? 0 : it->second.visits;
}

std::uint64_t UctCounts::action_visits(const std::string& state,
                                       const std::string& action) const {
  const auto it = nodes_.find(state);
  if (it == nodes_.end()) return 0;
  const auto a = it->second.actions.find(action);
  return a == it->second.actions.end() ? 0 : a->second;
}

void UctCounts::add(const std::string& state, const std::string& action,
                    std::uint64_t n) {
  auto& node = nodes_[state];
  node.visits += n;
  node.actions[action] += n;
}

EnvAction mcts_intervene(const Task& task, const EnvState& state,
                         const std::vector<EnvAction>& candidates,
                         const QFunction& q, UctCounts& counts, double c) {
  if (candidates.empty()) throw std::invalid_argument("no legal candidates");
  const auto key = state_key(task, state);
  const auto n_state = counts.state_visits(key);
  const double log_n = n_state > 0 ? std::log(static_cast<double>(n_state)) : 0.0;
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto n_sa = std::max<std::uint64_t>(
        1, counts.action_visits(key, candidates[i].str()));
    const double score = q(task, state, candidates[i]) +
                         c * std::sqrt(log_n / static_cast<double>(n_sa));
    if (score > best_score) {
      best = i;
      best_score = score;
    }
  }
  counts.add(key, candidates[best].str());
  return candidates[best];
}

EnvAction mcts_actor(const Task& task, const EnvState& state, const QFunction& q,
                     UctCounts& counts, Rng& rng, const EnvConfig& config) {
  const auto legal = legal_actions(task, state);
  const auto uniform = base_action_distribution(task, state, 1.0);
  std::vector<EnvAction> candidates;
  for (int i = 0; i < config.mcts_k; ++i) {
    candidates.push_back(sample_action(legal, uniform, rng));
  }
  return mcts_intervene(task, state, candidates, q, counts, config.mcts_c);
}

double BaseSuccessOracle::operator()(const Task& task, const EnvState& state) {
  if (state.status == TerminalFlag::success) return 1.0;
  if (state.status == TerminalFlag::failure) return 0.0;
  const auto key = state_key(task, state);
  {
    std::shared_lock lock(mutex_);
    if (const auto it = memo_.find(key); it != memo_.end()) return it->second;
  }
  const auto legal = legal_actions(task, state);
  const auto probs = base_action_distribution(task, state, noise_);
  double p = 0.0;
  for (std::size_t i = 0; i < legal.size(); ++i) {
    if (probs[i] > 0.0) p += probs[i] * (*this)(task, env_step(task, state, legal[i]));
  }
  std::unique_lock lock(mutex_);
  memo_.emplace(key, p);
  return p;
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t hash) {
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 1099511628211ULL;
  }
  return hash;
}

QFunction noisy_ground_truth_q(std::shared_ptr<BaseSuccessOracle> oracle,
                               double noise) {
  return [oracle = std::move(oracle), noise](const Task& task,
                                             const EnvState& state,
                                             const EnvAction& action) {
    const double p = (*oracle)(task, env_step(task, state, action));
    const auto h = fnv1a(state_key(task, state) + "|" + action.str());
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return std::clamp(p + (2.0 * u - 1.0) * noise, 0.0, 1.0);
  };
}

std::string_view to_string(InterventionKind kind) {
  return kind == InterventionKind::mcts ? "mcts" : "strong";
}

InterventionKind parse_intervention(std::string_view text) {
  if (text == "strong") return InterventionKind::strong;
  if (text == "mcts") return InterventionKind::mcts;
  throw std::invalid_argument("unknown intervention '" + std::string(text) +
                              "'");
}

ExactModels exact_models(const TaskSet& tasks, const EnvConfig& config,
                         std::size_t state_cap) {
  ExactModels out;
  BaseSuccessOracle oracle(config.base_noise);
  std::set<std::string> seen;
  for (const auto& task : tasks) {
    const auto start = initial_state(task);
    out.starts[task.task_id] = state_key(task, start);
    std::deque<EnvState> frontier{start};
    if (!seen.insert(state_key(task, start)).second) continue;
    while (!frontier.empty()) {
      const EnvState state = frontier.front();
      frontier.pop_front();
      if (state.terminal()) continue;
      const auto key = state_key(task, state);
      const auto legal = legal_actions(task, state);
      const std::vector<double> laws[2] = {
          base_action_distribution(task, state, config.base_noise),
          strong_action_distribution(task, state, config.strong_noise)};
      for (int a = 0; a < 2; ++a) {
        std::map<std::string, double> next_law;
        double p_success = 0.0;
        for (std::size_t i = 0; i < legal.size(); ++i) {
          const double w = laws[a][i];
          if (w <= 0.0) continue;
          const auto next = env_step(task, state, legal[i]);
          const auto next_key = state_key(task, next);
          next_law[next_key] += w;
          p_success += w * oracle(task, next);
          if (seen.insert(next_key).second) {
            if (seen.size() > state_cap) {
              throw std::length_error("enumeration too large");
            }
            frontier.push_back(next);
          }
        }
        const auto action = ActionKind::from_index(a);
        out.transitions.set_row(key, action,
                                {next_law.begin(), next_law.end()});
        out.success.set(key, action, std::clamp(p_success, 0.0, 1.0), 0);
      }
    }
  }
  out.state_count = seen.size();
  return out;
}

}  // namespace helpdp
