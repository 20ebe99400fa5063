#include <doctest.h>

#include <cmath>
#include <set>

#include "helpdp/env.hpp"
#include "helpdp/oracle.hpp"

using namespace helpdp;

namespace {

// Two rooms, object in room 1, hint {1}, three steps, no moves.
Task two_room_task() {
  Task t;
  t.task_id = "toy";
  t.split = "train";
  t.room_count = 2;
  t.start_room = 0;
  t.object_location = 1;
  t.hint = {1};
  t.max_steps = 3;
  t.optimal_length = compute_optimal_length(t);
  return t;
}

double rollout_base(const Task& task, double noise, Rng& rng) {
  EnvState s = initial_state(task);
  while (!s.terminal()) s = env_step(task, s, base_actor(task, s, rng, noise));
  return s.status == TerminalFlag::success ? 1.0 : 0.0;
}

}  // namespace

TEST_CASE("task generation is deterministic and well formed") {
  EnvConfig config;
  const SplitSizes sizes{50, 7, 9};
  const auto a = generate_tasks(config, sizes, 42);
  CHECK(a == generate_tasks(config, sizes, 42));
  CHECK_FALSE(a == generate_tasks(config, sizes, 43));
  REQUIRE(a.size() == 66);
  CHECK(a[0].task_id == "train-0000");
  CHECK(a[50].task_id == "val-0000");
  CHECK(a[57].split == "test");
  std::set<std::string> ids;
  for (const auto& t : a) {
    ids.insert(t.task_id);
    CHECK(std::is_sorted(t.hint.begin(), t.hint.end()));
    CHECK(std::count(t.hint.begin(), t.hint.end(), t.object_location) == 1);
    CHECK(t.hint.size() >= 1);
    CHECK(t.hint.size() <= config.hint_size_weights.size());
    CHECK(t.move_schedule.size() <= 1);
    for (const auto& [step, to] : t.move_schedule) {
      CHECK(step >= config.move_step_min);
      CHECK(step <= config.move_step_max);
      CHECK(to != t.object_location);
    }
    CHECK(t.optimal_length >= 1);
    CHECK(t.optimal_length <= t.max_steps);
  }
  CHECK(ids.size() == a.size());
}

TEST_CASE("optimal length with a singleton hint and no moves is distance + 1") {
  EnvConfig config;
  config.hint_size_weights = {1.0};
  config.move_probability = 0.0;
  config.max_steps = 10;
  for (const auto& t : generate_tasks(config, {40, 0, 0}, 5)) {
    CHECK(t.hint == std::vector<int>{t.object_location});
    CHECK(t.move_schedule.empty());
    const int ring = std::min(t.object_location, 8 - t.object_location);
    CHECK(t.optimal_length == ring + 1);
  }
}

TEST_CASE("optimal length accounts for a scheduled move") {
  Task t = two_room_task();
  t.room_count = 8;
  t.max_steps = 6;
  t.object_location = 3;
  t.hint = {3};
  // Object jumps next to the start before the agent could reach room 3.
  t.move_schedule = {{2, 1}};
  CHECK(compute_optimal_length(t) == 3);
  t.move_schedule = {{1, 0}};
  CHECK(compute_optimal_length(t) == 2);
}

TEST_CASE("config validation") {
  EnvConfig c;
  c.hint_size_weights.assign(9, 1.0);
  CHECK_THROWS_WITH(c.validate(), doctest::Contains("hint larger than room count"));
  EnvConfig d;
  d.base_noise = 1.5;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  EnvConfig e;
  e.max_steps = 1;
  CHECK_THROWS_WITH(generate_tasks(e, {20, 0, 0}, 1),
                    doctest::Contains("infeasible config"));
}

TEST_CASE("step semantics") {
  const Task t = two_room_task();
  EnvState s = initial_state(t);
  const auto legal = legal_actions(t, s);
  REQUIRE(legal.size() == 2);
  CHECK(legal[0] == EnvAction::explore());
  CHECK(legal[1] == EnvAction::go(1));
  CHECK_THROWS_AS(env_step(t, s, EnvAction::go(0)), std::invalid_argument);

  const auto miss = env_step(t, s, EnvAction::explore());
  CHECK(miss.elapsed == 1);
  CHECK(miss.explored == 1u);
  CHECK_FALSE(miss.terminal());

  const auto moved = env_step(t, s, EnvAction::go(1));
  const auto hit = env_step(t, moved, EnvAction::explore());
  CHECK(hit.status == TerminalFlag::success);
  CHECK(is_terminal(state_key(t, hit)));
  CHECK_THROWS_AS(env_step(t, hit, EnvAction::explore()), std::invalid_argument);

  EnvState late = miss;
  late = env_step(t, late, EnvAction::explore());
  late = env_step(t, late, EnvAction::explore());
  CHECK(late.status == TerminalFlag::failure);

  CHECK(EnvAction::parse("goto:3") == EnvAction::go(3));
  CHECK(EnvAction::go(3).str() == "goto:3");
  CHECK_THROWS_AS(EnvAction::parse("jump"), std::invalid_argument);
}

TEST_CASE("object follows its move schedule") {
  Task t = two_room_task();
  t.room_count = 4;
  t.move_schedule = {{2, 3}};
  CHECK(t.object_room_at(0) == 1);
  CHECK(t.object_room_at(1) == 1);
  CHECK(t.object_room_at(2) == 3);
  EnvState s = initial_state(t);
  s = env_step(t, s, EnvAction::explore());
  CHECK_FALSE(s.moved);
  s = env_step(t, s, EnvAction::explore());
  CHECK(s.moved);
}

TEST_CASE("state keys distinguish tasks and states") {
  const Task t = two_room_task();
  Task other = t;
  other.hint = {0, 1};
  const auto s = initial_state(t);
  CHECK(state_key(t, s) != state_key(other, s));
  CHECK(state_key(t, s) != state_key(t, env_step(t, s, EnvAction::explore())));
  CHECK(parse_key(state_key(t, s)).at("t") == "0");
}

TEST_CASE("actor noise limits") {
  EnvConfig config;
  const auto t = generate_tasks(config, {5, 0, 0}, 3)[0];
  const auto s = initial_state(t);
  const auto greedy = base_action_distribution(t, s, 0.0);
  CHECK(std::count(greedy.begin(), greedy.end(), 1.0) == 1);
  CHECK(std::count(greedy.begin(), greedy.end(), 0.0) ==
        static_cast<long>(greedy.size()) - 1);
  const auto uniform = strong_action_distribution(t, s, 1.0);
  for (double p : uniform) CHECK(p == doctest::Approx(1.0 / uniform.size()));
}

TEST_CASE("strong actor heads for the object's current room") {
  Task t = two_room_task();
  t.room_count = 8;
  t.object_location = 6;
  t.hint = {2, 6};
  const auto s = initial_state(t);
  Rng rng(1);
  CHECK(strong_actor(t, s, rng, 0.0) == EnvAction::go(7));
  // The base actor goes for the nearest unexplored hint room instead.
  CHECK(base_actor(t, s, rng, 0.0) == EnvAction::go(1));
}

TEST_CASE("base success oracle matches hand enumeration on a two-room task") {
  const Task t = two_room_task();
  for (double eta : {0.0, 0.35, 1.0}) {
    BaseSuccessOracle oracle(eta);
    const double q = 1.0 - eta / 2.0;
    const double e = eta / 2.0;
    // go then explore, or explore (miss), go, explore
    CHECK(oracle(t, initial_state(t)) ==
          doctest::Approx(q * q + e * q * q).epsilon(1e-14));
  }
}

TEST_CASE("exact models on the two-room task") {
  const Task t = two_room_task();
  EnvConfig config;
  config.room_count = 2;
  config.max_steps = 3;
  config.hint_size_weights = {1.0};
  const auto models = exact_models({t}, config);
  const auto start = models.starts.at("toy");
  const double q = 1.0 - config.base_noise / 2.0, e = config.base_noise / 2.0;
  const double qs = 1.0 - config.strong_noise / 2.0, es = config.strong_noise / 2.0;
  CHECK(*models.success.p(start, ActionKind::nohelp()) ==
        doctest::Approx(q * q + e * q * q).epsilon(1e-14));
  CHECK(*models.success.p(start, ActionKind::help(1)) ==
        doctest::Approx(qs * q + es * q * q).epsilon(1e-14));
  const auto* row = models.transitions.row(start, ActionKind::help(1));
  REQUIRE(row != nullptr);
  REQUIRE(row->size() == 2);
  double mass = 0.0;
  for (const auto& [next, p] : *row) {
    const auto fields = parse_key(next);
    mass += p;
    CHECK(p == doctest::Approx(fields.at("at") == "1" ? qs : es));
  }
  CHECK(mass == doctest::Approx(1.0));
  CHECK(models.success.provenance() == Provenance::exact);
  CHECK_THROWS_AS(exact_models({t}, config, 3), std::length_error);
}

TEST_CASE("deterministic actors give 0/1 success probabilities") {
  EnvConfig config;
  config.base_noise = 0.0;
  config.strong_noise = 0.0;
  const auto tasks = generate_tasks(config, {10, 0, 0}, 8);
  const auto models = exact_models(tasks, config);
  for (const auto& [key, entry] : models.success.entries()) {
    CHECK((entry.p == 0.0 || entry.p == 1.0));
  }
  CHECK(models.state_count > 0);
}

TEST_CASE("exact base success agrees with Monte Carlo rollouts") {
  EnvConfig config;
  const auto tasks = generate_tasks(config, {4, 0, 0}, 17);
  BaseSuccessOracle oracle(config.base_noise);
  for (const auto& task : tasks) {
    const auto est = monte_carlo_estimate(
        [&](Rng& rng) {
          return EpisodeSample{rollout_base(task, config.base_noise, rng), 0.0};
        },
        4000, fnv1a(task.task_id));
    const double exact = oracle(task, initial_state(task));
    CHECK(std::abs(est.success_mean - exact) <= 4.0 * est.success_se + 1e-12);
  }
}

TEST_CASE("calibrated defaults: base actor fails often on its own") {
  EnvConfig config;
  const auto tasks = generate_tasks(config, {200, 0, 0}, 7);
  BaseSuccessOracle oracle(config.base_noise);
  double sr = 0.0;
  for (const auto& t : tasks) sr += oracle(t, initial_state(t));
  sr /= static_cast<double>(tasks.size());
  CHECK(sr >= 0.2);
  CHECK(sr <= 0.4);
}

TEST_CASE("tree search intervention") {
  const Task t = two_room_task();
  const auto s = initial_state(t);
  const std::vector<EnvAction> candidates{EnvAction::go(1), EnvAction::explore()};
  UctCounts counts;

  SUBCASE("constant scores tie to the first candidate") {
    const QFunction flat = [](const Task&, const EnvState&, const EnvAction&) {
      return 0.5;
    };
    CHECK(mcts_intervene(t, s, candidates, flat, counts, 0.0) == EnvAction::go(1));
    CHECK(counts.state_visits(state_key(t, s)) == 1);
    CHECK(counts.action_visits(state_key(t, s), "goto:1") == 1);
  }
  SUBCASE("without exploration the best score wins") {
    const QFunction prefer_explore = [](const Task&, const EnvState&,
                                        const EnvAction& a) {
      return a.kind == EnvAction::Kind::explore ? 0.9 : 0.1;
    };
    CHECK(mcts_intervene(t, s, candidates, prefer_explore, counts, 0.0) ==
          EnvAction::explore());
  }
  SUBCASE("the bonus favours rarely tried candidates") {
    const auto key = state_key(t, s);
    counts.add(key, "goto:1", 50);
    counts.add(key, "explore", 1);
    const QFunction flat = [](const Task&, const EnvState&, const EnvAction&) {
      return 0.5;
    };
    CHECK(mcts_intervene(t, s, candidates, flat, counts, 1.0) ==
          EnvAction::explore());
  }
  CHECK_THROWS_AS(mcts_intervene(t, s, {}, nullptr, counts, 1.0),
                  std::invalid_argument);
}

TEST_CASE("noisy ground-truth scorer stays near the exact value") {
  const Task t = two_room_task();
  auto oracle = std::make_shared<BaseSuccessOracle>(0.35);
  const auto q0 = noisy_ground_truth_q(oracle, 0.0);
  const auto q1 = noisy_ground_truth_q(oracle, 0.1);
  const auto s = initial_state(t);
  for (const auto& a : legal_actions(t, s)) {
    const double exact = (*oracle)(t, env_step(t, s, a));
    CHECK(q0(t, s, a) == exact);
    CHECK(std::abs(q1(t, s, a) - exact) <= 0.1 + 1e-15);
    CHECK(q1(t, s, a) == q1(t, s, a));
  }
}
