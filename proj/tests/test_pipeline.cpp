#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "helpdp/pipeline.hpp"

using namespace helpdp;
using fixtures::tight;

namespace {

const EnvConfig kEnv{};

TaskSet small_tasks(int n = 12) { return generate_tasks(kEnv, {n, 0, 0}, 99); }

ActorSuite strong_actors() { return make_actors(kEnv, {InterventionKind::strong}); }

Episode scored_episode(std::vector<std::string> states, bool success) {
  Episode e;
  e.task_id = "t";
  for (auto& s : states) e.steps.push_back({s, "explore", 0});
  e.terminal = success ? fixtures::kSucc : fixtures::kFail;
  return e;
}

// Independent check of the seen/unseen rule: depth-first over the π* action
// rows using plain recursion.
bool reachable_rows_exist(const Solution<double>& sol, const TransitionModel& model,
                          const std::string& key, std::set<std::string>& done) {
  if (is_terminal(key) || !done.insert(key).second) return true;
  const auto idx = sol.states->find(key);
  if (!idx) return false;
  const auto* row = model.row(key, ActionKind::from_index(sol.policy(*idx)));
  if (row == nullptr) return false;
  for (const auto& [next, p] : *row) {
    if (!reachable_rows_exist(sol, model, next, done)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("a no-op helper reproduces the unassisted rollouts exactly") {
  const auto tasks = small_tasks();
  const auto actors = strong_actors();
  auto helper = std::make_shared<const HelperPolicy>();
  const auto via_helper = run_policy(
      tasks, actors, [&] { return std::make_unique<HelperAgent>(helper); }, 3, 5);
  const auto via_random = run_policy(
      tasks, actors,
      [] { return std::make_unique<RandomInterventionPolicy>(std::vector<double>{0.0}); },
      3, 5);
  CHECK(via_helper == via_random);
  for (const auto& e : via_random) CHECK(e.interventions() == 0);
}

TEST_CASE("an always-help helper uses one intervention per step") {
  const auto tasks = small_tasks();
  const auto actors = strong_actors();
  HelperPolicy helper;
  helper.fallback = ActionKind::help(1);
  const auto m = evaluate(helper, tasks, actors, 2, 5);
  CHECK(m.usage[0] == doctest::Approx(m.length).epsilon(1e-15));
  CHECK(m.usage_se[0] == doctest::Approx(m.length_se).epsilon(1e-15));
  CHECK(m.spl <= m.sr);
  CHECK(m.expected_usage.empty());
}

TEST_CASE("rollouts do not depend on the worker count") {
  const auto tasks = small_tasks();
  const auto actors = strong_actors();
  const auto schedule = default_schedule(1);
  const auto one = collect_phase1(tasks, actors, schedule, 2, 3, 1);
  const auto many = collect_phase1(tasks, actors, schedule, 2, 3, 4);
  CHECK(one == many);
  CHECK(one.size() == tasks.size() * 2 * schedule.size());
  CHECK_FALSE(one == collect_phase1(tasks, actors, schedule, 2, 4, 2));
}

TEST_CASE("mcts interventions run deterministically") {
  const auto tasks = small_tasks(4);
  const auto actors =
      make_actors(kEnv, {InterventionKind::strong, InterventionKind::mcts});
  const auto factory = [] {
    return std::make_unique<RandomInterventionPolicy>(std::vector<double>{0.3, 0.3});
  };
  const auto a = run_policy(tasks, actors, factory, 3, 1, "eval", 1);
  const auto b = run_policy(tasks, actors, factory, 3, 1, "eval", 3);
  CHECK(a == b);
  std::set<int> used;
  for (const auto& e : a) {
    for (const auto& s : e.steps) used.insert(s.intervention);
  }
  CHECK(used == std::set<int>{0, 1, 2});
}

TEST_CASE("runner exceptions propagate") {
  const auto tasks = small_tasks(6);
  const EpisodeRunner bad = [](const Task& t, std::uint64_t) -> Episode {
    if (t.task_id == "train-0003") throw std::runtime_error("boom");
    return {};
  };
  CHECK_THROWS_WITH(run_episodes(tasks, 2, 1, "x", bad, 3), "boom");
  CHECK_THROWS_AS(run_episodes(tasks, 0, 1, "x", bad, 1), std::invalid_argument);
}

TEST_CASE("default schedules") {
  const auto one = default_schedule(1);
  CHECK(one.size() == 7);
  CHECK(one.front() == std::vector<double>{0.0});
  CHECK(one.back() == std::vector<double>{1.0});
  const auto two = default_schedule(2);
  // 7 levels per intervention sharing the all-zero entry, plus four pairs
  CHECK(two.size() == 17);
  CHECK(std::count(two.begin(), two.end(), std::vector<double>{0.0, 0.0}) == 1);
  CHECK(std::count(two.begin(), two.end(), std::vector<double>{0.1, 0.3}) == 1);
  CHECK_THROWS_AS(RandomInterventionPolicy({0.6, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(RandomInterventionPolicy({-0.1}), std::invalid_argument);
}

TEST_CASE("random intervention frequency matches its probability") {
  RandomInterventionPolicy policy({0.3, 0.2});
  Rng rng(4);
  Task task;
  EnvState state;
  int counts[3] = {0, 0, 0};
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[policy.choose(task, state, "", rng)];
  CHECK(std::abs(counts[1] / double(n) - 0.3) < 0.01);
  CHECK(std::abs(counts[2] / double(n) - 0.2) < 0.01);
}

TEST_CASE("coverage truncation keeps a fixed share of source states") {
  CountTable counts;
  for (int i = 0; i < 10; ++i) {
    const auto s = named_state("s" + std::to_string(i));
    counts.record(s, ActionKind::nohelp(), fixtures::kSucc);
    counts.record(s, ActionKind::help(1), fixtures::kFail);
  }
  const auto kept = truncate_coverage(counts, 0.6, 1);
  CHECK(kept.rows().size() == 12);
  CHECK(kept.rows() == truncate_coverage(counts, 0.6, 1).rows());
  CHECK(truncate_coverage(counts, 1.0, 1).rows() == counts.rows());
  CHECK(truncate_coverage(counts, 0.0, 1).empty());
  CHECK_THROWS_AS(truncate_coverage(counts, 1.1, 1), std::invalid_argument);
}

TEST_CASE("helper training modes on MDP-B") {
  const auto toy = fixtures::mdp_b();
  const auto sol = solve_usage(toy.mdp(), tight({0.3}, 1.0));
  const auto s1 = named_state("s1");

  const auto all = build_helper(sol, {}, toy.model, TrainingMode::all_states);
  CHECK(all.table.size() == 2);
  CHECK(all.decide(toy.start) == ActionKind::nohelp());
  CHECK(all.decide(s1) == ActionKind::help(1));
  CHECK(all.decide("id=elsewhere") == ActionKind::nohelp());

  Episode e;
  e.task_id = "b";
  e.steps = {{toy.start, "explore", 0}, {s1, "explore", 1}};
  e.terminal = fixtures::kSucc;
  const auto traj = build_helper(sol, {e}, toy.model, TrainingMode::trajectory_only,
                                 ActionKind::help(1));
  CHECK(traj.table == all.table);
  CHECK(traj.decide("id=elsewhere") == ActionKind::help(1));

  // Without the s1 help row the start can no longer be followed under π*.
  TransitionModel cut;
  cut.set_row(toy.start, ActionKind::nohelp(), {{s1, 1.0}});
  cut.set_row(toy.start, ActionKind::help(1), {{fixtures::kSucc, 0.5}, {s1, 0.5}});
  cut.set_row(s1, ActionKind::nohelp(), {{fixtures::kSucc, 0.1}, {fixtures::kFail, 0.9}});
  const auto none = build_helper(sol, {e}, cut, TrainingMode::trajectory_only);
  CHECK(none.table.empty());
  CHECK_FALSE(expand_policy(sol, cut, toy.start).seen);
  CHECK(expand_policy(sol, toy.model, toy.start).states ==
        std::vector<std::string>{toy.start, s1});

  auto stale = sol;
  stale.converged = false;
  CHECK_THROWS_AS(build_helper(stale, {}, toy.model, TrainingMode::all_states),
                  PlannerError);
}

TEST_CASE("seen/unseen split agrees with an independent reachability check") {
  const auto tasks = small_tasks(30);
  const auto actors = strong_actors();
  const auto log = collect_phase1(tasks, actors, default_schedule(1), 1, 11);
  const auto counts = count_transitions(log);
  for (double keep : {1.0, 0.8, 0.5}) {
    const auto model = normalize(truncate_coverage(counts, keep, 2));
    auto cfg = tight({0.1}, 1.0);
    cfg.allow_missing_rows = true;
    const auto sol = solve_usage(Mdp::from_model(model), cfg);
    const auto starts = start_states(log);
    const auto split = split_seen_unseen(starts, sol, model);
    CHECK(split.seen.size() + split.unseen.size() == starts.size());
    for (const auto& id : split.seen) {
      std::set<std::string> done;
      CHECK(reachable_rows_exist(sol, model, starts.at(id), done));
    }
    for (const auto& id : split.unseen) {
      std::set<std::string> done;
      CHECK_FALSE(reachable_rows_exist(sol, model, starts.at(id), done));
    }
    if (keep == 1.0) CHECK(split.unseen.empty());
  }
}

TEST_CASE("start states from tasks match the logged starts") {
  const auto tasks = small_tasks(5);
  const auto log = run_policy(tasks, strong_actors(),
                              [] { return std::make_unique<ConstantPolicy>(0); }, 1, 2);
  CHECK(start_states(log) == start_states(tasks));
}

TEST_CASE("summaries: SPL and standard errors") {
  Task t;
  t.task_id = "t";
  t.optimal_length = 2;
  Episode quick = scored_episode({"id=a", "id=b"}, true);
  Episode slow = scored_episode({"id=a", "id=b", "id=c", "id=d"}, true);
  Episode fail = scored_episode({"id=a"}, false);
  slow.steps[1].intervention = 1;
  const auto m = summarize({quick, slow, fail}, {t}, 1);
  CHECK(m.sr == doctest::Approx(2.0 / 3.0));
  CHECK(m.spl == doctest::Approx((1.0 + 0.5) / 3.0));
  CHECK(m.length == doctest::Approx(7.0 / 3.0));
  CHECK(m.usage[0] == doctest::Approx(1.0 / 3.0));
  // sample std of {1,1,0} is 1/sqrt(3)
  CHECK(m.sr_se == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(summarize({quick}, {}, 1), std::invalid_argument);
}

TEST_CASE("threshold calibration") {
  const std::vector<double> scores{0.9, 0.1, 0.5, 0.7, 0.3};
  CHECK(calibrate_threshold(scores, 40) == doctest::Approx(0.6));
  CHECK(calibrate_threshold(scores, 20) == doctest::Approx(0.8));
  CHECK(calibrate_threshold(scores, 100) == -std::numeric_limits<double>::infinity());
  CHECK(calibrate_threshold(scores, 0) == std::numeric_limits<double>::infinity());
  // ties at the cut are kept together
  CHECK(calibrate_threshold({1.0, 1.0, 1.0, 0.2, 0.0}, 20) == doctest::Approx(0.6));
  CHECK(calibrate_threshold({1.0, 1.0, 1.0}, 20) ==
        -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(calibrate_threshold({}, 10), std::invalid_argument);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> xs(50);
    for (auto& x : xs) x = u(rng);
    const double tau = calibrate_threshold(xs, 30);
    CHECK(std::count_if(xs.begin(), xs.end(), [&](double x) { return x > tau; }) == 15);
  }
}

TEST_CASE("statewise and taskwise threshold policies") {
  auto success = std::make_shared<SuccessModel>();
  const auto easy = named_state("easy");
  const auto hard = named_state("hard");
  success->set(easy, ActionKind::nohelp(), 0.9, 10);
  success->set(hard, ActionKind::nohelp(), 0.2, 10);
  Rng rng(1);
  Task task;

  StatewiseThresholdPolicy statewise(success, 0.5, 1);
  CHECK(statewise.choose(task, {}, easy, rng) == 0);
  CHECK(statewise.choose(task, {}, hard, rng) == 1);
  CHECK(statewise.choose(task, {}, "id=unknown", rng) == 0);

  TaskwiseWindowPolicy taskwise(success, 0.5, 1, 1);
  taskwise.begin_episode(task);
  EnvState s;
  s.elapsed = 0;
  CHECK(taskwise.choose(task, s, easy, rng) == 0);
  s.elapsed = 1;
  CHECK(taskwise.choose(task, s, hard, rng) == 0);
  s.elapsed = 2;
  CHECK(taskwise.choose(task, s, easy, rng) == 1);
  taskwise.begin_episode(task);
  CHECK(taskwise.choose(task, s, hard, rng) == 0);
}

TEST_CASE("taskwise all-steps restarts only flagged tasks") {
  const auto tasks = small_tasks(8);
  const auto actors = strong_actors();
  auto never = std::make_shared<const SuccessModel>();
  const auto runner = taskwise_all_steps_runner(actors, never, 0.5);
  const auto plain = run_policy(tasks, actors,
                                [] { return std::make_unique<ConstantPolicy>(0); }, 1, 9);
  const auto log = run_episodes(tasks, 1, 9, "eval", runner, 2);
  CHECK(log == plain);

  auto always = std::make_shared<SuccessModel>();
  for (const auto& e : plain) {
    always->set(e.steps.front().state, ActionKind::nohelp(), 0.0, 1);
  }
  const auto restarted = run_episodes(
      tasks, 1, 9, "eval",
      taskwise_all_steps_runner(actors, always, 0.5), 2);
  for (std::size_t i = 0; i < restarted.size(); ++i) {
    const auto& e = restarted[i];
    const auto first = plain[i].steps.size();
    CHECK(e.steps.size() > first);
    for (std::size_t t = 0; t < e.steps.size(); ++t) {
      CHECK(e.steps[t].intervention == (t < first ? 0 : 1));
    }
  }
}

TEST_CASE("threshold policy on a tabular MDP") {
  const auto toy = fixtures::corridor();
  const auto mdp = toy.mdp();
  // difficulties: T1 0.86, U 0.72, T2 0.8
  const auto policy = threshold_policy(mdp, 0.76);
  CHECK(policy(mdp.states().at(named_state("T1"))) == 1);
  CHECK(policy(mdp.states().at(named_state("U"))) == 0);
  CHECK(policy(mdp.states().at(named_state("T2"))) == 1);
}

TEST_CASE("self-regulation threshold is the best validation cut") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> level(0, 9);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 30; ++trial) {
    SuccessModel success;
    for (int j = 0; j < 10; ++j) {
      success.set(named_state("d" + std::to_string(j)), ActionKind::nohelp(),
                  j / 10.0, 1);
    }
    auto make_log = [&](int n) {
      RolloutLog log;
      for (int i = 0; i < n; ++i) {
        const int j = level(rng);
        // easier states succeed more often
        const bool ok = std::bernoulli_distribution(j / 10.0)(rng) || (coin(rng) && j > 7);
        log.push_back(scored_episode({named_state("d" + std::to_string(j))}, ok));
      }
      return log;
    };
    auto val = make_log(40);
    val.push_back(scored_episode({named_state("d9")}, true));
    val.push_back(scored_episode({named_state("d0")}, false));
    const auto test = make_log(40);
    const auto report = self_regulation_eval(success, val, test);

    // brute force over a fine grid of cuts
    double best = 0.0;
    for (int c = -10; c <= 120; ++c) {
      const double cut = c / 100.0 - 0.005;
      std::size_t correct = 0;
      for (const auto& e : val) {
        correct += (episode_score(e, success) <= cut) == e.succeeded();
      }
      best = std::max(best, double(correct) / double(val.size()));
    }
    CHECK(report.val_accuracy == doctest::Approx(best).epsilon(1e-15));
    CHECK(report.precision >= 0.0);
    CHECK(report.recall <= 1.0);
  }

  SuccessModel success;
  RolloutLog all_ok{scored_episode({"id=a"}, true)};
  CHECK_THROWS_WITH(self_regulation_eval(success, all_ok, {}),
                    doctest::Contains("single-class"));
}

TEST_CASE("episode scores respect the window") {
  SuccessModel success;
  success.set("id=a", ActionKind::nohelp(), 0.9, 1);
  success.set("id=b", ActionKind::nohelp(), 0.1, 1);
  const auto e = scored_episode({"id=a", "id=x", "id=b"}, true);
  CHECK(episode_score(e, success) == doctest::Approx(0.9));
  CHECK(episode_score(e, success, 1) == doctest::Approx(0.1));
  CHECK(episode_score(scored_episode({"id=x"}, true), success) == 0.0);
}
