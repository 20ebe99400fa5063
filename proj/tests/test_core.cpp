#include <doctest.h>

#include <cmath>

#include "helpdp/keys.hpp"
#include "helpdp/models.hpp"
#include "helpdp/rollout.hpp"
#include "helpdp/tabular_mdp.hpp"

using namespace helpdp;

namespace {

Episode episode(std::string task, std::vector<std::pair<std::string, int>> steps,
                std::string terminal) {
  Episode e;
  e.task_id = std::move(task);
  for (auto& [state, intervention] : steps) {
    e.steps.push_back({state, "explore", intervention});
  }
  e.terminal = std::move(terminal);
  return e;
}

}  // namespace

TEST_CASE("key builder orders fields and round-trips") {
  KeyBuilder b;
  b.set("t", 3).set("at", 1).set("hint", "0,2");
  CHECK(b.str() == "at=1;hint=0,2;t=3");
  const auto fields = parse_key(b.str());
  CHECK(fields.at("hint") == "0,2");
  CHECK(fields.at("t") == "3");
  CHECK(terminal_flag(b.str()) == TerminalFlag::none);

  b.terminal(TerminalFlag::success);
  CHECK(terminal_flag(b.str()) == TerminalFlag::success);
  CHECK(is_terminal(b.str()));
  b.terminal(TerminalFlag::none);
  CHECK_FALSE(is_terminal(b.str()));
}

TEST_CASE("key builder rejects separators and the reserved field") {
  KeyBuilder b;
  CHECK_THROWS_AS(b.set("a;b", 1), std::invalid_argument);
  CHECK_THROWS_AS(b.set("a", "x=y"), std::invalid_argument);
  CHECK_THROWS_AS(b.set("term", "success"), std::invalid_argument);
  CHECK_THROWS_AS(parse_key("novalue"), std::invalid_argument);
}

TEST_CASE("terminal flag needs an exact field match") {
  CHECK(terminal_flag("id=x;term=failure") == TerminalFlag::failure);
  CHECK(terminal_flag("term=success") == TerminalFlag::success);
  CHECK(terminal_flag("id=term=success") == TerminalFlag::none);
  CHECK(terminal_flag("id=x;term=successful") == TerminalFlag::none);
}

TEST_CASE("action kinds parse and order") {
  CHECK(ActionKind::parse("nohelp") == ActionKind::nohelp());
  CHECK(ActionKind::parse("help") == ActionKind::help(1));
  CHECK(ActionKind::parse("help2").index() == 2);
  CHECK(ActionKind::help(3).str() == "help3");
  CHECK(ActionKind::nohelp() < ActionKind::help(1));
  CHECK_THROWS_AS(ActionKind::parse("assist"), std::invalid_argument);
  CHECK_THROWS_AS(ActionKind::help(0), std::invalid_argument);
}

TEST_CASE("transition counting follows each episode to its terminal") {
  const auto a = named_state("a");
  const auto b = named_state("b");
  const auto ok = named_state("ok", TerminalFlag::success);
  RolloutLog log{episode("t", {{a, 0}, {b, 1}}, ok),
                 episode("t", {{a, 0}, {a, 0}}, ok)};
  const auto counts = count_transitions(log);
  CHECK(counts.count(a, ActionKind::nohelp(), b) == 1);
  CHECK(counts.count(a, ActionKind::nohelp(), a) == 1);
  CHECK(counts.count(a, ActionKind::nohelp(), ok) == 1);
  CHECK(counts.count(b, ActionKind::help(1), ok) == 1);
  CHECK(counts.total() == 4);

  CHECK_THROWS_AS(record_transition(counts, ok, ActionKind::nohelp(), a),
                  std::invalid_argument);
}

TEST_CASE("normalize divides counts by row totals") {
  const auto a = named_state("a");
  const auto b = named_state("b");
  const auto c = named_state("c", TerminalFlag::failure);
  CountTable counts;
  counts.record(a, ActionKind::nohelp(), b, 3);
  counts.record(a, ActionKind::nohelp(), c, 1);
  counts.record(a, ActionKind::help(1), b, 2);
  const auto model = normalize(counts);
  const auto* row = model.row(a, ActionKind::nohelp());
  REQUIRE(row != nullptr);
  REQUIRE(row->size() == 2);
  CHECK((*row)[0].second == doctest::Approx(0.75).epsilon(1e-15));
  CHECK((*row)[1].second == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(model.row(b, ActionKind::nohelp()) == nullptr);
  CHECK(model.interventions() == 1);

  SUBCASE("laplace smoothing spreads over next states of the same source") {
    const auto smoothed = normalize(counts, 1.0);
    const auto* help = smoothed.row(a, ActionKind::help(1));
    REQUIRE(help->size() == 2);
    // counts (2, 0) plus one each over {b, c}
    CHECK((*help)[0].second == doctest::Approx(3.0 / 4.0));
    CHECK((*help)[1].second == doctest::Approx(1.0 / 4.0));
  }

  CHECK_THROWS_WITH(normalize(CountTable{}), "no data");
}

TEST_CASE("normalized rows sum to one for awkward counts") {
  CountTable counts;
  const auto a = named_state("a");
  for (int i = 0; i < 7; ++i) {
    counts.record(a, ActionKind::nohelp(), named_state("n" + std::to_string(i)),
                  static_cast<std::uint64_t>(3 * i + 1));
  }
  const auto model = normalize(counts);
  double sum = 0.0;
  for (const auto& [next, p] : *model.row(a, ActionKind::nohelp())) sum += p;
  CHECK(std::abs(sum - 1.0) <= 1e-12);
}

TEST_CASE("transition rows are validated") {
  TransitionModel model;
  const auto a = named_state("a");
  const auto t = named_state("t", TerminalFlag::success);
  CHECK_THROWS_AS(model.set_row(a, ActionKind::nohelp(), {{t, 0.5}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(model.set_row(a, ActionKind::nohelp(), {{t, 1.5}, {a, -0.5}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(model.set_row(t, ActionKind::nohelp(), {{a, 1.0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(model.set_row(a, ActionKind::nohelp(), {{t, 0.5}, {t, 0.5}}),
                  std::invalid_argument);
}

TEST_CASE("success estimation counts every visit per branch") {
  const auto a = named_state("a");
  const auto b = named_state("b");
  const auto ok = named_state("ok", TerminalFlag::success);
  const auto bad = named_state("bad", TerminalFlag::failure);
  RolloutLog log{episode("t", {{a, 0}, {b, 1}}, ok),
                 episode("t", {{a, 0}, {a, 1}}, bad),
                 episode("t", {{a, 1}}, ok)};
  const auto success = estimate_success(log);
  // a/nohelp: visits in episodes 1, 2 -> 1 of 2 succeed
  CHECK(*success.p(a, ActionKind::nohelp()) == doctest::Approx(0.5));
  CHECK(success.entry(a, ActionKind::nohelp())->n == 2);
  // a/help: episode 2 (fail) and 3 (success)
  CHECK(*success.p(a, ActionKind::help(1)) == doctest::Approx(0.5));
  CHECK(*success.p(b, ActionKind::help(1)) == doctest::Approx(1.0));
  CHECK_FALSE(success.p(b, ActionKind::nohelp()).has_value());
  CHECK(*success.p(ok, ActionKind::nohelp()) == 1.0);
  CHECK(*success.p(bad, ActionKind::help(1)) == 0.0);

  RolloutLog broken{episode("cut", {{a, 0}}, "")};
  CHECK_THROWS_WITH_AS(estimate_success(broken),
                       doctest::Contains("cut"), std::invalid_argument);
}

TEST_CASE("tabular MDP indexes states in key order with leaf handling") {
  const auto a = named_state("a");
  const auto leaf = named_state("leaf");
  const auto ok = named_state("ok", TerminalFlag::success);
  TransitionModel model;
  model.set_row(a, ActionKind::nohelp(), {{leaf, 0.5}, {ok, 0.5}});
  model.set_row(a, ActionKind::help(1), {{ok, 1.0}});
  SuccessModel success;
  success.set(leaf, ActionKind::nohelp(), 0.25, 4);
  const auto mdp = Mdp::from_model(model, &success);
  REQUIRE(mdp.size() == 3);
  CHECK(mdp.states().keys() == std::vector<std::string>{a, leaf, ok});
  const auto ia = mdp.states().at(a);
  const auto il = mdp.states().at(leaf);
  const auto io = mdp.states().at(ok);
  CHECK(mdp.terminal(io));
  CHECK(mdp.is_leaf(il));
  CHECK_FALSE(mdp.is_leaf(ia));
  CHECK(mdp.leaf_success()(il) == 0.25);
  CHECK(mdp.terminal_success()(io) == 1.0);
  CHECK(mdp.kernel(0).coeff(ia, il) == 0.5);
  CHECK(mdp.kernel(1).coeff(ia, io) == 1.0);
  CHECK(mdp.has_row(ia, 1));
  CHECK_FALSE(mdp.has_row(il, 0));
  CHECK(std::isnan(mdp.success_prob(ia, 0)));
  CHECK_THROWS_AS(mdp.states().at("id=missing"), std::out_of_range);
}
