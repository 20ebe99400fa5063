#pragma once

#include <string>
#include <vector>

#include "helpdp/models.hpp"
#include "helpdp/oracle.hpp"
#include "helpdp/planner.hpp"
#include "helpdp/tabular_mdp.hpp"

namespace fixtures {

using helpdp::ActionKind;
using helpdp::named_state;
using helpdp::SuccessModel;
using helpdp::TerminalFlag;
using helpdp::TransitionModel;

inline const std::string kSucc = named_state("succ", TerminalFlag::success);
inline const std::string kFail = named_state("fail", TerminalFlag::failure);

struct ToyMdp {
  TransitionModel model;
  SuccessModel success{helpdp::Provenance::exact};
  std::string start;

  helpdp::Mdp mdp() const { return helpdp::Mdp::from_model(model, &success); }
};

// One decision: nohelp succeeds w.p. 0.2, help w.p. 0.9.
inline ToyMdp mdp_a() {
  ToyMdp t;
  t.start = named_state("s0");
  t.model.set_row(t.start, ActionKind::nohelp(), {{kSucc, 0.2}, {kFail, 0.8}});
  t.model.set_row(t.start, ActionKind::help(1), {{kSucc, 0.9}, {kFail, 0.1}});
  t.success.set(t.start, ActionKind::nohelp(), 0.2, 0);
  t.success.set(t.start, ActionKind::help(1), 0.9, 0);
  return t;
}

// s0 -nohelp-> s1; s0 -help-> succ/s1 (1/2 each); s1 succeeds w.p. 0.1 without
// help and 0.8 with help.
inline ToyMdp mdp_b() {
  ToyMdp t;
  t.start = named_state("s0");
  const auto s1 = named_state("s1");
  t.model.set_row(t.start, ActionKind::nohelp(), {{s1, 1.0}});
  t.model.set_row(t.start, ActionKind::help(1), {{kSucc, 0.5}, {s1, 0.5}});
  t.model.set_row(s1, ActionKind::nohelp(), {{kSucc, 0.1}, {kFail, 0.9}});
  t.model.set_row(s1, ActionKind::help(1), {{kSucc, 0.8}, {kFail, 0.2}});
  t.success.set(t.start, ActionKind::nohelp(), 0.1, 0);
  t.success.set(t.start, ActionKind::help(1), 0.55, 0);
  t.success.set(s1, ActionKind::nohelp(), 0.1, 0);
  t.success.set(s1, ActionKind::help(1), 0.8, 0);
  return t;
}

// Three-state corridor T1 -> U -> T2. Help at T1 only pushes the agent to U,
// where the base actor tends to fall back into the hard state T2; help at U
// finishes the task outright.
inline ToyMdp corridor() {
  ToyMdp t;
  const auto t1 = named_state("T1");
  const auto u = named_state("U");
  const auto t2 = named_state("T2");
  t.start = t1;
  t.model.set_row(t1, ActionKind::nohelp(), {{u, 0.5}, {kFail, 0.5}});
  t.model.set_row(t1, ActionKind::help(1), {{u, 1.0}});
  t.model.set_row(u, ActionKind::nohelp(), {{t2, 0.9}, {kSucc, 0.1}});
  t.model.set_row(u, ActionKind::help(1), {{kSucc, 1.0}});
  t.model.set_row(t2, ActionKind::nohelp(), {{kSucc, 0.2}, {kFail, 0.8}});
  t.model.set_row(t2, ActionKind::help(1), {{kSucc, 0.3}, {kFail, 0.7}});
  // p(s, a): branch a at s, then the base actor.
  t.success.set(t2, ActionKind::nohelp(), 0.2, 0);
  t.success.set(t2, ActionKind::help(1), 0.3, 0);
  t.success.set(u, ActionKind::nohelp(), 0.9 * 0.2 + 0.1, 0);
  t.success.set(u, ActionKind::help(1), 1.0, 0);
  t.success.set(t1, ActionKind::nohelp(), 0.5 * (0.9 * 0.2 + 0.1), 0);
  t.success.set(t1, ActionKind::help(1), 0.9 * 0.2 + 0.1, 0);
  return t;
}

// Adds a help_{K+1} whose rows copy nohelp: it never changes the outcome and
// only costs budget.
inline TransitionModel with_dominated_help(const TransitionModel& model) {
  TransitionModel out = model;
  const int next = model.interventions() + 1;
  for (const auto& [key, dist] : model.rows()) {
    if (key.second == ActionKind::nohelp()) {
      out.set_row(key.first, ActionKind::help(next), dist);
    }
  }
  return out;
}

inline helpdp::RewardConfig tight(std::vector<double> r, double gamma) {
  helpdp::RewardConfig cfg;
  cfg.r = std::move(r);
  cfg.gamma = gamma;
  cfg.epsilon = 1e-13;
  cfg.max_iters = 200000;
  return cfg;
}

}  // namespace fixtures
