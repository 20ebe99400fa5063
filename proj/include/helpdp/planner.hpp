#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "helpdp/tabular_mdp.hpp"

namespace helpdp {

enum class ThresholdVariant { paper_literal, value_consistent };

std::string_view to_string(ThresholdVariant variant);
ThresholdVariant parse_variant(std::string_view text);

struct RewardConfig {
  std::vector<double> r{0.0};  // r_i per intervention, size K
  double gamma = 0.99;
  double epsilon = 1e-8;
  int max_iters = 10000;
  ThresholdVariant variant = ThresholdVariant::value_consistent;
  // When set, states with partial rows choose among their observed actions
  // and row-less states are leaves. Otherwise a missing row is an error.
  bool allow_missing_rows = false;

  void validate(int interventions) const;
};

class PlannerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BudgetInfeasible : public PlannerError {
 public:
  BudgetInfeasible(double usage_at_hi, double budget)
      : PlannerError("budget infeasible within bounds: E[U](r_hi)=" +
                     std::to_string(usage_at_hi) +
                     " > C=" + std::to_string(budget)),
        usage_at_hi_(usage_at_hi) {}
  double usage_at_hi() const { return usage_at_hi_; }

 private:
  double usage_at_hi_;
};

// Branch comparisons closer than this are ties and resolve to the lower
// action index (nohelp first).
inline constexpr double kTieTolerance = 1e-12;
// |ΔM| below this makes the probability-weighted rule fall back to nohelp.
inline constexpr double kLiteralUsageFloor = 1e-9;

template <typename Scalar>
struct Solution {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  std::shared_ptr<const StateIndex> states;
  Matrix usage;             // n x K, M_s^i
  Vector success;           // S_s
  Vector value;             // V_s, from its own recursion
  Eigen::VectorXi policy;   // action index per state, 0 at terminals/leaves
  std::vector<double> r;
  double gamma = 1.0;
  ThresholdVariant variant = ThresholdVariant::value_consistent;
  int iterations_run = 0;
  bool converged = false;
  std::vector<double> expected_usage;
  // Max-norm change and number of policy flips per sweep.
  std::vector<Scalar> residual_trace;
  std::vector<int> policy_changes;

  Index size() const { return states->size(); }
  ActionKind action(const std::string& key) const {
    return ActionKind::from_index(policy(states->at(key)));
  }
  Scalar total_usage(Index s) const { return usage.row(s).sum(); }
};

template <typename Scalar>
struct ValueIterationResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> value;
  Eigen::VectorXi policy;
  int iterations_run = 0;
  bool converged = false;
};

namespace detail {

template <typename Scalar>
void check_rows(const TabularMdp<Scalar>& mdp, const RewardConfig& cfg) {
  if (cfg.allow_missing_rows) return;
  for (Index s = 0; s < mdp.size(); ++s) {
    if (mdp.terminal(s)) continue;
    for (int a = 0; a < mdp.actions(); ++a) {
      if (!mdp.has_row(s, a)) {
        throw PlannerError("missing action row: " + mdp.states().key(s) +
                           " (" + ActionKind::from_index(a).str() + ")");
      }
    }
  }
}

// Under gamma = 1 every stationary policy must reach a terminal or leaf.
// Finds the largest set of non-terminal states some policy can stay in
// forever; it is empty iff every policy is proper.
template <typename Scalar>
std::optional<Index> find_trap_state(const TabularMdp<Scalar>& mdp) {
  const Index n = mdp.size();
  std::vector<char> in(static_cast<std::size_t>(n), 0);
  for (Index s = 0; s < n; ++s) {
    in[static_cast<std::size_t>(s)] = !mdp.terminal(s) && !mdp.is_leaf(s);
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (Index s = 0; s < n; ++s) {
      if (!in[static_cast<std::size_t>(s)]) continue;
      bool can_stay = false;
      for (int a = 0; a < mdp.actions() && !can_stay; ++a) {
        if (!mdp.has_row(s, a)) continue;
        bool closed = true;
        for (typename TabularMdp<Scalar>::Kernel::InnerIterator it(
                 mdp.kernel(a), s);
             it; ++it) {
          if (it.value() > Scalar(0) &&
              !in[static_cast<std::size_t>(it.col())]) {
            closed = false;
            break;
          }
        }
        can_stay = closed;
      }
      if (!can_stay) {
        in[static_cast<std::size_t>(s)] = 0;
        changed = true;
      }
    }
  }
  for (Index s = 0; s < n; ++s) {
    if (in[static_cast<std::size_t>(s)]) return s;
  }
  return std::nullopt;
}

template <typename Scalar>
void check_proper(const TabularMdp<Scalar>& mdp, const RewardConfig& cfg) {
  if (cfg.gamma < 1.0) return;
  if (auto s = find_trap_state(mdp)) {
    throw PlannerError("improper chain: non-absorbing recurrent class at " +
                       mdp.states().key(*s));
  }
}

template <typename Scalar>
int first_available(const TabularMdp<Scalar>& mdp, Index s) {
  for (int a = 0; a < mdp.actions(); ++a) {
    if (mdp.has_row(s, a)) return a;
  }
  return 0;
}

}  // namespace detail

// Usage/policy iteration for K >= 1 interventions. Jacobi sweeps over
//   M^i(a) = [a == i] + γ P_a M^i,  S(a) = γ P_a S,  V(a) = -r_a + γ P_a V
// with the branch chosen per `cfg.variant`:
//   value_consistent: help_a is a candidate iff ΔS - Σ r_i ΔM^i > 0 against
//     nohelp; the candidate with the largest S - Σ r_i M^i wins.
//   paper_literal: help_a is a candidate iff r_a < Δp / ΔM with
//     ΔM = p_a M^a(a) - p_0 M^a(nohelp) from the success model (nohelp when
//     |ΔM| < 1e-9); the candidate with the smallest Σ r_i M^i wins.
template <typename Scalar>
Solution<Scalar> solve_usage(const TabularMdp<Scalar>& mdp,
                             const RewardConfig& cfg) {
  using Vector = typename Solution<Scalar>::Vector;
  using Matrix = typename Solution<Scalar>::Matrix;

  const int k = mdp.interventions();
  cfg.validate(k);
  detail::check_rows(mdp, cfg);
  detail::check_proper(mdp, cfg);

  const Index n = mdp.size();
  const Scalar gamma = static_cast<Scalar>(cfg.gamma);
  std::vector<Scalar> r(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) r[static_cast<std::size_t>(i)] = static_cast<Scalar>(cfg.r[static_cast<std::size_t>(i)]);

  // Fixed boundary values: terminals and leaves.
  Vector boundary = mdp.terminal_success() + mdp.leaf_success();
  std::vector<char> free_state(static_cast<std::size_t>(n));
  for (Index s = 0; s < n; ++s) {
    free_state[static_cast<std::size_t>(s)] = !mdp.terminal(s) && !mdp.is_leaf(s);
    if (free_state[static_cast<std::size_t>(s)]) boundary(s) = Scalar(0);
  }

  Solution<Scalar> sol;
  sol.states = mdp.shared_states();
  sol.r = cfg.r;
  sol.gamma = cfg.gamma;
  sol.variant = cfg.variant;
  sol.usage = Matrix::Zero(n, k);
  sol.success = boundary;
  sol.value = boundary;
  sol.policy = Eigen::VectorXi::Zero(n);

  std::vector<Matrix> usage_by_action(static_cast<std::size_t>(k + 1));
  std::vector<Vector> success_by_action(static_cast<std::size_t>(k + 1));
  std::vector<Vector> value_by_action(static_cast<std::size_t>(k + 1));

  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    for (int a = 0; a <= k; ++a) {
      const auto& P = mdp.kernel(a);
      auto& Ma = usage_by_action[static_cast<std::size_t>(a)];
      Ma = gamma * (P * sol.usage);
      if (a > 0) Ma.col(a - 1).array() += Scalar(1);
      success_by_action[static_cast<std::size_t>(a)] = gamma * (P * sol.success);
      auto& Va = value_by_action[static_cast<std::size_t>(a)];
      Va = gamma * (P * sol.value);
      if (a > 0) Va.array() -= r[static_cast<std::size_t>(a - 1)];
    }

    Matrix next_usage = Matrix::Zero(n, k);
    Vector next_success = boundary;
    Vector next_value = boundary;
    Eigen::VectorXi next_policy = Eigen::VectorXi::Zero(n);

    for (Index s = 0; s < n; ++s) {
      if (!free_state[static_cast<std::size_t>(s)]) continue;
      const bool nohelp_ok = mdp.has_row(s, 0);
      auto combined_cost = [&](int a) {
        Scalar cost(0);
        for (int i = 0; i < k; ++i) {
          cost += r[static_cast<std::size_t>(i)] *
                  usage_by_action[static_cast<std::size_t>(a)](s, i);
        }
        return cost;
      };
      auto net_value = [&](int a) {
        return success_by_action[static_cast<std::size_t>(a)](s) -
               combined_cost(a);
      };

      int best = nohelp_ok ? 0 : -1;
      for (int a = 1; a <= k; ++a) {
        if (!mdp.has_row(s, a)) continue;
        bool candidate = !nohelp_ok;
        if (nohelp_ok) {
          if (cfg.variant == ThresholdVariant::value_consistent) {
            Scalar gap = success_by_action[static_cast<std::size_t>(a)](s) -
                         success_by_action[0](s);
            for (int i = 0; i < k; ++i) {
              gap -= r[static_cast<std::size_t>(i)] *
                     (usage_by_action[static_cast<std::size_t>(a)](s, i) -
                      usage_by_action[0](s, i));
            }
            candidate = gap > Scalar(kTieTolerance);
          } else {
            const Scalar p_help = mdp.success_prob(s, a);
            const Scalar p_nohelp = mdp.success_prob(s, 0);
            if (!std::isnan(static_cast<double>(p_help)) &&
                !std::isnan(static_cast<double>(p_nohelp))) {
              const Scalar dp = p_help - p_nohelp;
              const Scalar dm =
                  p_help * usage_by_action[static_cast<std::size_t>(a)](s, a - 1) -
                  p_nohelp * usage_by_action[0](s, a - 1);
              candidate = std::abs(static_cast<double>(dm)) >= kLiteralUsageFloor &&
                          r[static_cast<std::size_t>(a - 1)] < dp / dm;
            }
          }
        }
        if (!candidate) continue;
        if (best <= 0) {
          best = a;
        } else if (cfg.variant == ThresholdVariant::value_consistent) {
          if (net_value(a) > net_value(best) + Scalar(kTieTolerance)) best = a;
        } else {
          if (combined_cost(a) < combined_cost(best) - Scalar(kTieTolerance)) {
            best = a;
          }
        }
      }
      if (best < 0) best = detail::first_available(mdp, s);

      next_policy(s) = best;
      next_usage.row(s) = usage_by_action[static_cast<std::size_t>(best)].row(s);
      next_success(s) = success_by_action[static_cast<std::size_t>(best)](s);
      next_value(s) = value_by_action[static_cast<std::size_t>(best)](s);
    }

    Scalar delta(0);
    if (n > 0) {
      delta = std::max({(next_usage - sol.usage).cwiseAbs().maxCoeff(),
                        (next_success - sol.success).cwiseAbs().maxCoeff(),
                        (next_value - sol.value).cwiseAbs().maxCoeff()});
    }
    sol.policy_changes.push_back(
        static_cast<int>((next_policy.array() != sol.policy.array()).count()));
    sol.residual_trace.push_back(delta);
    sol.usage = std::move(next_usage);
    sol.success = std::move(next_success);
    sol.value = std::move(next_value);
    sol.policy = std::move(next_policy);
    sol.iterations_run = iter;
    if (delta < static_cast<Scalar>(cfg.epsilon)) {
      sol.converged = true;
      break;
    }
  }
  return sol;
}

template <typename Scalar>
Solution<Scalar> usage_policy_iteration(const TabularMdp<Scalar>& mdp,
                                        const RewardConfig& cfg) {
  if (mdp.interventions() != 1) {
    throw std::invalid_argument(
        "usage_policy_iteration expects one intervention; use "
        "multi_usage_policy_iteration");
  }
  return solve_usage(mdp, cfg);
}

template <typename Scalar>
Solution<Scalar> multi_usage_policy_iteration(const TabularMdp<Scalar>& mdp,
                                              const RewardConfig& cfg) {
  if (mdp.interventions() < 2) {
    throw std::invalid_argument("multi_usage_policy_iteration expects K >= 2");
  }
  return solve_usage(mdp, cfg);
}

// Q(s,a) = -r_a + γ Σ P_a(s'|s) V(s'); NaN where (s,a) has no row.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> action_values(
    const TabularMdp<Scalar>& mdp,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& value,
    const RewardConfig& cfg) {
  const int k = mdp.interventions();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> q(mdp.size(), k + 1);
  const Scalar gamma = static_cast<Scalar>(cfg.gamma);
  for (int a = 0; a <= k; ++a) {
    q.col(a) = gamma * (mdp.kernel(a) * value);
    if (a > 0) q.col(a).array() -= static_cast<Scalar>(cfg.r[static_cast<std::size_t>(a - 1)]);
    for (Index s = 0; s < mdp.size(); ++s) {
      if (!mdp.has_row(s, a)) q(s, a) = std::numeric_limits<Scalar>::quiet_NaN();
    }
  }
  return q;
}

// Reference Bellman-optimality solver under +1 success / 0 failure / -r_i per
// help_i. Ties resolve to the lower action index.
template <typename Scalar>
ValueIterationResult<Scalar> value_iteration(const TabularMdp<Scalar>& mdp,
                                             const RewardConfig& cfg) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  cfg.validate(mdp.interventions());
  detail::check_rows(mdp, cfg);
  detail::check_proper(mdp, cfg);

  const Index n = mdp.size();
  const Vector boundary = mdp.terminal_success() + mdp.leaf_success();
  ValueIterationResult<Scalar> out;
  out.value = boundary;
  out.policy = Eigen::VectorXi::Zero(n);
  for (Index s = 0; s < n; ++s) {
    if (!mdp.terminal(s) && !mdp.is_leaf(s)) out.value(s) = Scalar(0);
  }

  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    const auto q = action_values(mdp, out.value, cfg);
    Vector next = boundary;
    for (Index s = 0; s < n; ++s) {
      if (mdp.terminal(s) || mdp.is_leaf(s)) continue;
      int best = -1;
      for (int a = 0; a < mdp.actions(); ++a) {
        if (!mdp.has_row(s, a)) continue;
        if (best < 0 || q(s, a) > q(s, best) + Scalar(kTieTolerance)) best = a;
      }
      out.policy(s) = best;
      next(s) = q(s, best);
    }
    const Scalar delta =
        n > 0 ? (next - out.value).cwiseAbs().maxCoeff() : Scalar(0);
    out.value = std::move(next);
    out.iterations_run = iter;
    if (delta < static_cast<Scalar>(cfg.epsilon)) {
      out.converged = true;
      break;
    }
  }
  return out;
}

// Mean of M^i over the start states, one entry per intervention.
template <typename Scalar>
std::vector<double> expected_usage(const Solution<Scalar>& sol,
                                   const std::vector<std::string>& starts) {
  if (starts.empty()) throw std::invalid_argument("no start states");
  std::vector<double> eu(static_cast<std::size_t>(sol.usage.cols()), 0.0);
  for (const auto& key : starts) {
    const auto s = sol.states->find(key);
    if (!s) throw std::invalid_argument("unknown start state: " + key);
    for (Index i = 0; i < sol.usage.cols(); ++i) {
      eu[static_cast<std::size_t>(i)] += static_cast<double>(sol.usage(*s, i));
    }
  }
  for (auto& x : eu) x /= static_cast<double>(starts.size());
  return eu;
}

// max_s |V_s - (S_s - Σ_i r_i M_s^i)|
template <typename Scalar>
double decomposition_residual(const Solution<Scalar>& sol) {
  double worst = 0.0;
  for (Index s = 0; s < sol.size(); ++s) {
    double reconstructed = static_cast<double>(sol.success(s));
    for (Index i = 0; i < sol.usage.cols(); ++i) {
      reconstructed -= sol.r[static_cast<std::size_t>(i)] *
                       static_cast<double>(sol.usage(s, i));
    }
    worst = std::max(worst,
                     std::abs(static_cast<double>(sol.value(s)) - reconstructed));
  }
  return worst;
}

struct SearchProbe {
  double r = 0.0;
  double usage = 0.0;  // Σ_i E[U_i]
  bool feasible = false;
};

template <typename Scalar>
struct SearchResult {
  double r = 0.0;
  Solution<Scalar> solution;
  std::vector<SearchProbe> probes;
  // Tightest bracket found: largest infeasible r and smallest feasible r.
  std::optional<SearchProbe> infeasible_side;
  SearchProbe feasible_side;
};

struct SearchBounds {
  double r_lo = 0.0;
  double r_hi = 10.0;
  double usage_tol = 0.0;
  int max_steps = 60;
};

// Bisection on the feasibility of Σ_i E[U_i](r) <= C, with every r_i set to
// r. E[U] is a non-increasing step function of r, so the result is the
// smallest probed feasible r (maximal feasible usage among probes).
template <typename Scalar>
SearchResult<Scalar> reward_search(const TabularMdp<Scalar>& mdp,
                                   const std::vector<std::string>& starts,
                                   double budget, const SearchBounds& bounds,
                                   RewardConfig cfg) {
  if (!(bounds.r_lo >= 0.0) || !(bounds.r_hi > bounds.r_lo)) {
    throw std::invalid_argument("reward bounds must satisfy 0 <= r_lo < r_hi");
  }
  if (!std::isfinite(budget) || budget < 0.0) {
    throw std::invalid_argument("budget must be finite and >= 0");
  }
  SearchResult<Scalar> out;
  auto probe = [&](double r) {
    cfg.r.assign(static_cast<std::size_t>(mdp.interventions()), r);
    auto sol = solve_usage(mdp, cfg);
    sol.expected_usage = expected_usage(sol, starts);
    double total = 0.0;
    for (double u : sol.expected_usage) total += u;
    const SearchProbe p{r, total, total <= budget + bounds.usage_tol};
    out.probes.push_back(p);
    return std::make_pair(p, std::move(sol));
  };

  auto [hi_probe, hi_sol] = probe(bounds.r_hi);
  if (!hi_probe.feasible) throw BudgetInfeasible(hi_probe.usage, budget);
  auto [lo_probe, lo_sol] = probe(bounds.r_lo);
  if (lo_probe.feasible) {
    out.r = bounds.r_lo;
    out.solution = std::move(lo_sol);
    out.feasible_side = lo_probe;
    return out;
  }
  SearchProbe lo = lo_probe;
  SearchProbe hi = hi_probe;
  Solution<Scalar> best = std::move(hi_sol);
  for (int step = 0; step < bounds.max_steps; ++step) {
    const double mid = 0.5 * (lo.r + hi.r);
    if (mid <= lo.r || mid >= hi.r) break;
    auto [mid_probe, mid_sol] = probe(mid);
    if (mid_probe.feasible) {
      hi = mid_probe;
      best = std::move(mid_sol);
    } else {
      lo = mid_probe;
    }
  }
  out.r = hi.r;
  out.solution = std::move(best);
  out.infeasible_side = lo;
  out.feasible_side = hi;
  return out;
}

}  // namespace helpdp
