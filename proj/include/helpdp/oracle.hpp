#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "helpdp/planner.hpp"
#include "helpdp/tabular_mdp.hpp"

namespace helpdp {

template <typename Scalar>
struct PolicyEvaluation {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> value;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> success;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> usage;  // n x K
};

// Solves the linear policy-evaluation systems for S, V and every M^i under a
// fixed deterministic policy by dense LU with partial pivoting. V is solved
// from its own reward recursion, so V = S - Σ r_i M^i is a check, not an
// identity of the code.
template <typename Scalar>
PolicyEvaluation<Scalar> exact_policy_eval(const TabularMdp<Scalar>& mdp,
                                           const Eigen::VectorXi& policy,
                                           const RewardConfig& cfg) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Index n = mdp.size();
  const int k = mdp.interventions();
  cfg.validate(k);
  if (policy.size() != n) throw std::invalid_argument("policy size mismatch");

  Matrix system = Matrix::Identity(n, n);
  Matrix rhs = Matrix::Zero(n, 2 + k);  // columns: S, V, M^1..M^K
  const Scalar gamma = static_cast<Scalar>(cfg.gamma);
  for (Index s = 0; s < n; ++s) {
    if (mdp.terminal(s) || mdp.is_leaf(s)) {
      const Scalar b = mdp.terminal_success()(s) + mdp.leaf_success()(s);
      rhs(s, 0) = b;
      rhs(s, 1) = b;
      continue;
    }
    const int a = policy(s);
    if (a < 0 || a > k || !mdp.has_row(s, a)) {
      throw std::invalid_argument("policy action has no row at " +
                                  mdp.states().key(s));
    }
    for (typename TabularMdp<Scalar>::Kernel::InnerIterator it(mdp.kernel(a), s);
         it; ++it) {
      system(s, it.col()) -= gamma * it.value();
    }
    if (a > 0) {
      rhs(s, 1) = -static_cast<Scalar>(cfg.r[static_cast<std::size_t>(a - 1)]);
      rhs(s, 1 + a) = Scalar(1);
    }
  }

  Eigen::PartialPivLU<Matrix> lu(system);
  if (n > 0 && !(static_cast<double>(lu.rcond()) > 1e-13)) {
    throw std::runtime_error(
        "singular policy-evaluation system (improper policy under gamma=1)");
  }
  const Matrix x = n > 0 ? Matrix(lu.solve(rhs)) : Matrix(0, 2 + k);

  PolicyEvaluation<Scalar> out;
  out.success = x.col(0);
  out.value = x.col(1);
  out.usage = x.rightCols(k);
  return out;
}

template <typename Scalar>
struct EnumerationReport {
  std::size_t policy_count = 0;
  std::vector<Eigen::VectorXi> policies;
  std::vector<std::vector<double>> start_values;  // per policy, per start
  Eigen::VectorXi best_policy;                    // maximizes Σ start values
  std::vector<double> best_start_values;
  // Elementwise maximum of V over all enumerated policies.
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> best_state_values;
};

inline constexpr int kEnumerationCap = 12;

// Exhaustive search over all deterministic stationary policies (restricted to
// actions with observed rows).
template <typename Scalar>
EnumerationReport<Scalar> brute_force_optimal(
    const TabularMdp<Scalar>& mdp, const RewardConfig& cfg,
    const std::vector<std::string>& starts, int cap = kEnumerationCap) {
  std::vector<Index> free_states;
  std::vector<std::vector<int>> options;
  for (Index s = 0; s < mdp.size(); ++s) {
    if (mdp.terminal(s) || mdp.is_leaf(s)) continue;
    free_states.push_back(s);
    std::vector<int> acts;
    for (int a = 0; a < mdp.actions(); ++a) {
      if (mdp.has_row(s, a)) acts.push_back(a);
    }
    options.push_back(std::move(acts));
  }
  if (static_cast<int>(free_states.size()) > cap) {
    throw std::invalid_argument("enumeration cap exceeded: " +
                                std::to_string(free_states.size()) +
                                " non-terminal states > " + std::to_string(cap));
  }
  std::vector<Index> start_index;
  for (const auto& key : starts) start_index.push_back(mdp.states().at(key));

  EnumerationReport<Scalar> report;
  report.best_state_values = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Constant(
      mdp.size(), -std::numeric_limits<Scalar>::infinity());
  std::vector<std::size_t> digit(free_states.size(), 0);
  double best_total = -std::numeric_limits<double>::infinity();
  while (true) {
    Eigen::VectorXi policy = Eigen::VectorXi::Zero(mdp.size());
    for (std::size_t j = 0; j < free_states.size(); ++j) {
      policy(free_states[j]) = options[j][digit[j]];
    }
    const auto eval = exact_policy_eval(mdp, policy, cfg);
    std::vector<double> values;
    double total = 0.0;
    for (Index s : start_index) {
      values.push_back(static_cast<double>(eval.value(s)));
      total += values.back();
    }
    report.best_state_values = report.best_state_values.cwiseMax(eval.value);
    if (total > best_total) {
      best_total = total;
      report.best_policy = policy;
      report.best_start_values = values;
    }
    report.policies.push_back(std::move(policy));
    report.start_values.push_back(std::move(values));
    ++report.policy_count;

    std::size_t j = 0;
    while (j < digit.size() && ++digit[j] == options[j].size()) {
      digit[j] = 0;
      ++j;
    }
    if (j == digit.size()) break;
  }
  return report;
}

struct RandomMdpConfig {
  int min_states = 2;
  int max_states = 10;
  int interventions = 1;
  int min_branching = 2;
  int max_branching = 4;
};

// Random MDP with keys id=x<j> plus one success and one failure terminal.
// Every (state, action) row has 2-4 successors with random weights.
TransitionModel random_mdp(const RandomMdpConfig& config, std::uint64_t seed);

std::string random_mdp_start();

struct EpisodeSample {
  double success = 0.0;  // discounted success indicator
  double usage = 0.0;    // discounted intervention count
};

struct MonteCarloEstimate {
  std::size_t n = 0;
  double success_mean = 0.0;
  double success_se = 0.0;
  double usage_mean = 0.0;
  double usage_se = 0.0;
};

using Rng = std::mt19937_64;

// Episode i draws from an engine seeded with (seed, i); SE = sample std / √n.
MonteCarloEstimate monte_carlo_estimate(
    const std::function<EpisodeSample(Rng&)>& behavior, std::size_t n,
    std::uint64_t seed);

// Samples one episode of a fixed policy on a tabular MDP.
EpisodeSample sample_policy_episode(const Mdp& mdp, const Eigen::VectorXi& policy,
                                    Index start, double gamma, Rng& rng,
                                    int max_steps = 100000);

}  // namespace helpdp
