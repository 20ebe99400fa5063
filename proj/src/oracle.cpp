#include "helpdp/oracle.hpp"

#include <algorithm>
#include <numeric>

namespace helpdp {

namespace {

const std::string kSuccess = named_state("succ", TerminalFlag::success);
const std::string kFailure = named_state("fail", TerminalFlag::failure);

std::string random_state_name(int j) { return named_state("x" + std::to_string(j)); }

}  // namespace

std::string random_mdp_start() { return random_state_name(0); }

TransitionModel random_mdp(const RandomMdpConfig& config, std::uint64_t seed) {
  if (config.min_states < 1 || config.max_states < config.min_states ||
      config.min_branching < 1 || config.max_branching < config.min_branching ||
      config.interventions < 1) {
    throw std::invalid_argument("invalid random MDP config");
  }
  Rng rng(seed);
  const int n = std::uniform_int_distribution<int>(config.min_states,
                                                   config.max_states)(rng);
  std::vector<std::string> targets;
  for (int j = 0; j < n; ++j) targets.push_back(random_state_name(j));
  targets.push_back(kSuccess);
  targets.push_back(kFailure);

  TransitionModel model;
  std::uniform_real_distribution<double> weight(0.05, 1.0);
  for (int j = 0; j < n; ++j) {
    for (int a = 0; a <= config.interventions; ++a) {
      const int branching = std::min<int>(
          static_cast<int>(targets.size()),
          std::uniform_int_distribution<int>(config.min_branching,
                                             config.max_branching)(rng));
      std::vector<std::size_t> order(targets.size());
      std::iota(order.begin(), order.end(), 0);
      // Partial Fisher-Yates.
      for (int b = 0; b < branching; ++b) {
        const auto pick = std::uniform_int_distribution<std::size_t>(
            static_cast<std::size_t>(b), order.size() - 1)(rng);
        std::swap(order[static_cast<std::size_t>(b)], order[pick]);
      }
      std::vector<double> w(static_cast<std::size_t>(branching));
      for (auto& x : w) x = weight(rng);
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      TransitionModel::Distribution dist;
      for (int b = 0; b < branching; ++b) {
        dist.emplace_back(targets[order[static_cast<std::size_t>(b)]],
                          w[static_cast<std::size_t>(b)] / total);
      }
      model.set_row(targets[static_cast<std::size_t>(j)],
                    ActionKind::from_index(a), std::move(dist));
    }
  }
  return model;
}

MonteCarloEstimate monte_carlo_estimate(
    const std::function<EpisodeSample(Rng&)>& behavior, std::size_t n,
    std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("monte_carlo_estimate needs n >= 1");
  double s_sum = 0.0, s_sq = 0.0, u_sum = 0.0, u_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i),
                      static_cast<std::uint32_t>(i >> 32)};
    Rng rng(seq);
    const auto sample = behavior(rng);
    s_sum += sample.success;
    s_sq += sample.success * sample.success;
    u_sum += sample.usage;
    u_sq += sample.usage * sample.usage;
  }
  const double dn = static_cast<double>(n);
  auto se = [&](double sum, double sq) {
    if (n < 2) return 0.0;
    const double mean = sum / dn;
    const double var = std::max(0.0, (sq - dn * mean * mean) / (dn - 1.0));
    return std::sqrt(var / dn);
  };
  MonteCarloEstimate out;
  out.n = n;
  out.success_mean = s_sum / dn;
  out.usage_mean = u_sum / dn;
  out.success_se = se(s_sum, s_sq);
  out.usage_se = se(u_sum, u_sq);
  return out;
}

EpisodeSample sample_policy_episode(const Mdp& mdp, const Eigen::VectorXi& policy,
                                    Index start, double gamma, Rng& rng,
                                    int max_steps) {
  EpisodeSample out;
  Index s = start;
  double discount = 1.0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int t = 0; t < max_steps; ++t) {
    if (mdp.terminal(s)) {
      if (mdp.states().flag(s) == TerminalFlag::success) out.success = discount;
      return out;
    }
    if (mdp.is_leaf(s)) {
      out.success = discount * mdp.leaf_success()(s);
      return out;
    }
    const int a = policy(s);
    if (a > 0) out.usage += discount;
    const double u = unit(rng);
    double acc = 0.0;
    Index next = -1;
    for (Mdp::Kernel::InnerIterator it(mdp.kernel(a), s); it; ++it) {
      next = it.col();
      acc += it.value();
      if (u < acc) break;
    }
    if (next < 0) throw std::runtime_error("policy action without row");
    s = next;
    discount *= gamma;
  }
  return out;
}

}  // namespace helpdp
