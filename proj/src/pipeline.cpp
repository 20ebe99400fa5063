#include "helpdp/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

namespace helpdp {

bool ActorSuite::uses_mcts() const {
  return std::find(interventions.begin(), interventions.end(),
                   InterventionKind::mcts) != interventions.end();
}

ActorSuite make_actors(const EnvConfig& env,
                       std::vector<InterventionKind> interventions) {
  env.validate();
  if (interventions.empty()) {
    throw std::invalid_argument("at least one intervention is required");
  }
  ActorSuite actors;
  actors.env = env;
  actors.interventions = std::move(interventions);
  actors.q = noisy_ground_truth_q(
      std::make_shared<BaseSuccessOracle>(env.base_noise), env.mcts_q_noise);
  return actors;
}

RandomInterventionPolicy::RandomInterventionPolicy(std::vector<double> probs)
    : probs_(std::move(probs)) {
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument("intervention probability outside [0, 1]");
    }
    total += p;
  }
  if (total > 1.0 + 1e-12) {
    throw std::invalid_argument("intervention probabilities sum above 1");
  }
}

int RandomInterventionPolicy::choose(const Task&, const EnvState&,
                                     const std::string&, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    acc += probs_[i];
    if (u < acc) return static_cast<int>(i) + 1;
  }
  return 0;
}

namespace {

Rng seeded(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), stream};
  return Rng(seq);
}

int pick_intervention(int k, Rng& rng) {
  return k == 1 ? 1 : std::uniform_int_distribution<int>(1, k)(rng);
}

class AlwaysHelpPolicy : public InterventionPolicy {
 public:
  explicit AlwaysHelpPolicy(int k) : k_(k) {}
  int choose(const Task&, const EnvState&, const std::string&,
             Rng& rng) override {
    return pick_intervention(k_, rng);
  }

 private:
  int k_;
};

double sample_se(double sum, double sq, std::size_t n) {
  if (n < 2) return 0.0;
  const double dn = static_cast<double>(n);
  const double mean = sum / dn;
  return std::sqrt(std::max(0.0, (sq - dn * mean * mean) / (dn - 1.0)) / dn);
}

}  // namespace

Episode run_episode(const Task& task, const ActorSuite& actors,
                    InterventionPolicy& policy, std::uint64_t seed) {
  Rng policy_rng = seeded(seed, 1);
  Rng actor_rng = seeded(seed, 2);
  UctCounts counts;
  policy.begin_episode(task);

  Episode episode;
  episode.task_id = task.task_id;
  episode.seed = seed;
  EnvState state = initial_state(task);
  while (!state.terminal()) {
    const auto key = state_key(task, state);
    const int a = policy.choose(task, state, key, policy_rng);
    if (a < 0 || a > actors.k()) {
      throw std::invalid_argument("unknown intervention index " +
                                  std::to_string(a));
    }
    EnvAction action;
    bool searched = false;
    if (a == 0) {
      action = base_actor(task, state, actor_rng, actors.env.base_noise);
    } else if (actors.interventions[static_cast<std::size_t>(a - 1)] ==
               InterventionKind::strong) {
      action = strong_actor(task, state, actor_rng, actors.env.strong_noise);
    } else {
      action = mcts_actor(task, state, actors.q, counts, actor_rng, actors.env);
      searched = true;
    }
    if (!searched && actors.uses_mcts()) {
      counts.add(key, action.str(), static_cast<std::uint64_t>(actors.env.mcts_k));
    }
    episode.steps.push_back({key, action.str(), a});
    state = env_step(task, state, action);
  }
  episode.terminal = state_key(task, state);
  return episode;
}

std::uint64_t episode_seed(std::uint64_t run_seed, std::string_view tag,
                           const std::string& task_id, int rep) {
  std::uint64_t h = fnv1a(std::to_string(run_seed));
  h = fnv1a(tag, h);
  return fnv1a(task_id + "#" + std::to_string(rep), h);
}

int default_workers() {
  if (const char* env = std::getenv("HELPDP_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

RolloutLog run_episodes(const std::vector<Task>& tasks, int n_seeds,
                        std::uint64_t run_seed, std::string_view tag,
                        const EpisodeRunner& runner, int workers) {
  if (n_seeds < 1) throw std::invalid_argument("n_seeds must be >= 1");
  const std::size_t total = tasks.size() * static_cast<std::size_t>(n_seeds);
  RolloutLog log(total);
  if (workers <= 0) workers = default_workers();
  workers = static_cast<int>(std::min<std::size_t>(
      static_cast<std::size_t>(workers), std::max<std::size_t>(total, 1)));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      const auto& task = tasks[i / static_cast<std::size_t>(n_seeds)];
      const int rep = static_cast<int>(i % static_cast<std::size_t>(n_seeds));
      try {
        log[i] = runner(task, episode_seed(run_seed, tag, task.task_id, rep));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = total;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return log;
}

RolloutLog run_policy(const std::vector<Task>& tasks, const ActorSuite& actors,
                      const PolicyFactory& factory, int n_seeds,
                      std::uint64_t run_seed, std::string_view tag,
                      int workers) {
  return run_episodes(
      tasks, n_seeds, run_seed, tag,
      [&](const Task& task, std::uint64_t seed) {
        auto policy = factory();
        return run_episode(task, actors, *policy, seed);
      },
      workers);
}

Schedule default_schedule(int interventions) {
  if (interventions < 1) throw std::invalid_argument("K must be >= 1");
  const std::vector<double> levels{0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0};
  Schedule out;
  for (int i = 0; i < interventions; ++i) {
    for (double p : levels) {
      std::vector<double> entry(static_cast<std::size_t>(interventions), 0.0);
      entry[static_cast<std::size_t>(i)] = p;
      if (std::find(out.begin(), out.end(), entry) == out.end()) {
        out.push_back(std::move(entry));
      }
    }
  }
  if (interventions == 2) {
    out.push_back({0.1, 0.1});
    out.push_back({0.3, 0.3});
    out.push_back({0.1, 0.3});
    out.push_back({0.3, 0.1});
  }
  return out;
}

RolloutLog collect_phase1(const std::vector<Task>& tasks,
                          const ActorSuite& actors, const Schedule& schedule,
                          int n_seeds, std::uint64_t run_seed, int workers) {
  if (tasks.empty()) throw std::invalid_argument("empty taskset");
  if (schedule.empty()) throw std::invalid_argument("empty schedule");
  RolloutLog log;
  for (std::size_t j = 0; j < schedule.size(); ++j) {
    if (static_cast<int>(schedule[j].size()) != actors.k()) {
      throw std::invalid_argument("schedule entry size does not match K");
    }
    const auto probs = schedule[j];
    RandomInterventionPolicy check(probs);
    auto part = run_policy(
        tasks, actors,
        [&] { return std::make_unique<RandomInterventionPolicy>(probs); },
        n_seeds, run_seed, "phase1/" + std::to_string(j), workers);
    log.insert(log.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return log;
}

CountTable truncate_coverage(const CountTable& counts, double keep_fraction,
                             std::uint64_t seed) {
  if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0)) {
    throw std::invalid_argument("keep_fraction must lie in [0, 1]");
  }
  std::set<std::string> sources;
  for (const auto& [row_key, row] : counts.rows()) sources.insert(row_key.first);
  std::vector<std::string> order(sources.begin(), sources.end());
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto keep = static_cast<std::size_t>(
      std::llround(keep_fraction * static_cast<double>(order.size())));
  CountTable out = counts;
  for (std::size_t i = keep; i < order.size(); ++i) out.erase_source(order[i]);
  return out;
}

std::string_view to_string(TrainingMode mode) {
  return mode == TrainingMode::trajectory_only ? "trajectory_only"
                                               : "all_states";
}

TrainingMode parse_training_mode(std::string_view text) {
  if (text == "all_states") return TrainingMode::all_states;
  if (text == "trajectory_only") return TrainingMode::trajectory_only;
  throw std::invalid_argument("unknown training mode '" + std::string(text) +
                              "'");
}

std::map<std::string, std::string> start_states(const RolloutLog& log) {
  std::map<std::string, std::string> out;
  for (const auto& episode : log) {
    if (!episode.steps.empty()) {
      out.emplace(episode.task_id, episode.steps.front().state);
    }
  }
  return out;
}

std::map<std::string, std::string> start_states(const std::vector<Task>& tasks) {
  std::map<std::string, std::string> out;
  for (const auto& task : tasks) {
    out.emplace(task.task_id, state_key(task, initial_state(task)));
  }
  return out;
}

Expansion expand_policy(const Solution<double>& sol,
                        const TransitionModel& model, const std::string& start) {
  Expansion out;
  std::set<std::string> visited;
  std::vector<std::string> stack{start};
  while (!stack.empty()) {
    const std::string key = std::move(stack.back());
    stack.pop_back();
    if (!visited.insert(key).second || is_terminal(key)) continue;
    const auto s = sol.states->find(key);
    const auto* row =
        s ? model.row(key, ActionKind::from_index(sol.policy(*s))) : nullptr;
    if (row == nullptr) {
      out.seen = false;
      return out;
    }
    out.states.push_back(key);
    for (const auto& [next, p] : *row) stack.push_back(next);
  }
  std::sort(out.states.begin(), out.states.end());
  return out;
}

HelperPolicy build_helper(const Solution<double>& sol, const RolloutLog& log,
                          const TransitionModel& model, TrainingMode mode,
                          ActionKind fallback) {
  if (!sol.converged) throw PlannerError("solution did not converge");
  HelperPolicy helper;
  helper.mode = mode;
  helper.fallback = fallback;
  helper.interventions = static_cast<int>(sol.usage.cols());
  if (mode == TrainingMode::all_states) {
    for (const auto& [row_key, dist] : model.rows()) {
      if (sol.states->find(row_key.first)) {
        helper.table.emplace(row_key.first, sol.action(row_key.first));
      }
    }
    return helper;
  }
  for (const auto& [task_id, start] : start_states(log)) {
    const auto expansion = expand_policy(sol, model, start);
    if (!expansion.seen) continue;
    for (const auto& key : expansion.states) {
      helper.table.emplace(key, sol.action(key));
    }
  }
  return helper;
}

SeenSplit split_seen_unseen(const std::map<std::string, std::string>& starts,
                            const Solution<double>& sol,
                            const TransitionModel& model) {
  SeenSplit out;
  for (const auto& [task_id, start] : starts) {
    (expand_policy(sol, model, start).seen ? out.seen : out.unseen)
        .push_back(task_id);
  }
  return out;
}

double Metrics::total_usage() const {
  return std::accumulate(usage.begin(), usage.end(), 0.0);
}

Metrics summarize(const RolloutLog& log, const std::vector<Task>& tasks,
                  int interventions) {
  std::map<std::string, const Task*> by_id;
  for (const auto& task : tasks) by_id.emplace(task.task_id, &task);
  const auto k = static_cast<std::size_t>(interventions);
  Metrics m;
  m.episodes = log.size();
  m.usage.assign(k, 0.0);
  m.usage_se.assign(k, 0.0);
  if (log.empty()) return m;

  double sr_sq = 0.0, len_sq = 0.0;
  std::vector<double> u_sq(k, 0.0);
  for (const auto& episode : log) {
    const auto it = by_id.find(episode.task_id);
    if (it == by_id.end()) {
      throw std::invalid_argument("episode for unknown task " +
                                  episode.task_id);
    }
    const double success = episode.succeeded() ? 1.0 : 0.0;
    const double len = static_cast<double>(episode.length());
    const double opt = it->second->optimal_length;
    m.sr += success;
    sr_sq += success;
    m.spl += success * opt / std::max(len, opt);
    m.length += len;
    len_sq += len * len;
    std::vector<double> used(k, 0.0);
    for (const auto& step : episode.steps) {
      if (step.intervention < 0 || static_cast<std::size_t>(step.intervention) > k) {
        throw std::invalid_argument("unknown intervention index " +
                                    std::to_string(step.intervention));
      }
      if (step.intervention > 0) {
        used[static_cast<std::size_t>(step.intervention - 1)] += 1.0;
      }
    }
    for (std::size_t i = 0; i < k; ++i) {
      m.usage[i] += used[i];
      u_sq[i] += used[i] * used[i];
    }
  }
  const double n = static_cast<double>(log.size());
  m.sr_se = sample_se(m.sr, sr_sq, log.size());
  m.length_se = sample_se(m.length, len_sq, log.size());
  for (std::size_t i = 0; i < k; ++i) {
    m.usage_se[i] = sample_se(m.usage[i], u_sq[i], log.size());
    m.usage[i] /= n;
  }
  m.sr /= n;
  m.spl /= n;
  m.length /= n;
  return m;
}

Metrics evaluate(const HelperPolicy& helper, const std::vector<Task>& tasks,
                 const ActorSuite& actors, int n_seeds, std::uint64_t run_seed,
                 const Solution<double>* sol, int workers) {
  if (helper.interventions != actors.k()) {
    throw std::invalid_argument("helper and actors disagree on K");
  }
  const auto shared = std::make_shared<const HelperPolicy>(helper);
  const auto log = run_policy(
      tasks, actors, [&] { return std::make_unique<HelperAgent>(shared); },
      n_seeds, run_seed, "eval", workers);
  auto m = summarize(log, tasks, actors.k());
  if (sol != nullptr) {
    std::vector<double> eu(static_cast<std::size_t>(actors.k()), 0.0);
    std::size_t covered = 0;
    for (const auto& task : tasks) {
      const auto s = sol->states->find(state_key(task, initial_state(task)));
      if (!s) continue;
      ++covered;
      for (int i = 0; i < actors.k() && i < sol->usage.cols(); ++i) {
        eu[static_cast<std::size_t>(i)] += sol->usage(*s, i);
      }
    }
    if (covered > 0) {
      for (auto& x : eu) x /= static_cast<double>(covered);
      m.expected_usage = std::move(eu);
    }
  }
  return m;
}

std::optional<double> difficulty(const SuccessModel& success,
                                 const std::string& key) {
  if (auto p = success.p(key, ActionKind::nohelp())) return 1.0 - *p;
  return std::nullopt;
}

double calibrate_threshold(std::vector<double> scores, double percent) {
  if (scores.empty()) throw std::invalid_argument("empty validation split");
  if (!(percent >= 0.0 && percent <= 100.0)) {
    throw std::invalid_argument("percent must lie in [0, 100]");
  }
  std::sort(scores.begin(), scores.end(), std::greater<>());
  auto m = static_cast<std::size_t>(
      std::llround(percent / 100.0 * static_cast<double>(scores.size())));
  if (m == 0) return std::numeric_limits<double>::infinity();
  // Scores tied with the last included one are included as well.
  const double last = scores[m - 1];
  while (m < scores.size() && scores[m] >= last) ++m;
  if (m >= scores.size()) return -std::numeric_limits<double>::infinity();
  return 0.5 * (last + scores[m]);
}

StatewiseThresholdPolicy::StatewiseThresholdPolicy(
    std::shared_ptr<const SuccessModel> success, double threshold,
    int interventions)
    : success_(std::move(success)), threshold_(threshold), k_(interventions) {}

int StatewiseThresholdPolicy::choose(const Task&, const EnvState&,
                                     const std::string& key, Rng& rng) {
  const auto d = difficulty(*success_, key);
  return d && *d > threshold_ ? pick_intervention(k_, rng) : 0;
}

TaskwiseWindowPolicy::TaskwiseWindowPolicy(
    std::shared_ptr<const SuccessModel> success, double threshold, int window,
    int interventions)
    : success_(std::move(success)),
      threshold_(threshold),
      window_(window),
      k_(interventions) {}

int TaskwiseWindowPolicy::choose(const Task&, const EnvState& state,
                                 const std::string& key, Rng& rng) {
  if (state.elapsed <= window_) {
    const auto d = difficulty(*success_, key);
    if (d && *d > threshold_) triggered_ = true;
    return 0;
  }
  return triggered_ ? pick_intervention(k_, rng) : 0;
}

double episode_score(const Episode& episode, const SuccessModel& success,
                     std::optional<int> window) {
  double score = 0.0;
  for (std::size_t t = 0; t < episode.steps.size(); ++t) {
    if (window && static_cast<int>(t) > *window) break;
    if (const auto d = difficulty(success, episode.steps[t].state)) {
      score = std::max(score, *d);
    }
  }
  return score;
}

EpisodeRunner taskwise_all_steps_runner(
    const ActorSuite& actors, std::shared_ptr<const SuccessModel> success,
    double threshold) {
  return [&actors, success = std::move(success), threshold](
             const Task& task, std::uint64_t seed) {
    ConstantPolicy base(0);
    Episode episode = run_episode(task, actors, base, seed);
    if (episode_score(episode, *success) > threshold) {
      AlwaysHelpPolicy help(actors.k());
      const Episode restart =
          run_episode(task, actors, help, seed ^ 0x9e3779b97f4a7c15ULL);
      episode.steps.insert(episode.steps.end(), restart.steps.begin(),
                           restart.steps.end());
      episode.terminal = restart.terminal;
    }
    return episode;
  };
}

Eigen::VectorXi threshold_policy(const Mdp& mdp, double threshold) {
  Eigen::VectorXi policy = Eigen::VectorXi::Zero(mdp.size());
  for (Index s = 0; s < mdp.size(); ++s) {
    if (mdp.terminal(s) || mdp.is_leaf(s)) continue;
    const double p = mdp.success_prob(s, 0);
    const bool help = !std::isnan(p) && 1.0 - p > threshold && mdp.has_row(s, 1);
    policy(s) = help ? 1 : (mdp.has_row(s, 0) ? 0 : 1);
  }
  return policy;
}

SelfRegulationReport self_regulation_eval(const SuccessModel& success,
                                          const RolloutLog& val,
                                          const RolloutLog& test) {
  if (val.empty()) throw std::invalid_argument("empty validation split");
  std::vector<std::pair<double, bool>> val_points;
  for (const auto& episode : val) {
    val_points.emplace_back(episode_score(episode, success), episode.succeeded());
  }
  const auto positives = std::count_if(val_points.begin(), val_points.end(),
                                       [](const auto& x) { return x.second; });
  if (positives == 0 || positives == static_cast<long>(val_points.size())) {
    throw std::invalid_argument("single-class validation set");
  }

  std::vector<double> scores;
  for (const auto& [score, label] : val_points) scores.push_back(score);
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
  std::vector<double> cuts{scores.front() - 1.0};
  for (std::size_t i = 1; i < scores.size(); ++i) {
    cuts.push_back(0.5 * (scores[i - 1] + scores[i]));
  }
  cuts.push_back(scores.back() + 1.0);

  auto accuracy = [](const std::vector<std::pair<double, bool>>& points,
                     double cut) {
    std::size_t correct = 0;
    for (const auto& [score, label] : points) correct += (score <= cut) == label;
    return static_cast<double>(correct) / static_cast<double>(points.size());
  };

  SelfRegulationReport report;
  report.val_episodes = val.size();
  report.test_episodes = test.size();
  report.val_accuracy = -1.0;
  for (double cut : cuts) {
    const double acc = accuracy(val_points, cut);
    if (acc > report.val_accuracy) {
      report.val_accuracy = acc;
      report.threshold = cut;
    }
  }

  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (const auto& episode : test) {
    const bool predicted = episode_score(episode, success) <= report.threshold;
    const bool actual = episode.succeeded();
    tp += predicted && actual;
    fp += predicted && !actual;
    fn += !predicted && actual;
    correct += predicted == actual;
  }
  if (!test.empty()) {
    report.accuracy =
        static_cast<double>(correct) / static_cast<double>(test.size());
  }
  report.precision = tp + fp > 0 ? static_cast<double>(tp) /
                                       static_cast<double>(tp + fp)
                                 : 0.0;
  report.recall = tp + fn > 0 ? static_cast<double>(tp) /
                                    static_cast<double>(tp + fn)
                              : 0.0;
  return report;
}

}  // namespace helpdp
