#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "helpdp/env.hpp"
#include "helpdp/models.hpp"
#include "helpdp/planner.hpp"
#include "helpdp/rollout.hpp"

namespace helpdp {

// Base actor plus the intervention actors; help_i runs interventions[i-1].
struct ActorSuite {
  EnvConfig env;
  std::vector<InterventionKind> interventions{InterventionKind::strong};
  QFunction q;  // scorer for MCTS interventions

  int k() const { return static_cast<int>(interventions.size()); }
  bool uses_mcts() const;
};

// Default MCTS scorer: noisy ground-truth base success after the action.
ActorSuite make_actors(const EnvConfig& env,
                       std::vector<InterventionKind> interventions);

// Decides, at each non-terminal step, 0 (base actor) or i (help_i).
class InterventionPolicy {
 public:
  virtual ~InterventionPolicy() = default;
  virtual void begin_episode(const Task&) {}
  virtual int choose(const Task& task, const EnvState& state,
                     const std::string& key, Rng& rng) = 0;
};

using PolicyFactory = std::function<std::unique_ptr<InterventionPolicy>()>;

// Fires at most one intervention per step: help_i with probability probs[i-1].
class RandomInterventionPolicy : public InterventionPolicy {
 public:
  explicit RandomInterventionPolicy(std::vector<double> probs);
  int choose(const Task&, const EnvState&, const std::string&, Rng& rng) override;

 private:
  std::vector<double> probs_;
};

class ConstantPolicy : public InterventionPolicy {
 public:
  explicit ConstantPolicy(int action) : action_(action) {}
  int choose(const Task&, const EnvState&, const std::string&, Rng&) override {
    return action_;
  }

 private:
  int action_;
};

// Policy decisions and actor noise draw from separate engines, so two
// policies that make the same choices produce identical episodes.
Episode run_episode(const Task& task, const ActorSuite& actors,
                    InterventionPolicy& policy, std::uint64_t seed);

std::uint64_t episode_seed(std::uint64_t run_seed, std::string_view tag,
                           const std::string& task_id, int rep);

using EpisodeRunner = std::function<Episode(const Task&, std::uint64_t seed)>;

// Runs every task `n_seeds` times; output order is task-major and does not
// depend on the worker count.
RolloutLog run_episodes(const std::vector<Task>& tasks, int n_seeds,
                        std::uint64_t run_seed, std::string_view tag,
                        const EpisodeRunner& runner, int workers = 0);

RolloutLog run_policy(const std::vector<Task>& tasks, const ActorSuite& actors,
                      const PolicyFactory& factory, int n_seeds,
                      std::uint64_t run_seed, std::string_view tag = "eval",
                      int workers = 0);

// Worker count from HELPDP_WORKERS, else hardware concurrency.
int default_workers();

using Schedule = std::vector<std::vector<double>>;  // per entry, one p per help

// {0, .1, .3, .5, .7, .9, 1} for each intervention alone; for K = 2 also the
// pairs .1/.1, .3/.3, .1/.3 and .3/.1.
Schedule default_schedule(int interventions);

RolloutLog collect_phase1(const std::vector<Task>& tasks,
                          const ActorSuite& actors, const Schedule& schedule,
                          int n_seeds, std::uint64_t run_seed, int workers = 0);

// Removes every row of a random (1 - keep_fraction) share of source states.
CountTable truncate_coverage(const CountTable& counts, double keep_fraction,
                             std::uint64_t seed);

enum class TrainingMode { all_states, trajectory_only };

std::string_view to_string(TrainingMode mode);
TrainingMode parse_training_mode(std::string_view text);

struct HelperPolicy {
  std::map<std::string, ActionKind> table;
  TrainingMode mode = TrainingMode::all_states;
  ActionKind fallback = ActionKind::nohelp();
  int interventions = 1;

  ActionKind decide(const std::string& key) const {
    const auto it = table.find(key);
    return it == table.end() ? fallback : it->second;
  }
};

class HelperAgent : public InterventionPolicy {
 public:
  explicit HelperAgent(std::shared_ptr<const HelperPolicy> helper)
      : helper_(std::move(helper)) {}
  int choose(const Task&, const EnvState&, const std::string& key,
             Rng&) override {
    return helper_->decide(key).index();
  }

 private:
  std::shared_ptr<const HelperPolicy> helper_;
};

// Task id -> first recorded state, over the episodes of a log.
std::map<std::string, std::string> start_states(const RolloutLog& log);
std::map<std::string, std::string> start_states(const std::vector<Task>& tasks);

struct Expansion {
  bool seen = true;
  std::vector<std::string> states;  // non-terminal states on the π* tree
};

// Follows π* from `start` through every successor of the model rows. The
// expansion is unseen as soon as it reaches a non-terminal state with no row
// for its π* action.
Expansion expand_policy(const Solution<double>& sol,
                        const TransitionModel& model, const std::string& start);

HelperPolicy build_helper(const Solution<double>& sol, const RolloutLog& log,
                          const TransitionModel& model, TrainingMode mode,
                          ActionKind fallback = ActionKind::nohelp());

struct SeenSplit {
  std::vector<std::string> seen;
  std::vector<std::string> unseen;
};

SeenSplit split_seen_unseen(const std::map<std::string, std::string>& starts,
                            const Solution<double>& sol,
                            const TransitionModel& model);

struct Metrics {
  std::size_t episodes = 0;
  double sr = 0.0;
  double spl = 0.0;
  double length = 0.0;
  std::vector<double> usage;  // raw interventions per episode, per help_i
  double sr_se = 0.0;
  double length_se = 0.0;
  std::vector<double> usage_se;
  std::vector<double> expected_usage;  // planner prediction, empty if n/a

  double total_usage() const;
};

// SPL uses success * optimal_length / max(length, optimal_length).
Metrics summarize(const RolloutLog& log, const std::vector<Task>& tasks,
                  int interventions);

// Rolls the helper on each task n_seeds times and attaches the planner's mean
// start-state usage over the tasks it covers.
Metrics evaluate(const HelperPolicy& helper, const std::vector<Task>& tasks,
                 const ActorSuite& actors, int n_seeds, std::uint64_t run_seed,
                 const Solution<double>* sol = nullptr, int workers = 0);

// 1 - p(s, nohelp); nullopt when the success model has no estimate.
std::optional<double> difficulty(const SuccessModel& success,
                                 const std::string& key);

// Threshold such that the top `percent` of scores exceed it: the midpoint
// between the last included and first excluded score (descending order).
// Ties with the last included score stay included. 100 gives -inf, 0 gives
// +inf.
double calibrate_threshold(std::vector<double> scores, double percent);

// Help at states whose difficulty exceeds the threshold; with K >= 2 the
// intervention is drawn uniformly.
class StatewiseThresholdPolicy : public InterventionPolicy {
 public:
  StatewiseThresholdPolicy(std::shared_ptr<const SuccessModel> success,
                           double threshold, int interventions);
  int choose(const Task&, const EnvState&, const std::string& key,
             Rng& rng) override;

 private:
  std::shared_ptr<const SuccessModel> success_;
  double threshold_;
  int k_;
};

// Watches the states at elapsed 0..window; if any exceeds the threshold,
// intervenes on every later step.
class TaskwiseWindowPolicy : public InterventionPolicy {
 public:
  TaskwiseWindowPolicy(std::shared_ptr<const SuccessModel> success,
                       double threshold, int window, int interventions);
  void begin_episode(const Task&) override { triggered_ = false; }
  int choose(const Task&, const EnvState& state, const std::string& key,
             Rng& rng) override;

 private:
  std::shared_ptr<const SuccessModel> success_;
  double threshold_;
  int window_;
  int k_;
  bool triggered_ = false;
};

// Base actor runs the whole task; if any visited state exceeded the
// threshold, the task restarts from s0 with intervention on every step. Both
// runs count towards the length; only the restart counts towards usage.
EpisodeRunner taskwise_all_steps_runner(
    const ActorSuite& actors, std::shared_ptr<const SuccessModel> success,
    double threshold);

// Max difficulty over the recorded steps of an episode, optionally limited to
// states with elapsed <= window. Steps without an estimate are skipped.
double episode_score(const Episode& episode, const SuccessModel& success,
                     std::optional<int> window = std::nullopt);

// Statewise policy on a tabular MDP (help_1 where 1 - p(s, nohelp) > tau).
Eigen::VectorXi threshold_policy(const Mdp& mdp, double threshold);

struct SelfRegulationReport {
  double threshold = 0.0;
  double val_accuracy = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t val_episodes = 0;
  std::size_t test_episodes = 0;
};

// Predicts success iff episode_score <= threshold. The threshold maximizes
// validation accuracy over midpoints of the sorted distinct scores plus one
// cut below and one above all of them; ties keep the smallest threshold.
// Precision is 0 when nothing is predicted successful.
SelfRegulationReport self_regulation_eval(const SuccessModel& success,
                                          const RolloutLog& val,
                                          const RolloutLog& test);

}  // namespace helpdp
