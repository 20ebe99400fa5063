#include "helpdp/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "helpdp/oracle.hpp"

namespace helpdp {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kTopLevelKeys{
    "seed",    "out",  "env",      "splits",  "interventions", "collect", "fit",
    "planner", "annotate", "eval", "baseline", "selfreg",      "oracle"};

const json& section(const json& config, const std::string& name) {
  static const json empty = json::object();
  const auto it = config.find(name);
  if (it == config.end() || it->is_null()) return empty;
  if (!it->is_object()) throw UsageError("config: '" + name + "' must be an object");
  return *it;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::string join(const std::vector<double>& xs) {
  std::string out;
  for (double x : xs) out += (out.empty() ? "" : ",") + fmt(x);
  return out;
}

struct Context {
  json config;
  fs::path out;
  fs::path base;  // directory of the config file
  std::uint64_t seed = 0;
  std::string hash;

  RunMeta meta(std::string kind) const { return {std::move(kind), hash, seed}; }
  fs::path file(const std::string& name) const { return out / name; }
  fs::path input(const std::string& name, const std::string& producer) const {
    const auto path = out / name;
    if (!fs::exists(path)) {
      throw IoError("missing input " + path.string() + " (run `helpdp " +
                    producer + "` first)");
    }
    return path;
  }
  fs::path resolve(const std::string& path) const {
    const fs::path p(path);
    return p.is_absolute() ? p : base / p;
  }
};

EnvConfig env_config(const json& config) {
  const auto& j = section(config, "env");
  EnvConfig c;
  c.room_count = j.value("room_count", c.room_count);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.start_room = j.value("start_room", c.start_room);
  c.hint_size_weights = j.value("hint_size_weights", c.hint_size_weights);
  c.move_probability = j.value("move_probability", c.move_probability);
  c.move_step_min = j.value("move_step_min", c.move_step_min);
  c.move_step_max = j.value("move_step_max", c.move_step_max);
  c.base_noise = j.value("base_noise", c.base_noise);
  c.strong_noise = j.value("strong_noise", c.strong_noise);
  c.mcts_c = j.value("mcts_c", c.mcts_c);
  c.mcts_k = j.value("mcts_k", c.mcts_k);
  c.mcts_q_noise = j.value("mcts_q_noise", c.mcts_q_noise);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("config env: ") + e.what());
  }
  return c;
}

std::vector<InterventionKind> interventions(const json& config) {
  const auto it = config.find("interventions");
  if (it == config.end()) return {InterventionKind::strong};
  std::vector<std::string> names;
  if (it->is_string()) {
    const auto s = it->get<std::string>();
    if (s == "both") {
      names = {"strong", "mcts"};
    } else {
      names = {s};
    }
  } else {
    names = it->get<std::vector<std::string>>();
  }
  if (names.empty()) throw UsageError("config: interventions is empty");
  std::vector<InterventionKind> out;
  for (const auto& n : names) {
    try {
      out.push_back(parse_intervention(n));
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
  }
  return out;
}

RewardConfig reward_config(const json& config, int k) {
  const auto& j = section(config, "planner");
  RewardConfig cfg;
  cfg.gamma = j.value("gamma", 1.0);
  cfg.epsilon = j.value("epsilon", 1e-10);
  cfg.max_iters = j.value("max_iters", cfg.max_iters);
  cfg.allow_missing_rows = j.value("allow_missing_rows", true);
  try {
    cfg.variant = parse_variant(j.value("variant", "value_consistent"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("config planner: ") + e.what());
  }
  cfg.r.assign(static_cast<std::size_t>(k), 0.0);
  if (j.contains("r") && !j["r"].is_null()) {
    if (j["r"].is_number()) {
      cfg.r.assign(static_cast<std::size_t>(k), j["r"].get<double>());
    } else {
      cfg.r = j["r"].get<std::vector<double>>();
    }
  }
  try {
    cfg.validate(k);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("config planner: ") + e.what());
  }
  return cfg;
}

struct LoadedModel {
  TransitionModel model;
  SuccessModel success;
  Mdp mdp;
};

LoadedModel load_model(const Context& ctx, int k) {
  const auto counts = read_counts(ctx.input("transitions.jsonl", "fit"));
  const double alpha = section(ctx.config, "fit").value("laplace_alpha", 0.0);
  LoadedModel out{normalize(counts, alpha),
                  read_success(ctx.input("success.jsonl", "fit")), Mdp{}};
  out.mdp = Mdp::from_model(out.model, &out.success, k);
  return out;
}

std::vector<std::string> planner_starts(const Context& ctx, const Mdp& mdp) {
  const auto tasks = select_split(read_tasks(ctx.input("tasks.jsonl", "gen")),
                                  "train");
  std::vector<std::string> starts;
  for (const auto& [id, key] : start_states(tasks)) {
    if (mdp.states().find(key)) starts.push_back(key);
  }
  if (starts.empty()) throw PlannerError("no train start state in the model");
  return starts;
}

void print_summary(std::ostream& out, const Solution<double>& sol) {
  double total = 0.0;
  for (double u : sol.expected_usage) total += u;
  out << "r=" << join(sol.r) << " E[U]=" << fmt(total);
  if (sol.expected_usage.size() > 1) out << " (" << join(sol.expected_usage) << ")";
  out << " converged=" << (sol.converged ? "true" : "false")
      << " iterations=" << sol.iterations_run << '\n';
}

// ---- commands --------------------------------------------------------------

int cmd_gen(const Context& ctx, std::ostream& out) {
  const auto env = env_config(ctx.config);
  const auto& s = section(ctx.config, "splits");
  SplitSizes sizes;
  sizes.train = s.value("train", sizes.train);
  sizes.val = s.value("val", sizes.val);
  sizes.test = s.value("test", sizes.test);
  TaskSet tasks;
  try {
    tasks = generate_tasks(env, sizes, ctx.seed);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  write_tasks(ctx.file("tasks.jsonl"), ctx.meta("tasks"), tasks);
  out << "tasks: train=" << sizes.train << " val=" << sizes.val
      << " test=" << sizes.test << '\n';
  return kExitOk;
}

int cmd_collect(const Context& ctx, std::ostream& out) {
  const auto tasks = select_split(read_tasks(ctx.input("tasks.jsonl", "gen")),
                                  "train");
  const auto actors = make_actors(env_config(ctx.config), interventions(ctx.config));
  const auto& c = section(ctx.config, "collect");
  Schedule schedule = default_schedule(actors.k());
  if (c.contains("schedule") && !c["schedule"].is_null()) {
    schedule.clear();
    for (const auto& entry : c["schedule"]) {
      schedule.push_back(entry.is_number()
                             ? std::vector<double>(
                                   static_cast<std::size_t>(actors.k()),
                                   entry.get<double>())
                             : entry.get<std::vector<double>>());
    }
  }
  const int seeds = c.value("seeds", 3);
  const auto log = collect_phase1(tasks, actors, schedule, seeds, ctx.seed);
  write_rollouts(ctx.file("rollouts.jsonl"), ctx.meta("rollouts"), log);
  out << "episodes: " << log.size() << '\n';
  return kExitOk;
}

int cmd_fit(const Context& ctx, std::ostream& out) {
  const auto log = read_rollouts(ctx.input("rollouts.jsonl", "collect"));
  const auto& f = section(ctx.config, "fit");
  auto counts = count_transitions(log);
  const double coverage = section(ctx.config, "collect").value("coverage", 1.0);
  if (coverage < 1.0) counts = truncate_coverage(counts, coverage, ctx.seed);
  const auto success = estimate_success(log, f.value("success_alpha", 0.0));
  write_counts(ctx.file("transitions.jsonl"), ctx.meta("transitions"), counts);
  write_success(ctx.file("success.jsonl"), ctx.meta("success"), success);
  std::set<std::string> sources;
  for (const auto& [row_key, row] : counts.rows()) sources.insert(row_key.first);
  out << "states: " << sources.size() << " rows: " << counts.rows().size()
      << " transitions: " << counts.total() << '\n';
  return kExitOk;
}

int cmd_solve(const Context& ctx, std::ostream& out) {
  const int k = static_cast<int>(interventions(ctx.config).size());
  const auto cfg = reward_config(ctx.config, k);
  const auto loaded = load_model(ctx, k);
  auto sol = solve_usage(loaded.mdp, cfg);
  sol.expected_usage = expected_usage(sol, planner_starts(ctx, loaded.mdp));
  write_solution(ctx.file("solution.json"), ctx.meta("solution"), sol);
  print_summary(out, sol);
  return kExitOk;
}

int cmd_search(const Context& ctx, std::ostream& out) {
  const int k = static_cast<int>(interventions(ctx.config).size());
  const auto cfg = reward_config(ctx.config, k);
  const auto& p = section(ctx.config, "planner");
  if (!p.contains("budget") || p["budget"].is_null()) {
    throw UsageError("search needs planner.budget (or --budget)");
  }
  const double budget = p["budget"].get<double>();
  if (!std::isfinite(budget) || budget < 0.0) {
    throw UsageError("budget must be finite and >= 0");
  }
  SearchBounds bounds;
  bounds.r_lo = p.value("r_lo", bounds.r_lo);
  bounds.r_hi = p.value("r_hi", bounds.r_hi);
  bounds.max_steps = p.value("search_steps", bounds.max_steps);
  bounds.usage_tol = p.value("usage_tol", bounds.usage_tol);
  const auto loaded = load_model(ctx, k);
  const auto starts = planner_starts(ctx, loaded.mdp);
  auto result = reward_search(loaded.mdp, starts, budget,
                              bounds, cfg);
  json probes = json::array();
  for (const auto& probe : result.probes) {
    probes.push_back(
        {{"r", probe.r}, {"usage", probe.usage}, {"feasible", probe.feasible}});
  }
  json report{{"budget", p["budget"]}, {"r", result.r}, {"probes", probes}};
  write_json(ctx.file("search.json"), ctx.meta("search"), report);
  write_solution(ctx.file("solution.json"), ctx.meta("solution"),
                 result.solution);
  print_summary(out, result.solution);
  return kExitOk;
}

int cmd_annotate(const Context& ctx, std::ostream& out) {
  const int k = static_cast<int>(interventions(ctx.config).size());
  const auto sol = read_solution(ctx.input("solution.json", "solve"));
  const auto log = read_rollouts(ctx.input("rollouts.jsonl", "collect"));
  const auto loaded = load_model(ctx, k);
  const auto& a = section(ctx.config, "annotate");
  HelperPolicy helper;
  try {
    helper = build_helper(sol, log, loaded.model,
                          parse_training_mode(a.value("mode", "all_states")),
                          ActionKind::parse(a.value("fallback", "nohelp")));
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("config annotate: ") + e.what());
  }
  write_helper(ctx.file("helper.jsonl"), ctx.meta("helper"), helper);
  const auto split = split_seen_unseen(start_states(log), sol, loaded.model);
  write_json(ctx.file("split.json"), ctx.meta("split"),
             {{"seen", split.seen}, {"unseen", split.unseen}});
  out << "helper: " << helper.table.size() << " states (" << to_string(helper.mode)
      << "), seen=" << split.seen.size() << " unseen=" << split.unseen.size()
      << '\n';
  return kExitOk;
}

void print_table_header(std::ostream& out) {
  out << std::left << std::setw(28) << "split" << std::setw(10) << "episodes"
      << std::setw(10) << "SR" << std::setw(10) << "SPL" << std::setw(10) << "L"
      << std::setw(14) << "U" << "EU\n";
}

void print_table_row(std::ostream& out, const std::string& name,
                     const Metrics& m) {
  out << std::left << std::setw(28) << name << std::setw(10) << m.episodes
      << std::setw(10) << fmt(m.sr) << std::setw(10) << fmt(m.spl)
      << std::setw(10) << fmt(m.length) << std::setw(14) << join(m.usage)
      << (m.expected_usage.empty() ? "-" : join(m.expected_usage)) << '\n';
}

int cmd_eval(const Context& ctx, std::ostream& out) {
  const auto actors = make_actors(env_config(ctx.config), interventions(ctx.config));
  const auto tasks = read_tasks(ctx.input("tasks.jsonl", "gen"));
  const auto helper = read_helper(ctx.input("helper.jsonl", "annotate"));
  const auto sol = read_solution(ctx.input("solution.json", "solve"));
  const auto loaded = load_model(ctx, actors.k());
  const auto& e = section(ctx.config, "eval");
  const int seeds = e.value("seeds", 3);
  const auto splits =
      e.value("splits", std::vector<std::string>{"train", "test"});

  json report = json::object();
  std::vector<std::pair<std::string, Metrics>> rows;
  for (const auto& name : splits) {
    const auto chosen = select_split(tasks, name);
    if (chosen.empty()) throw UsageError("eval: split '" + name + "' is empty");
    if (name == "train") {
      const auto split = split_seen_unseen(start_states(chosen), sol, loaded.model);
      for (const auto& [label, ids] :
           {std::pair{std::string("seen"), split.seen},
            std::pair{std::string("unseen"), split.unseen}}) {
        const std::set<std::string> keep(ids.begin(), ids.end());
        TaskSet part;
        for (const auto& t : chosen) {
          if (keep.count(t.task_id)) part.push_back(t);
        }
        if (part.empty()) continue;
        rows.emplace_back(name + "/" + label,
                          evaluate(helper, part, actors, seeds, ctx.seed, &sol));
      }
    } else {
      rows.emplace_back(name, evaluate(helper, chosen, actors, seeds, ctx.seed, &sol));
    }
  }
  print_table_header(out);
  for (const auto& [name, m] : rows) {
    report[name] = to_json(m);
    print_table_row(out, name, m);
  }
  write_json(ctx.file("metrics.json"), ctx.meta("metrics"),
             {{"helper", {{"mode", to_string(helper.mode)},
                          {"size", helper.table.size()},
                          {"fallback", helper.fallback.str()}}},
              {"seeds", seeds},
              {"splits", report}});
  return kExitOk;
}

// Success model used as the PRM for baselines and self-regulation.
std::shared_ptr<const SuccessModel> prm_for(const Context& ctx,
                                           const std::string& kind,
                                           const TaskSet& tasks,
                                           const EnvConfig& env) {
  if (kind == "exact") {
    return std::make_shared<const SuccessModel>(exact_models(tasks, env).success);
  }
  if (kind == "empirical") {
    return std::make_shared<const SuccessModel>(
        read_success(ctx.input("success.jsonl", "fit")));
  }
  throw UsageError("unknown prm '" + kind + "' (exact | empirical)");
}

TaskSet concat(TaskSet a, const TaskSet& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

int cmd_baseline(const Context& ctx, std::ostream& out) {
  const auto env = env_config(ctx.config);
  const auto actors = make_actors(env, interventions(ctx.config));
  const auto tasks = read_tasks(ctx.input("tasks.jsonl", "gen"));
  const auto& b = section(ctx.config, "baseline");
  const auto val = select_split(tasks, "val");
  const auto target = select_split(tasks, b.value("split", "test"));
  if (val.empty()) throw UsageError("baseline: empty validation split");
  if (target.empty()) throw UsageError("baseline: empty evaluation split");
  const auto prm = prm_for(ctx, b.value("prm", "exact"), concat(val, target), env);
  const int seeds = b.value("seeds", 5);
  const int val_seeds = b.value("val_seeds", 5);
  const int window = b.value("window", 5);
  const int k = actors.k();

  const auto val_log = run_policy(
      val, actors, [] { return std::make_unique<ConstantPolicy>(0); }, val_seeds,
      ctx.seed, "calibrate");
  std::vector<double> state_scores, window_scores, task_scores;
  for (const auto& episode : val_log) {
    for (const auto& step : episode.steps) {
      if (const auto d = difficulty(*prm, step.state)) state_scores.push_back(*d);
    }
    window_scores.push_back(episode_score(episode, *prm, window));
    task_scores.push_back(episode_score(episode, *prm));
  }

  json rows = json::array();
  std::vector<std::pair<std::string, Metrics>> table;
  auto add = [&](const std::string& name, json params, const RolloutLog& log) {
    const auto m = summarize(log, target, k);
    rows.push_back({{"name", name}, {"params", params}, {"metrics", to_json(m)}});
    table.emplace_back(name, m);
  };
  auto policy_log = [&](const PolicyFactory& factory) {
    return run_policy(target, actors, factory, seeds, ctx.seed, "eval");
  };

  add("none", json::object(),
      policy_log([] { return std::make_unique<ConstantPolicy>(0); }));
  const json default_random =
      k == 1 ? json::array({0.1, 0.3, 1.0}) : json::array({0.1, 0.3, 0.5});
  for (const auto& entry : b.value("random", default_random)) {
    const auto probs =
        entry.is_number()
            ? std::vector<double>(static_cast<std::size_t>(k), entry.get<double>())
            : entry.get<std::vector<double>>();
    add("random", {{"p", probs}}, policy_log([probs] {
          return std::make_unique<RandomInterventionPolicy>(probs);
        }));
  }
  for (double percent : b.value("percent", std::vector<double>{10.0, 30.0})) {
    const double state_tau = calibrate_threshold(state_scores, percent);
    add("statewise", {{"percent", percent}, {"threshold", state_tau}},
        policy_log([&] {
          return std::make_unique<StatewiseThresholdPolicy>(prm, state_tau, k);
        }));
    const double window_tau = calibrate_threshold(window_scores, percent);
    add("taskwise_first_steps",
        {{"percent", percent}, {"threshold", window_tau}, {"window", window}},
        policy_log([&] {
          return std::make_unique<TaskwiseWindowPolicy>(prm, window_tau, window, k);
        }));
    const double task_tau = calibrate_threshold(task_scores, percent);
    add("taskwise_all_steps", {{"percent", percent}, {"threshold", task_tau}},
        run_episodes(target, seeds, ctx.seed, "eval",
                     taskwise_all_steps_runner(actors, prm, task_tau)));
  }

  print_table_header(out);
  for (const auto& [name, m] : table) print_table_row(out, name, m);
  write_json(ctx.file("baselines.json"), ctx.meta("baselines"),
             {{"prm", b.value("prm", "exact")},
              {"split", b.value("split", "test")},
              {"seeds", seeds},
              {"rows", rows}});
  return kExitOk;
}

int cmd_selfreg(const Context& ctx, std::ostream& out) {
  const auto env = env_config(ctx.config);
  const auto actors = make_actors(env, interventions(ctx.config));
  const auto tasks = read_tasks(ctx.input("tasks.jsonl", "gen"));
  const auto& s = section(ctx.config, "selfreg");
  const auto val = select_split(tasks, "val");
  const auto test = select_split(tasks, "test");
  if (val.empty() || test.empty()) throw UsageError("selfreg: empty val/test split");
  const auto prm = prm_for(ctx, s.value("prm", "exact"), concat(val, test), env);
  const int seeds = s.value("seeds", 1);
  auto base = [] { return std::make_unique<ConstantPolicy>(0); };
  const auto val_log = run_policy(val, actors, base, seeds, ctx.seed, "selfreg/val");
  const auto test_log = run_policy(test, actors, base, seeds, ctx.seed, "selfreg/test");
  const auto report = self_regulation_eval(*prm, val_log, test_log);
  write_json(ctx.file("selfreg.json"), ctx.meta("selfreg"),
             {{"prm", s.value("prm", "exact")}, {"report", to_json(report)}});
  out << "threshold=" << fmt(report.threshold) << " accuracy=" << fmt(report.accuracy)
      << " precision=" << fmt(report.precision) << " recall=" << fmt(report.recall)
      << '\n';
  return kExitOk;
}

int cmd_oracle(const Context& ctx, std::ostream& out) {
  const auto& o = section(ctx.config, "oracle");
  if (!o.contains("transitions")) throw UsageError("oracle needs oracle.transitions");
  const auto counts_path = ctx.resolve(o["transitions"].get<std::string>());
  if (!fs::exists(counts_path)) throw IoError("missing input " + counts_path.string());
  const auto model = normalize(read_counts(counts_path));
  std::optional<SuccessModel> success;
  if (o.contains("success") && !o["success"].is_null()) {
    success = read_success(ctx.resolve(o["success"].get<std::string>()));
  }
  const auto mdp = Mdp::from_model(model, success ? &*success : nullptr);
  json planner = o.value("planner", json::object());
  json wrapped{{"planner", planner}};
  auto cfg = reward_config(wrapped, mdp.interventions());
  if (o.contains("r")) {
    cfg.r = o["r"].is_number()
                ? std::vector<double>(static_cast<std::size_t>(mdp.interventions()),
                                      o["r"].get<double>())
                : o["r"].get<std::vector<double>>();
  }
  cfg.gamma = o.value("gamma", cfg.gamma);
  cfg.allow_missing_rows = false;
  cfg.validate(mdp.interventions());
  const auto starts = o.value("starts", std::vector<std::string>{});
  if (starts.empty()) throw UsageError("oracle needs oracle.starts");

  const auto report = brute_force_optimal(mdp, cfg, starts);
  auto sol = solve_usage(mdp, cfg);
  sol.expected_usage = expected_usage(sol, starts);

  auto policy_json = [&](const Eigen::VectorXi& policy) {
    json p = json::object();
    for (Index s = 0; s < mdp.size(); ++s) {
      if (mdp.terminal(s) || mdp.is_leaf(s)) continue;
      p[mdp.states().key(s)] = ActionKind::from_index(policy(s)).str();
    }
    return p;
  };
  json policies = json::array();
  for (std::size_t i = 0; i < report.policies.size(); ++i) {
    policies.push_back({{"policy", policy_json(report.policies[i])},
                        {"values", report.start_values[i]}});
  }
  std::vector<double> planner_values;
  double worst = 0.0;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    planner_values.push_back(sol.value(mdp.states().at(starts[i])));
    worst = std::max(worst, std::abs(planner_values.back() -
                                     report.best_start_values[i]));
  }
  const bool match = worst <= 1e-8;
  write_json(ctx.file("oracle.json"), ctx.meta("oracle"),
             {{"policy_count", report.policy_count},
              {"policies", policies},
              {"best", {{"policy", policy_json(report.best_policy)},
                        {"values", report.best_start_values}}},
              {"planner", {{"policy", policy_json(sol.policy)},
                           {"values", planner_values},
                           {"solution", to_json(sol)}}},
              {"max_abs_diff", worst},
              {"match", match}});
  out << "policies=" << report.policy_count
      << " best=" << join(report.best_start_values)
      << " planner=" << join(planner_values) << " match=" << (match ? "true" : "false")
      << '\n';
  return match ? kExitOk : kExitFailure;
}

}  // namespace

json effective_config(const CliOptions& options) {
  if (std::find(cli_commands().begin(), cli_commands().end(), options.command) ==
      cli_commands().end()) {
    throw UsageError("unknown command '" + options.command + "'");
  }
  if (options.config.empty()) throw UsageError("--config is required");
  if (!fs::exists(options.config)) {
    throw UsageError("config not found: " + options.config.string());
  }
  json config;
  try {
    config = read_json(options.config);
  } catch (const IoError& e) {
    throw UsageError(e.what());
  }
  if (!config.is_object()) throw UsageError("config must be a JSON object");
  for (const auto& [key, value] : config.items()) {
    if (!kTopLevelKeys.count(key)) throw UsageError("config: unknown key '" + key + "'");
  }
  if (options.budget && options.r) {
    throw UsageError("--budget and --r are mutually exclusive");
  }
  if (options.seed) config["seed"] = *options.seed;
  if (options.budget) config["planner"]["budget"] = *options.budget;
  if (options.r) config["planner"]["r"] = *options.r;
  if (options.variant) config["planner"]["variant"] = *options.variant;
  if (options.out) config["out"] = fs::absolute(*options.out).string();
  if (!config.contains("seed") || !config["seed"].is_number_unsigned()) {
    throw UsageError("a non-negative integer seed is required (config or --seed)");
  }
  return config;
}

int run_command(const CliOptions& options, std::ostream& out, std::ostream& err) {
  try {
    Context ctx;
    ctx.config = effective_config(options);
    ctx.base = fs::absolute(options.config).parent_path();
    ctx.seed = ctx.config["seed"].get<std::uint64_t>();
    ctx.out = ctx.config.contains("out")
                  ? ctx.resolve(ctx.config["out"].get<std::string>())
                  : ctx.base / "out";
    json hashed = ctx.config;
    hashed.erase("out");
    ctx.hash = config_hash(hashed);
    fs::create_directories(ctx.out);

    const auto& c = options.command;
    if (c == "gen") return cmd_gen(ctx, out);
    if (c == "collect") return cmd_collect(ctx, out);
    if (c == "fit") return cmd_fit(ctx, out);
    if (c == "solve") return cmd_solve(ctx, out);
    if (c == "search") return cmd_search(ctx, out);
    if (c == "annotate") return cmd_annotate(ctx, out);
    if (c == "eval") return cmd_eval(ctx, out);
    if (c == "baseline") return cmd_baseline(ctx, out);
    if (c == "selfreg") return cmd_selfreg(ctx, out);
    if (c == "oracle") return cmd_oracle(ctx, out);
    throw UsageError("unknown command '" + c + "'");
  } catch (const UsageError& e) {
    err << "helpdp: usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "helpdp: usage error: config: " << e.what() << '\n';
    return kExitUsage;
  } catch (const PlannerError& e) {
    err << "helpdp: planner error: " << e.what() << '\n';
    return kExitPlanner;
  } catch (const IoError& e) {
    err << "helpdp: io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "helpdp: io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "helpdp: error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace helpdp
