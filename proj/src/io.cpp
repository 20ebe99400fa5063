#include "helpdp/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace helpdp {

namespace fs = std::filesystem;

json to_json(const RunMeta& meta) {
  return {{"kind", meta.kind},
          {"config_hash", meta.config_hash},
          {"seed", meta.seed}};
}

std::string config_hash(const json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a(config.dump()));
  return buf;
}

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

RunMeta meta_from_json(const json& j) {
  RunMeta meta;
  meta.kind = j.value("kind", "");
  meta.config_hash = j.value("config_hash", "");
  meta.seed = j.value("seed", std::uint64_t{0});
  return meta;
}

template <typename F>
auto parse_guard(const fs::path& path, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace

void write_jsonl(const fs::path& path, const RunMeta& meta,
                 const std::vector<json>& records) {
  auto out = open_out(path);
  out << json{{"meta", to_json(meta)}}.dump() << '\n';
  for (const auto& record : records) out << record.dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<json> read_jsonl(const fs::path& path, std::optional<RunMeta>* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " +
                    e.what());
    }
    if (j.is_object() && j.contains("meta")) {
      if (meta != nullptr) *meta = meta_from_json(j["meta"]);
      continue;
    }
    out.push_back(std::move(j));
  }
  return out;
}

void write_json(const fs::path& path, const RunMeta& meta, json document) {
  auto out = open_out(path);
  document["meta"] = to_json(meta);
  out << document.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return json::parse(buffer.str());
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

json to_json(const Task& task) {
  json moves = json::array();
  for (const auto& [step, room] : task.move_schedule) moves.push_back({step, room});
  return {{"task_id", task.task_id},
          {"split", task.split},
          {"room_count", task.room_count},
          {"start_room", task.start_room},
          {"object_location", task.object_location},
          {"hint", task.hint},
          {"move_schedule", moves},
          {"max_steps", task.max_steps},
          {"optimal_length", task.optimal_length}};
}

Task task_from_json(const json& j) {
  Task task;
  task.task_id = j.at("task_id").get<std::string>();
  task.split = j.at("split").get<std::string>();
  task.room_count = j.at("room_count").get<int>();
  task.start_room = j.at("start_room").get<int>();
  task.object_location = j.at("object_location").get<int>();
  task.hint = j.at("hint").get<std::vector<int>>();
  for (const auto& m : j.at("move_schedule")) {
    task.move_schedule.emplace_back(m.at(0).get<int>(), m.at(1).get<int>());
  }
  task.max_steps = j.at("max_steps").get<int>();
  task.optimal_length = j.at("optimal_length").get<int>();
  return task;
}

json to_json(const Episode& episode) {
  json steps = json::array();
  for (const auto& step : episode.steps) {
    steps.push_back({{"state", step.state},
                     {"action", step.action},
                     {"intervention", step.intervention > 0
                                          ? json(step.intervention)
                                          : json(nullptr)}});
  }
  return {{"task_id", episode.task_id},
          {"seed", episode.seed},
          {"steps", steps},
          {"terminal", episode.terminal},
          {"outcome", to_string(episode.outcome())},
          {"length", episode.length()}};
}

Episode episode_from_json(const json& j) {
  Episode episode;
  episode.task_id = j.at("task_id").get<std::string>();
  episode.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& s : j.at("steps")) {
    RolloutStep step;
    step.state = s.at("state").get<std::string>();
    step.action = s.at("action").get<std::string>();
    const auto& mark = s.at("intervention");
    step.intervention = mark.is_null() ? 0 : mark.get<int>();
    episode.steps.push_back(std::move(step));
  }
  episode.terminal = j.value("terminal", "");
  if (j.contains("length") &&
      j.at("length").get<std::size_t>() != episode.steps.size()) {
    throw std::invalid_argument("episode " + episode.id() +
                                ": length does not match steps");
  }
  return episode;
}

void write_tasks(const fs::path& path, const RunMeta& meta,
                 const TaskSet& tasks) {
  std::vector<json> records;
  for (const auto& task : tasks) records.push_back(to_json(task));
  write_jsonl(path, meta, records);
}

TaskSet read_tasks(const fs::path& path) {
  return parse_guard(path, [&] {
    TaskSet tasks;
    for (const auto& j : read_jsonl(path)) tasks.push_back(task_from_json(j));
    return tasks;
  });
}

TaskSet select_split(const TaskSet& tasks, std::string_view split) {
  TaskSet out;
  for (const auto& task : tasks) {
    if (task.split == split) out.push_back(task);
  }
  return out;
}

void write_rollouts(const fs::path& path, const RunMeta& meta,
                    const RolloutLog& log) {
  std::vector<json> records;
  records.reserve(log.size());
  for (const auto& episode : log) records.push_back(to_json(episode));
  write_jsonl(path, meta, records);
}

RolloutLog read_rollouts(const fs::path& path) {
  return parse_guard(path, [&] {
    RolloutLog log;
    for (const auto& j : read_jsonl(path)) log.push_back(episode_from_json(j));
    return log;
  });
}

void write_counts(const fs::path& path, const RunMeta& meta,
                  const CountTable& counts) {
  std::vector<json> records;
  for (const auto& [row_key, row] : counts.rows()) {
    for (const auto& [next, n] : row) {
      records.push_back({{"state", row_key.first},
                         {"action", row_key.second.str()},
                         {"next", next},
                         {"count", n}});
    }
  }
  write_jsonl(path, meta, records);
}

CountTable read_counts(const fs::path& path) {
  return parse_guard(path, [&] {
    CountTable counts;
    for (const auto& j : read_jsonl(path)) {
      counts.record(j.at("state").get<std::string>(),
                    ActionKind::parse(j.at("action").get<std::string>()),
                    j.at("next").get<std::string>(),
                    j.at("count").get<std::uint64_t>());
    }
    return counts;
  });
}

void write_success(const fs::path& path, const RunMeta& meta,
                   const SuccessModel& success) {
  std::vector<json> records;
  for (const auto& [row_key, entry] : success.entries()) {
    records.push_back({{"state", row_key.first},
                       {"action", row_key.second.str()},
                       {"p", entry.p},
                       {"n", entry.n},
                       {"provenance", to_string(success.provenance())}});
  }
  write_jsonl(path, meta, records);
}

SuccessModel read_success(const fs::path& path) {
  return parse_guard(path, [&] {
    const auto records = read_jsonl(path);
    const auto provenance =
        records.empty()
            ? Provenance::empirical
            : parse_provenance(records.front().value("provenance", "empirical"));
    SuccessModel success(provenance);
    for (const auto& j : records) {
      success.set(j.at("state").get<std::string>(),
                  ActionKind::parse(j.at("action").get<std::string>()),
                  j.at("p").get<double>(), j.at("n").get<std::uint64_t>());
    }
    return success;
  });
}

json to_json(const Solution<double>& sol) {
  json states = json::array();
  for (Index s = 0; s < sol.size(); ++s) {
    std::vector<double> usage(static_cast<std::size_t>(sol.usage.cols()));
    for (Index i = 0; i < sol.usage.cols(); ++i) {
      usage[static_cast<std::size_t>(i)] = sol.usage(s, i);
    }
    states.push_back({{"state", sol.states->key(s)},
                      {"action", ActionKind::from_index(sol.policy(s)).str()},
                      {"usage", usage},
                      {"success", sol.success(s)},
                      {"value", sol.value(s)}});
  }
  return {{"r", sol.r},
          {"gamma", sol.gamma},
          {"variant", to_string(sol.variant)},
          {"converged", sol.converged},
          {"iterations", sol.iterations_run},
          {"expected_usage", sol.expected_usage},
          {"interventions", sol.usage.cols()},
          {"states", states}};
}

void write_solution(const fs::path& path, const RunMeta& meta,
                    const Solution<double>& sol) {
  write_json(path, meta, to_json(sol));
}

Solution<double> read_solution(const fs::path& path) {
  const json doc = read_json(path);
  return parse_guard(path, [&] {
    const auto& rows = doc.at("states");
    std::vector<std::string> keys;
    for (const auto& row : rows) keys.push_back(row.at("state").get<std::string>());
    if (!std::is_sorted(keys.begin(), keys.end())) {
      throw IoError(path.string() + ": states are not in key order");
    }
    const Index n = static_cast<Index>(keys.size());
    const auto k = doc.at("interventions").get<Index>();
    Solution<double> sol;
    sol.states = std::make_shared<const StateIndex>(std::move(keys));
    sol.usage = Eigen::MatrixXd::Zero(n, k);
    sol.success = Eigen::VectorXd::Zero(n);
    sol.value = Eigen::VectorXd::Zero(n);
    sol.policy = Eigen::VectorXi::Zero(n);
    for (Index s = 0; s < n; ++s) {
      const auto& row = rows[static_cast<std::size_t>(s)];
      sol.policy(s) = ActionKind::parse(row.at("action").get<std::string>()).index();
      const auto usage = row.at("usage").get<std::vector<double>>();
      if (static_cast<Index>(usage.size()) != k) {
        throw IoError(path.string() + ": usage width mismatch");
      }
      for (Index i = 0; i < k; ++i) sol.usage(s, i) = usage[static_cast<std::size_t>(i)];
      sol.success(s) = row.at("success").get<double>();
      sol.value(s) = row.at("value").get<double>();
    }
    sol.r = doc.at("r").get<std::vector<double>>();
    sol.gamma = doc.at("gamma").get<double>();
    sol.variant = parse_variant(doc.at("variant").get<std::string>());
    sol.converged = doc.at("converged").get<bool>();
    sol.iterations_run = doc.at("iterations").get<int>();
    sol.expected_usage = doc.at("expected_usage").get<std::vector<double>>();
    return sol;
  });
}

void write_helper(const fs::path& path, const RunMeta& meta,
                  const HelperPolicy& helper) {
  std::vector<json> records;
  records.push_back({{"helper",
                      {{"mode", to_string(helper.mode)},
                       {"fallback", helper.fallback.str()},
                       {"interventions", helper.interventions},
                       {"size", helper.table.size()}}}});
  for (const auto& [key, action] : helper.table) {
    records.push_back({{"state", key}, {"action", action.str()}});
  }
  write_jsonl(path, meta, records);
}

HelperPolicy read_helper(const fs::path& path) {
  return parse_guard(path, [&] {
    HelperPolicy helper;
    for (const auto& j : read_jsonl(path)) {
      if (j.contains("helper")) {
        const auto& h = j.at("helper");
        helper.mode = parse_training_mode(h.at("mode").get<std::string>());
        helper.fallback = ActionKind::parse(h.at("fallback").get<std::string>());
        helper.interventions = h.at("interventions").get<int>();
        continue;
      }
      helper.table.emplace(j.at("state").get<std::string>(),
                           ActionKind::parse(j.at("action").get<std::string>()));
    }
    return helper;
  });
}

json to_json(const Metrics& m) {
  json out{{"episodes", m.episodes},
           {"SR", m.sr},
           {"SR_se", m.sr_se},
           {"SPL", m.spl},
           {"L", m.length},
           {"L_se", m.length_se},
           {"U", m.usage},
           {"U_se", m.usage_se}};
  out["EU"] = m.expected_usage.empty() ? json(nullptr) : json(m.expected_usage);
  return out;
}

json to_json(const SelfRegulationReport& r) {
  return {{"threshold", r.threshold},
          {"val_accuracy", r.val_accuracy},
          {"accuracy", r.accuracy},
          {"precision", r.precision},
          {"recall", r.recall},
          {"val_episodes", r.val_episodes},
          {"test_episodes", r.test_episodes}};
}

}  // namespace helpdp
