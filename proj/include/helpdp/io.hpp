#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "helpdp/env.hpp"
#include "helpdp/models.hpp"
#include "helpdp/pipeline.hpp"
#include "helpdp/planner.hpp"
#include "helpdp/rollout.hpp"

namespace helpdp {

using json = nlohmann::json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Provenance stamped on every output: the first line of a JSONL file is
// {"meta": {...}} and JSON documents carry a "meta" member.
struct RunMeta {
  std::string kind;
  std::string config_hash;
  std::uint64_t seed = 0;
};

json to_json(const RunMeta& meta);

std::string config_hash(const json& config);

void write_jsonl(const std::filesystem::path& path, const RunMeta& meta,
                 const std::vector<json>& records);
// Records of a JSONL file; meta lines are skipped (and returned via `meta`).
std::vector<json> read_jsonl(const std::filesystem::path& path,
                             std::optional<RunMeta>* meta = nullptr);
void write_json(const std::filesystem::path& path, const RunMeta& meta,
                json document);
json read_json(const std::filesystem::path& path);

json to_json(const Task& task);
Task task_from_json(const json& j);
json to_json(const Episode& episode);
Episode episode_from_json(const json& j);

void write_tasks(const std::filesystem::path& path, const RunMeta& meta,
                 const TaskSet& tasks);
TaskSet read_tasks(const std::filesystem::path& path);
// Tasks of one split, in file order.
TaskSet select_split(const TaskSet& tasks, std::string_view split);

void write_rollouts(const std::filesystem::path& path, const RunMeta& meta,
                    const RolloutLog& log);
RolloutLog read_rollouts(const std::filesystem::path& path);

void write_counts(const std::filesystem::path& path, const RunMeta& meta,
                  const CountTable& counts);
CountTable read_counts(const std::filesystem::path& path);

void write_success(const std::filesystem::path& path, const RunMeta& meta,
                   const SuccessModel& success);
SuccessModel read_success(const std::filesystem::path& path);

json to_json(const Solution<double>& sol);
void write_solution(const std::filesystem::path& path, const RunMeta& meta,
                    const Solution<double>& sol);
Solution<double> read_solution(const std::filesystem::path& path);

void write_helper(const std::filesystem::path& path, const RunMeta& meta,
                  const HelperPolicy& helper);
HelperPolicy read_helper(const std::filesystem::path& path);

json to_json(const Metrics& metrics);
json to_json(const SelfRegulationReport& report);

}  // namespace helpdp
