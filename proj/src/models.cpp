#include "helpdp/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace helpdp {

int Episode::interventions() const {
  return static_cast<int>(std::count_if(
      steps.begin(), steps.end(),
      [](const RolloutStep& s) { return s.intervention > 0; }));
}

std::string Episode::id() const {
  return task_id + "#" + std::to_string(seed);
}

void CountTable::record(const std::string& state, ActionKind action,
                        const std::string& next, std::uint64_t n) {
  if (is_terminal(state)) {
    throw std::invalid_argument("terminal source: " + state);
  }
  rows_[{state, action}][next] += n;
  total_ += n;
}

void CountTable::merge(const CountTable& other) {
  for (const auto& [key, row] : other.rows_) {
    auto& mine = rows_[key];
    for (const auto& [next, n] : row) mine[next] += n;
  }
  total_ += other.total_;
}

void CountTable::erase_source(const std::string& state) {
  for (auto it = rows_.lower_bound({state, ActionKind::nohelp()});
       it != rows_.end() && it->first.first == state;) {
    for (const auto& [next, n] : it->second) total_ -= n;
    it = rows_.erase(it);
  }
}

std::uint64_t CountTable::count(const std::string& state, ActionKind action,
                                const std::string& next) const {
  const auto row = rows_.find({state, action});
  if (row == rows_.end()) return 0;
  const auto it = row->second.find(next);
  return it == row->second.end() ? 0 : it->second;
}

CountTable record_transition(CountTable table, const std::string& state,
                             ActionKind action, const std::string& next) {
  table.record(state, action, next);
  return table;
}

CountTable count_transitions(const RolloutLog& log) {
  CountTable table;
  for (const auto& episode : log) {
    for (std::size_t t = 0; t < episode.steps.size(); ++t) {
      const auto& step = episode.steps[t];
      if (t + 1 < episode.steps.size()) {
        table.record(step.state, step.kind(), episode.steps[t + 1].state);
      } else if (!episode.terminal.empty()) {
        table.record(step.state, step.kind(), episode.terminal);
      }
    }
  }
  return table;
}

void TransitionModel::set_row(const std::string& state, ActionKind action,
                              Distribution dist) {
  if (is_terminal(state)) {
    throw std::invalid_argument("terminal source: " + state);
  }
  if (dist.empty()) throw std::invalid_argument("empty distribution: " + state);
  std::sort(dist.begin(), dist.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const auto& [next, p] = dist[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument("probability out of range in row " + state);
    }
    if (i > 0 && dist[i - 1].first == next) {
      throw std::invalid_argument("duplicate next state in row " + state);
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("row " + state + "/" + action.str() +
                                " does not sum to 1");
  }
  support_.insert(state);
  for (const auto& [next, p] : dist) support_.insert(next);
  rows_[{state, action}] = std::move(dist);
}

const TransitionModel::Distribution* TransitionModel::row(
    const std::string& state, ActionKind action) const {
  const auto it = rows_.find({state, action});
  return it == rows_.end() ? nullptr : &it->second;
}

int TransitionModel::interventions() const {
  int k = 0;
  for (const auto& [key, dist] : rows_) k = std::max(k, key.second.index());
  return k;
}

TransitionModel normalize(const CountTable& table, double laplace_alpha) {
  if (table.empty()) throw std::invalid_argument("no data");
  if (laplace_alpha < 0.0) throw std::invalid_argument("laplace_alpha < 0");

  std::map<std::string, std::set<std::string>> local_support;
  if (laplace_alpha > 0.0) {
    for (const auto& [key, row] : table.rows()) {
      for (const auto& [next, n] : row) local_support[key.first].insert(next);
    }
  }

  TransitionModel model;
  for (const auto& [key, row] : table.rows()) {
    TransitionModel::Distribution dist;
    if (laplace_alpha > 0.0) {
      const auto& nexts = local_support[key.first];
      double total = laplace_alpha * static_cast<double>(nexts.size());
      for (const auto& [next, n] : row) total += static_cast<double>(n);
      for (const auto& next : nexts) {
        const auto it = row.find(next);
        const double n = it == row.end() ? 0.0 : static_cast<double>(it->second);
        dist.emplace_back(next, (n + laplace_alpha) / total);
      }
    } else {
      std::uint64_t total = 0;
      for (const auto& [next, n] : row) total += n;
      for (const auto& [next, n] : row) {
        dist.emplace_back(next, static_cast<double>(n) /
                                    static_cast<double>(total));
      }
    }
    // Renormalize against accumulated rounding so set_row's check is exact.
    double sum = 0.0;
    for (const auto& [next, p] : dist) sum += p;
    if (std::abs(sum - 1.0) > 1e-12) {
      for (auto& [next, p] : dist) p /= sum;
    }
    model.set_row(key.first, key.second, std::move(dist));
  }
  return model;
}

std::string_view to_string(Provenance provenance) {
  return provenance == Provenance::exact ? "exact" : "empirical";
}

Provenance parse_provenance(std::string_view text) {
  if (text == "exact") return Provenance::exact;
  if (text == "empirical") return Provenance::empirical;
  throw std::invalid_argument("unknown provenance '" + std::string(text) + "'");
}

void SuccessModel::set(const std::string& state, ActionKind action, double p,
                       std::uint64_t n) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("success probability out of range for " +
                                state);
  }
  if (provenance_ == Provenance::empirical && n < 1) {
    throw std::invalid_argument("empirical entry needs sample_count >= 1");
  }
  entries_[{state, action}] = SuccessEntry{p, n};
}

std::optional<double> SuccessModel::p(const std::string& state,
                                      ActionKind action) const {
  switch (terminal_flag(state)) {
    case TerminalFlag::success: return 1.0;
    case TerminalFlag::failure: return 0.0;
    case TerminalFlag::none: break;
  }
  const auto it = entries_.find({state, action});
  if (it == entries_.end()) return std::nullopt;
  return it->second.p;
}

const SuccessEntry* SuccessModel::entry(const std::string& state,
                                        ActionKind action) const {
  const auto it = entries_.find({state, action});
  return it == entries_.end() ? nullptr : &it->second;
}

SuccessModel estimate_success(const RolloutLog& log, double laplace_alpha) {
  std::map<RowKey, std::pair<std::uint64_t, std::uint64_t>> tallies;
  for (const auto& episode : log) {
    if (episode.outcome() == TerminalFlag::none) {
      throw std::invalid_argument("rollout without terminal outcome: " +
                                  episode.id());
    }
    const bool success = episode.succeeded();
    for (const auto& step : episode.steps) {
      auto& [wins, visits] = tallies[{step.state, step.kind()}];
      wins += success ? 1 : 0;
      visits += 1;
    }
  }
  SuccessModel model(Provenance::empirical);
  for (const auto& [key, tally] : tallies) {
    const auto [wins, visits] = tally;
    const double p = (static_cast<double>(wins) + laplace_alpha) /
                     (static_cast<double>(visits) + 2.0 * laplace_alpha);
    model.set(key.first, key.second, p, visits);
  }
  return model;
}

}  // namespace helpdp
