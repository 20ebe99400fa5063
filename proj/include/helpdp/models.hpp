#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "helpdp/keys.hpp"
#include "helpdp/rollout.hpp"

namespace helpdp {

using RowKey = std::pair<std::string, ActionKind>;

// Transition counts keyed by (state, action) then next state.
class CountTable {
 public:
  using Row = std::map<std::string, std::uint64_t>;

  // Throws std::invalid_argument("terminal source ...") for terminal `state`.
  void record(const std::string& state, ActionKind action,
              const std::string& next, std::uint64_t n = 1);
  void merge(const CountTable& other);
  // Removes every row whose source is `state`.
  void erase_source(const std::string& state);

  std::uint64_t count(const std::string& state, ActionKind action,
                      const std::string& next) const;
  std::uint64_t total() const { return total_; }
  bool empty() const { return rows_.empty(); }
  const std::map<RowKey, Row>& rows() const { return rows_; }

 private:
  std::map<RowKey, Row> rows_;
  std::uint64_t total_ = 0;
};

CountTable record_transition(CountTable table, const std::string& state,
                             ActionKind action, const std::string& next);

// Records every step of every episode; the step after the last is the
// episode's terminal key. Episodes without a terminal contribute all but the
// final step.
CountTable count_transitions(const RolloutLog& log);

// Empirical categorical next-state laws. Rows with no observations are absent.
class TransitionModel {
 public:
  using Distribution = std::vector<std::pair<std::string, double>>;

  // Probabilities must lie in [0,1] and sum to 1 within 1e-12; entries are
  // stored sorted by next-state key.
  void set_row(const std::string& state, ActionKind action, Distribution dist);

  const Distribution* row(const std::string& state, ActionKind action) const;
  const std::map<RowKey, Distribution>& rows() const { return rows_; }
  const std::set<std::string>& support() const { return support_; }
  // Largest help index with at least one row.
  int interventions() const;
  bool empty() const { return rows_.empty(); }

 private:
  std::map<RowKey, Distribution> rows_;
  std::set<std::string> support_;
};

// Counts divided by row sums. With laplace_alpha > 0, alpha is added to every
// next state observed from the same source under any action.
TransitionModel normalize(const CountTable& table, double laplace_alpha = 0.0);

enum class Provenance { empirical, exact };

std::string_view to_string(Provenance provenance);
Provenance parse_provenance(std::string_view text);

struct SuccessEntry {
  double p = 0.0;
  std::uint64_t n = 0;
};

// Per (state, action-branch) probability of eventually reaching success.
class SuccessModel {
 public:
  explicit SuccessModel(Provenance provenance = Provenance::empirical)
      : provenance_(provenance) {}

  void set(const std::string& state, ActionKind action, double p,
           std::uint64_t n);

  // Terminal keys report 1 or 0 regardless of stored samples.
  std::optional<double> p(const std::string& state, ActionKind action) const;
  const SuccessEntry* entry(const std::string& state, ActionKind action) const;

  Provenance provenance() const { return provenance_; }
  const std::map<RowKey, SuccessEntry>& entries() const { return entries_; }

 private:
  Provenance provenance_;
  std::map<RowKey, SuccessEntry> entries_;
};

// p(s,a) = successes / visits over every visit of s where branch a was taken.
// Throws if an episode has no terminal outcome, naming the episode.
SuccessModel estimate_success(const RolloutLog& log,
                              double laplace_alpha = 0.0);

}  // namespace helpdp
