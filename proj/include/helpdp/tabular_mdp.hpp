#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <algorithm>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "helpdp/keys.hpp"
#include "helpdp/models.hpp"

namespace helpdp {

using Index = Eigen::Index;

// Dense state numbering in key order.
class StateIndex {
 public:
  explicit StateIndex(std::vector<std::string> sorted_keys)
      : keys_(std::move(sorted_keys)) {
    flags_.reserve(keys_.size());
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      lookup_.emplace(keys_[i], static_cast<Index>(i));
      flags_.push_back(terminal_flag(keys_[i]));
    }
  }

  Index size() const { return static_cast<Index>(keys_.size()); }
  const std::string& key(Index i) const { return keys_[static_cast<std::size_t>(i)]; }
  TerminalFlag flag(Index i) const { return flags_[static_cast<std::size_t>(i)]; }
  std::optional<Index> find(const std::string& key) const {
    const auto it = lookup_.find(key);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }
  Index at(const std::string& key) const {
    if (auto i = find(key)) return *i;
    throw std::out_of_range("unknown state: " + key);
  }
  const std::vector<std::string>& keys() const { return keys_; }

 private:
  std::vector<std::string> keys_;
  std::vector<TerminalFlag> flags_;
  std::unordered_map<std::string, Index> lookup_;
};

// Indexed MDP: one row-stochastic sparse kernel per action (nohelp, help1..K).
// Rows of unobserved (state, action) pairs are empty and flagged in `has_row`.
// Non-terminal states with no rows at all are leaves whose success is taken
// from the success model's nohelp estimate (0 when unknown).
template <typename Scalar>
class TabularMdp {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Kernel = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;
  using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

  // `interventions` = K; 0 means infer from the model (at least 1).
  static TabularMdp from_model(const TransitionModel& model,
                               const SuccessModel* success = nullptr,
                               int interventions = 0) {
    TabularMdp mdp;
    const int k = std::max({1, interventions, model.interventions()});
    if (interventions > 0 && model.interventions() > interventions) {
      throw std::invalid_argument("model has more interventions than requested");
    }
    mdp.index_ = std::make_shared<const StateIndex>(std::vector<std::string>(
        model.support().begin(), model.support().end()));
    const Index n = mdp.index_->size();
    mdp.k_ = k;
    mdp.has_row_ = Mask::Constant(n, k + 1, false);
    std::vector<std::vector<Eigen::Triplet<Scalar>>> triplets(
        static_cast<std::size_t>(k + 1));
    for (const auto& [row_key, dist] : model.rows()) {
      const Index s = mdp.index_->at(row_key.first);
      const int a = row_key.second.index();
      mdp.has_row_(s, a) = true;
      for (const auto& [next, p] : dist) {
        triplets[static_cast<std::size_t>(a)].emplace_back(
            s, mdp.index_->at(next), static_cast<Scalar>(p));
      }
    }
    mdp.kernels_.resize(static_cast<std::size_t>(k + 1));
    for (int a = 0; a <= k; ++a) {
      auto& kernel = mdp.kernels_[static_cast<std::size_t>(a)];
      kernel.resize(n, n);
      kernel.setFromTriplets(triplets[static_cast<std::size_t>(a)].begin(),
                             triplets[static_cast<std::size_t>(a)].end());
      kernel.makeCompressed();
    }

    mdp.terminal_success_ = Vector::Zero(n);
    mdp.leaf_success_ = Vector::Zero(n);
    mdp.success_prob_ =
        Matrix::Constant(n, k + 1, std::numeric_limits<Scalar>::quiet_NaN());
    for (Index s = 0; s < n; ++s) {
      const auto& key = mdp.index_->key(s);
      if (mdp.index_->flag(s) == TerminalFlag::success) {
        mdp.terminal_success_(s) = Scalar(1);
      }
      if (success != nullptr) {
        for (int a = 0; a <= k; ++a) {
          if (auto p = success->p(key, ActionKind::from_index(a))) {
            mdp.success_prob_(s, a) = static_cast<Scalar>(*p);
          }
        }
      }
      if (mdp.is_leaf(s) && success != nullptr) {
        if (auto p = success->p(key, ActionKind::nohelp())) {
          mdp.leaf_success_(s) = static_cast<Scalar>(*p);
        }
      }
    }
    return mdp;
  }

  Index size() const { return index_->size(); }
  int interventions() const { return k_; }
  int actions() const { return k_ + 1; }
  const StateIndex& states() const { return *index_; }
  std::shared_ptr<const StateIndex> shared_states() const { return index_; }

  bool terminal(Index s) const {
    return index_->flag(s) != TerminalFlag::none;
  }
  bool has_row(Index s, int a) const { return has_row_(s, a); }
  bool is_leaf(Index s) const {
    return !terminal(s) && !has_row_.row(s).any();
  }
  const Mask& row_mask() const { return has_row_; }
  const Kernel& kernel(int a) const {
    return kernels_.at(static_cast<std::size_t>(a));
  }
  // 1 at terminal success states, 0 elsewhere.
  const Vector& terminal_success() const { return terminal_success_; }
  const Vector& leaf_success() const { return leaf_success_; }
  // Success-model estimate p(s, a); NaN when unknown.
  Scalar success_prob(Index s, int a) const { return success_prob_(s, a); }

  std::vector<Index> non_terminal_states() const {
    std::vector<Index> out;
    for (Index s = 0; s < size(); ++s) {
      if (!terminal(s)) out.push_back(s);
    }
    return out;
  }

 private:
  std::shared_ptr<const StateIndex> index_;
  int k_ = 1;
  std::vector<Kernel> kernels_;
  Mask has_row_;
  Vector terminal_success_;
  Vector leaf_success_;
  Matrix success_prob_;
};

using Mdp = TabularMdp<double>;

}  // namespace helpdp
