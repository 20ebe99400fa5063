#include "helpdp/planner.hpp"

namespace helpdp {

std::string_view to_string(ThresholdVariant variant) {
  return variant == ThresholdVariant::paper_literal ? "paper_literal"
                                                    : "value_consistent";
}

ThresholdVariant parse_variant(std::string_view text) {
  if (text == "paper_literal") return ThresholdVariant::paper_literal;
  if (text == "value_consistent") return ThresholdVariant::value_consistent;
  throw std::invalid_argument("unknown threshold variant '" +
                              std::string(text) + "'");
}

void RewardConfig::validate(int interventions) const {
  if (static_cast<int>(r.size()) != interventions) {
    throw std::invalid_argument("expected " + std::to_string(interventions) +
                                " reward costs, got " +
                                std::to_string(r.size()));
  }
  for (double ri : r) {
    if (!(ri >= 0.0) || !std::isfinite(ri)) {
      throw std::invalid_argument("reward costs must be finite and >= 0");
    }
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("gamma must lie in (0, 1]");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
}

}  // namespace helpdp
