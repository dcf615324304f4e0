#pragma once

#include "vtg/interval.hpp"
#include "vtg/structio.hpp"

namespace vtg {

/// Weights of the composite reward. Defaults follow the 0.9 / 0.1 split used
/// throughout the experiments.
struct RewardWeights {
  double lambda_tiou = 0.9;
  double lambda_form = 0.1;

  /// Throws std::invalid_argument unless both are >= 0 and at least one is
  /// strictly positive.
  void validate() const;
};

struct RewardBreakdown {
  double r_tiou = 0.0;
  int r_form = 0;
  double total = 0.0;
};

/// IoU of the parsed prediction against the ground truth. Missing or
/// improper predictions score 0 rather than erroring: every sampled rollout
/// must receive a defined reward.
double tiou_reward(const StructuredResponse& resp, const TimeInterval& gt);

RewardBreakdown composite_reward(double r_tiou, int r_form, const RewardWeights& w);

}  // namespace vtg
