#include "vtg/reward.hpp"

#include <stdexcept>

namespace vtg {

void RewardWeights::validate() const {
  if (lambda_tiou < 0.0 || lambda_form < 0.0)
    throw std::invalid_argument("RewardWeights: weights must be >= 0");
  if (lambda_tiou == 0.0 && lambda_form == 0.0)
    throw std::invalid_argument("RewardWeights: at least one weight must be > 0");
}

double tiou_reward(const StructuredResponse& resp, const TimeInterval& gt) {
  if (!resp.interval) return 0.0;
  return interval_iou(*resp.interval, gt);
}

RewardBreakdown composite_reward(double r_tiou, int r_form, const RewardWeights& w) {
  RewardBreakdown b;
  b.r_tiou = r_tiou;
  b.r_form = r_form;
  b.total = w.lambda_tiou * r_tiou + w.lambda_form * static_cast<double>(r_form);
  return b;
}

}  // namespace vtg
