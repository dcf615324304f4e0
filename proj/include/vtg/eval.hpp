#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vtg/policy.hpp"
#include "vtg/sample.hpp"
#include "vtg/structio.hpp"

namespace vtg {

inline constexpr double kDefaultThresholds[] = {0.3, 0.5, 0.7};

struct EvalReport {
  /// (threshold, fraction) in the order the thresholds were given.
  std::vector<std::pair<double, double>> recalls;
  double miou = 0.0;
  int n = 0;
  int unparsed_count = 0;
};

/// Fraction of entries strictly greater than m ("greater than", so a
/// boundary IoU == m is not a hit). Throws on an empty list.
double recall_at(std::span<const double> ious, double m);

/// Arithmetic mean. Throws on an empty list.
double mean_iou(std::span<const double> ious);

/// Greedy-decodes one prediction per sample, renders, parses and scores IoU
/// against the ground truth; unparseable or improper predictions count as 0
/// and are never dropped from the denominators.
EvalReport evaluate_policy(const PolicyParams& params,
                           std::span<const GroundingSample> dataset,
                           const TagProfile& profile,
                           std::span<const double> thresholds = kDefaultThresholds,
                           int max_len = 64);

/// Report file: {"R@0.3": ..., "mIoU": ..., "n": ..., "unparsed": ...,
/// "config": {...}}.
void write_report(const std::filesystem::path& path, const EvalReport& report,
                  const std::map<std::string, std::string>& config_echo);

/// "R@0.3"-style key for a threshold.
std::string recall_key(double threshold);

}  // namespace vtg
