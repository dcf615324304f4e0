#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>

#include "vtg/interval.hpp"

namespace vtg {

/// The four structural tag strings. The default answer pair is <time>/</time>;
/// an <answer>/</answer> profile is one configuration away.
struct TagProfile {
  std::string think_open = "<think>";
  std::string think_close = "</think>";
  std::string answer_open = "<time>";
  std::string answer_close = "</time>";

  /// Throws std::invalid_argument unless all four tags are non-empty and
  /// pairwise distinct.
  void validate() const;
};

/// Parse result for one model output. All failure modes are encoded here;
/// parse_response itself never throws.
struct StructuredResponse {
  std::string raw_text;
  /// Text between the first think_open/think_close pair, when both exist.
  std::optional<std::string> cot_text;
  /// First proper numeric pair found between the answer tags.
  std::optional<TimeInterval> interval;
  /// Set instead of interval when the first pair parsed with start > end.
  std::optional<std::pair<double, double>> improper_pair;
  /// Every profile tag found anywhere in raw_text (literal substring search).
  std::set<std::string> tags_present;
  /// True iff the think section matched and a proper interval was extracted.
  bool well_formed = false;
};

StructuredResponse parse_response(std::string_view text, const TagProfile& profile = {});

/// Inverse of parse_response for annotator output. Endpoints are printed with
/// three decimals. Throws std::invalid_argument when cot contains any of the
/// profile tag strings.
std::string render_response(std::string_view cot, const TimeInterval& iv,
                            const TagProfile& profile = {});

/// The binary format reward: 1 iff all four profile tags are present in the
/// parsed text. Pure set inclusion; order and nesting are deliberately not
/// checked (well_formed tracks those separately, for diagnostics).
int format_reward(const StructuredResponse& resp, const TagProfile& profile = {});

}  // namespace vtg
