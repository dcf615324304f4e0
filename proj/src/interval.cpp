#include "vtg/interval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace vtg {

TimeInterval::TimeInterval(double start_s, double end_s) : start_(start_s), end_(end_s) {
  if (!std::isfinite(start_s) || !std::isfinite(end_s))
    throw std::invalid_argument("TimeInterval: endpoints must be finite");
  if (start_s > end_s)
    throw std::invalid_argument("TimeInterval: start (" + std::to_string(start_s) +
                                ") > end (" + std::to_string(end_s) + ")");
}

double interval_iou(const TimeInterval& a, const TimeInterval& b) {
  const double inter =
      std::max(0.0, std::min(a.end_s(), b.end_s()) - std::max(a.start_s(), b.start_s()));
  const double uni = a.length() + b.length() - inter;
  if (uni <= 0.0) {
    // Both intervals are points. Identical points count as a perfect match.
    return a.start_s() == b.start_s() ? 1.0 : 0.0;
  }
  return inter / uni;
}

}  // namespace vtg
