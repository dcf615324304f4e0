#pragma once

namespace vtg {

/// A closed time segment [start_s, end_s] in seconds. Construction enforces
/// finite endpoints with start_s <= end_s; improper pairs coming out of
/// parsing are represented upstream as parse results, never as TimeInterval
/// values.
class TimeInterval {
 public:
  TimeInterval() = default;
  TimeInterval(double start_s, double end_s);

  double start_s() const { return start_; }
  double end_s() const { return end_; }
  double length() const { return end_ - start_; }

  bool operator==(const TimeInterval&) const = default;

 private:
  double start_ = 0.0;
  double end_ = 0.0;
};

/// Intersection-over-union of two intervals, using the measure of the set
/// union (not the convex hull). Two identical zero-length intervals score 1;
/// any other degenerate zero-measure union scores 0.
double interval_iou(const TimeInterval& a, const TimeInterval& b);

}  // namespace vtg
