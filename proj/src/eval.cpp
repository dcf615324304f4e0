#include "vtg/eval.hpp"

#include <cstdio>
#include <stdexcept>

#include "json.hpp"

#include "vtg/fsio.hpp"
#include "vtg/reward.hpp"

namespace vtg {

using ordered_json = nlohmann::ordered_json;

double recall_at(std::span<const double> ious, double m) {
  if (ious.empty()) throw std::invalid_argument("recall_at: empty list");
  std::size_t hits = 0;
  for (double v : ious)
    if (v > m) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ious.size());
}

double mean_iou(std::span<const double> ious) {
  if (ious.empty()) throw std::invalid_argument("mean_iou: empty list");
  double sum = 0.0;
  for (double v : ious) sum += v;
  return sum / static_cast<double>(ious.size());
}

EvalReport evaluate_policy(const PolicyParams& params,
                           std::span<const GroundingSample> dataset,
                           const TagProfile& profile, std::span<const double> thresholds,
                           int max_len) {
  if (dataset.empty()) throw std::invalid_argument("evaluate_policy: empty dataset");

  std::vector<double> ious;
  ious.reserve(dataset.size());
  int unparsed = 0;
  Rng unused(0);  // greedy decoding never consumes it
  for (const auto& s : dataset) {
    const TokenSequence seq = sample_sequence(params, s.features, 0.0, max_len, unused);
    const std::string text = decode_response(seq.tokens, s.duration_s, params.vocab, profile);
    const StructuredResponse parsed = parse_response(text, profile);
    if (!parsed.interval) ++unparsed;
    ious.push_back(tiou_reward(parsed, s.gt));
  }

  EvalReport report;
  report.n = static_cast<int>(dataset.size());
  report.unparsed_count = unparsed;
  report.miou = mean_iou(ious);
  for (double m : thresholds) report.recalls.emplace_back(m, recall_at(ious, m));
  return report;
}

std::string recall_key(double threshold) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "R@%g", threshold);
  return buf;
}

void write_report(const std::filesystem::path& path, const EvalReport& report,
                  const std::map<std::string, std::string>& config_echo) {
  ordered_json j;
  for (const auto& [m, frac] : report.recalls) j[recall_key(m)] = frac;
  j["mIoU"] = report.miou;
  j["n"] = report.n;
  j["unparsed"] = report.unparsed_count;
  j["config"] = ordered_json::object();
  for (const auto& [k, v] : config_echo) j["config"][k] = v;
  fsio::atomic_write(path, j.dump(1) + "\n");
}

}  // namespace vtg
