#include "vtg/curation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "vtg/fsio.hpp"

namespace vtg {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kGenStream = 0x6E1;
constexpr std::uint64_t kAnnStream = 0xA22;

}  // namespace

void CurationConfig::validate() const {
  if (n_samples < 1) throw std::invalid_argument("CurationConfig: n_samples must be >= 1");
  if (duration_s <= 0.0)
    throw std::invalid_argument("CurationConfig: duration_s must be > 0");
  if (!(0.0 <= eps2 && eps2 <= eps1 && eps1 <= 1.0))
    throw std::invalid_argument("CurationConfig: need 0 <= eps2 <= eps1 <= 1");
  if (easy_frac < 0.0 || easy_frac > 1.0)
    throw std::invalid_argument("CurationConfig: easy_frac outside [0,1]");
  if (p_annot_error < 0.0 || p_annot_error > 1.0)
    throw std::invalid_argument("CurationConfig: p_annot_error outside [0,1]");
  if (noise_scale < 0.0) throw std::invalid_argument("CurationConfig: noise_scale < 0");
  if (cot_len_min < 0 || cot_len_max < cot_len_min)
    throw std::invalid_argument("CurationConfig: bad cot_len range");
  if (feature_noise_base < 0.0 || feature_noise_per_difficulty < 0.0)
    throw std::invalid_argument("CurationConfig: feature noise must be >= 0");
  if (d_feat < 4)
    throw std::invalid_argument("CurationConfig: d_feat must be >= 4 (four signal slots)");
}

const char* difficulty_dist_name(DifficultyDist d) {
  return d == DifficultyDist::uniform ? "uniform" : "bimodal";
}

DifficultyDist difficulty_dist_from_name(const std::string& name) {
  if (name == "uniform") return DifficultyDist::uniform;
  if (name == "bimodal") return DifficultyDist::bimodal;
  throw std::invalid_argument("unknown difficulty distribution: " + name);
}

std::vector<GroundingSample> generate_dataset(const CurationConfig& cfg) {
  cfg.validate();
  std::vector<GroundingSample> out;
  out.reserve(static_cast<std::size_t>(cfg.n_samples));
  const double d = cfg.duration_s;

  for (int i = 0; i < cfg.n_samples; ++i) {
    Rng rng(mix_seed(cfg.seed, kGenStream, static_cast<std::uint64_t>(i)));
    GroundingSample s;
    char idbuf[64];
    std::snprintf(idbuf, sizeof(idbuf), "g%llu-%06d",
                  static_cast<unsigned long long>(cfg.seed), i);
    s.id = idbuf;
    s.duration_s = d;

    double difficulty;
    if (cfg.difficulty_dist == DifficultyDist::uniform) {
      difficulty = rng.uniform01();
    } else {
      // Easy mode near 0, hard mode near 1.
      difficulty = rng.uniform01() < cfg.easy_frac ? rng.uniform(0.0, 0.1)
                                                   : rng.uniform(0.9, 1.0);
    }
    s.difficulty = difficulty;

    const double start = rng.uniform(0.0, 0.8 * d);
    const double len = rng.uniform(0.05, 0.3) * d;
    const double end = std::min(start + len, d);
    s.gt = TimeInterval(start, end);

    const double sigma = cfg.feature_sigma(difficulty);
    s.features.resize(static_cast<std::size_t>(cfg.d_feat));
    s.features[0] = start / d + rng.normal(0.0, sigma);
    s.features[1] = end / d + rng.normal(0.0, sigma);
    s.features[2] = difficulty;
    s.features[3] = (end - start) / d + rng.normal(0.0, sigma);
    for (int k = 4; k < cfg.d_feat; ++k)
      s.features[static_cast<std::size_t>(k)] = rng.normal(0.0, 1.0);

    out.push_back(std::move(s));
  }
  return out;
}

AnnotatedSample simulate_annotation(const GroundingSample& s, const CurationConfig& cfg,
                                    const PolicyVocab& vocab, const TagProfile& profile,
                                    Rng& rng) {
  const double d = s.duration_s;
  double a, b;
  if (rng.uniform01() < cfg.p_annot_error) {
    a = rng.uniform(0.0, d);
    b = rng.uniform(0.0, d);
  } else {
    const double sigma = cfg.noise_scale * s.difficulty * d;
    a = s.gt.start_s() + rng.normal(0.0, sigma);
    b = s.gt.end_s() + rng.normal(0.0, sigma);
    a = std::clamp(a, 0.0, d);
    b = std::clamp(b, 0.0, d);
  }
  if (a > b) std::swap(a, b);

  AnnotatedSample out;
  out.sample = s;
  out.ann_interval = TimeInterval(a, b);
  out.ann_iou = interval_iou(*out.ann_interval, s.gt);

  const int span = cfg.cot_len_max - cfg.cot_len_min + 1;
  const int cot_len =
      cfg.cot_len_min + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(span)));
  auto to_bin = [&](double t) {
    const int k = static_cast<int>(std::floor(t / d * vocab.n_bins));
    return std::clamp(k, 0, vocab.n_bins - 1);
  };
  out.response_tokens.push_back(vocab.think_open());
  for (int i = 0; i < cot_len; ++i)
    out.response_tokens.push_back(vocab.filler(
        static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vocab.n_filler)))));
  out.response_tokens.push_back(vocab.think_close());
  out.response_tokens.push_back(vocab.time_open());
  out.response_tokens.push_back(vocab.bin(to_bin(a)));
  out.response_tokens.push_back(vocab.bin(to_bin(b)));
  out.response_tokens.push_back(vocab.time_close());
  out.response_tokens.push_back(vocab.eos());

  out.response_text = decode_response(out.response_tokens, d, vocab, profile);
  return out;
}

std::vector<AnnotatedSample> annotate_dataset(std::span<const GroundingSample> samples,
                                              const CurationConfig& cfg,
                                              const PolicyVocab& vocab,
                                              const TagProfile& profile) {
  std::vector<AnnotatedSample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Rng rng(mix_seed(cfg.seed, kAnnStream, i));
    out.push_back(simulate_annotation(samples[i], cfg, vocab, profile, rng));
  }
  return out;
}

SplitResult filter_split(std::span<const AnnotatedSample> annotated, double eps1,
                         double eps2) {
  SplitResult r;
  for (const auto& a : annotated) {
    if (a.ann_iou > eps1)
      r.coldstart.push_back(a);
    else if (a.ann_iou < eps2)
      r.discarded.push_back(a);
    else
      r.rl.push_back(a);
  }
  return r;
}

std::string encode_annotated(const AnnotatedSample& a) {
  ordered_json j = ordered_json::parse(encode_sample(a.sample));
  j["response_text"] = a.response_text;
  j["response_tokens"] = a.response_tokens;
  if (a.ann_interval)
    j["ann_interval"] = {a.ann_interval->start_s(), a.ann_interval->end_s()};
  else
    j["ann_interval"] = nullptr;
  j["ann_iou"] = a.ann_iou;
  return j.dump();
}

AnnotatedSample decode_annotated(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("decode error: invalid record: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("decode error: record is not an object");

  static const std::set<std::string> extra = {"response_text", "response_tokens",
                                              "ann_interval", "ann_iou"};
  ordered_json core = ordered_json::object();
  ordered_json rest = ordered_json::object();
  for (const auto& item : j.items()) {
    if (extra.count(item.key()))
      rest[item.key()] = item.value();
    else
      core[item.key()] = item.value();
  }
  for (const auto& name : extra)
    if (!rest.contains(name))
      throw std::runtime_error("decode error in field '" + name + "': missing");

  AnnotatedSample a;
  a.sample = decode_sample(core.dump());
  if (!rest["response_text"].is_string())
    throw std::runtime_error("decode error in field 'response_text': expected a string");
  a.response_text = rest["response_text"].get<std::string>();
  if (!rest["response_tokens"].is_array())
    throw std::runtime_error("decode error in field 'response_tokens': expected an array");
  for (const auto& t : rest["response_tokens"]) {
    if (!t.is_number_integer())
      throw std::runtime_error("decode error in field 'response_tokens': expected integers");
    a.response_tokens.push_back(t.get<int>());
  }
  if (rest["ann_interval"].is_null()) {
    a.ann_interval.reset();
  } else if (rest["ann_interval"].is_array() && rest["ann_interval"].size() == 2 &&
             rest["ann_interval"][0].is_number() && rest["ann_interval"][1].is_number()) {
    const double s = rest["ann_interval"][0].get<double>();
    const double e = rest["ann_interval"][1].get<double>();
    if (s > e)
      throw std::runtime_error("validation error in field 'ann_interval': start > end");
    a.ann_interval = TimeInterval(s, e);
  } else {
    throw std::runtime_error(
        "decode error in field 'ann_interval': expected [start, end] or null");
  }
  if (!rest["ann_iou"].is_number())
    throw std::runtime_error("decode error in field 'ann_iou': expected a number");
  a.ann_iou = rest["ann_iou"].get<double>();
  if (a.ann_iou < 0.0 || a.ann_iou > 1.0)
    throw std::runtime_error("validation error in field 'ann_iou': outside [0,1]");
  return a;
}

std::vector<AnnotatedSample> read_annotated(const std::filesystem::path& path) {
  std::vector<AnnotatedSample> out;
  std::size_t line_no = 0;
  for (const auto& line : fsio::read_lines(path)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(decode_annotated(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return out;
}

void write_annotated(const std::filesystem::path& path,
                     std::span<const AnnotatedSample> annotated) {
  std::ostringstream out;
  for (const auto& a : annotated) out << encode_annotated(a) << '\n';
  fsio::atomic_write(path, out.str());
}

}  // namespace vtg
