#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vtg/policy.hpp"
#include "vtg/rng.hpp"
#include "vtg/sample.hpp"
#include "vtg/structio.hpp"

namespace vtg {

enum class DifficultyDist { uniform, bimodal };

/// Knobs for synthetic task generation and the simulated annotator. The
/// annotator noise scales with sample difficulty, so hard samples are both
/// hard for the policy (noisy features) and likely to be filtered out (bad
/// annotations) — which is what makes difficulty filtering meaningful here.
struct CurationConfig {
  int n_samples = 0;
  double duration_s = 64.0;
  double eps1 = 0.8;
  double eps2 = 0.4;
  DifficultyDist difficulty_dist = DifficultyDist::uniform;
  double easy_frac = 0.5;  // bimodal only: fraction drawn from the easy mode
  double p_annot_error = 0.1;
  double noise_scale = 0.15;  // annotator endpoint sigma, fraction of duration at difficulty 1
  int cot_len_min = 4;
  int cot_len_max = 24;
  double feature_noise_base = 0.05;
  double feature_noise_per_difficulty = 0.25;
  int d_feat = 8;
  std::uint64_t seed = 0;

  double feature_sigma(double difficulty) const {
    return feature_noise_base + feature_noise_per_difficulty * difficulty;
  }
  void validate() const;
};

const char* difficulty_dist_name(DifficultyDist d);
DifficultyDist difficulty_dist_from_name(const std::string& name);

/// A sample plus its simulated chain-of-thought annotation. ann_interval is
/// the annotator's continuous output; response_tokens carry its bin-quantized
/// rendering in the response grammar.
struct AnnotatedSample {
  GroundingSample sample;
  std::string response_text;
  std::vector<int> response_tokens;
  std::optional<TimeInterval> ann_interval;
  double ann_iou = 0.0;
};

/// Synthetic tasks: gt start ~ U[0, 0.8 d], length ~ U[0.05, 0.3] d (end
/// clamped to the duration), features carrying the normalized gt endpoints
/// and length perturbed by difficulty-scaled noise, plus standard-normal
/// distractors. Deterministic per seed.
std::vector<GroundingSample> generate_dataset(const CurationConfig& cfg);

/// The annotation surrogate: with probability p_annot_error a uniformly
/// random interval, otherwise the gt with difficulty-scaled endpoint noise;
/// a filler chain-of-thought; tagged text via the token decode.
AnnotatedSample simulate_annotation(const GroundingSample& s, const CurationConfig& cfg,
                                    const PolicyVocab& vocab, const TagProfile& profile,
                                    Rng& rng);

/// Annotates every sample with an independently derived per-sample stream.
std::vector<AnnotatedSample> annotate_dataset(std::span<const GroundingSample> samples,
                                              const CurationConfig& cfg,
                                              const PolicyVocab& vocab,
                                              const TagProfile& profile);

struct SplitResult {
  std::vector<AnnotatedSample> coldstart;  // ann_iou > eps1
  std::vector<AnnotatedSample> rl;         // eps2 <= ann_iou <= eps1
  std::vector<AnnotatedSample> discarded;  // ann_iou < eps2
};

/// Exact three-way partition with strict inequalities on both thresholds;
/// input order is preserved within each pool.
SplitResult filter_split(std::span<const AnnotatedSample> annotated, double eps1,
                         double eps2);

std::string encode_annotated(const AnnotatedSample& a);
AnnotatedSample decode_annotated(const std::string& line);
std::vector<AnnotatedSample> read_annotated(const std::filesystem::path& path);
void write_annotated(const std::filesystem::path& path,
                     std::span<const AnnotatedSample> annotated);

}  // namespace vtg
