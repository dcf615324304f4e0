#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vtg/curation.hpp"
#include "vtg/eval.hpp"
#include "vtg/policy.hpp"
#include "vtg/train.hpp"

namespace vtg {

/// Everything one end-to-end run needs. Serializable to and from a single
/// JSON document; any CLI flag overrides its counterpart here.
struct PipelineConfig {
  CurationConfig curation;  // n_samples is the training-pool size
  int n_val = 200;
  TrainConfig train;
  RewardWeights weights;
  TagProfile tags;
  PolicyDims dims;
  PolicyVocab vocab;
  std::uint64_t seed = 0;
  std::string variant = "coldstart";

  void validate() const;
  std::string to_json_text() const;
  static PipelineConfig from_json_text(const std::string& text);
  static PipelineConfig from_json_file(const std::filesystem::path& path);
};

/// Per-stage seeds derived from the master seed. Echoed into the resolved
/// config so each stage can be replayed standalone with identical bytes.
struct StageSeeds {
  std::uint64_t gen_train = 0;
  std::uint64_t gen_val = 0;
  std::uint64_t annotate = 0;
  std::uint64_t policy_init = 0;
  std::uint64_t sft = 0;
  std::uint64_t rl = 0;

  static StageSeeds derive(std::uint64_t master);
};

// Run variants: coldstart (SFT then RL on the filtered pool), zero (RL only,
// filtered pool), coldstart-unfiltered-rl and zero-unfiltered (RL on the
// whole annotated pool).
bool known_variant(const std::string& v);
bool variant_uses_sft(const std::string& v);
bool variant_uses_filtered_pool(const std::string& v);
std::vector<std::string> variant_names();

/// Reads grounding samples from either a plain sample file or an annotated
/// file (annotations are stripped).
std::vector<GroundingSample> read_samples_any(const std::filesystem::path& path);

void run_gen(const CurationConfig& cfg, const std::filesystem::path& out);

void run_annotate(const std::filesystem::path& in, const std::filesystem::path& out,
                  const CurationConfig& cfg, const PolicyVocab& vocab,
                  const TagProfile& tags);

struct SplitCounts {
  std::size_t input = 0, coldstart = 0, rl = 0, discarded = 0;
};

/// Writes coldstart.jsonl, rl.jsonl, discarded.jsonl and split_manifest.json
/// under out_dir.
SplitCounts run_curate(const std::filesystem::path& in,
                       const std::filesystem::path& out_dir, double eps1, double eps2);

/// SFT on an annotated file. Starts from init_ckpt when given, otherwise from
/// a fresh policy seeded by init_seed. Writes the cold-start checkpoint and,
/// when metrics_out is set, one line of mean NLL per epoch.
void run_sft(const std::filesystem::path& data, const std::optional<std::filesystem::path>& init_ckpt,
             const std::filesystem::path& out_ckpt, const TrainConfig& train,
             const PolicyDims& dims, const PolicyVocab& vocab, std::uint64_t init_seed,
             const std::optional<std::filesystem::path>& metrics_out);

/// RL on a sample or annotated file. Writes metrics.jsonl (one record per
/// step), a checkpoint at every validation point and final.json under
/// out_dir.
void run_rl(const std::filesystem::path& data, const std::filesystem::path& val,
            const std::optional<std::filesystem::path>& init_ckpt,
            const std::filesystem::path& out_dir, const TrainConfig& train,
            const RewardConfig& reward, const PolicyDims& dims, const PolicyVocab& vocab,
            std::uint64_t init_seed);

void run_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
              const std::filesystem::path& out, const TagProfile& tags,
              const std::vector<double>& thresholds, int max_len);

/// The whole two-stage pipeline in one work directory (lock-guarded):
/// gen -> annotate -> curate -> [sft] -> rl -> eval, with per-stage seeds
/// from StageSeeds::derive(cfg.seed) and the resolved config echoed to
/// config.resolved.json.
void run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& workdir);

}  // namespace vtg
