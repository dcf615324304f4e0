#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vtg/policy.hpp"
#include "vtg/reward.hpp"
#include "vtg/sample.hpp"

namespace vtg {

struct TrainConfig {
  int group_size = 8;      // G
  double beta = 0.0;       // KL coefficient against the reference policy
  double lr_sft = 1e-3;
  double lr_rl = 1e-3;
  int rl_steps = 600;
  int sft_epochs = 1;
  int samples_per_step = 8;  // RL batch size; also the SFT batch size
  int max_len = 64;
  double temperature = 1.0;  // rollout exploration only; densities stay at T=1
  int val_every = 25;
  std::optional<double> clip_eps;  // reserved; inert under one update per rollout batch
  std::uint64_t seed = 0;

  void validate() const;
};

/// G sampled responses for one task, with rewards and group-normalized
/// advantages.
struct GroupRollout {
  std::string sample_id;
  std::vector<TokenSequence> responses;
  std::vector<std::string> rendered;
  std::vector<double> rewards;
  double mean = 0.0;
  double stddev = 0.0;  // population (divide by G)
  std::vector<double> advantages;
};

struct StepStats {
  int step = 0;
  double mean_reward = 0.0;
  double mean_tiou = 0.0;
  double format_rate = 0.0;
  double mean_response_len = 0.0;
  double kl_value = 0.0;
  double loss = 0.0;
  std::optional<double> val_miou;
};

/// (r_i - mu) / sigma with population sigma; a constant group yields all
/// zeros. Requires at least two rewards.
std::vector<double> group_advantages(std::span<const double> rewards);

/// Per-token k3 estimator r - ln r - 1 with r = exp(logp_ref - logp_new),
/// averaged over tokens. Nonnegative; zero iff the lists are identical.
double kl_estimate(std::span<const double> logp_new, std::span<const double> logp_ref);

struct RewardConfig {
  RewardWeights weights;
  TagProfile profile;
};

/// Rollout execution mode inside a step. Both modes compute per-sample
/// gradients in isolated buffers and reduce them in sample order, so results
/// are identical; parallel only changes who does the work.
enum class RolloutMode { sequential, parallel };
RolloutMode rollout_mode();              // VTG_ROLLOUTS=sequential|parallel (default sequential)
void set_rollout_mode(RolloutMode mode); // programmatic override

/// One GRPO update: G rollouts per sample from the current params (the
/// pi_old snapshot), composite rewards, group-normalized advantages, then a
/// single ascent step on the mean of (1/G) sum_i ratio_i A_i - beta KL_i.
/// With one update per rollout batch the ratio is 1 at the update point and
/// the gradient reduces to (1/G) sum_i A_i grad log pi(o_i) - beta grad KL.
/// Throws std::runtime_error on a non-finite gradient. When rollouts_out is
/// given it receives the per-sample groups (in batch order).
StepStats grpo_step(PolicyParams& params, const PolicyParams& ref_params,
                    std::span<const GroundingSample> batch, const RewardConfig& reward,
                    const TrainConfig& cfg, std::uint64_t step_seed,
                    std::vector<GroupRollout>* rollouts_out = nullptr);

struct SftExample {
  std::vector<double> features;
  std::vector<int> tokens;
};

/// One gradient-descent step on the mean negative log-likelihood of the
/// targets. Returns the pre-step loss.
double sft_step(PolicyParams& params, std::span<const SftExample> batch, double lr);

struct SftCallbacks {
  std::function<void(int epoch, double mean_nll)> on_epoch;
  std::function<void()> on_step;
};

/// cfg.sft_epochs passes over the data in seeded shuffled order, batches of
/// cfg.samples_per_step. Throws on an empty dataset.
PolicyParams train_sft(PolicyParams params, std::span<const SftExample> data,
                       const TrainConfig& cfg, const SftCallbacks& callbacks = {});

struct RlCallbacks {
  /// Called after every step with the stats and the updated params.
  std::function<void(const StepStats&, const PolicyParams&)> on_step;
};

/// cfg.rl_steps GRPO iterations. Each draws cfg.samples_per_step samples with
/// replacement (seeded), runs grpo_step against the initial params as the KL
/// reference, and every cfg.val_every steps records greedy-decode mIoU on
/// val_data.
std::pair<PolicyParams, std::vector<StepStats>> train_rl(
    PolicyParams params, std::span<const GroundingSample> rl_data,
    std::span<const GroundingSample> val_data, const RewardConfig& reward,
    const TrainConfig& cfg, const RlCallbacks& callbacks = {});

}  // namespace vtg
