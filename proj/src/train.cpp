#include "vtg/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <stdexcept>
#include <string_view>
#include <thread>

#include "vtg/eval.hpp"

namespace vtg {

namespace {

constexpr std::uint64_t kSlotStream = 0x51;
constexpr std::uint64_t kSftShuffleStream = 0x5F7;
constexpr std::uint64_t kRlStepStream = 0x21;
constexpr std::uint64_t kRlBatchStream = 0xBA;

RolloutMode resolve_rollout_mode() {
  const char* env = std::getenv("VTG_ROLLOUTS");
  if (!env || std::string_view(env) == "sequential") return RolloutMode::sequential;
  if (std::string_view(env) == "parallel") return RolloutMode::parallel;
  throw std::runtime_error("VTG_ROLLOUTS must be sequential or parallel");
}

RolloutMode& mode_slot() {
  static RolloutMode mode = resolve_rollout_mode();
  return mode;
}

}  // namespace

RolloutMode rollout_mode() { return mode_slot(); }
void set_rollout_mode(RolloutMode mode) { mode_slot() = mode; }

void TrainConfig::validate() const {
  if (group_size < 2)
    throw std::invalid_argument("TrainConfig: group_size must be >= 2");
  if (beta < 0.0) throw std::invalid_argument("TrainConfig: beta must be >= 0");
  if (max_len < 8) throw std::invalid_argument("TrainConfig: max_len must be >= 8");
  if (samples_per_step < 1)
    throw std::invalid_argument("TrainConfig: samples_per_step must be >= 1");
  if (rl_steps < 0) throw std::invalid_argument("TrainConfig: rl_steps must be >= 0");
  if (sft_epochs < 0) throw std::invalid_argument("TrainConfig: sft_epochs must be >= 0");
  if (temperature < 0.0)
    throw std::invalid_argument("TrainConfig: temperature must be >= 0");
  if (val_every < 1) throw std::invalid_argument("TrainConfig: val_every must be >= 1");
}

std::vector<double> group_advantages(std::span<const double> rewards) {
  const std::size_t g = rewards.size();
  if (g < 2) throw std::invalid_argument("group_advantages: need at least 2 rewards");

  const auto [mn, mx] = std::minmax_element(rewards.begin(), rewards.end());
  if (*mn == *mx) return std::vector<double>(g, 0.0);

  const double inv_g = 1.0 / static_cast<double>(g);
  double mu = 0.0;
  for (double r : rewards) mu += r;
  mu *= inv_g;
  std::vector<double> d(g);
  for (std::size_t i = 0; i < g; ++i) d[i] = rewards[i] - mu;
  // Second centering pass removes the floating-point residual of mu, keeping
  // the advantages mean at ~1e-16 even for nearly constant groups.
  double resid = 0.0;
  for (double x : d) resid += x;
  resid *= inv_g;
  double var = 0.0;
  for (auto& x : d) {
    x -= resid;
    var += x * x;
  }
  const double sigma = std::sqrt(var * inv_g);
  for (auto& x : d) x /= sigma;
  return d;
}

double kl_estimate(std::span<const double> logp_new, std::span<const double> logp_ref) {
  if (logp_new.size() != logp_ref.size())
    throw std::invalid_argument("kl_estimate: length mismatch");
  if (logp_new.empty()) throw std::invalid_argument("kl_estimate: empty input");
  double acc = 0.0;
  for (std::size_t t = 0; t < logp_new.size(); ++t) {
    const double delta = logp_ref[t] - logp_new[t];
    const double r = std::exp(delta);
    acc += std::max(0.0, r - delta - 1.0);
  }
  return acc / static_cast<double>(logp_new.size());
}

namespace {

struct SlotResult {
  PolicyGrad grad;
  GroupRollout group;
  double sum_reward = 0.0;
  double sum_tiou = 0.0;
  double sum_form = 0.0;
  double sum_len = 0.0;
  double sum_kl = 0.0;
  double sum_adv_logp = 0.0;  // sum_i A_i * total_logprob_i, for the reported loss
};

SlotResult run_slot(const PolicyParams& params, const PolicyParams& ref,
                    const GroundingSample& sample, const RewardConfig& reward,
                    const TrainConfig& cfg, std::uint64_t slot_seed) {
  SlotResult out;
  out.grad = PolicyGrad::zeros_like(params);
  Rng rng(slot_seed);

  GroupRollout& group = out.group;
  group.sample_id = sample.id;
  const int g = cfg.group_size;
  group.responses.reserve(g);
  group.rendered.reserve(g);
  group.rewards.reserve(g);
  for (int i = 0; i < g; ++i) {
    TokenSequence seq =
        sample_sequence(params, sample.features, cfg.temperature, cfg.max_len, rng);
    std::string text =
        decode_response(seq.tokens, sample.duration_s, params.vocab, reward.profile);
    const StructuredResponse parsed = parse_response(text, reward.profile);
    const double r_tiou = tiou_reward(parsed, sample.gt);
    const int r_form = format_reward(parsed, reward.profile);
    const RewardBreakdown rb = composite_reward(r_tiou, r_form, reward.weights);

    out.sum_tiou += r_tiou;
    out.sum_form += r_form;
    out.sum_len += seq.length_before_eos(params.vocab);
    out.sum_reward += rb.total;

    group.responses.push_back(std::move(seq));
    group.rendered.push_back(std::move(text));
    group.rewards.push_back(rb.total);
  }
  group.advantages = group_advantages(group.rewards);
  {
    double mu = 0.0;
    for (double r : group.rewards) mu += r;
    mu /= static_cast<double>(g);
    double var = 0.0;
    for (double r : group.rewards) var += (r - mu) * (r - mu);
    group.mean = mu;
    group.stddev = std::sqrt(var / static_cast<double>(g));
  }

  std::vector<double> weights;
  for (int i = 0; i < g; ++i) {
    const TokenSequence& seq = group.responses[static_cast<std::size_t>(i)];
    const TokenSequence ref_score = sequence_logprob(ref, sample.features, seq.tokens);
    const double kl = kl_estimate(seq.per_token_logprob, ref_score.per_token_logprob);
    out.sum_kl += kl;

    const double adv = group.advantages[static_cast<std::size_t>(i)];
    out.sum_adv_logp += adv * seq.total_logprob;

    const std::size_t len = seq.tokens.size();
    weights.assign(len, adv);
    if (cfg.beta > 0.0) {
      // d/dtheta of the k3 estimate flows through logp_new only:
      // dKL/dlogp_t = (1 - r_t) / len.
      const double inv_len = 1.0 / static_cast<double>(len);
      for (std::size_t t = 0; t < len; ++t) {
        const double r =
            std::exp(ref_score.per_token_logprob[t] - seq.per_token_logprob[t]);
        weights[t] -= cfg.beta * (1.0 - r) * inv_len;
      }
    }
    const bool all_zero =
        std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; });
    if (!all_zero)
      accumulate_weighted_logprob_gradient(params, sample.features, seq.tokens, weights,
                                           out.grad);
  }
  return out;
}

}  // namespace

StepStats grpo_step(PolicyParams& params, const PolicyParams& ref_params,
                    std::span<const GroundingSample> batch, const RewardConfig& reward,
                    const TrainConfig& cfg, std::uint64_t step_seed,
                    std::vector<GroupRollout>* rollouts_out) {
  cfg.validate();
  reward.weights.validate();
  if (batch.empty()) throw std::invalid_argument("grpo_step: empty batch");

  const std::size_t n_slots = batch.size();
  std::vector<SlotResult> slots(n_slots);

  auto work = [&](std::size_t s) {
    slots[s] = run_slot(params, ref_params, batch[s], reward, cfg,
                        mix_seed(step_seed, kSlotStream, s));
  };

  if (rollout_mode() == RolloutMode::parallel && n_slots > 1) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t n_threads = std::min<std::size_t>(hw, n_slots);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t s = next.fetch_add(1); s < n_slots; s = next.fetch_add(1))
          work(s);
      });
    for (auto& t : pool) t.join();
  } else {
    for (std::size_t s = 0; s < n_slots; ++s) work(s);
  }

  if (rollouts_out) {
    rollouts_out->clear();
    for (auto& s : slots) rollouts_out->push_back(std::move(s.group));
  }

  // Deterministic reduction in sample order.
  PolicyGrad grad = std::move(slots[0].grad);
  for (std::size_t s = 1; s < n_slots; ++s) grad.add(slots[s].grad);

  const double count = static_cast<double>(n_slots) * cfg.group_size;
  grad.scale(1.0 / count);
  if (!grad.all_finite())
    throw std::runtime_error("grpo_step: non-finite gradient (batch of " +
                             std::to_string(n_slots) + " samples, max |g| = " +
                             std::to_string(grad.max_abs()) + ")");
  apply_update(params, grad, cfg.lr_rl);

  StepStats st;
  double sum_adv_logp = 0.0;
  for (const auto& s : slots) {
    st.mean_reward += s.sum_reward;
    st.mean_tiou += s.sum_tiou;
    st.format_rate += s.sum_form;
    st.mean_response_len += s.sum_len;
    st.kl_value += s.sum_kl;
    sum_adv_logp += s.sum_adv_logp;
  }
  st.mean_reward /= count;
  st.mean_tiou /= count;
  st.format_rate /= count;
  st.mean_response_len /= count;
  st.kl_value /= count;
  st.loss = -sum_adv_logp / count + cfg.beta * st.kl_value;
  return st;
}

double sft_step(PolicyParams& params, std::span<const SftExample> batch, double lr) {
  if (batch.empty()) throw std::invalid_argument("sft_step: empty batch");
  PolicyGrad grad = PolicyGrad::zeros_like(params);
  double loss = 0.0;
  std::vector<double> ones;
  for (const auto& ex : batch) {
    const TokenSequence scored = sequence_logprob(params, ex.features, ex.tokens);
    loss -= scored.total_logprob;
    ones.assign(ex.tokens.size(), 1.0);
    accumulate_weighted_logprob_gradient(params, ex.features, ex.tokens, ones, grad);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  grad.scale(inv);
  if (!grad.all_finite()) throw std::runtime_error("sft_step: non-finite gradient");
  // Ascent on mean log-likelihood == descent on the NLL loss.
  apply_update(params, grad, lr);
  return loss * inv;
}

PolicyParams train_sft(PolicyParams params, std::span<const SftExample> data,
                       const TrainConfig& cfg, const SftCallbacks& callbacks) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train_sft: empty dataset");

  Rng shuffle_rng(mix_seed(cfg.seed, kSftShuffleStream));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  const std::size_t bs = static_cast<std::size_t>(cfg.samples_per_step);
  std::vector<SftExample> batch;
  for (int epoch = 1; epoch <= cfg.sft_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    double epoch_nll = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      batch.clear();
      for (std::size_t i = start; i < end; ++i)
        batch.push_back(data[order[i]]);
      const double nll = sft_step(params, batch, cfg.lr_sft);
      epoch_nll += nll * static_cast<double>(end - start);
      seen += end - start;
      if (callbacks.on_step) callbacks.on_step();
    }
    if (callbacks.on_epoch)
      callbacks.on_epoch(epoch, epoch_nll / static_cast<double>(seen));
  }
  return params;
}

std::pair<PolicyParams, std::vector<StepStats>> train_rl(
    PolicyParams params, std::span<const GroundingSample> rl_data,
    std::span<const GroundingSample> val_data, const RewardConfig& reward,
    const TrainConfig& cfg, const RlCallbacks& callbacks) {
  cfg.validate();
  if (rl_data.empty()) throw std::invalid_argument("train_rl: empty RL dataset");
  if (val_data.empty()) throw std::invalid_argument("train_rl: empty validation dataset");

  const PolicyParams ref = params;  // KL reference: policy at RL start
  std::vector<StepStats> stats;
  stats.reserve(static_cast<std::size_t>(cfg.rl_steps));

  std::vector<GroundingSample> batch;
  for (int step = 1; step <= cfg.rl_steps; ++step) {
    Rng batch_rng(mix_seed(cfg.seed, kRlBatchStream, static_cast<std::uint64_t>(step)));
    batch.clear();
    for (int i = 0; i < cfg.samples_per_step; ++i)
      batch.push_back(rl_data[batch_rng.uniform_int(rl_data.size())]);

    StepStats st = grpo_step(params, ref, batch, reward, cfg,
                             mix_seed(cfg.seed, kRlStepStream,
                                      static_cast<std::uint64_t>(step)));
    st.step = step;
    if (step % cfg.val_every == 0)
      st.val_miou = evaluate_policy(params, val_data, reward.profile).miou;
    if (callbacks.on_step) callbacks.on_step(st, params);
    stats.push_back(std::move(st));
  }
  return {std::move(params), std::move(stats)};
}

}  // namespace vtg
