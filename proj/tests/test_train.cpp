#include "doctest.h"

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "vtg/curation.hpp"
#include "vtg/train.hpp"

using namespace vtg;

namespace {

std::vector<GroundingSample> tiny_dataset(int n, std::uint64_t seed,
                                          double p_err = 0.0) {
  CurationConfig cfg;
  cfg.n_samples = n;
  cfg.seed = seed;
  cfg.p_annot_error = p_err;
  return generate_dataset(cfg);
}

}  // namespace

TEST_CASE("group advantages: examples") {
  CHECK(group_advantages(std::vector<double>{1, 1, 1, 1}) ==
        std::vector<double>{0, 0, 0, 0});
  {
    const auto a = group_advantages(std::vector<double>{0, 1});
    CHECK(a[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  {
    const auto a = group_advantages(std::vector<double>{0, 0, 1, 1});
    CHECK(a[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(a[2] == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(group_advantages(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("group advantages: constant groups with inexact means still vanish") {
  const auto a = group_advantages(std::vector<double>(8, 0.1));
  for (double v : a) CHECK(v == 0.0);
}

TEST_CASE("group advantages: normalization, affine invariance, order") {
  Rng rng(555);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> r(8);
    for (auto& v : r) v = rng.uniform(0.0, 1.0);
    const auto a = group_advantages(r);

    double mean = 0.0, var = 0.0;
    for (double v : a) mean += v;
    mean /= 8.0;
    for (double v : a) var += (v - mean) * (v - mean);
    CHECK(std::fabs(mean) <= 1e-9);
    CHECK(std::fabs(std::sqrt(var / 8.0) - 1.0) <= 1e-6);

    const double scale = rng.uniform(0.1, 10.0);
    const double shift = rng.uniform(-10.0, 10.0);
    std::vector<double> r2(8);
    for (int i = 0; i < 8; ++i) r2[static_cast<std::size_t>(i)] =
        scale * r[static_cast<std::size_t>(i)] + shift;
    const auto a2 = group_advantages(r2);
    for (int i = 0; i < 8; ++i)
      CHECK(std::fabs(a2[static_cast<std::size_t>(i)] - a[static_cast<std::size_t>(i)]) <=
            1e-9);

    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j)
        if (r[static_cast<std::size_t>(i)] > r[static_cast<std::size_t>(j)])
          CHECK(a[static_cast<std::size_t>(i)] > a[static_cast<std::size_t>(j)]);
  }
}

TEST_CASE("k3 estimator") {
  const std::vector<double> base = {-1.0, -2.0, -0.5};
  CHECK(kl_estimate(base, base) == 0.0);

  std::vector<double> shifted = base;
  for (auto& v : shifted) v += std::log(2.0);
  // logp_new = logp_ref + ln2 per token
  CHECK(kl_estimate(shifted, base) ==
        doctest::Approx(0.5 + std::log(2.0) - 1.0).epsilon(1e-12));

  CHECK_THROWS_AS(kl_estimate(base, std::vector<double>{-1.0}), std::invalid_argument);

  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(5), b(5);
    for (auto& v : a) v = -rng.uniform(0.0, 5.0);
    for (auto& v : b) v = -rng.uniform(0.0, 5.0);
    CHECK(kl_estimate(a, b) >= 0.0);
  }
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.group_size = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.max_len = 4;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.beta = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("grpo_step: hand-assembled two-rollout oracle") {
  const PolicyDims dims{8, 8, 12};
  const PolicyVocab vocab{4, 8};
  const RewardConfig reward{};
  TrainConfig cfg;
  cfg.group_size = 2;
  cfg.max_len = 16;
  cfg.lr_rl = 1e-2;

  const auto data = tiny_dataset(1, 7);
  const PolicyParams before = init_policy(dims, vocab, 99);

  // find a step seed whose two rollouts earn distinct rewards
  std::uint64_t step_seed = 0;
  std::vector<GroupRollout> groups;
  for (std::uint64_t cand = 1; cand < 400; ++cand) {
    PolicyParams scratch = before;
    std::vector<GroupRollout> probe;
    grpo_step(scratch, before, data, reward, cfg, cand, &probe);
    if (probe[0].rewards[0] != probe[0].rewards[1]) {
      step_seed = cand;
      groups = std::move(probe);
      break;
    }
  }
  REQUIRE(step_seed != 0);
  const GroupRollout& g = groups[0];
  CHECK(g.responses.size() == 2);
  CHECK(g.stddev > 0.0);
  CHECK(g.mean == doctest::Approx((g.rewards[0] + g.rewards[1]) / 2.0));

  PolicyParams params = before;
  const StepStats st = grpo_step(params, before, data, reward, cfg, step_seed);
  CHECK(st.mean_reward == doctest::Approx(g.mean));

  // expected update: lr * (1/2) * (A1 grad logp(o1) + A2 grad logp(o2))
  const auto adv = group_advantages(g.rewards);
  CHECK(adv == g.advantages);
  PolicyGrad expect = PolicyGrad::zeros_like(before);
  for (int i = 0; i < 2; ++i) {
    const auto& tokens = g.responses[static_cast<std::size_t>(i)].tokens;
    accumulate_weighted_logprob_gradient(
        before, data[0].features, tokens,
        std::vector<double>(tokens.size(), adv[static_cast<std::size_t>(i)]), expect);
  }
  expect.scale(0.5);

  PolicyParams manual = before;
  apply_update(manual, expect, cfg.lr_rl);
  for (std::size_t i = 0; i < params.U.size(); ++i)
    CHECK(std::fabs(params.U[i] - manual.U[i]) <= 1e-9);
  for (std::size_t i = 0; i < params.c.size(); ++i)
    CHECK(std::fabs(params.c[i] - manual.c[i]) <= 1e-9);
  for (std::size_t i = 0; i < params.E.size(); ++i)
    CHECK(std::fabs(params.E[i] - manual.E[i]) <= 1e-9);
}

TEST_CASE("grpo_step: constant-reward batch leaves params bitwise unchanged") {
  const PolicyDims dims{8, 8, 12};
  const PolicyVocab vocab{4, 8};
  TrainConfig cfg;
  cfg.group_size = 4;
  cfg.max_len = 12;

  // A policy that always emits EOS first: every rollout renders "", all
  // rewards are identically 0.
  PolicyParams params = init_policy(dims, vocab, 3);
  params.c[static_cast<std::size_t>(vocab.eos())] = 200.0;
  const PolicyParams before = params;

  const auto data = tiny_dataset(4, 11);
  const StepStats st = grpo_step(params, before, data, RewardConfig{}, cfg, 77);
  CHECK(params == before);
  CHECK(st.mean_reward == 0.0);
  CHECK(st.loss == 0.0);
}

TEST_CASE("grpo_step: reported kl matches a manual k3 and beta shapes the update") {
  const PolicyDims dims{8, 8, 12};
  const PolicyVocab vocab{4, 8};
  const auto data = tiny_dataset(1, 21);
  TrainConfig cfg;
  cfg.group_size = 2;
  cfg.max_len = 12;
  cfg.beta = 0.5;

  PolicyParams params = init_policy(dims, vocab, 1);
  PolicyParams ref = init_policy(dims, vocab, 2);
  const PolicyParams before = params;
  const std::uint64_t step_seed = 13;

  std::vector<GroupRollout> groups;
  const StepStats st = grpo_step(params, ref, data, RewardConfig{}, cfg, step_seed, &groups);
  REQUIRE(groups.size() == 1);
  const GroupRollout& g = groups[0];

  double manual_kl = 0.0;
  for (const auto& s : g.responses) {
    const auto ref_score = sequence_logprob(ref, data[0].features, s.tokens);
    manual_kl += kl_estimate(s.per_token_logprob, ref_score.per_token_logprob);
  }
  manual_kl /= 2.0;
  CHECK(st.kl_value == doctest::Approx(manual_kl).epsilon(1e-12));

  // hand-assemble the full update including the KL term
  PolicyGrad expect = PolicyGrad::zeros_like(before);
  for (int i = 0; i < 2; ++i) {
    const auto& s = g.responses[static_cast<std::size_t>(i)];
    const auto ref_score = sequence_logprob(ref, data[0].features, s.tokens);
    std::vector<double> w(s.tokens.size(), g.advantages[static_cast<std::size_t>(i)]);
    for (std::size_t t = 0; t < w.size(); ++t) {
      const double r = std::exp(ref_score.per_token_logprob[t] - s.per_token_logprob[t]);
      w[t] -= cfg.beta * (1.0 - r) / static_cast<double>(w.size());
    }
    accumulate_weighted_logprob_gradient(before, data[0].features, s.tokens, w, expect);
  }
  expect.scale(1.0 / 2.0);
  PolicyParams manual = before;
  apply_update(manual, expect, cfg.lr_rl);
  for (std::size_t i = 0; i < params.c.size(); ++i)
    CHECK(std::fabs(params.c[i] - manual.c[i]) <= 1e-9);
  for (std::size_t i = 0; i < params.U.size(); ++i)
    CHECK(std::fabs(params.U[i] - manual.U[i]) <= 1e-9);
}

TEST_CASE("sampled rollouts re-score to a unit ratio under unchanged params") {
  const PolicyParams p = init_policy({8, 8, 12}, {4, 8}, 31);
  const auto data = tiny_dataset(1, 3);
  Rng rng(9);
  const TokenSequence s = sample_sequence(p, data[0].features, 1.0, 16, rng);
  const TokenSequence re = sequence_logprob(p, data[0].features, s.tokens);
  CHECK(std::exp(re.total_logprob - s.total_logprob) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sft_step: descent, zero-lr no-op, uniform NLL") {
  const PolicyDims dims{8, 8, 12};
  const PolicyVocab vocab{4, 8};
  PolicyParams params = init_policy(dims, vocab, 12);

  std::vector<SftExample> batch;
  const auto data = tiny_dataset(6, 99);
  CurationConfig ccfg;
  ccfg.n_samples = 6;
  ccfg.seed = 99;
  Rng arng(1);
  for (const auto& s : data) {
    AnnotatedSample a = simulate_annotation(s, ccfg, vocab, {}, arng);
    batch.push_back({s.features, a.response_tokens});
  }

  const double first = sft_step(params, batch, 1e-3);
  const double second = sft_step(params, batch, 1e-3);
  CHECK(second < first);

  const PolicyParams before = params;
  const double loss = sft_step(params, batch, 0.0);
  CHECK(params == before);
  CHECK(loss > 0.0);

  PolicyParams uniform = init_policy(dims, vocab, 0);
  for (auto* arr : {&uniform.E, &uniform.W_x, &uniform.W_e, &uniform.W_h, &uniform.b,
                    &uniform.U, &uniform.c})
    std::fill(arr->begin(), arr->end(), 0.0);
  const std::vector<SftExample> one = {batch[0]};
  const double nll = sft_step(uniform, one, 0.0);
  CHECK(nll == doctest::Approx(static_cast<double>(batch[0].tokens.size()) *
                               std::log(static_cast<double>(vocab.size())))
                   .epsilon(1e-9));
}

TEST_CASE("train_sft: bookkeeping, descent and determinism") {
  const PolicyDims dims{8, 8, 12};
  const PolicyVocab vocab{4, 8};
  const auto data = tiny_dataset(21, 5);
  CurationConfig ccfg;
  ccfg.n_samples = 21;
  ccfg.seed = 5;
  std::vector<SftExample> examples;
  Rng arng(2);
  for (const auto& s : data) {
    AnnotatedSample a = simulate_annotation(s, ccfg, vocab, {}, arng);
    examples.push_back({s.features, a.response_tokens});
  }

  TrainConfig cfg;
  cfg.sft_epochs = 3;
  cfg.samples_per_step = 8;
  cfg.seed = 77;

  int steps = 0;
  std::vector<double> epoch_nll;
  SftCallbacks cb;
  cb.on_step = [&] { ++steps; };
  cb.on_epoch = [&](int, double nll) { epoch_nll.push_back(nll); };

  const PolicyParams init = init_policy(dims, vocab, 4);
  double init_nll = 0.0;
  for (const auto& ex : examples)
    init_nll -= sequence_logprob(init, ex.features, ex.tokens).total_logprob;
  init_nll /= static_cast<double>(examples.size());

  const PolicyParams out = train_sft(init, examples, cfg, cb);
  CHECK(steps == 3 * 3);  // ceil(21/8) = 3 batches per epoch
  REQUIRE(epoch_nll.size() == 3);
  CHECK(epoch_nll[0] < init_nll);
  CHECK(epoch_nll[2] < epoch_nll[0]);

  const PolicyParams out2 = train_sft(init, examples, cfg, {});
  CHECK(out == out2);

  CHECK_THROWS_AS(train_sft(init, std::vector<SftExample>{}, cfg, {}),
                  std::invalid_argument);
}

TEST_CASE("train_rl: bookkeeping, determinism, rollout-mode equivalence") {
  const PolicyDims dims{8, 8, 12};
  const PolicyVocab vocab{4, 8};
  const auto rl_data = tiny_dataset(12, 31);
  const auto val_data = tiny_dataset(6, 32);

  TrainConfig cfg;
  cfg.rl_steps = 6;
  cfg.val_every = 2;
  cfg.samples_per_step = 3;
  cfg.group_size = 4;
  cfg.max_len = 16;
  cfg.seed = 2024;

  const PolicyParams init = init_policy(dims, vocab, 8);

  const auto [p1, s1] = train_rl(init, rl_data, val_data, RewardConfig{}, cfg, {});
  REQUIRE(s1.size() == 6);
  int val_points = 0;
  for (const auto& st : s1) {
    CHECK(st.step >= 1);
    if (st.val_miou) ++val_points;
  }
  CHECK(val_points == 3);

  const auto [p2, s2] = train_rl(init, rl_data, val_data, RewardConfig{}, cfg, {});
  CHECK(p1 == p2);
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i].mean_reward == s2[i].mean_reward);
    CHECK(s1[i].loss == s2[i].loss);
  }

  set_rollout_mode(RolloutMode::parallel);
  const auto [p3, s3] = train_rl(init, rl_data, val_data, RewardConfig{}, cfg, {});
  set_rollout_mode(RolloutMode::sequential);
  CHECK(p1 == p3);
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i].mean_reward == s3[i].mean_reward);
    CHECK(s1[i].kl_value == s3[i].kl_value);
    CHECK(s1[i].loss == s3[i].loss);
  }

  TrainConfig empty = cfg;
  empty.rl_steps = 0;
  const auto [p4, s4] = train_rl(init, rl_data, val_data, RewardConfig{}, empty, {});
  CHECK(p4 == init);
  CHECK(s4.empty());

  CHECK_THROWS_AS(
      train_rl(init, std::vector<GroundingSample>{}, val_data, RewardConfig{}, cfg, {}),
      std::invalid_argument);
}
