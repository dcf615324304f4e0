#include "doctest.h"

#include <cmath>
#include <vector>

#include "vtg/policy.hpp"
#include "vtg/rng.hpp"

using namespace vtg;

namespace {

struct Coord {
  std::vector<double> PolicyParams::* array;
  std::size_t index;
};

std::vector<double>& coord_array(PolicyParams& p, const Coord& c) { return p.*(c.array); }

double fd_gradient(const PolicyParams& p, const std::vector<double>& x,
                   const std::vector<int>& tokens, const Coord& c, double h) {
  PolicyParams plus = p;
  coord_array(plus, c)[c.index] += h;
  PolicyParams minus = p;
  coord_array(minus, c)[c.index] -= h;
  const double fp = sequence_logprob(plus, x, tokens).total_logprob;
  const double fm = sequence_logprob(minus, x, tokens).total_logprob;
  return (fp - fm) / (2.0 * h);
}

const double* grad_array(const PolicyGrad& g, const Coord& c, const PolicyParams& p) {
  if (c.array == &PolicyParams::E) return g.E.data();
  if (c.array == &PolicyParams::W_x) return g.W_x.data();
  if (c.array == &PolicyParams::W_e) return g.W_e.data();
  if (c.array == &PolicyParams::W_h) return g.W_h.data();
  if (c.array == &PolicyParams::b) return g.b.data();
  if (c.array == &PolicyParams::U) return g.U.data();
  (void)p;
  return g.c.data();
}

Coord random_coord(Rng& rng, const PolicyParams& p) {
  static const std::vector<std::vector<double> PolicyParams::*> arrays = {
      &PolicyParams::E,   &PolicyParams::W_x, &PolicyParams::W_e, &PolicyParams::W_h,
      &PolicyParams::b,   &PolicyParams::U,   &PolicyParams::c};
  std::vector<std::size_t> sizes;
  std::size_t total = 0;
  for (auto a : arrays) {
    sizes.push_back((p.*a).size());
    total += sizes.back();
  }
  std::size_t pick = rng.uniform_int(total);
  for (std::size_t k = 0; k < arrays.size(); ++k) {
    if (pick < sizes[k]) return {arrays[k], pick};
    pick -= sizes[k];
  }
  return {arrays.back(), 0};
}

}  // namespace

TEST_CASE("gradient matches central finite differences") {
  const PolicyDims dims{5, 6, 10};
  const PolicyVocab vocab{4, 8};
  Rng rng(20240601);
  for (int inst = 0; inst < 5; ++inst) {
    const PolicyParams p = init_policy(dims, vocab, 1000 + inst);
    std::vector<double> x(5);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    Rng sampler(500 + inst);
    const TokenSequence seq = sample_sequence(p, x, 1.0, 20, sampler);
    const PolicyGrad g = logprob_gradient(p, x, seq.tokens);

    for (int k = 0; k < 20; ++k) {
      const Coord c = random_coord(rng, p);
      const double analytic = grad_array(g, c, p)[c.index];
      const double fd = fd_gradient(p, x, seq.tokens, c, 1e-5);
      const double rel = std::fabs(analytic - fd) /
                         std::max({std::fabs(analytic), std::fabs(fd), 1e-3});
      CHECK(rel <= 1e-4);
    }
  }
}

TEST_CASE("uniform policy, single token: analytic softmax gradient of c") {
  const PolicyDims dims{3, 4, 6};
  const PolicyVocab vocab{2, 3};
  PolicyParams p = init_policy(dims, vocab, 1);
  for (auto* arr : {&p.E, &p.W_x, &p.W_e, &p.W_h, &p.b, &p.U, &p.c})
    std::fill(arr->begin(), arr->end(), 0.0);

  const int V = vocab.size();
  const int tok = 4;
  const PolicyGrad g = logprob_gradient(p, std::vector<double>{1, 2, 3},
                                        std::vector<int>{tok});
  for (int k = 0; k < V; ++k) {
    const double expect = (k == tok ? 1.0 : 0.0) - 1.0 / static_cast<double>(V);
    CHECK(g.c[static_cast<std::size_t>(k)] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("unused token embeddings receive zero gradient") {
  const PolicyDims dims{3, 4, 6};
  const PolicyVocab vocab{4, 8};
  const PolicyParams p = init_policy(dims, vocab, 5);
  const std::vector<int> tokens = {2, 7, 7, 4};  // tok_prev values: START, 2, 7, 7
  const PolicyGrad g = logprob_gradient(p, std::vector<double>{0.1, 0.2, 0.3}, tokens);

  for (int tok = 0; tok < vocab.size(); ++tok) {
    const bool used = tok == 2 || tok == 7;
    double row = 0.0;
    for (int j = 0; j < dims.d_emb; ++j)
      row += std::fabs(
          g.E[static_cast<std::size_t>(tok) * dims.d_emb + static_cast<std::size_t>(j)]);
    if (used)
      CHECK(row > 0.0);
    else
      CHECK(row == 0.0);
  }
}

TEST_CASE("weighted gradient is the weighted sum of per-token gradients") {
  const PolicyDims dims{3, 4, 6};
  const PolicyVocab vocab{2, 4};
  const PolicyParams p = init_policy(dims, vocab, 77);
  const std::vector<double> x = {0.3, -0.6, 0.9};
  const std::vector<int> tokens = {1, 6, 3};
  const std::vector<double> w = {0.5, -2.0, 1.25};

  PolicyGrad combined = PolicyGrad::zeros_like(p);
  accumulate_weighted_logprob_gradient(p, x, tokens, w, combined);

  PolicyGrad expect = PolicyGrad::zeros_like(p);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    std::vector<double> onehot(tokens.size(), 0.0);
    onehot[t] = w[t];
    accumulate_weighted_logprob_gradient(p, x, tokens, onehot, expect);
  }

  auto close = [](const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-10));
  };
  close(combined.E, expect.E);
  close(combined.W_x, expect.W_x);
  close(combined.W_e, expect.W_e);
  close(combined.W_h, expect.W_h);
  close(combined.b, expect.b);
  close(combined.U, expect.U);
  close(combined.c, expect.c);
}
