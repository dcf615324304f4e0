#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "vtg/interval.hpp"
#include "vtg/policy.hpp"
#include "vtg/rng.hpp"

namespace vtg::testing {

/// Counting oracle for interval IoU: discretize at resolution h and count
/// cells whose centers fall in each interval. Independent of the analytic
/// path by construction.
inline double grid_iou(const TimeInterval& a, const TimeInterval& b, double h) {
  const double lo = std::min(a.start_s(), b.start_s());
  const double hi = std::max(a.end_s(), b.end_s());
  const long first = static_cast<long>(std::floor(lo / h)) - 1;
  const long last = static_cast<long>(std::ceil(hi / h)) + 1;
  long inter = 0, uni = 0;
  for (long i = first; i <= last; ++i) {
    const double c = (static_cast<double>(i) + 0.5) * h;
    const bool in_a = c >= a.start_s() && c <= a.end_s();
    const bool in_b = c >= b.start_s() && c <= b.end_s();
    if (in_a && in_b) ++inter;
    if (in_a || in_b) ++uni;
  }
  if (uni == 0) return a.start_s() == b.start_s() ? 1.0 : 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline TimeInterval random_interval(Rng& rng, double lo, double hi) {
  double a = rng.uniform(lo, hi);
  double b = rng.uniform(lo, hi);
  if (a > b) std::swap(a, b);
  return {a, b};
}

/// A scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& label) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("vtg_" + label + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Hand-wired policy whose greedy decode is always
/// TIME_OPEN B_s B_e TIME_CLOSE EOS with the bins nearest to
/// features[0]*n_bins and features[1]*n_bins. A known-perfect predictor for
/// datasets whose features carry the exact normalized endpoints.
///
/// Construction: embedding columns flag token classes (0: any token,
/// 1: TIME_OPEN, 2: any bin, 3: TIME_CLOSE). Hidden units implement saturated
/// tanh gates: a "ran" latch distinguishing the first step, a bin latch
/// distinguishing the first and second bin emission, phase indicators for the
/// closing tag and EOS, and two nearly-linear units carrying eps*x0 / eps*x1
/// only while their phase is active (each with a twin that cancels the
/// off-phase level). Bin logits form the quadratic 2*c_k*y - c_k^2 whose
/// argmax over bin centers c_k is the bin nearest y.
inline PolicyParams make_interval_oracle_policy(const PolicyVocab& vocab) {
  PolicyDims dims{/*d_feat=*/8, /*d_emb=*/4, /*d_hid=*/8};
  PolicyParams p;
  p.dims = dims;
  p.vocab = vocab;
  const std::size_t V = static_cast<std::size_t>(vocab.size());
  const std::size_t de = 4, dh = 8, df = 8;
  p.E.assign(V * de, 0.0);
  p.W_x.assign(dh * df, 0.0);
  p.W_e.assign(dh * de, 0.0);
  p.W_h.assign(dh * dh, 0.0);
  p.b.assign(dh, 0.0);
  p.U.assign(V * dh, 0.0);
  p.c.assign(V, 0.0);

  constexpr double A = 30.0;    // saturates tanh to +-1 within ~1e-26
  constexpr double EPS = 1e-3;  // keeps the x-carrying units in the linear range
  constexpr double S = 0.01;    // bin quadratic scale
  constexpr double GATE = 200.0;
  constexpr double OPEN_BONUS = 50.0;
  constexpr double OPEN_BASE = 5.0;
  constexpr double DEAD = -50.0;

  // Embedding class flags.
  for (int tok = 0; tok < vocab.size(); ++tok) {
    double* e = p.e_row(tok);
    e[0] = 1.0;
    if (tok == vocab.time_open()) e[1] = 1.0;
    if (vocab.is_bin(tok)) e[2] = 1.0;
    if (tok == vocab.time_close()) e[3] = 1.0;
  }

  auto wx = [&](std::size_t i, std::size_t j) -> double& { return p.W_x[i * df + j]; };
  auto we = [&](std::size_t i, std::size_t j) -> double& { return p.W_e[i * de + j]; };
  auto wh = [&](std::size_t i, std::size_t j) -> double& { return p.W_h[i * dh + j]; };
  auto u = [&](int tok, std::size_t j) -> double& {
    return p.U[static_cast<std::size_t>(tok) * dh + j];
  };

  // h0: "ran" latch (0 on the first step, ~1 afterwards).
  wh(0, 0) = A;
  we(0, 0) = A;
  // h1/h2: eps*x0 while prev == TIME_OPEN, else saturated low; twin without x.
  wx(1, 0) = EPS;
  we(1, 1) = 2 * A;
  p.b[1] = -2 * A;
  we(2, 1) = 2 * A;
  p.b[2] = -2 * A;
  // h3: bin latch, set once any bin token has been seen.
  wh(3, 3) = A;
  we(3, 2) = 2 * A;
  // h4/h5: eps*x1 while prev is a bin and the latch is still unset; twin.
  wx(4, 1) = EPS;
  we(4, 2) = 2 * A;
  wh(4, 3) = -2 * A;
  p.b[4] = -2 * A;
  we(5, 2) = 2 * A;
  wh(5, 3) = -2 * A;
  p.b[5] = -2 * A;
  // h6: close-tag phase (prev is a bin and the latch is set).
  we(6, 2) = 2 * A;
  wh(6, 3) = 2 * A;
  p.b[6] = -3 * A;
  // h7: EOS phase (prev == TIME_CLOSE).
  we(7, 3) = 2 * A;
  p.b[7] = -A;

  // Output wiring.
  p.c[static_cast<std::size_t>(vocab.time_open())] = OPEN_BASE;
  u(vocab.time_open(), 0) = -OPEN_BONUS;
  u(vocab.time_close(), 6) = GATE;
  u(vocab.eos(), 7) = GATE;
  p.c[static_cast<std::size_t>(vocab.think_open())] = DEAD;
  p.c[static_cast<std::size_t>(vocab.think_close())] = DEAD;
  for (int k = 0; k < vocab.n_filler; ++k)
    p.c[static_cast<std::size_t>(vocab.filler(k))] = DEAD;
  for (int k = 0; k < vocab.n_bins; ++k) {
    const double ck = static_cast<double>(k) + 0.5;
    const double kk = 2.0 * ck * static_cast<double>(vocab.n_bins) * S / EPS;
    const int tok = vocab.bin(k);
    u(tok, 1) = kk;
    u(tok, 2) = -kk;
    u(tok, 4) = kk;
    u(tok, 5) = -kk;
    p.c[static_cast<std::size_t>(tok)] = -S * ck * ck;
  }
  return p;
}

}  // namespace vtg::testing
