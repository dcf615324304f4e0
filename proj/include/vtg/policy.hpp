#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vtg/rng.hpp"
#include "vtg/structio.hpp"

namespace vtg {

/// Token id layout: the five structural tokens first, then filler words, then
/// time-bin tokens. Ids are contiguous in [0, size()).
struct PolicyVocab {
  int n_filler = 16;
  int n_bins = 64;

  int think_open() const { return 0; }
  int think_close() const { return 1; }
  int time_open() const { return 2; }
  int time_close() const { return 3; }
  int eos() const { return 4; }
  int filler(int k) const { return 5 + k; }
  int bin(int k) const { return 5 + n_filler + k; }
  int size() const { return 5 + n_filler + n_bins; }

  bool is_filler(int tok) const { return tok >= 5 && tok < 5 + n_filler; }
  bool is_bin(int tok) const { return tok >= 5 + n_filler && tok < size(); }
  int filler_index(int tok) const { return tok - 5; }
  int bin_index(int tok) const { return tok - 5 - n_filler; }

  bool operator==(const PolicyVocab&) const = default;
};

struct PolicyDims {
  int d_feat = 8;
  int d_emb = 16;
  int d_hid = 32;

  bool operator==(const PolicyDims&) const = default;
};

/// Pseudo-token fed as tok_prev on the first step: zero embedding, zero
/// hidden state.
inline constexpr int kStartToken = -1;

/// All trainable arrays, row-major. The recurrent cell is
///   h' = tanh(W_x x + W_e E[tok_prev] + W_h h + b),  logits = U h' + c.
struct PolicyParams {
  PolicyDims dims;
  PolicyVocab vocab;
  std::vector<double> E;    // V x d_emb
  std::vector<double> W_x;  // d_hid x d_feat
  std::vector<double> W_e;  // d_hid x d_emb
  std::vector<double> W_h;  // d_hid x d_hid
  std::vector<double> b;    // d_hid
  std::vector<double> U;    // V x d_hid
  std::vector<double> c;    // V

  double* e_row(int tok) { return E.data() + static_cast<std::size_t>(tok) * dims.d_emb; }
  const double* e_row(int tok) const {
    return E.data() + static_cast<std::size_t>(tok) * dims.d_emb;
  }
  bool operator==(const PolicyParams&) const = default;
};

/// Gradient (or any other co-shaped accumulator) for PolicyParams.
struct PolicyGrad {
  std::vector<double> E, W_x, W_e, W_h, b, U, c;

  static PolicyGrad zeros_like(const PolicyParams& p);
  void add(const PolicyGrad& other);
  void scale(double s);
  double max_abs() const;
  bool all_finite() const;
};

/// Applies params += scale * grad.
void apply_update(PolicyParams& params, const PolicyGrad& grad, double scale);

/// Weights drawn i.i.d. uniform in [-s, s] with s = 1/sqrt(fan_in) per
/// matrix; biases zero. Deterministic per seed.
PolicyParams init_policy(const PolicyDims& dims, const PolicyVocab& vocab,
                         std::uint64_t seed);

/// One recurrent step. tok_prev may be kStartToken. logits_out has size V,
/// h_prev/h_next_out have size d_hid and must not alias.
void step_logits(const PolicyParams& p, std::span<const double> features,
                 std::span<const double> h_prev, int tok_prev,
                 std::span<double> logits_out, std::span<double> h_next_out);

/// log softmax(logits); exp of the result sums to 1.
std::vector<double> token_log_probs(std::span<const double> logits);

struct TokenSequence {
  std::vector<int> tokens;
  std::vector<double> per_token_logprob;  // temperature-1 densities
  double total_logprob = 0.0;

  /// Emitted tokens before EOS (the response-length statistic).
  int length_before_eos(const PolicyVocab& vocab) const;
};

/// Autoregressive sampling from softmax(logits / temperature) until EOS or
/// max_len. temperature == 0 selects greedy argmax decoding (the rng is not
/// consumed). Recorded log-probabilities are always the temperature-1
/// densities of the chosen tokens.
TokenSequence sample_sequence(const PolicyParams& p, std::span<const double> features,
                              double temperature, int max_len, Rng& rng);

/// Re-scores a given token sequence under p at temperature 1. Throws
/// std::out_of_range for token ids >= V and std::invalid_argument for empty
/// sequences.
TokenSequence sequence_logprob(const PolicyParams& p, std::span<const double> features,
                               std::span<const int> tokens);

/// Accumulates the exact gradient of sum_t weights[t] * log pi(tokens[t])
/// into grad, by backpropagation through time. weights.size() must equal
/// tokens.size().
void accumulate_weighted_logprob_gradient(const PolicyParams& p,
                                          std::span<const double> features,
                                          std::span<const int> tokens,
                                          std::span<const double> weights,
                                          PolicyGrad& grad);

/// Gradient of total_logprob with respect to every parameter array.
PolicyGrad logprob_gradient(const PolicyParams& p, std::span<const double> features,
                            std::span<const int> tokens);

/// Maps a token sequence to tagged text. The exact pattern
/// TIME_OPEN B_s B_e TIME_CLOSE becomes the answer tags wrapping
/// "[a, b]" with bin-center times; malformed token orders are rendered
/// literally so downstream parsing can score them as malformed.
std::string decode_response(std::span<const int> tokens, double duration_s,
                            const PolicyVocab& vocab, const TagProfile& profile);

double bin_center_seconds(int bin_index, double duration_s, int n_bins);

struct Checkpoint {
  PolicyParams params;
  std::map<std::string, std::string> provenance;
};

/// Self-describing JSON checkpoint: dims, vocab, provenance and each
/// parameter array as nested numeric arrays. load(save(p)) == p bitwise.
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params,
                     const std::map<std::string, std::string>& provenance);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vtg
