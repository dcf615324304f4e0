#include "vtg/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "vtg/fsio.hpp"
#include "vtg/kernels.hpp"

namespace vtg {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kInitStream = 0x1A17;

void fill_uniform(std::vector<double>& v, std::size_t count, double scale, Rng& rng) {
  v.resize(count);
  for (auto& x : v) x = rng.uniform(-scale, scale);
}

std::size_t vsize(const PolicyParams& p) { return static_cast<std::size_t>(p.vocab.size()); }

void check_dims(const PolicyDims& d, const PolicyVocab& v) {
  if (d.d_feat < 1 || d.d_emb < 1 || d.d_hid < 1)
    throw std::invalid_argument("policy dims must be >= 1");
  if (v.n_filler < 1 || v.n_bins < 1)
    throw std::invalid_argument("vocab sizes must be >= 1");
}

const char* kFillerWords[] = {
    "scene", "begins", "with",  "camera", "then",   "shows", "motion", "object",
    "before", "after", "action", "moment", "frame",  "holds", "view",   "ends"};
constexpr int kNumFillerWords = 16;

std::string filler_word(int k) {
  if (k < kNumFillerWords) return kFillerWords[k];
  return "w" + std::to_string(k);
}

std::string format3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

PolicyGrad PolicyGrad::zeros_like(const PolicyParams& p) {
  PolicyGrad g;
  g.E.assign(p.E.size(), 0.0);
  g.W_x.assign(p.W_x.size(), 0.0);
  g.W_e.assign(p.W_e.size(), 0.0);
  g.W_h.assign(p.W_h.size(), 0.0);
  g.b.assign(p.b.size(), 0.0);
  g.U.assign(p.U.size(), 0.0);
  g.c.assign(p.c.size(), 0.0);
  return g;
}

namespace {

template <typename F>
void for_each_array(PolicyGrad& g, F&& f) {
  f(g.E);
  f(g.W_x);
  f(g.W_e);
  f(g.W_h);
  f(g.b);
  f(g.U);
  f(g.c);
}

template <typename F>
void for_each_array(const PolicyGrad& g, F&& f) {
  f(g.E);
  f(g.W_x);
  f(g.W_e);
  f(g.W_h);
  f(g.b);
  f(g.U);
  f(g.c);
}

}  // namespace

void PolicyGrad::add(const PolicyGrad& other) {
  auto add_vec = [](std::vector<double>& a, const std::vector<double>& b) {
    kern::axpy(1.0, b, a);
  };
  add_vec(E, other.E);
  add_vec(W_x, other.W_x);
  add_vec(W_e, other.W_e);
  add_vec(W_h, other.W_h);
  add_vec(b, other.b);
  add_vec(U, other.U);
  add_vec(c, other.c);
}

void PolicyGrad::scale(double s) {
  for_each_array(*this, [s](std::vector<double>& a) {
    for (auto& x : a) x *= s;
  });
}

double PolicyGrad::max_abs() const {
  double m = 0.0;
  for_each_array(*this, [&m](const std::vector<double>& a) {
    for (double x : a) m = std::max(m, std::fabs(x));
  });
  return m;
}

bool PolicyGrad::all_finite() const {
  bool ok = true;
  for_each_array(*this, [&ok](const std::vector<double>& a) {
    for (double x : a)
      if (!std::isfinite(x)) ok = false;
  });
  return ok;
}

void apply_update(PolicyParams& params, const PolicyGrad& grad, double scale) {
  kern::axpy(scale, grad.E, params.E);
  kern::axpy(scale, grad.W_x, params.W_x);
  kern::axpy(scale, grad.W_e, params.W_e);
  kern::axpy(scale, grad.W_h, params.W_h);
  kern::axpy(scale, grad.b, params.b);
  kern::axpy(scale, grad.U, params.U);
  kern::axpy(scale, grad.c, params.c);
}

PolicyParams init_policy(const PolicyDims& dims, const PolicyVocab& vocab,
                         std::uint64_t seed) {
  check_dims(dims, vocab);
  PolicyParams p;
  p.dims = dims;
  p.vocab = vocab;
  const auto V = static_cast<std::size_t>(vocab.size());
  const auto df = static_cast<std::size_t>(dims.d_feat);
  const auto de = static_cast<std::size_t>(dims.d_emb);
  const auto dh = static_cast<std::size_t>(dims.d_hid);

  Rng rng(mix_seed(seed, kInitStream));
  fill_uniform(p.E, V * de, 1.0 / std::sqrt(static_cast<double>(dims.d_emb)), rng);
  fill_uniform(p.W_x, dh * df, 1.0 / std::sqrt(static_cast<double>(dims.d_feat)), rng);
  fill_uniform(p.W_e, dh * de, 1.0 / std::sqrt(static_cast<double>(dims.d_emb)), rng);
  fill_uniform(p.W_h, dh * dh, 1.0 / std::sqrt(static_cast<double>(dims.d_hid)), rng);
  fill_uniform(p.U, V * dh, 1.0 / std::sqrt(static_cast<double>(dims.d_hid)), rng);
  p.b.assign(dh, 0.0);
  p.c.assign(V, 0.0);
  return p;
}

void step_logits(const PolicyParams& p, std::span<const double> features,
                 std::span<const double> h_prev, int tok_prev,
                 std::span<double> logits_out, std::span<double> h_next_out) {
  const int dh = p.dims.d_hid;
  const int df = p.dims.d_feat;
  const int de = p.dims.d_emb;
  const int V = p.vocab.size();
  const double* emb = tok_prev == kStartToken ? nullptr : p.e_row(tok_prev);

  // h' = tanh(W_x x + W_e e + W_h h + b); fused per row.
  for (int i = 0; i < dh; ++i) {
    double a = p.b[static_cast<std::size_t>(i)];
    a += kern::dot({p.W_x.data() + static_cast<std::size_t>(i) * df,
                    static_cast<std::size_t>(df)},
                   features);
    if (emb)
      a += kern::dot({p.W_e.data() + static_cast<std::size_t>(i) * de,
                      static_cast<std::size_t>(de)},
                     {emb, static_cast<std::size_t>(de)});
    a += kern::dot({p.W_h.data() + static_cast<std::size_t>(i) * dh,
                    static_cast<std::size_t>(dh)},
                   h_prev);
    h_next_out[static_cast<std::size_t>(i)] = std::tanh(a);
  }
  for (int k = 0; k < V; ++k) {
    logits_out[static_cast<std::size_t>(k)] =
        p.c[static_cast<std::size_t>(k)] +
        kern::dot({p.U.data() + static_cast<std::size_t>(k) * dh,
                   static_cast<std::size_t>(dh)},
                  {h_next_out.data(), static_cast<std::size_t>(dh)});
  }
}

std::vector<double> token_log_probs(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - m);
  const double lse = m + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lse;
  return out;
}

int TokenSequence::length_before_eos(const PolicyVocab& vocab) const {
  int n = 0;
  for (int t : tokens) {
    if (t == vocab.eos()) break;
    ++n;
  }
  return n;
}

TokenSequence sample_sequence(const PolicyParams& p, std::span<const double> features,
                              double temperature, int max_len, Rng& rng) {
  if (max_len < 1) throw std::invalid_argument("sample_sequence: max_len must be >= 1");
  if (temperature < 0.0)
    throw std::invalid_argument("sample_sequence: temperature must be >= 0");
  const int V = p.vocab.size();
  const auto dh = static_cast<std::size_t>(p.dims.d_hid);

  TokenSequence seq;
  std::vector<double> h(dh, 0.0);
  std::vector<double> h_next(dh, 0.0);
  std::vector<double> logits(static_cast<std::size_t>(V));
  std::vector<double> probs(static_cast<std::size_t>(V));
  int tok_prev = kStartToken;

  for (int t = 0; t < max_len; ++t) {
    step_logits(p, features, h, tok_prev, logits, h_next);
    h.swap(h_next);
    const std::vector<double> lp = token_log_probs(logits);

    int tok;
    if (temperature == 0.0) {
      tok = static_cast<int>(
          std::max_element(logits.begin(), logits.end()) - logits.begin());
    } else {
      // softmax(logits / T), max-shifted
      const double m = *std::max_element(logits.begin(), logits.end());
      double sum = 0.0;
      for (int k = 0; k < V; ++k) {
        probs[static_cast<std::size_t>(k)] = std::exp((logits[static_cast<std::size_t>(k)] - m) / temperature);
        sum += probs[static_cast<std::size_t>(k)];
      }
      const double u = rng.uniform01() * sum;
      double cum = 0.0;
      tok = V - 1;
      for (int k = 0; k < V; ++k) {
        cum += probs[static_cast<std::size_t>(k)];
        if (u < cum) {
          tok = k;
          break;
        }
      }
    }

    seq.tokens.push_back(tok);
    seq.per_token_logprob.push_back(lp[static_cast<std::size_t>(tok)]);
    seq.total_logprob += lp[static_cast<std::size_t>(tok)];
    if (tok == p.vocab.eos()) break;
    tok_prev = tok;
  }
  return seq;
}

TokenSequence sequence_logprob(const PolicyParams& p, std::span<const double> features,
                               std::span<const int> tokens) {
  if (tokens.empty()) throw std::invalid_argument("sequence_logprob: empty sequence");
  const int V = p.vocab.size();
  for (int t : tokens)
    if (t < 0 || t >= V)
      throw std::out_of_range("sequence_logprob: token id " + std::to_string(t) +
                              " outside vocabulary of size " + std::to_string(V));

  const auto dh = static_cast<std::size_t>(p.dims.d_hid);
  TokenSequence seq;
  seq.tokens.assign(tokens.begin(), tokens.end());
  std::vector<double> h(dh, 0.0);
  std::vector<double> h_next(dh, 0.0);
  std::vector<double> logits(static_cast<std::size_t>(V));
  int tok_prev = kStartToken;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    step_logits(p, features, h, tok_prev, logits, h_next);
    h.swap(h_next);
    const std::vector<double> lp = token_log_probs(logits);
    seq.per_token_logprob.push_back(lp[static_cast<std::size_t>(tokens[t])]);
    seq.total_logprob += lp[static_cast<std::size_t>(tokens[t])];
    tok_prev = tokens[t];
  }
  return seq;
}

void accumulate_weighted_logprob_gradient(const PolicyParams& p,
                                          std::span<const double> features,
                                          std::span<const int> tokens,
                                          std::span<const double> weights,
                                          PolicyGrad& grad) {
  if (tokens.empty()) throw std::invalid_argument("logprob gradient: empty sequence");
  if (weights.size() != tokens.size())
    throw std::invalid_argument("logprob gradient: weights/tokens length mismatch");
  const int V = p.vocab.size();
  for (int t : tokens)
    if (t < 0 || t >= V)
      throw std::out_of_range("logprob gradient: token id out of range");

  const auto L = tokens.size();
  const auto dh = static_cast<std::size_t>(p.dims.d_hid);
  const auto df = static_cast<std::size_t>(p.dims.d_feat);
  const auto de = static_cast<std::size_t>(p.dims.d_emb);
  const auto Vs = static_cast<std::size_t>(V);

  // Forward pass, caching hidden states and per-step softmax probabilities.
  // hs[t] is the state entering step t; hs[t+1] the one producing logits_t.
  std::vector<double> hs((L + 1) * dh, 0.0);
  std::vector<double> probs(L * Vs);
  std::vector<double> logits(Vs);
  for (std::size_t t = 0; t < L; ++t) {
    const int tok_prev = t == 0 ? kStartToken : tokens[t - 1];
    step_logits(p, features, {hs.data() + t * dh, dh}, tok_prev, logits,
                {hs.data() + (t + 1) * dh, dh});
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < Vs; ++k) {
      probs[t * Vs + k] = std::exp(logits[k] - m);
      sum += probs[t * Vs + k];
    }
    const double inv = 1.0 / sum;
    for (std::size_t k = 0; k < Vs; ++k) probs[t * Vs + k] *= inv;
  }

  // Backward through time.
  std::vector<double> dh_carry(dh, 0.0);
  std::vector<double> dlogits(Vs);
  std::vector<double> da(dh);
  for (std::size_t ti = L; ti-- > 0;) {
    const double w = weights[ti];
    const double* hcur = hs.data() + (ti + 1) * dh;
    const double* hprev = hs.data() + ti * dh;

    if (w != 0.0) {
      const double* pr = probs.data() + ti * Vs;
      for (std::size_t k = 0; k < Vs; ++k) dlogits[k] = -w * pr[k];
      dlogits[static_cast<std::size_t>(tokens[ti])] += w;
      kern::axpy(1.0, {dlogits.data(), Vs}, {grad.c.data(), Vs});
      kern::add_outer(Vs, dh, grad.U.data(), 1.0, dlogits.data(), hcur);
      kern::matvec_t_accum(Vs, dh, p.U.data(), dlogits.data(), dh_carry.data());
    }

    for (std::size_t i = 0; i < dh; ++i)
      da[i] = dh_carry[i] * (1.0 - hcur[i] * hcur[i]);

    kern::axpy(1.0, {da.data(), dh}, {grad.b.data(), dh});
    kern::add_outer(dh, df, grad.W_x.data(), 1.0, da.data(), features.data());
    if (ti > 0) {
      const int tok_prev = tokens[ti - 1];
      kern::add_outer(dh, de, grad.W_e.data(), 1.0, da.data(), p.e_row(tok_prev));
      kern::matvec_t_accum(dh, de, p.W_e.data(), da.data(),
                           grad.E.data() + static_cast<std::size_t>(tok_prev) * de);
    }
    kern::add_outer(dh, dh, grad.W_h.data(), 1.0, da.data(), hprev);

    std::fill(dh_carry.begin(), dh_carry.end(), 0.0);
    kern::matvec_t_accum(dh, dh, p.W_h.data(), da.data(), dh_carry.data());
  }
}

PolicyGrad logprob_gradient(const PolicyParams& p, std::span<const double> features,
                            std::span<const int> tokens) {
  PolicyGrad grad = PolicyGrad::zeros_like(p);
  const std::vector<double> ones(tokens.size(), 1.0);
  accumulate_weighted_logprob_gradient(p, features, tokens, ones, grad);
  return grad;
}

double bin_center_seconds(int bin_index, double duration_s, int n_bins) {
  return (static_cast<double>(bin_index) + 0.5) * duration_s / static_cast<double>(n_bins);
}

std::string decode_response(std::span<const int> tokens, double duration_s,
                            const PolicyVocab& vocab, const TagProfile& profile) {
  if (duration_s <= 0.0)
    throw std::invalid_argument("decode_response: duration_s must be > 0");
  std::string out;
  bool prev_wordlike = false;
  auto append = [&](const std::string& chunk, bool wordlike) {
    if (wordlike && prev_wordlike) out += ' ';
    out += chunk;
    prev_wordlike = wordlike;
  };

  std::size_t i = 0;
  const std::size_t n = tokens.size();
  while (i < n) {
    const int tok = tokens[i];
    if (tok == vocab.eos()) break;
    if (tok == vocab.time_open() && i + 3 < n && vocab.is_bin(tokens[i + 1]) &&
        vocab.is_bin(tokens[i + 2]) && tokens[i + 3] == vocab.time_close()) {
      const double a = bin_center_seconds(vocab.bin_index(tokens[i + 1]), duration_s,
                                          vocab.n_bins);
      const double b = bin_center_seconds(vocab.bin_index(tokens[i + 2]), duration_s,
                                          vocab.n_bins);
      append(profile.answer_open + "[" + format3(a) + ", " + format3(b) + "]" +
                 profile.answer_close,
             false);
      i += 4;
      continue;
    }
    if (tok == vocab.think_open())
      append(profile.think_open, false);
    else if (tok == vocab.think_close())
      append(profile.think_close, false);
    else if (tok == vocab.time_open())
      append(profile.answer_open, false);
    else if (tok == vocab.time_close())
      append(profile.answer_close, false);
    else if (vocab.is_filler(tok))
      append(filler_word(vocab.filler_index(tok)), true);
    else if (vocab.is_bin(tok))
      // Stray bin token outside the answer pattern: rendered as its center
      // time, with no comma, so it can never form a parseable pair.
      append(format3(bin_center_seconds(vocab.bin_index(tok), duration_s, vocab.n_bins)),
             true);
    else
      throw std::out_of_range("decode_response: token id out of range");
    ++i;
  }
  return out;
}

namespace {

ordered_json matrix_json(const std::vector<double>& flat, std::size_t rows,
                         std::size_t cols) {
  ordered_json out = ordered_json::array();
  for (std::size_t r = 0; r < rows; ++r) {
    ordered_json row = ordered_json::array();
    for (std::size_t c = 0; c < cols; ++c) row.push_back(flat[r * cols + c]);
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<double> matrix_from_json(const ordered_json& j, std::size_t rows,
                                     std::size_t cols, const std::string& name) {
  if (!j.is_array() || j.size() != rows)
    throw std::runtime_error("checkpoint: bad shape for " + name);
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != cols)
      throw std::runtime_error("checkpoint: bad shape for " + name);
    for (const auto& v : row) {
      if (!v.is_number()) throw std::runtime_error("checkpoint: non-numeric " + name);
      out.push_back(v.get<double>());
    }
  }
  return out;
}

std::vector<double> vector_from_json(const ordered_json& j, std::size_t n,
                                     const std::string& name) {
  if (!j.is_array() || j.size() != n)
    throw std::runtime_error("checkpoint: bad shape for " + name);
  std::vector<double> out;
  out.reserve(n);
  for (const auto& v : j) {
    if (!v.is_number()) throw std::runtime_error("checkpoint: non-numeric " + name);
    out.push_back(v.get<double>());
  }
  return out;
}

constexpr const char* kCheckpointFormat = "vtg-policy-v1";

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& p,
                     const std::map<std::string, std::string>& provenance) {
  const auto V = vsize(p);
  const auto df = static_cast<std::size_t>(p.dims.d_feat);
  const auto de = static_cast<std::size_t>(p.dims.d_emb);
  const auto dh = static_cast<std::size_t>(p.dims.d_hid);

  ordered_json j;
  j["format"] = kCheckpointFormat;
  j["dims"] = {{"d_feat", p.dims.d_feat}, {"d_emb", p.dims.d_emb}, {"d_hid", p.dims.d_hid}};
  j["vocab"] = {{"n_filler", p.vocab.n_filler}, {"n_bins", p.vocab.n_bins}};
  j["provenance"] = ordered_json::object();
  for (const auto& [k, v] : provenance) j["provenance"][k] = v;
  j["params"]["E"] = matrix_json(p.E, V, de);
  j["params"]["W_x"] = matrix_json(p.W_x, dh, df);
  j["params"]["W_e"] = matrix_json(p.W_e, dh, de);
  j["params"]["W_h"] = matrix_json(p.W_h, dh, dh);
  j["params"]["b"] = p.b;
  j["params"]["U"] = matrix_json(p.U, V, dh);
  j["params"]["c"] = p.c;
  fsio::atomic_write(path, j.dump(1));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  ordered_json j;
  try {
    j = ordered_json::parse(fsio::read_file(path));
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + ": " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat)
    throw std::runtime_error("checkpoint " + path.string() + ": unrecognized format");

  Checkpoint ck;
  ck.params.dims.d_feat = j.at("dims").at("d_feat").get<int>();
  ck.params.dims.d_emb = j.at("dims").at("d_emb").get<int>();
  ck.params.dims.d_hid = j.at("dims").at("d_hid").get<int>();
  ck.params.vocab.n_filler = j.at("vocab").at("n_filler").get<int>();
  ck.params.vocab.n_bins = j.at("vocab").at("n_bins").get<int>();
  check_dims(ck.params.dims, ck.params.vocab);
  for (const auto& item : j.at("provenance").items())
    ck.provenance[item.key()] = item.value().get<std::string>();

  const auto V = static_cast<std::size_t>(ck.params.vocab.size());
  const auto df = static_cast<std::size_t>(ck.params.dims.d_feat);
  const auto de = static_cast<std::size_t>(ck.params.dims.d_emb);
  const auto dh = static_cast<std::size_t>(ck.params.dims.d_hid);
  const auto& pj = j.at("params");
  ck.params.E = matrix_from_json(pj.at("E"), V, de, "E");
  ck.params.W_x = matrix_from_json(pj.at("W_x"), dh, df, "W_x");
  ck.params.W_e = matrix_from_json(pj.at("W_e"), dh, de, "W_e");
  ck.params.W_h = matrix_from_json(pj.at("W_h"), dh, dh, "W_h");
  ck.params.b = vector_from_json(pj.at("b"), dh, "b");
  ck.params.U = matrix_from_json(pj.at("U"), V, dh, "U");
  ck.params.c = vector_from_json(pj.at("c"), V, "c");
  return ck;
}

}  // namespace vtg
