#include "vtg/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "vtg/fsio.hpp"

namespace vtg {

using ordered_json = nlohmann::ordered_json;

namespace fs = std::filesystem;

namespace {

void check_keys(const ordered_json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw std::runtime_error("config: '" + where + "' must be an object");
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw std::runtime_error("config: unknown key '" + item.key() + "' in " + where);
}

template <typename T>
void maybe(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string step_ckpt_name(int step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_step_%04d.json", step);
  return buf;
}

ordered_json stats_to_json(const StepStats& st) {
  ordered_json j;
  j["step"] = st.step;
  j["mean_reward"] = st.mean_reward;
  j["mean_tiou"] = st.mean_tiou;
  j["format_rate"] = st.format_rate;
  j["mean_response_len"] = st.mean_response_len;
  j["kl_value"] = st.kl_value;
  j["loss"] = st.loss;
  if (st.val_miou) j["val_miou"] = *st.val_miou;
  return j;
}

std::string u64str(std::uint64_t v) { return std::to_string(v); }

}  // namespace

void PipelineConfig::validate() const {
  curation.validate();
  train.validate();
  weights.validate();
  tags.validate();
  if (n_val < 1) throw std::invalid_argument("config: n_val must be >= 1");
  if (curation.d_feat != dims.d_feat)
    throw std::invalid_argument("config: curation.d_feat must match policy d_feat");
  if (!known_variant(variant))
    throw std::invalid_argument("config: unknown variant '" + variant + "'");
}

std::string PipelineConfig::to_json_text() const {
  ordered_json j;
  j["seed"] = seed;
  j["variant"] = variant;
  j["curation"] = {{"n", curation.n_samples},
                   {"duration_s", curation.duration_s},
                   {"eps1", curation.eps1},
                   {"eps2", curation.eps2},
                   {"difficulty_dist", difficulty_dist_name(curation.difficulty_dist)},
                   {"easy_frac", curation.easy_frac},
                   {"p_annot_error", curation.p_annot_error},
                   {"noise_scale", curation.noise_scale},
                   {"cot_len_min", curation.cot_len_min},
                   {"cot_len_max", curation.cot_len_max},
                   {"feature_noise_base", curation.feature_noise_base},
                   {"feature_noise_per_difficulty", curation.feature_noise_per_difficulty}};
  j["n_val"] = n_val;
  j["train"] = {{"group_size", train.group_size},
                {"beta", train.beta},
                {"lr_sft", train.lr_sft},
                {"lr_rl", train.lr_rl},
                {"rl_steps", train.rl_steps},
                {"sft_epochs", train.sft_epochs},
                {"samples_per_step", train.samples_per_step},
                {"max_len", train.max_len},
                {"temperature", train.temperature},
                {"val_every", train.val_every}};
  if (train.clip_eps)
    j["train"]["clip_eps"] = *train.clip_eps;
  else
    j["train"]["clip_eps"] = nullptr;
  j["reward"] = {{"lambda_tiou", weights.lambda_tiou}, {"lambda_form", weights.lambda_form}};
  j["tags"] = {{"think_open", tags.think_open},
               {"think_close", tags.think_close},
               {"answer_open", tags.answer_open},
               {"answer_close", tags.answer_close}};
  j["policy"] = {{"d_feat", dims.d_feat},
                 {"d_emb", dims.d_emb},
                 {"d_hid", dims.d_hid},
                 {"n_filler", vocab.n_filler},
                 {"n_bins", vocab.n_bins}};
  return j.dump(1);
}

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j, {"seed", "variant", "curation", "n_val", "train", "reward", "tags",
                 "policy"},
             "config");

  PipelineConfig cfg;
  maybe(j, "seed", cfg.seed);
  maybe(j, "variant", cfg.variant);
  maybe(j, "n_val", cfg.n_val);

  if (j.contains("curation")) {
    const auto& c = j.at("curation");
    check_keys(c,
               {"n", "duration_s", "eps1", "eps2", "difficulty_dist", "easy_frac",
                "p_annot_error", "noise_scale", "cot_len_min", "cot_len_max",
                "feature_noise_base", "feature_noise_per_difficulty"},
               "curation");
    maybe(c, "n", cfg.curation.n_samples);
    maybe(c, "duration_s", cfg.curation.duration_s);
    maybe(c, "eps1", cfg.curation.eps1);
    maybe(c, "eps2", cfg.curation.eps2);
    if (c.contains("difficulty_dist"))
      cfg.curation.difficulty_dist =
          difficulty_dist_from_name(c.at("difficulty_dist").get<std::string>());
    maybe(c, "easy_frac", cfg.curation.easy_frac);
    maybe(c, "p_annot_error", cfg.curation.p_annot_error);
    maybe(c, "noise_scale", cfg.curation.noise_scale);
    maybe(c, "cot_len_min", cfg.curation.cot_len_min);
    maybe(c, "cot_len_max", cfg.curation.cot_len_max);
    maybe(c, "feature_noise_base", cfg.curation.feature_noise_base);
    maybe(c, "feature_noise_per_difficulty", cfg.curation.feature_noise_per_difficulty);
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t,
               {"group_size", "beta", "lr_sft", "lr_rl", "rl_steps", "sft_epochs",
                "samples_per_step", "max_len", "temperature", "val_every", "clip_eps"},
               "train");
    maybe(t, "group_size", cfg.train.group_size);
    maybe(t, "beta", cfg.train.beta);
    maybe(t, "lr_sft", cfg.train.lr_sft);
    maybe(t, "lr_rl", cfg.train.lr_rl);
    maybe(t, "rl_steps", cfg.train.rl_steps);
    maybe(t, "sft_epochs", cfg.train.sft_epochs);
    maybe(t, "samples_per_step", cfg.train.samples_per_step);
    maybe(t, "max_len", cfg.train.max_len);
    maybe(t, "temperature", cfg.train.temperature);
    maybe(t, "val_every", cfg.train.val_every);
    if (t.contains("clip_eps") && !t.at("clip_eps").is_null())
      cfg.train.clip_eps = t.at("clip_eps").get<double>();
  }

  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    check_keys(r, {"lambda_tiou", "lambda_form"}, "reward");
    maybe(r, "lambda_tiou", cfg.weights.lambda_tiou);
    maybe(r, "lambda_form", cfg.weights.lambda_form);
  }

  if (j.contains("tags")) {
    const auto& t = j.at("tags");
    check_keys(t, {"think_open", "think_close", "answer_open", "answer_close"}, "tags");
    maybe(t, "think_open", cfg.tags.think_open);
    maybe(t, "think_close", cfg.tags.think_close);
    maybe(t, "answer_open", cfg.tags.answer_open);
    maybe(t, "answer_close", cfg.tags.answer_close);
  }

  if (j.contains("policy")) {
    const auto& p = j.at("policy");
    check_keys(p, {"d_feat", "d_emb", "d_hid", "n_filler", "n_bins"}, "policy");
    maybe(p, "d_feat", cfg.dims.d_feat);
    maybe(p, "d_emb", cfg.dims.d_emb);
    maybe(p, "d_hid", cfg.dims.d_hid);
    maybe(p, "n_filler", cfg.vocab.n_filler);
    maybe(p, "n_bins", cfg.vocab.n_bins);
  }

  cfg.curation.d_feat = cfg.dims.d_feat;
  return cfg;
}

PipelineConfig PipelineConfig::from_json_file(const fs::path& path) {
  return from_json_text(fsio::read_file(path));
}

StageSeeds StageSeeds::derive(std::uint64_t master) {
  StageSeeds s;
  s.gen_train = mix_seed(master, 0x57A6E1);
  s.gen_val = mix_seed(master, 0x57A6E2);
  s.annotate = mix_seed(master, 0x57A6E3);
  s.policy_init = mix_seed(master, 0x57A6E4);
  s.sft = mix_seed(master, 0x57A6E5);
  s.rl = mix_seed(master, 0x57A6E6);
  return s;
}

std::vector<std::string> variant_names() {
  return {"coldstart", "zero", "coldstart-unfiltered-rl", "zero-unfiltered"};
}

bool known_variant(const std::string& v) {
  const auto names = variant_names();
  return std::find(names.begin(), names.end(), v) != names.end();
}

bool variant_uses_sft(const std::string& v) { return v.rfind("coldstart", 0) == 0; }

bool variant_uses_filtered_pool(const std::string& v) {
  return v.find("unfiltered") == std::string::npos;
}

std::vector<GroundingSample> read_samples_any(const fs::path& path) {
  const auto lines = fsio::read_lines(path);
  std::vector<GroundingSample> out;
  std::size_t line_no = 0;
  for (const auto& line : lines) {
    ++line_no;
    if (line.empty()) continue;
    try {
      if (line.find("\"response_tokens\"") != std::string::npos)
        out.push_back(decode_annotated(line).sample);
      else
        out.push_back(decode_sample(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return out;
}

void run_gen(const CurationConfig& cfg, const fs::path& out) {
  const auto samples = generate_dataset(cfg);
  write_samples(out, samples);
}

void run_annotate(const fs::path& in, const fs::path& out, const CurationConfig& cfg,
                  const PolicyVocab& vocab, const TagProfile& tags) {
  tags.validate();
  const auto samples = read_samples(in);
  if (samples.empty()) throw std::runtime_error("annotate: empty input " + in.string());
  const auto annotated = annotate_dataset(samples, cfg, vocab, tags);
  write_annotated(out, annotated);
}

SplitCounts run_curate(const fs::path& in, const fs::path& out_dir, double eps1,
                       double eps2) {
  if (!(0.0 <= eps2 && eps2 <= eps1 && eps1 <= 1.0))
    throw std::runtime_error("curate: need 0 <= eps2 <= eps1 <= 1");
  const auto annotated = read_annotated(in);
  if (annotated.empty()) throw std::runtime_error("curate: empty input " + in.string());
  const SplitResult split = filter_split(annotated, eps1, eps2);

  fs::create_directories(out_dir);
  write_annotated(out_dir / "coldstart.jsonl", split.coldstart);
  write_annotated(out_dir / "rl.jsonl", split.rl);
  write_annotated(out_dir / "discarded.jsonl", split.discarded);

  SplitCounts counts{annotated.size(), split.coldstart.size(), split.rl.size(),
                     split.discarded.size()};
  ordered_json manifest;
  manifest["input"] = counts.input;
  manifest["coldstart"] = counts.coldstart;
  manifest["rl"] = counts.rl;
  manifest["discarded"] = counts.discarded;
  manifest["eps1"] = eps1;
  manifest["eps2"] = eps2;
  manifest["source"] = in.filename().string();
  fsio::atomic_write(out_dir / "split_manifest.json", manifest.dump(1) + "\n");
  return counts;
}

namespace {

PolicyParams load_or_init(const std::optional<fs::path>& init_ckpt, const PolicyDims& dims,
                          const PolicyVocab& vocab, std::uint64_t init_seed) {
  if (init_ckpt) {
    Checkpoint ck = load_checkpoint(*init_ckpt);
    if (!(ck.params.dims == dims) || !(ck.params.vocab == vocab))
      throw std::runtime_error("checkpoint " + init_ckpt->string() +
                               " does not match the configured policy shape");
    return std::move(ck.params);
  }
  return init_policy(dims, vocab, init_seed);
}

}  // namespace

void run_sft(const fs::path& data, const std::optional<fs::path>& init_ckpt,
             const fs::path& out_ckpt, const TrainConfig& train, const PolicyDims& dims,
             const PolicyVocab& vocab, std::uint64_t init_seed,
             const std::optional<fs::path>& metrics_out) {
  const auto annotated = read_annotated(data);
  if (annotated.empty()) throw std::runtime_error("sft: empty dataset " + data.string());
  std::vector<SftExample> examples;
  examples.reserve(annotated.size());
  for (const auto& a : annotated)
    examples.push_back({a.sample.features, a.response_tokens});

  PolicyParams params = load_or_init(init_ckpt, dims, vocab, init_seed);

  std::optional<fsio::LineWriter> metrics;
  if (metrics_out) metrics.emplace(*metrics_out);
  SftCallbacks callbacks;
  if (metrics)
    callbacks.on_epoch = [&](int epoch, double mean_nll) {
      ordered_json j;
      j["epoch"] = epoch;
      j["mean_nll"] = mean_nll;
      metrics->write_line(j.dump());
    };

  params = train_sft(std::move(params), examples, train, callbacks);
  if (metrics) metrics->commit();
  // provenance carries file names, not paths, so identical runs in different
  // directories stay byte-comparable
  save_checkpoint(out_ckpt, params,
                  {{"stage", "sft"},
                   {"seed", u64str(train.seed)},
                   {"init", init_ckpt ? init_ckpt->filename().string()
                                      : "fresh:" + u64str(init_seed)},
                   {"data", data.filename().string()}});
}

void run_rl(const fs::path& data, const fs::path& val,
            const std::optional<fs::path>& init_ckpt, const fs::path& out_dir,
            const TrainConfig& train, const RewardConfig& reward, const PolicyDims& dims,
            const PolicyVocab& vocab, std::uint64_t init_seed) {
  const auto rl_data = read_samples_any(data);
  const auto val_data = read_samples_any(val);
  PolicyParams params = load_or_init(init_ckpt, dims, vocab, init_seed);

  fs::create_directories(out_dir);
  fsio::LineWriter metrics(out_dir / "metrics.jsonl");

  RlCallbacks callbacks;
  callbacks.on_step = [&](const StepStats& st, const PolicyParams& p) {
    metrics.write_line(stats_to_json(st).dump());
    if (st.val_miou)
      save_checkpoint(out_dir / step_ckpt_name(st.step), p,
                      {{"stage", "rl"},
                       {"seed", u64str(train.seed)},
                       {"step", std::to_string(st.step)}});
  };

  auto [final_params, stats] = train_rl(std::move(params), rl_data, val_data, reward,
                                        train, callbacks);
  metrics.commit();
  save_checkpoint(out_dir / "final.json", final_params,
                  {{"stage", "rl"},
                   {"seed", u64str(train.seed)},
                   {"step", std::to_string(train.rl_steps)}});
}

void run_eval(const fs::path& checkpoint, const fs::path& dataset, const fs::path& out,
              const TagProfile& tags, const std::vector<double>& thresholds, int max_len) {
  tags.validate();
  Checkpoint ck = load_checkpoint(checkpoint);
  const auto data = read_samples_any(dataset);
  if (data.empty()) throw std::runtime_error("eval: empty dataset " + dataset.string());
  const EvalReport report = evaluate_policy(ck.params, data, tags, thresholds, max_len);

  std::map<std::string, std::string> echo;
  echo["checkpoint"] = checkpoint.string();
  echo["dataset"] = dataset.string();
  echo["think_open"] = tags.think_open;
  echo["think_close"] = tags.think_close;
  echo["answer_open"] = tags.answer_open;
  echo["answer_close"] = tags.answer_close;
  std::ostringstream ts;
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    ts << (i ? "," : "") << thresholds[i];
  echo["thresholds"] = ts.str();
  echo["max_len"] = std::to_string(max_len);
  write_report(out, report, echo);
}

void run_pipeline(const PipelineConfig& cfg, const fs::path& workdir) {
  cfg.validate();
  fsio::DirLock lock(workdir);
  const StageSeeds seeds = StageSeeds::derive(cfg.seed);

  const fs::path data_dir = workdir / "data";
  const fs::path ckpt_dir = workdir / "ckpt";
  const fs::path metrics_dir = workdir / "metrics";
  const fs::path report_dir = workdir / "report";
  for (const auto& d : {data_dir, ckpt_dir, metrics_dir, report_dir})
    fs::create_directories(d);

  {
    ordered_json echo = ordered_json::parse(cfg.to_json_text());
    echo["stage_seeds"] = {{"gen_train", seeds.gen_train}, {"gen_val", seeds.gen_val},
                           {"annotate", seeds.annotate},   {"policy_init", seeds.policy_init},
                           {"sft", seeds.sft},             {"rl", seeds.rl}};
    fsio::atomic_write(workdir / "config.resolved.json", echo.dump(1) + "\n");
  }

  CurationConfig gen_cfg = cfg.curation;
  gen_cfg.seed = seeds.gen_train;
  run_gen(gen_cfg, data_dir / "train.jsonl");

  CurationConfig val_cfg = cfg.curation;
  val_cfg.n_samples = cfg.n_val;
  val_cfg.seed = seeds.gen_val;
  run_gen(val_cfg, data_dir / "val.jsonl");

  CurationConfig ann_cfg = cfg.curation;
  ann_cfg.seed = seeds.annotate;
  run_annotate(data_dir / "train.jsonl", data_dir / "annotated.jsonl", ann_cfg, cfg.vocab,
               cfg.tags);

  run_curate(data_dir / "annotated.jsonl", data_dir, cfg.curation.eps1, cfg.curation.eps2);

  {
    const PolicyParams init = init_policy(cfg.dims, cfg.vocab, seeds.policy_init);
    save_checkpoint(ckpt_dir / "init.json", init,
                    {{"stage", "init"}, {"seed", u64str(seeds.policy_init)}});
  }

  fs::path rl_init = ckpt_dir / "init.json";
  if (variant_uses_sft(cfg.variant)) {
    TrainConfig sft_cfg = cfg.train;
    sft_cfg.seed = seeds.sft;
    run_sft(data_dir / "coldstart.jsonl", ckpt_dir / "init.json", ckpt_dir / "sft.json",
            sft_cfg, cfg.dims, cfg.vocab, seeds.policy_init, metrics_dir / "sft.jsonl");
    rl_init = ckpt_dir / "sft.json";
  }

  const fs::path rl_pool = variant_uses_filtered_pool(cfg.variant)
                               ? data_dir / "rl.jsonl"
                               : data_dir / "annotated.jsonl";
  TrainConfig rl_cfg = cfg.train;
  rl_cfg.seed = seeds.rl;
  const RewardConfig reward{cfg.weights, cfg.tags};
  run_rl(rl_pool, data_dir / "val.jsonl", rl_init, workdir / "rl", rl_cfg, reward,
         cfg.dims, cfg.vocab, seeds.policy_init);

  run_eval(workdir / "rl" / "final.json", data_dir / "val.jsonl",
           report_dir / "eval.json", cfg.tags, {0.3, 0.5, 0.7}, cfg.train.max_len);
}

}  // namespace vtg
