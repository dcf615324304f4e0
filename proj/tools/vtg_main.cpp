// Pipeline driver: every stage of the synthetic temporal-grounding training
// loop as a subcommand, plus `pipeline` to chain them in one work directory.
// Same config + seed reproduces byte-identical outputs (sequential mode).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "vtg/fsio.hpp"
#include "vtg/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<double> parse_thresholds(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    const double v = std::stod(item, &pos);
    if (pos != item.size()) throw CLI::ValidationError("--thresholds", "not a number: " + item);
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--thresholds", "empty list");
  return out;
}

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

vtg::PipelineConfig load_config(const CommonArgs& c) {
  vtg::PipelineConfig cfg;
  if (!c.config_path.empty()) cfg = vtg::PipelineConfig::from_json_file(c.config_path);
  if (c.seed_set) cfg.seed = c.seed;
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& c) {
  cmd->add_option("--config", c.config_path, "JSON config file; flags override it");
  cmd->add_option("--seed", c.seed, "seed for this stage")->each([&](const std::string&) {
    c.seed_set = true;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vtg: synthetic video-temporal-grounding training pipeline"};
  app.require_subcommand(1);

  // ---- gen ----
  auto* gen = app.add_subcommand("gen", "generate a synthetic task dataset");
  CommonArgs gen_common;
  add_common(gen, gen_common);
  int gen_n = -1;
  std::string gen_out, gen_dist;
  double gen_duration = -1.0, gen_easy_frac = -1.0;
  gen->add_option("--n", gen_n, "number of samples");
  gen->add_option("--out", gen_out, "output sample file")->required();
  gen->add_option("--duration", gen_duration, "video duration in seconds");
  gen->add_option("--dist", gen_dist, "difficulty distribution: uniform|bimodal");
  gen->add_option("--easy-frac", gen_easy_frac, "easy fraction for bimodal difficulty");

  // ---- annotate ----
  auto* ann = app.add_subcommand("annotate", "simulate chain-of-thought annotation");
  CommonArgs ann_common;
  add_common(ann, ann_common);
  std::string ann_in, ann_out;
  double ann_err = -1.0, ann_noise = -1.0;
  int ann_cot_min = -1, ann_cot_max = -1;
  ann->add_option("--in", ann_in, "input sample file")->required();
  ann->add_option("--out", ann_out, "output annotated file")->required();
  ann->add_option("--p-annot-error", ann_err, "probability of a random annotation");
  ann->add_option("--noise-scale", ann_noise, "annotator noise at difficulty 1");
  ann->add_option("--cot-min", ann_cot_min, "minimum filler tokens");
  ann->add_option("--cot-max", ann_cot_max, "maximum filler tokens");

  // ---- curate ----
  auto* cur = app.add_subcommand("curate", "split annotated data by annotation IoU");
  CommonArgs cur_common;
  add_common(cur, cur_common);
  std::string cur_in, cur_out_dir;
  double cur_eps1 = -1.0, cur_eps2 = -1.0;
  cur->add_option("--in", cur_in, "input annotated file")->required();
  cur->add_option("--out-dir", cur_out_dir, "output directory")->required();
  cur->add_option("--eps1", cur_eps1, "cold-start threshold (IoU > eps1)");
  cur->add_option("--eps2", cur_eps2, "discard threshold (IoU < eps2)");

  // ---- sft ----
  auto* sft = app.add_subcommand("sft", "supervised cold-start training");
  CommonArgs sft_common;
  add_common(sft, sft_common);
  std::string sft_data, sft_out, sft_init, sft_metrics;
  int sft_epochs = -1;
  double sft_lr = -1.0;
  sft->add_option("--data", sft_data, "annotated training file")->required();
  sft->add_option("--out", sft_out, "output checkpoint")->required();
  sft->add_option("--init", sft_init, "initial checkpoint (default: fresh init)");
  sft->add_option("--metrics", sft_metrics, "per-epoch NLL metrics file");
  sft->add_option("--epochs", sft_epochs, "SFT epochs");
  sft->add_option("--lr", sft_lr, "SFT learning rate");

  // ---- rl ----
  auto* rl = app.add_subcommand("rl", "GRPO reinforcement learning");
  CommonArgs rl_common;
  add_common(rl, rl_common);
  std::string rl_data, rl_val, rl_init, rl_out_dir;
  int rl_steps = -1, rl_group = -1, rl_max_len = -1, rl_val_every = -1;
  double rl_beta = -1.0, rl_lt = -1.0, rl_lf = -1.0, rl_lr = -1.0, rl_temp = -1.0;
  rl->add_option("--data", rl_data, "RL pool (sample or annotated file)")->required();
  rl->add_option("--val", rl_val, "validation sample file")->required();
  rl->add_option("--init", rl_init, "initial checkpoint (default: fresh init)");
  rl->add_option("--out-dir", rl_out_dir, "output directory")->required();
  rl->add_option("--steps", rl_steps, "RL steps");
  rl->add_option("--group-size", rl_group, "rollouts per sample (G)");
  rl->add_option("--beta", rl_beta, "KL coefficient");
  rl->add_option("--lambda-tiou", rl_lt, "IoU reward weight");
  rl->add_option("--lambda-form", rl_lf, "format reward weight");
  rl->add_option("--max-len", rl_max_len, "rollout token cap");
  rl->add_option("--val-every", rl_val_every, "validation interval");
  rl->add_option("--lr", rl_lr, "RL learning rate");
  rl->add_option("--temperature", rl_temp, "rollout sampling temperature");

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "recall@m / mIoU evaluation of a checkpoint");
  CommonArgs ev_common;
  add_common(ev, ev_common);
  std::string ev_ckpt, ev_dataset, ev_out, ev_thresholds;
  int ev_max_len = -1;
  ev->add_option("--checkpoint", ev_ckpt, "policy checkpoint")->required();
  ev->add_option("--dataset", ev_dataset, "evaluation sample file")->required();
  ev->add_option("--out", ev_out, "report file")->required();
  ev->add_option("--thresholds", ev_thresholds, "comma-separated recall thresholds");
  ev->add_option("--max-len", ev_max_len, "greedy decode token cap");

  // ---- pipeline ----
  auto* pipe = app.add_subcommand("pipeline", "gen + annotate + curate + sft + rl + eval");
  CommonArgs pipe_common;
  add_common(pipe, pipe_common);
  std::string pipe_workdir, pipe_variant;
  int pipe_n = -1, pipe_steps = -1, pipe_group = -1, pipe_max_len = -1;
  double pipe_eps1 = -1.0, pipe_eps2 = -1.0, pipe_beta = -1.0, pipe_lt = -1.0,
         pipe_lf = -1.0;
  pipe->add_option("--workdir", pipe_workdir, "work directory")->required();
  pipe->add_option("--variant", pipe_variant,
                   "coldstart|zero|coldstart-unfiltered-rl|zero-unfiltered");
  pipe->add_option("--n", pipe_n, "training-pool size");
  pipe->add_option("--eps1", pipe_eps1, "cold-start threshold");
  pipe->add_option("--eps2", pipe_eps2, "discard threshold");
  pipe->add_option("--steps", pipe_steps, "RL steps");
  pipe->add_option("--group-size", pipe_group, "rollouts per sample (G)");
  pipe->add_option("--beta", pipe_beta, "KL coefficient");
  pipe->add_option("--lambda-tiou", pipe_lt, "IoU reward weight");
  pipe->add_option("--lambda-form", pipe_lf, "format reward weight");
  pipe->add_option("--max-len", pipe_max_len, "rollout token cap");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      vtg::PipelineConfig cfg = load_config(gen_common);
      cfg.curation.seed = cfg.seed;
      if (gen_n >= 0) cfg.curation.n_samples = gen_n;
      if (gen_duration > 0) cfg.curation.duration_s = gen_duration;
      if (!gen_dist.empty())
        cfg.curation.difficulty_dist = vtg::difficulty_dist_from_name(gen_dist);
      if (gen_easy_frac >= 0) cfg.curation.easy_frac = gen_easy_frac;
      vtg::run_gen(cfg.curation, gen_out);
    } else if (ann->parsed()) {
      vtg::PipelineConfig cfg = load_config(ann_common);
      cfg.curation.seed = cfg.seed;
      if (ann_err >= 0) cfg.curation.p_annot_error = ann_err;
      if (ann_noise >= 0) cfg.curation.noise_scale = ann_noise;
      if (ann_cot_min >= 0) cfg.curation.cot_len_min = ann_cot_min;
      if (ann_cot_max >= 0) cfg.curation.cot_len_max = ann_cot_max;
      vtg::run_annotate(ann_in, ann_out, cfg.curation, cfg.vocab, cfg.tags);
    } else if (cur->parsed()) {
      vtg::PipelineConfig cfg = load_config(cur_common);
      if (cur_eps1 >= 0) cfg.curation.eps1 = cur_eps1;
      if (cur_eps2 >= 0) cfg.curation.eps2 = cur_eps2;
      const auto counts =
          vtg::run_curate(cur_in, cur_out_dir, cfg.curation.eps1, cfg.curation.eps2);
      std::cout << "curate: " << counts.input << " -> coldstart " << counts.coldstart
                << ", rl " << counts.rl << ", discarded " << counts.discarded << "\n";
    } else if (sft->parsed()) {
      vtg::PipelineConfig cfg = load_config(sft_common);
      cfg.train.seed = cfg.seed;
      if (sft_epochs >= 0) cfg.train.sft_epochs = sft_epochs;
      if (sft_lr >= 0) cfg.train.lr_sft = sft_lr;
      std::optional<fs::path> init;
      if (!sft_init.empty()) init = sft_init;
      std::optional<fs::path> metrics;
      if (!sft_metrics.empty()) metrics = sft_metrics;
      vtg::run_sft(sft_data, init, sft_out, cfg.train, cfg.dims, cfg.vocab,
                   vtg::mix_seed(cfg.seed, 0x1717), metrics);
    } else if (rl->parsed()) {
      vtg::PipelineConfig cfg = load_config(rl_common);
      cfg.train.seed = cfg.seed;
      if (rl_steps >= 0) cfg.train.rl_steps = rl_steps;
      if (rl_group >= 0) cfg.train.group_size = rl_group;
      if (rl_beta >= 0) cfg.train.beta = rl_beta;
      if (rl_lt >= 0) cfg.weights.lambda_tiou = rl_lt;
      if (rl_lf >= 0) cfg.weights.lambda_form = rl_lf;
      if (rl_max_len >= 0) cfg.train.max_len = rl_max_len;
      if (rl_val_every >= 0) cfg.train.val_every = rl_val_every;
      if (rl_lr >= 0) cfg.train.lr_rl = rl_lr;
      if (rl_temp >= 0) cfg.train.temperature = rl_temp;
      std::optional<fs::path> init;
      if (!rl_init.empty()) init = rl_init;
      vtg::run_rl(rl_data, rl_val, init, rl_out_dir, cfg.train,
                  {cfg.weights, cfg.tags}, cfg.dims, cfg.vocab,
                  vtg::mix_seed(cfg.seed, 0x1717));
    } else if (ev->parsed()) {
      vtg::PipelineConfig cfg = load_config(ev_common);
      std::vector<double> thresholds = {0.3, 0.5, 0.7};
      if (!ev_thresholds.empty()) thresholds = parse_thresholds(ev_thresholds);
      const int max_len = ev_max_len > 0 ? ev_max_len : cfg.train.max_len;
      vtg::run_eval(ev_ckpt, ev_dataset, ev_out, cfg.tags, thresholds, max_len);
    } else if (pipe->parsed()) {
      vtg::PipelineConfig cfg = load_config(pipe_common);
      if (!pipe_variant.empty()) cfg.variant = pipe_variant;
      if (pipe_n >= 0) cfg.curation.n_samples = pipe_n;
      if (pipe_eps1 >= 0) cfg.curation.eps1 = pipe_eps1;
      if (pipe_eps2 >= 0) cfg.curation.eps2 = pipe_eps2;
      if (pipe_steps >= 0) cfg.train.rl_steps = pipe_steps;
      if (pipe_group >= 0) cfg.train.group_size = pipe_group;
      if (pipe_beta >= 0) cfg.train.beta = pipe_beta;
      if (pipe_lt >= 0) cfg.weights.lambda_tiou = pipe_lt;
      if (pipe_lf >= 0) cfg.weights.lambda_form = pipe_lf;
      if (pipe_max_len >= 0) cfg.train.max_len = pipe_max_len;
      vtg::run_pipeline(cfg, pipe_workdir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
