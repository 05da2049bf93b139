#include "relprop/cli.hpp"

#include <algorithm>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "cli_internal.hpp"
#include "relprop/error.hpp"
#include "relprop/parallel.hpp"

namespace relprop::cli {
namespace {

void add_common(CLI::App* sub, CommonOptions& c, std::string& config,
                bool out_dir_required = true) {
  sub->add_option("--config", config,
                  "TOML file with option values (top level or a [" + sub->get_name() +
                      "] section); command-line values take precedence");
  sub->add_option("--seed", c.seed, "RNG seed")->capture_default_str();
  auto* out = sub->add_option("--out-dir", c.out_dir, "Output directory (created if missing)");
  if (out_dir_required) out->required();
  sub->add_option("--threads", c.threads, "Worker threads (0 = all hardware threads)")
      ->capture_default_str();
}

void add_means(CLI::App* sub, std::vector<float>& means) {
  sub->add_option("--means", means,
                  "Per-channel means subtracted from raw pixels (default: ImageNet RGB means "
                  "for 3 channels, 0 otherwise)")
      ->delimiter(',');
}

void add_lrp(CLI::App* sub, LrpOptions& l) {
  sub->add_option("--rule", l.uniform_rule,
                  "Apply one rule to every layer: zero, epsilon:E, gamma:G or zbox:LOW:HIGH");
  sub->add_option("--conv-epsilon", l.conv_epsilon, "Epsilon for upper conv layers")
      ->capture_default_str();
  sub->add_option("--conv-gamma", l.conv_gamma, "Gamma for lower conv layers")
      ->capture_default_str();
  sub->add_option("--dense-epsilon", l.dense_epsilon, "Epsilon for dense layers")
      ->capture_default_str();
  sub->add_option("--lower-fraction", l.lower_fraction,
                  "Fraction of non-input conv layers that use the gamma rule")
      ->capture_default_str();
  sub->add_option("--zbox-low", l.zbox_low, "Lower pixel bound for the input layer");
  sub->add_option("--zbox-high", l.zbox_high, "Upper pixel bound for the input layer");
}

// Every option struct plus the parser bound to them. CLI11 stores pointers
// into the structs, so an instance must not move after construction.
struct Commands {
  CLI::App app{"Layer-wise relevance propagation and cross-model occlusion analysis", "relprop"};
  std::string config;

  ForwardOptions fwd;
  RelevanceOptions rel;
  FinetuneOptions ft;
  SweepOptions sw;
  SimilarityOptions sim;
  Rank2Options r2;
  StatsOptions st;

  CLI::App* s_fwd = nullptr;
  CLI::App* s_rel = nullptr;
  CLI::App* s_ft = nullptr;
  CLI::App* s_sw = nullptr;
  CLI::App* s_sim = nullptr;
  CLI::App* s_r2 = nullptr;
  CLI::App* s_st = nullptr;

  Commands();
  Commands(const Commands&) = delete;
  Commands& operator=(const Commands&) = delete;

  CLI::App* selected() const {
    const auto subs = app.get_subcommands();
    return subs.empty() ? nullptr : subs.front();
  }
};

Commands::Commands() {
  app.set_version_flag("--version", std::string(tool_version()));
  app.require_subcommand(1);

  s_fwd = app.add_subcommand("forward", "Classify images; prints prediction JSON");
  add_common(s_fwd, fwd.common, config, false);
  s_fwd->add_option("--model", fwd.model, "NNWB weights or JSON topology sidecar")->required();
  s_fwd->add_option("--image", fwd.images, "PGM image or path,label manifest (repeatable)")
      ->required();
  add_means(s_fwd, fwd.means);

  s_rel = app.add_subcommand("relevance", "Compute relevance maps");
  add_common(s_rel, rel.common, config);
  s_rel->add_option("--model", rel.model, "NNWB weights or JSON topology sidecar")->required();
  s_rel->add_option("--image", rel.images, "PGM image or path,label manifest (repeatable)")
      ->required();
  s_rel->add_option("--class", rel.target, "Target class label or index (default: predicted)");
  s_rel->add_flag("--render", rel.render, "Also write a grayscale PGM rendering");
  s_rel->add_flag("--raw", rel.raw, "Store unnormalized relevance");
  add_means(s_rel, rel.means);
  add_lrp(s_rel, rel.lrp);

  s_ft = app.add_subcommand("finetune", "Retrain the readout layer on a labeled dataset");
  add_common(s_ft, ft.common, config);
  s_ft->add_option("--model", ft.model, "Pretrained NNWB weights or JSON sidecar")->required();
  s_ft->add_option("--manifest", ft.manifest, "Dataset CSV with path,label columns")->required();
  s_ft->add_option("--model-id", ft.model_id,
                   "Id of the output model; also names the output files");
  s_ft->add_option("--epochs", ft.epochs)->capture_default_str();
  s_ft->add_option("--lr", ft.learning_rate, "Learning rate")->capture_default_str();
  s_ft->add_option("--batch-size", ft.batch_size)->capture_default_str();
  s_ft->add_option("--init-seed", ft.init_seed, "Readout initialization seed (default: --seed)");
  s_ft->add_option("--split-seed", ft.split_seed, "Train/validation split seed (default: --seed)");
  s_ft->add_flag("--no-cache", ft.no_cache, "Recompute frozen features every minibatch");
  s_ft->add_flag("--topology-json", ft.topology_json, "Also write a JSON topology sidecar");
  add_means(s_ft, ft.means);

  s_sw = app.add_subcommand("sweep", "Cross-model occlusion sweep over comparison bins");
  add_common(s_sw, sw.common, config);
  s_sw->add_option("--registry", sw.registry, "Model registry JSON")->required();
  s_sw->add_option("--dataset", sw.datasets,
                   "Labeled images as TASK=manifest.csv, or a manifest for every task "
                   "(repeatable)")
      ->required();
  s_sw->add_option("--schedule", sw.schedule,
                   "Masking percentiles: log, linear:N or a comma list")
      ->capture_default_str();
  s_sw->add_option("--samples-per-bin", sw.samples_per_bin)->capture_default_str();
  s_sw->add_option("--fill", sw.fill_value, "Value written into masked pixels (preprocessed)")
      ->capture_default_str();
  add_means(s_sw, sw.means);
  add_lrp(s_sw, sw.lrp);

  s_sim = app.add_subcommand("similarity", "Pairwise relevance map similarity");
  add_common(s_sim, sim.common, config);
  s_sim->add_option("--registry", sim.registry, "Model registry JSON")->required();
  s_sim->add_option("--dataset", sim.datasets,
                    "Labeled images as TASK=manifest.csv, or a manifest for every task "
                    "(repeatable)")
      ->required();
  add_means(s_sim, sim.means);
  add_lrp(s_sim, sim.lrp);

  s_r2 = app.add_subcommand("rank2", "Compare the second choices of two models");
  add_common(s_r2, r2.common, config);
  s_r2->add_option("--model-a", r2.model_a)->required();
  s_r2->add_option("--model-b", r2.model_b)->required();
  s_r2->add_option("--image", r2.images, "PGM image or path,label manifest (repeatable)")
      ->required();
  s_r2->add_option("--human", r2.human, "Human choices CSV with subject,image,choice columns");
  add_means(s_r2, r2.means);

  s_st = app.add_subcommand("stats", "ANOVA over a factorA,factorB,replicate,value CSV");
  add_common(s_st, st.common, config);
  s_st->add_option("--input", st.input)->required();
  s_st->add_option("--design", st.design, "two-way or one-way")->capture_default_str();
}

// Turns the items of a TOML config file into `--name=value` arguments for
// `command`. Items in another command's section are ignored.
std::vector<std::string> config_arguments(const std::string& path, const std::string& command) {
  std::vector<std::string> out;
  for (const auto& item : CLI::ConfigTOML().from_file(path)) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == command)) {
      continue;
    }
    if (item.name == "config") throw InvalidInput("config file '" + path + "' sets config");
    for (const auto& value : item.inputs) out.push_back("--" + item.name + "=" + value);
    if (item.inputs.empty()) out.push_back("--" + item.name);
  }
  return out;
}

int parse(Commands& c, const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    c.app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = c.app.exit(e);
    return code == 0 ? -1 : code;  // -1: help or version printed, stop cleanly
  }
  return 0;
}

int dispatch(Commands& c) {
  for (auto* common : {&c.fwd.common, &c.rel.common, &c.ft.common, &c.sw.common, &c.sim.common,
                       &c.r2.common, &c.st.common}) {
    common->threads = resolve_threads(common->threads);
  }
  if (c.s_fwd->parsed()) run_forward(c.fwd);
  if (c.s_rel->parsed()) run_relevance(c.rel);
  if (c.s_ft->parsed()) run_finetune(c.ft);
  if (c.s_sw->parsed()) run_sweep(c.sw);
  if (c.s_sim->parsed()) run_similarity(c.sim);
  if (c.s_r2->parsed()) run_rank2(c.r2);
  if (c.s_st->parsed()) run_stats(c.st);
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  try {
    auto first = std::make_unique<Commands>();
    if (const int code = parse(*first, args)) return code < 0 ? 0 : code;
    if (first->config.empty()) return dispatch(*first);

    // Config values go right after the subcommand name so that anything
    // given on the command line later overrides them.
    const std::string command = first->selected()->get_name();
    auto cfg = config_arguments(first->config, command);
    const auto pos = std::find(args.begin() + 1, args.end(), command);
    args.insert(pos + 1, cfg.begin(), cfg.end());
    auto second = std::make_unique<Commands>();
    if (const int code = parse(*second, args)) return code < 0 ? 0 : code;
    return dispatch(*second);
  } catch (const std::exception& e) {
    std::cerr << "relprop: error: " << e.what() << '\n';
    return 1;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"relprop"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace relprop::cli
