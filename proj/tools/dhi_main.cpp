// dhi — deterministic pipeline driver: corpus generation, training,
// multiple-choice and fact-precision evaluation, ablations.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dhi/ablation.hpp"
#include "dhi/checkpoint.hpp"
#include "dhi/corpus.hpp"
#include "dhi/decode.hpp"
#include "dhi/io_util.hpp"
#include "dhi/metrics.hpp"
#include "dhi/model.hpp"
#include "dhi/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// --config <file.json> may supply any flag of the invoked subcommand; values
// given on the command line win. Implemented by injecting the config pairs
// before the user arguments and letting TakeLast resolve.
std::vector<std::string> inject_config(const std::vector<std::string>& args) {
  std::string config_path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    }
  }
  if (config_path.empty()) return args;

  const json cfg = json::parse(dhi::read_file(config_path));
  if (!cfg.is_object()) {
    throw std::runtime_error("config file must hold a JSON object");
  }
  std::vector<std::string> out;
  out.push_back(args[0]);  // subcommand name
  for (const auto& [key, value] : cfg.items()) {
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back("--" + key);
      continue;
    }
    out.push_back("--" + key);
    out.push_back(value.is_string() ? value.get<std::string>() : value.dump());
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

dhi::ModelParams load_model(const std::string& prefix) {
  return dhi::load_checkpoint(prefix);
}

struct CommonEvalFlags {
  std::string pos, evil;
  std::string strategy = "greedy";
  double alpha_prime = 0.0;
  double beta = 1.0;
  std::string threshold_mode = "probability";
  std::string out = ".";
};

void add_eval_flags(CLI::App* cmd, CommonEvalFlags& f) {
  cmd->add_option("--pos", f.pos, "positive checkpoint prefix")->required();
  cmd->add_option("--evil", f.evil, "evil checkpoint prefix");
  cmd->add_option("--strategy", f.strategy, "greedy|cd|dhi");
  cmd->add_option("--alpha-prime", f.alpha_prime,
                  "plausibility strictness in [0,1]");
  cmd->add_option("--beta", f.beta, "contrast weight");
  cmd->add_option("--threshold-mode", f.threshold_mode,
                  "probability|raw_logit");
  cmd->add_option("--out", f.out, "output directory")->required();
}

dhi::DecodeConfig decode_config_from(const CommonEvalFlags& f) {
  dhi::DecodeConfig dc;
  dc.strategy = dhi::strategy_from_string(f.strategy);
  dc.alpha_prime = f.alpha_prime;
  dc.beta = f.beta;
  dc.threshold_mode = dhi::threshold_mode_from_string(f.threshold_mode);
  return dc;
}

// ---------------------------------------------------------------- gen-world
int run_gen_world(uint64_t seed, int entities, int attributes, int values,
                  int n_true, int n_false, const std::string& out) {
  const dhi::World world =
      dhi::generate_world(seed, entities, attributes, values);
  const dhi::Vocab vocab = dhi::build_vocab(world);
  const auto templates = dhi::default_training_templates(world, n_true);
  const auto train_set = dhi::render_training_set(world, vocab, templates);
  const auto icd_set = dhi::corrupt_for_icd(world, vocab, train_set, seed + 1);
  const auto mc_items =
      dhi::render_mc_set(world, vocab, seed + 2, n_true, n_false);
  const auto probes = dhi::render_probes(world, vocab);

  const fs::path dir(out);
  dhi::write_file_atomic((dir / "world.json").string(), dhi::world_to_json(world));
  dhi::write_file_atomic((dir / "vocab.json").string(), dhi::vocab_to_json(vocab));
  dhi::write_file_atomic((dir / "train.jsonl").string(),
                         dhi::training_set_to_jsonl(train_set));
  dhi::write_file_atomic((dir / "train_icd.jsonl").string(),
                         dhi::training_set_to_jsonl(icd_set));
  dhi::write_file_atomic((dir / "mc.jsonl").string(),
                         dhi::mc_set_to_jsonl(mc_items));
  dhi::write_file_atomic((dir / "probes.jsonl").string(),
                         dhi::probes_to_jsonl(probes));
  std::printf("wrote %zu training examples, %zu mc items, %zu probes to %s\n",
              train_set.size(), mc_items.size(), probes.size(), out.c_str());
  return 0;
}

// -------------------------------------------------------------------- train
struct TrainFlags {
  std::string role;
  double w_factual = std::numeric_limits<double>::quiet_NaN();
  std::string mask;
  std::string init_from;
  int epochs = 0;
  double lr = 0.0;
  uint64_t seed = 0;
  std::string data;
  std::string out = ".";
  int64_t d_model = 32, n_heads = 2, n_layers = 2, d_ff = 64, max_seq_len = 48;
};

int run_train(const TrainFlags& f) {
  const dhi::Role role = dhi::role_from_string(f.role);
  const bool evil = role != dhi::Role::kPositive;

  if (evil && f.init_from.empty()) {
    throw std::runtime_error("evil roles require --init-from");
  }
  if (!evil && !f.init_from.empty()) {
    throw std::runtime_error("the positive role trains from scratch");
  }

  dhi::TrainConfig tc;
  tc.role = role;
  tc.seed = f.seed;
  tc.epochs = f.epochs > 0 ? f.epochs : (evil ? 40 : 200);
  tc.lr = f.lr > 0.0 ? f.lr : (evil ? 1e-3 : 3e-3);
  if (std::isnan(f.w_factual)) {
    tc.induction.w_factual = role == dhi::Role::kEvilDhi ? -0.05 : 1.0;
  } else {
    tc.induction.w_factual = f.w_factual;
  }
  if (f.mask.empty()) {
    tc.mask = role == dhi::Role::kEvilDhi ? dhi::MaskPolicy::kAdapted
                                          : dhi::MaskPolicy::kStandard;
  } else {
    tc.mask = dhi::mask_policy_from_string(f.mask);
  }
  tc.validate();

  const fs::path data_dir(f.data);
  const std::string train_file =
      role == dhi::Role::kEvilIcd ? "train_icd.jsonl" : "train.jsonl";
  const auto dataset = dhi::training_set_from_jsonl(
      dhi::read_file((data_dir / train_file).string()));

  std::optional<dhi::ModelParams> init;
  dhi::ModelConfig config;
  if (evil) {
    init = load_model(f.init_from);
    config = init->config;
  } else {
    const dhi::Vocab vocab = dhi::vocab_from_json(
        dhi::read_file((data_dir / "vocab.json").string()));
    config.vocab_size = vocab.size();
    config.d_model = f.d_model;
    config.n_heads = f.n_heads;
    config.n_layers = f.n_layers;
    config.d_ff = f.d_ff;
    config.max_seq_len = f.max_seq_len;
    config.init_seed = f.seed;
  }

  const dhi::TrainResult result =
      dhi::train(config, dataset, tc, init ? &*init : nullptr);

  const fs::path dir(f.out);
  fs::create_directories(dir);
  dhi::save_checkpoint((dir / "model").string(), result.params);
  dhi::write_file_atomic((dir / "model.meta.json").string(),
                         dhi::sidecar_to_json(result));
  std::printf("trained %s for %d epochs, final loss %.6f\n",
              dhi::to_string(tc.role).c_str(), tc.epochs, result.final_loss());
  return 0;
}

// ------------------------------------------------------------------ eval-mc
int run_eval_mc(const CommonEvalFlags& f, const std::string& norm,
                const std::string& mc_path) {
  const dhi::DecodeConfig dc = decode_config_from(f);
  const dhi::Normalization normalization =
      dhi::normalization_from_string(norm);

  const dhi::ModelParams pos = load_model(f.pos);
  std::optional<dhi::ModelParams> evil;
  if (dc.strategy == dhi::Strategy::kGreedy) {
    if (!f.evil.empty()) {
      std::fprintf(stderr, "warning: --strategy greedy ignores --evil\n");
    }
  } else {
    if (f.evil.empty()) {
      throw std::runtime_error("strategy " + f.strategy + " requires --evil");
    }
    evil = load_model(f.evil);
  }

  const auto items = dhi::mc_set_from_jsonl(dhi::read_file(mc_path));
  const dhi::McReport report =
      dhi::evaluate_mc(pos, evil ? &*evil : nullptr, items, dc, normalization);

  const fs::path dir(f.out);
  dhi::write_file_atomic((dir / "report.json").string(),
                         dhi::mc_report_to_json(report));
  dhi::write_file_atomic((dir / "report.md").string(),
                         dhi::mc_report_to_markdown(report));
  std::printf("MC1 %s  MC2 %s  MC3 %s  Avg %s  (%d items)\n",
              dhi::format_metric(report.mc1).c_str(),
              dhi::format_metric(report.mc2).c_str(),
              dhi::format_metric(report.mc3).c_str(),
              dhi::format_metric(report.avg).c_str(), report.n_items);
  return 0;
}

// --------------------------------------------------------------- eval-facts
int run_eval_facts(const CommonEvalFlags& f, const std::string& probes_path,
                   const std::string& world_path, int max_new_tokens,
                   bool trace) {
  dhi::DecodeConfig dc = decode_config_from(f);
  dc.max_new_tokens = max_new_tokens;

  const dhi::World world = dhi::world_from_json(dhi::read_file(world_path));
  const dhi::Vocab vocab = dhi::build_vocab(world);
  const auto probes = dhi::probes_from_jsonl(dhi::read_file(probes_path), world);

  const dhi::ModelParams pos = load_model(f.pos);
  std::optional<dhi::ModelParams> evil;
  if (dc.strategy == dhi::Strategy::kGreedy) {
    if (!f.evil.empty()) {
      std::fprintf(stderr, "warning: --strategy greedy ignores --evil\n");
    }
  } else {
    if (f.evil.empty()) {
      throw std::runtime_error("strategy " + f.strategy + " requires --evil");
    }
    evil = load_model(f.evil);
  }

  std::vector<std::vector<int>> outputs;
  std::string trace_jsonl;
  for (const auto& probe : probes) {
    std::vector<int> prompt{dhi::Vocab::kBos};
    prompt.insert(prompt.end(), probe.prompt_tokens.begin(),
                  probe.prompt_tokens.end());
    prompt.push_back(dhi::Vocab::kSep);
    std::vector<dhi::DecodeStep> steps;
    outputs.push_back(dhi::decode(pos, evil ? &*evil : nullptr, prompt, dc,
                                  dhi::Vocab::kEos, trace ? &steps : nullptr));
    if (trace) trace_jsonl += dhi::decode_trace_to_jsonl(steps);
  }

  dhi::FactReport report = dhi::aggregate_fact_outputs(outputs, world, vocab);
  report.decode = dc;

  const fs::path dir(f.out);
  dhi::write_file_atomic((dir / "report.json").string(),
                         dhi::fact_report_to_json(report));
  dhi::write_file_atomic((dir / "report.md").string(),
                         dhi::fact_report_to_markdown(report));
  if (trace) {
    dhi::write_file_atomic((dir / "decode_trace.jsonl").string(), trace_jsonl);
  }
  std::printf("%% response %s  # facts %s  score %s  (%d probes)\n",
              dhi::format_metric(report.response_ratio).c_str(),
              report.facts_per_response
                  ? std::to_string(*report.facts_per_response).c_str()
                  : "-",
              report.precision ? dhi::format_metric(*report.precision).c_str()
                               : "-",
              report.n_probes);
  return 0;
}

// ------------------------------------------------------------------- ablate
struct AblateFlags {
  std::string mode;
  std::string readings = "downweight,reverse";
  std::string seeds = "1,2,3";
  std::string alphas;
  std::string out = ".";
  dhi::ExperimentOptions options;
};

int run_ablate(const AblateFlags& f) {
  std::vector<uint64_t> seeds;
  for (const auto& s : split_csv(f.seeds)) seeds.push_back(std::stoull(s));
  if (seeds.empty()) throw std::runtime_error("ablate: no seeds given");

  const fs::path dir(f.out);
  if (f.mode == "components") {
    const dhi::ComponentsReport report =
        dhi::ablate_components(f.options, seeds);
    dhi::write_file_atomic((dir / "report.json").string(),
                           dhi::components_report_to_json(report));
    dhi::write_file_atomic((dir / "report.md").string(),
                           dhi::components_report_to_markdown(report));
    std::printf("components ablation over %zu seeds written to %s\n",
                seeds.size(), f.out.c_str());
    return 0;
  }
  if (f.mode == "alpha") {
    std::vector<double> alphas = dhi::kDefaultAlphaGrid;
    if (!f.alphas.empty()) {
      alphas.clear();
      for (const auto& a : split_csv(f.alphas)) alphas.push_back(std::stod(a));
    }
    std::vector<dhi::AlphaReading> readings;
    for (const auto& r : split_csv(f.readings)) {
      readings.push_back(dhi::alpha_reading_from_string(r));
    }
    if (readings.empty()) throw std::runtime_error("ablate: no readings given");
    const dhi::AlphaReport report =
        dhi::ablate_alpha(f.options, alphas, readings, seeds);
    dhi::write_file_atomic((dir / "report.json").string(),
                           dhi::alpha_report_to_json(report));
    dhi::write_file_atomic((dir / "report.md").string(),
                           dhi::alpha_report_to_markdown(report));
    std::printf("alpha ablation over %zu seeds written to %s\n", seeds.size(),
                f.out.c_str());
    return 0;
  }
  throw std::runtime_error("ablate: unknown --mode " + f.mode);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DHI toy laboratory: corpus, training, decoding, evaluation"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::string config_placeholder;

  // gen-world
  uint64_t gw_seed = 0;
  int gw_entities = 30, gw_attributes = 3, gw_values = 8;
  int gw_n_true = 2, gw_n_false = 3;
  std::string gw_out = ".";
  CLI::App* gen = app.add_subcommand("gen-world", "generate a synthetic world");
  gen->add_option("--config", config_placeholder, "JSON config file");
  gen->add_option("--seed", gw_seed, "rng seed");
  gen->add_option("--entities", gw_entities, "number of entities");
  gen->add_option("--attributes", gw_attributes, "number of attributes");
  gen->add_option("--values", gw_values, "values per attribute");
  gen->add_option("--n-true", gw_n_true, "true paraphrases per mc item");
  gen->add_option("--n-false", gw_n_false, "false answers per mc item");
  gen->add_option("--out", gw_out, "output directory")->required();

  // train
  TrainFlags tf;
  CLI::App* tr = app.add_subcommand("train", "train a checkpoint");
  tr->add_option("--config", config_placeholder, "JSON config file");
  tr->add_option("--role", tf.role, "positive|evil-dhi|evil-icd")->required();
  tr->add_option("--w-factual", tf.w_factual, "loss weight on factual slots");
  tr->add_option("--mask", tf.mask, "standard|adapted");
  tr->add_option("--init-from", tf.init_from, "checkpoint prefix to start from");
  tr->add_option("--epochs", tf.epochs, "epochs (0 = role default)");
  tr->add_option("--lr", tf.lr, "learning rate (0 = role default)");
  tr->add_option("--seed", tf.seed, "rng seed");
  tr->add_option("--data", tf.data, "directory written by gen-world")->required();
  tr->add_option("--out", tf.out, "output directory")->required();
  tr->add_option("--d-model", tf.d_model, "model width (positive role)");
  tr->add_option("--n-heads", tf.n_heads, "attention heads (positive role)");
  tr->add_option("--n-layers", tf.n_layers, "layers (positive role)");
  tr->add_option("--d-ff", tf.d_ff, "mlp width (positive role)");
  tr->add_option("--max-seq-len", tf.max_seq_len, "context window (positive role)");

  // eval-mc
  CommonEvalFlags mc_flags;
  std::string mc_norm = "mean", mc_path;
  CLI::App* emc = app.add_subcommand("eval-mc", "multiple-choice metrics");
  emc->add_option("--config", config_placeholder, "JSON config file");
  add_eval_flags(emc, mc_flags);
  emc->add_option("--norm", mc_norm, "mean|sum");
  emc->add_option("--mc", mc_path, "mc.jsonl path")->required();

  // eval-facts
  CommonEvalFlags fact_flags;
  std::string probes_path, world_path;
  int fact_max_new = 24;
  bool fact_trace = false;
  CLI::App* efa = app.add_subcommand("eval-facts", "fact precision report");
  efa->add_option("--config", config_placeholder, "JSON config file");
  add_eval_flags(efa, fact_flags);
  efa->add_option("--probes", probes_path, "probes.jsonl path")->required();
  efa->add_option("--world", world_path, "world.json path")->required();
  efa->add_option("--max-new-tokens", fact_max_new, "generation budget");
  efa->add_flag("--trace", fact_trace, "write decode_trace.jsonl");

  // ablate
  AblateFlags af;
  CLI::App* ab = app.add_subcommand("ablate", "run an ablation protocol");
  ab->add_option("--config", config_placeholder, "JSON config file");
  ab->add_option("--mode", af.mode, "components|alpha")->required();
  ab->add_option("--readings", af.readings, "downweight,reverse");
  ab->add_option("--seeds", af.seeds, "comma-separated seeds");
  ab->add_option("--alphas", af.alphas, "comma-separated alpha grid");
  ab->add_option("--out", af.out, "output directory")->required();
  ab->add_option("--entities", af.options.n_entities, "world entities");
  ab->add_option("--attributes", af.options.n_attributes, "world attributes");
  ab->add_option("--values", af.options.values_per_attribute,
                 "values per attribute");
  ab->add_option("--alpha", af.options.alpha, "induction strength");
  ab->add_option("--alpha-prime", af.options.alpha_prime,
                 "plausibility strictness when selective is on");
  ab->add_option("--beta", af.options.beta, "contrast weight");
  ab->add_option("--pos-epochs", af.options.pos_epochs, "positive epochs");
  ab->add_option("--evil-epochs", af.options.evil_epochs, "evil epochs");
  ab->add_option("--pos-lr", af.options.pos_lr, "positive learning rate");
  ab->add_option("--evil-lr", af.options.evil_lr, "evil learning rate");

  // resolve the config file (if any) before parsing
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (!args.empty()) {
      std::vector<std::string> merged = inject_config(args);
      // CLI11 wants reversed argument order
      std::vector<std::string> reversed(merged.rbegin(), merged.rend());
      app.parse(reversed);
    } else {
      app.parse(args);
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  try {
    if (gen->parsed()) {
      return run_gen_world(gw_seed, gw_entities, gw_attributes, gw_values,
                           gw_n_true, gw_n_false, gw_out);
    }
    if (tr->parsed()) return run_train(tf);
    if (emc->parsed()) return run_eval_mc(mc_flags, mc_norm, mc_path);
    if (efa->parsed()) {
      return run_eval_facts(fact_flags, probes_path, world_path, fact_max_new,
                            fact_trace);
    }
    if (ab->parsed()) return run_ablate(af);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
