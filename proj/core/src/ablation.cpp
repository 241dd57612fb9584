#include "dhi/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace dhi {

namespace {

using nlohmann::json;

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  if (n == 0) return 0.0;
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string toggle(int v) {
  if (v < 0) return "-";
  return v ? "on" : "off";
}

}  // namespace

const std::vector<double> kDefaultAlphaGrid{0.0, 0.01, 0.05, 0.2};

SeedContext prepare_seed(const ExperimentOptions& options, uint64_t seed) {
  SeedContext ctx;
  ctx.seed = seed;
  ctx.world = generate_world(seed, options.n_entities, options.n_attributes,
                             options.values_per_attribute);
  ctx.vocab = build_vocab(ctx.world);

  ctx.model_config.vocab_size = ctx.vocab.size();
  ctx.model_config.d_model = options.d_model;
  ctx.model_config.n_heads = options.n_heads;
  ctx.model_config.n_layers = options.n_layers;
  ctx.model_config.d_ff = options.d_ff;
  ctx.model_config.max_seq_len = options.max_seq_len;
  ctx.model_config.init_seed = seed;

  const auto templates = default_training_templates(ctx.world, options.n_true);
  ctx.train_set = render_training_set(ctx.world, ctx.vocab, templates);
  ctx.icd_set = corrupt_for_icd(ctx.world, ctx.vocab, ctx.train_set, seed + 1);
  ctx.mc_items = render_mc_set(ctx.world, ctx.vocab, seed + 2, options.n_true,
                               options.n_false);
  ctx.probes = render_probes(ctx.world, ctx.vocab);

  TrainConfig tc;
  tc.role = Role::kPositive;
  tc.epochs = options.pos_epochs;
  tc.lr = options.pos_lr;
  tc.seed = seed + 3;
  ctx.positive = train(ctx.model_config, ctx.train_set, tc);
  return ctx;
}

TrainResult train_evil(const SeedContext& ctx, const ExperimentOptions& options,
                       double w_factual, MaskPolicy mask) {
  TrainConfig tc;
  tc.role = Role::kEvilDhi;
  tc.epochs = options.evil_epochs;
  tc.lr = options.evil_lr;
  tc.seed = ctx.seed + 4;
  tc.induction.w_factual = w_factual;
  tc.mask = mask;
  return train(ctx.model_config, ctx.train_set, tc, &ctx.positive.params);
}

TrainResult train_evil_icd(const SeedContext& ctx,
                           const ExperimentOptions& options) {
  TrainConfig tc;
  tc.role = Role::kEvilIcd;
  tc.epochs = options.evil_epochs;
  tc.lr = options.evil_lr;
  tc.seed = ctx.seed + 5;
  return train(ctx.model_config, ctx.icd_set, tc, &ctx.positive.params);
}

namespace {

AblationRow row_from_report(const std::string& method, int loss, int mask,
                            int selective, const McReport& rep) {
  AblationRow row;
  row.method = method;
  row.loss_modify = loss;
  row.mask_adapt = mask;
  row.selective = selective;
  row.mc1 = rep.mc1;
  row.mc2 = rep.mc2;
  row.mc3 = rep.mc3;
  row.avg = rep.avg;
  return row;
}

DecodeConfig decode_config(const ExperimentOptions& options, Strategy strategy,
                           bool selective) {
  DecodeConfig dc;
  dc.strategy = strategy;
  dc.alpha_prime = selective ? options.alpha_prime : 0.0;
  dc.beta = options.beta;
  dc.threshold_mode = options.threshold_mode;
  return dc;
}

}  // namespace

ComponentsReport ablate_components_on(const std::vector<SeedContext>& contexts,
                                      const ExperimentOptions& options) {
  ComponentsReport rep;
  rep.options = options;
  for (const SeedContext& ctx : contexts) {
    rep.seeds.push_back(ctx.seed);

    const TrainResult evil_dhi =
        train_evil(ctx, options, -options.alpha, MaskPolicy::kAdapted);
    const TrainResult evil_noloss =
        train_evil(ctx, options, 1.0, MaskPolicy::kAdapted);
    const TrainResult evil_nomask =
        train_evil(ctx, options, -options.alpha, MaskPolicy::kStandard);
    const TrainResult evil_icd = train_evil_icd(ctx, options);

    auto eval = [&](const ModelParams* evil, Strategy strategy,
                    bool selective) {
      return evaluate_mc(ctx.positive.params, evil, ctx.mc_items,
                         decode_config(options, strategy, selective),
                         options.normalization);
    };

    std::vector<AblationRow> rows;
    rows.push_back(row_from_report(
        "greedy", -1, -1, -1, eval(nullptr, Strategy::kGreedy, false)));
    rows.push_back(row_from_report(
        "icd", -1, -1, -1, eval(&evil_icd.params, Strategy::kCd, false)));
    rows.push_back(row_from_report(
        "dhi w/o loss modify", 0, 1, 1,
        eval(&evil_noloss.params, Strategy::kDhi, true)));
    rows.push_back(row_from_report(
        "dhi w/o mask adapt", 1, 0, 1,
        eval(&evil_nomask.params, Strategy::kDhi, true)));
    rows.push_back(row_from_report(
        "dhi w/o selective", 1, 1, 0,
        eval(&evil_dhi.params, Strategy::kCd, false)));
    rows.push_back(row_from_report(
        "dhi (full)", 1, 1, 1, eval(&evil_dhi.params, Strategy::kDhi, true)));
    rep.per_seed.push_back(std::move(rows));
  }

  // per-column medians across seeds
  for (size_t r = 0; r < rep.per_seed[0].size(); ++r) {
    AblationRow m = rep.per_seed[0][r];
    std::vector<double> c1, c2, c3, ca;
    for (const auto& rows : rep.per_seed) {
      c1.push_back(rows[r].mc1);
      c2.push_back(rows[r].mc2);
      c3.push_back(rows[r].mc3);
      ca.push_back(rows[r].avg);
    }
    m.mc1 = median_of(c1);
    m.mc2 = median_of(c2);
    m.mc3 = median_of(c3);
    m.avg = median_of(ca);
    rep.median.push_back(std::move(m));
  }
  return rep;
}

ComponentsReport ablate_components(const ExperimentOptions& options,
                                   const std::vector<uint64_t>& seeds) {
  std::vector<SeedContext> contexts;
  for (uint64_t s : seeds) contexts.push_back(prepare_seed(options, s));
  return ablate_components_on(contexts, options);
}

std::string to_string(AlphaReading r) {
  return r == AlphaReading::kDownweight ? "downweight" : "reverse";
}

AlphaReading alpha_reading_from_string(const std::string& s) {
  if (s == "downweight") return AlphaReading::kDownweight;
  if (s == "reverse") return AlphaReading::kReverse;
  throw std::invalid_argument("unknown alpha reading: " + s);
}

double map_alpha(double alpha, AlphaReading reading) {
  const double w = reading == AlphaReading::kDownweight ? alpha : -alpha;
  return w == 0.0 ? 0.0 : w;  // both readings of alpha=0 share one model
}

AlphaReport ablate_alpha_on(const std::vector<SeedContext>& contexts,
                            const ExperimentOptions& options,
                            const std::vector<double>& alphas,
                            const std::vector<AlphaReading>& readings) {
  for (double a : alphas) {
    if (a < 0.0 || a > 1.0) {
      throw std::invalid_argument("ablate_alpha: alpha must be in [0, 1]");
    }
  }
  AlphaReport rep;
  rep.options = options;
  rep.alphas = alphas;
  rep.readings = readings;
  rep.reference_avg = {{0.0, 49.8}, {0.01, 52.2}, {0.05, 53.2}, {0.2, 50.4}};

  const DecodeConfig dc = decode_config(options, Strategy::kDhi, true);
  for (const SeedContext& ctx : contexts) {
    rep.seeds.push_back(ctx.seed);
    for (AlphaReading reading : readings) {
      for (double alpha : alphas) {
        AlphaCell cell;
        cell.alpha = alpha;
        cell.reading = reading;
        cell.seed = ctx.seed;
        try {
          const TrainResult evil = train_evil(
              ctx, options, map_alpha(alpha, reading), MaskPolicy::kAdapted);
          const McReport mc = evaluate_mc(ctx.positive.params, &evil.params,
                                          ctx.mc_items, dc,
                                          options.normalization);
          cell.mc1 = mc.mc1;
          cell.mc2 = mc.mc2;
          cell.mc3 = mc.mc3;
          cell.avg = mc.avg;
        } catch (const std::exception& e) {
          cell.diverged = true;
          cell.error = e.what();
        }
        rep.cells.push_back(std::move(cell));
      }
    }
  }

  for (AlphaReading reading : readings) {
    for (double alpha : alphas) {
      AlphaCell m;
      m.alpha = alpha;
      m.reading = reading;
      std::vector<double> c1, c2, c3, ca;
      for (const AlphaCell& cell : rep.cells) {
        if (cell.alpha == alpha && cell.reading == reading && !cell.diverged) {
          c1.push_back(cell.mc1);
          c2.push_back(cell.mc2);
          c3.push_back(cell.mc3);
          ca.push_back(cell.avg);
        }
      }
      if (ca.empty()) {
        m.diverged = true;
        m.error = "all seeds diverged";
      } else {
        m.mc1 = median_of(c1);
        m.mc2 = median_of(c2);
        m.mc3 = median_of(c3);
        m.avg = median_of(ca);
      }
      rep.medians.push_back(std::move(m));
    }
  }
  return rep;
}

AlphaReport ablate_alpha(const ExperimentOptions& options,
                         const std::vector<double>& alphas,
                         const std::vector<AlphaReading>& readings,
                         const std::vector<uint64_t>& seeds) {
  std::vector<SeedContext> contexts;
  for (uint64_t s : seeds) contexts.push_back(prepare_seed(options, s));
  return ablate_alpha_on(contexts, options, alphas, readings);
}

namespace {

json options_to_json(const ExperimentOptions& o) {
  return json{{"n_entities", o.n_entities},
              {"n_attributes", o.n_attributes},
              {"values_per_attribute", o.values_per_attribute},
              {"n_true", o.n_true},
              {"n_false", o.n_false},
              {"d_model", o.d_model},
              {"n_heads", o.n_heads},
              {"n_layers", o.n_layers},
              {"d_ff", o.d_ff},
              {"max_seq_len", o.max_seq_len},
              {"pos_epochs", o.pos_epochs},
              {"pos_lr", o.pos_lr},
              {"evil_epochs", o.evil_epochs},
              {"evil_lr", o.evil_lr},
              {"alpha", o.alpha},
              {"alpha_prime", o.alpha_prime},
              {"beta", o.beta},
              {"threshold_mode", to_string(o.threshold_mode)},
              {"normalization", to_string(o.normalization)}};
}

json row_to_json(const AblationRow& r) {
  return json{{"method", r.method},
              {"loss_modify", r.loss_modify},
              {"mask_adapt", r.mask_adapt},
              {"selective", r.selective},
              {"mc1", r.mc1},
              {"mc2", r.mc2},
              {"mc3", r.mc3},
              {"avg", r.avg}};
}

void append_row_md(std::string& out, const AblationRow& r) {
  out += "| " + r.method + " | " + toggle(r.loss_modify) + " | " +
         toggle(r.mask_adapt) + " | " + toggle(r.selective) + " | " +
         format_metric(r.mc1) + " | " + format_metric(r.mc2) + " | " +
         format_metric(r.mc3) + " | " + format_metric(r.avg) + " |\n";
}

}  // namespace

std::string components_report_to_json(const ComponentsReport& report) {
  json per_seed = json::array();
  for (size_t s = 0; s < report.per_seed.size(); ++s) {
    json rows = json::array();
    for (const auto& r : report.per_seed[s]) rows.push_back(row_to_json(r));
    per_seed.push_back(json{{"seed", report.seeds[s]}, {"rows", rows}});
  }
  json median = json::array();
  for (const auto& r : report.median) median.push_back(row_to_json(r));
  json j{{"options", options_to_json(report.options)},
         {"seeds", report.seeds},
         {"per_seed", per_seed},
         {"median", median}};
  return j.dump(2) + "\n";
}

std::string components_report_to_markdown(const ComponentsReport& report) {
  std::string out;
  const std::string header =
      "| Method | Loss Modify | Mask Adapt | Selective | MC1 | MC2 | MC3 | "
      "Avg |\n|---|---|---|---|---|---|---|---|\n";
  for (size_t s = 0; s < report.per_seed.size(); ++s) {
    out += "### seed " + std::to_string(report.seeds[s]) + "\n\n" + header;
    for (const auto& r : report.per_seed[s]) append_row_md(out, r);
    out += "\n";
  }
  out += "### median over seeds\n\n" + header;
  for (const auto& r : report.median) append_row_md(out, r);
  return out;
}

namespace {

json cell_to_json(const AlphaCell& c) {
  json j{{"alpha", c.alpha},
         {"reading", to_string(c.reading)},
         {"mc1", c.mc1},
         {"mc2", c.mc2},
         {"mc3", c.mc3},
         {"avg", c.avg},
         {"diverged", c.diverged}};
  if (c.diverged) j["error"] = c.error;
  return j;
}

}  // namespace

std::string alpha_report_to_json(const AlphaReport& report) {
  json cells = json::array();
  for (const AlphaCell& c : report.cells) {
    json j = cell_to_json(c);
    j["seed"] = c.seed;
    cells.push_back(std::move(j));
  }
  json medians = json::array();
  for (const AlphaCell& c : report.medians) medians.push_back(cell_to_json(c));
  json reference = json::array();
  for (const auto& [alpha, avg] : report.reference_avg) {
    reference.push_back(json{{"alpha", alpha}, {"avg", avg}});
  }
  json j{{"options", options_to_json(report.options)},
         {"alphas", report.alphas},
         {"seeds", report.seeds},
         {"cells", cells},
         {"medians", medians},
         {"reference_avg", reference}};
  return j.dump(2) + "\n";
}

std::string alpha_report_to_markdown(const AlphaReport& report) {
  auto reference_for = [&](double alpha) -> std::string {
    for (const auto& [a, avg] : report.reference_avg) {
      if (a == alpha) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%.1f", avg);
        return buf;
      }
    }
    return "-";
  };

  std::string out;
  out +=
      "| alpha | reading | seed | MC1 | MC2 | MC3 | Avg | published Avg "
      "(reference) |\n|---|---|---|---|---|---|---|---|\n";
  char abuf[16];
  for (const AlphaCell& c : report.cells) {
    std::snprintf(abuf, sizeof(abuf), "%.2f", c.alpha);
    if (c.diverged) {
      out += std::string("| ") + abuf + " | " + to_string(c.reading) + " | " +
             std::to_string(c.seed) + " | diverged | - | - | - | " +
             reference_for(c.alpha) + " |\n";
      continue;
    }
    out += std::string("| ") + abuf + " | " + to_string(c.reading) + " | " +
           std::to_string(c.seed) + " | " + format_metric(c.mc1) + " | " +
           format_metric(c.mc2) + " | " + format_metric(c.mc3) + " | " +
           format_metric(c.avg) + " | " + reference_for(c.alpha) + " |\n";
  }
  out += "\n### medians over seeds\n\n";
  out +=
      "| alpha | reading | MC1 | MC2 | MC3 | Avg | published Avg (reference) "
      "|\n|---|---|---|---|---|---|---|\n";
  for (const AlphaCell& c : report.medians) {
    std::snprintf(abuf, sizeof(abuf), "%.2f", c.alpha);
    if (c.diverged) {
      out += std::string("| ") + abuf + " | " + to_string(c.reading) +
             " | diverged | - | - | - | " + reference_for(c.alpha) + " |\n";
      continue;
    }
    out += std::string("| ") + abuf + " | " + to_string(c.reading) + " | " +
           format_metric(c.mc1) + " | " + format_metric(c.mc2) + " | " +
           format_metric(c.mc3) + " | " + format_metric(c.avg) + " | " +
           reference_for(c.alpha) + " |\n";
  }
  return out;
}

}  // namespace dhi
