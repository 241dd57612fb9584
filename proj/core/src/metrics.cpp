#include "dhi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace dhi {

namespace {

using nlohmann::json;

json decode_config_to_json(const DecodeConfig& c) {
  return json{{"strategy", to_string(c.strategy)},
              {"alpha_prime", c.alpha_prime},
              {"beta", c.beta},
              {"threshold_mode", to_string(c.threshold_mode)},
              {"max_new_tokens", c.max_new_tokens}};
}

}  // namespace

void McScores::validate() const {
  if (l_false.empty()) throw std::invalid_argument("mc: l_false is empty");
  if (l_true.empty()) throw std::invalid_argument("mc: l_true is empty");
}

int mc1(const McScores& scores) {
  scores.validate();
  const double worst = *std::max_element(scores.l_false.begin(),
                                         scores.l_false.end());
  return scores.p_best > worst ? 1 : 0;
}

double mc2(const McScores& scores) {
  scores.validate();
  double m = scores.l_true[0];
  for (double x : scores.l_true) m = std::max(m, x);
  for (double y : scores.l_false) m = std::max(m, y);
  double true_mass = 0.0, false_mass = 0.0;
  for (double x : scores.l_true) true_mass += std::exp(x - m);
  for (double y : scores.l_false) false_mass += std::exp(y - m);
  return true_mass / (true_mass + false_mass);
}

double mc3(const McScores& scores) {
  scores.validate();
  const double worst = *std::max_element(scores.l_false.begin(),
                                         scores.l_false.end());
  int above = 0;
  for (double x : scores.l_true) {
    if (x > worst) ++above;
  }
  return static_cast<double>(above) / static_cast<double>(scores.l_true.size());
}

McReport evaluate_mc_with_scorer(const std::vector<McItem>& items,
                                 const OptionScorer& scorer) {
  if (items.empty()) throw std::invalid_argument("evaluate_mc: no items");
  McReport rep;
  rep.n_items = static_cast<int>(items.size());
  double s1 = 0.0, s2 = 0.0, s3 = 0.0;
  for (const McItem& item : items) {
    McScores sc;
    sc.p_best = scorer(item.question_tokens, item.best_answer);
    for (const auto& t : item.true_answers) {
      sc.l_true.push_back(scorer(item.question_tokens, t));
    }
    for (const auto& f : item.false_answers) {
      sc.l_false.push_back(scorer(item.question_tokens, f));
    }
    const double v1 = mc1(sc), v2 = mc2(sc), v3 = mc3(sc);
    rep.item_mc1.push_back(v1);
    rep.item_mc2.push_back(v2);
    rep.item_mc3.push_back(v3);
    s1 += v1;
    s2 += v2;
    s3 += v3;
  }
  const double n = static_cast<double>(rep.n_items);
  rep.mc1 = s1 / n;
  rep.mc2 = s2 / n;
  rep.mc3 = s3 / n;
  rep.avg = (rep.mc1 + rep.mc2 + rep.mc3) / 3.0;
  return rep;
}

McReport evaluate_mc(const ModelParams& pos_model,
                     const ModelParams* evil_model,
                     const std::vector<McItem>& items,
                     const DecodeConfig& config, Normalization normalization) {
  config.validate();
  if (config.strategy != Strategy::kGreedy && evil_model == nullptr) {
    throw std::invalid_argument("evaluate_mc: strategy requires an evil model");
  }
  const int64_t v = pos_model.config.vocab_size;
  if (evil_model != nullptr && evil_model->config.vocab_size != v) {
    throw std::invalid_argument("evaluate_mc: vocabulary mismatch");
  }
  for (const McItem& item : items) {
    auto check = [&](const std::vector<int>& ids) {
      for (int id : ids) {
        if (id < 0 || id >= v) {
          throw std::invalid_argument("evaluate_mc: vocabulary mismatch");
        }
      }
    };
    check(item.question_tokens);
    check(item.best_answer);
    for (const auto& t : item.true_answers) check(t);
    for (const auto& f : item.false_answers) check(f);
  }

  McReport rep = evaluate_mc_with_scorer(
      items, [&](const std::vector<int>& q, const std::vector<int>& a) {
        return score_option(pos_model, evil_model, q, a, config, normalization);
      });
  rep.decode = config;
  rep.normalization = normalization;
  return rep;
}

std::string mc_report_to_json(const McReport& report) {
  json j{{"n_items", report.n_items},
         {"mc1", report.mc1},
         {"mc2", report.mc2},
         {"mc3", report.mc3},
         {"avg", report.avg},
         {"decode", decode_config_to_json(report.decode)},
         {"normalization", to_string(report.normalization)},
         {"per_item",
          {{"mc1", report.item_mc1},
           {"mc2", report.item_mc2},
           {"mc3", report.item_mc3}}}};
  return j.dump(2) + "\n";
}

std::string format_metric(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", value * 100.0);
  return buf;
}

std::string mc_report_to_markdown(const McReport& report) {
  std::string label = to_string(report.decode.strategy);
  if (report.decode.strategy != Strategy::kGreedy) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), " (a'=%.2f, b=%.2f, %s)",
                  report.decode.alpha_prime, report.decode.beta,
                  to_string(report.decode.threshold_mode).c_str());
    label += buf;
  }
  std::string out;
  out += "| Strategy | MC1 | MC2 | MC3 | Avg |\n";
  out += "|---|---|---|---|---|\n";
  out += "| " + label + " | " + format_metric(report.mc1) + " | " +
         format_metric(report.mc2) + " | " + format_metric(report.mc3) +
         " | " + format_metric(report.avg) + " |\n";
  return out;
}

FactReport aggregate_fact_outputs(
    const std::vector<std::vector<int>>& outputs, const World& world,
    const Vocab& vocab) {
  FactReport rep;
  rep.n_probes = static_cast<int>(outputs.size());

  for (const std::vector<int>& generated : outputs) {
    const std::vector<std::string> words = vocab.decode(generated);

    // sentences end at "."; a trailing fragment is ignored; repeated triples
    // within one output count once
    std::set<std::array<std::string, 3>> triples;
    std::vector<std::string> sentence;
    for (const std::string& w : words) {
      sentence.push_back(w);
      if (w == ".") {
        if (auto t = parse_sentence(sentence, world)) triples.insert(*t);
        sentence.clear();
      }
    }

    if (!triples.empty()) {
      rep.n_responses += 1;
      for (const auto& t : triples) {
        rep.n_facts += 1;
        const auto eit =
            std::find(world.entities.begin(), world.entities.end(), t[0]);
        bool ok = false;
        if (eit != world.entities.end()) {
          const int e = static_cast<int>(eit - world.entities.begin());
          for (size_t a = 0; a < world.attributes.size(); ++a) {
            if (world.attributes[a].name == t[1] &&
                world.fact_value(e, static_cast<int>(a)) == t[2]) {
              ok = true;
            }
          }
        }
        if (ok) rep.n_facts_true += 1;
      }
    }
  }

  rep.response_ratio = rep.n_probes == 0
                           ? 0.0
                           : static_cast<double>(rep.n_responses) /
                                 static_cast<double>(rep.n_probes);
  if (rep.n_responses > 0) {
    rep.facts_per_response = static_cast<double>(rep.n_facts) /
                             static_cast<double>(rep.n_responses);
  }
  if (rep.n_facts > 0) {
    rep.precision = static_cast<double>(rep.n_facts_true) /
                    static_cast<double>(rep.n_facts);
  }
  return rep;
}

FactReport fact_precision(const ModelParams& pos_model,
                          const ModelParams* evil_model,
                          const std::vector<ProbeItem>& probes,
                          const World& world, const DecodeConfig& config) {
  const Vocab vocab = build_vocab(world);
  std::vector<std::vector<int>> outputs;
  outputs.reserve(probes.size());
  for (const ProbeItem& probe : probes) {
    std::vector<int> prompt;
    prompt.push_back(Vocab::kBos);
    prompt.insert(prompt.end(), probe.prompt_tokens.begin(),
                  probe.prompt_tokens.end());
    prompt.push_back(Vocab::kSep);
    outputs.push_back(decode(pos_model, evil_model, prompt, config, Vocab::kEos));
  }
  FactReport rep = aggregate_fact_outputs(outputs, world, vocab);
  rep.decode = config;
  return rep;
}

std::string fact_report_to_json(const FactReport& report) {
  json j{{"n_probes", report.n_probes},
         {"n_responses", report.n_responses},
         {"n_facts", report.n_facts},
         {"n_facts_true", report.n_facts_true},
         {"response_ratio", report.response_ratio},
         {"facts_per_response", report.facts_per_response.has_value()
                                    ? json(*report.facts_per_response)
                                    : json(nullptr)},
         {"precision", report.precision.has_value() ? json(*report.precision)
                                                    : json(nullptr)},
         {"decode", decode_config_to_json(report.decode)}};
  return j.dump(2) + "\n";
}

std::string fact_report_to_markdown(const FactReport& report) {
  char facts[32];
  if (report.facts_per_response.has_value()) {
    std::snprintf(facts, sizeof(facts), "%.2f", *report.facts_per_response);
  } else {
    std::snprintf(facts, sizeof(facts), "-");
  }
  std::string out;
  out += "| Strategy | % response | # facts | Score |\n";
  out += "|---|---|---|---|\n";
  out += "| " + to_string(report.decode.strategy) + " | " +
         format_metric(report.response_ratio) + " | " + facts + " | " +
         (report.precision.has_value() ? format_metric(*report.precision)
                                       : std::string("-")) +
         " |\n";
  return out;
}

}  // namespace dhi
