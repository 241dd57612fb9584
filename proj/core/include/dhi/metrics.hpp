#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dhi/corpus.hpp"
#include "dhi/decode.hpp"
#include "dhi/model.hpp"

namespace dhi {

// Option scores for one item: the best answer, the true paraphrases
// (best excluded), and the false answers.
struct McScores {
  double p_best = 0.0;
  std::vector<double> l_true;
  std::vector<double> l_false;

  void validate() const;  // l_false non-empty, l_true non-empty
};

// 1 iff p_best is strictly greater than every false score.
int mc1(const McScores& scores);

// Mass of the true scores against true plus false, exp-ed with max
// subtraction.
double mc2(const McScores& scores);

// Fraction of true scores strictly above the false maximum.
double mc3(const McScores& scores);

struct McReport {
  int n_items = 0;
  double mc1 = 0.0, mc2 = 0.0, mc3 = 0.0, avg = 0.0;
  std::vector<double> item_mc1, item_mc2, item_mc3;
  DecodeConfig decode;
  Normalization normalization = Normalization::kMean;
};

using OptionScorer = std::function<double(const std::vector<int>& question,
                                          const std::vector<int>& answer)>;

// Metric aggregation over items with any scorer (tests inject stubs here).
McReport evaluate_mc_with_scorer(const std::vector<McItem>& items,
                                 const OptionScorer& scorer);

// Production path: scores every option with decode::score_option.
McReport evaluate_mc(const ModelParams& pos_model,
                     const ModelParams* evil_model,
                     const std::vector<McItem>& items,
                     const DecodeConfig& config, Normalization normalization);

std::string mc_report_to_json(const McReport& report);
std::string mc_report_to_markdown(const McReport& report);

struct FactReport {
  int n_probes = 0;
  int n_responses = 0;
  int n_facts = 0;
  int n_facts_true = 0;
  double response_ratio = 0.0;
  std::optional<double> facts_per_response;  // null when no responses
  std::optional<double> precision;           // null when no facts extracted
  DecodeConfig decode;
};

// Generates from every probe prompt, parses the output back into triples by
// the template grammar and verifies them against the world. Unparseable
// output is a non-response, not an error.
FactReport fact_precision(const ModelParams& pos_model,
                          const ModelParams* evil_model,
                          const std::vector<ProbeItem>& probes,
                          const World& world, const DecodeConfig& config);

// Parsing and aggregation half of fact_precision, one generated token
// sequence per probe.
FactReport aggregate_fact_outputs(
    const std::vector<std::vector<int>>& outputs, const World& world,
    const Vocab& vocab);

std::string fact_report_to_json(const FactReport& report);
std::string fact_report_to_markdown(const FactReport& report);

// value * 100 with one decimal, e.g. 0.532 -> "53.2"
std::string format_metric(double value);

}  // namespace dhi
