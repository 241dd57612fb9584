#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dhi/model.hpp"

namespace dhi {

enum class Strategy { kGreedy, kCd, kDhi };
enum class ThresholdMode { kProbability, kRawLogit };
enum class Normalization { kMean, kSum };

std::string to_string(Strategy s);
std::string to_string(ThresholdMode m);
std::string to_string(Normalization n);
Strategy strategy_from_string(const std::string& s);
ThresholdMode threshold_mode_from_string(const std::string& s);
Normalization normalization_from_string(const std::string& s);

struct DecodeConfig {
  Strategy strategy = Strategy::kGreedy;
  double alpha_prime = 0.0;  // plausibility strictness, [0, 1]
  double beta = 1.0;         // contrast weight, >= 0
  ThresholdMode threshold_mode = ThresholdMode::kProbability;
  int max_new_tokens = 24;

  void validate() const;
};

// Plausible-token set from the positive logits. Probability mode (default)
// keeps x with p(x) >= alpha' * max(p) and always contains every argmax
// token. Raw-logit mode keeps x with logit(x) >= alpha' * max(logit); with
// negative logits that threshold flips direction and the set can come up
// empty, so it is kept only as the literal form.
std::vector<int> valid_set(const std::vector<double>& logits_pos,
                           double alpha_prime, ThresholdMode mode);

// Probabilities sum to 1 within 1e-12 and are exactly zero outside valid.
struct StepDistribution {
  std::vector<double> probs;
  std::vector<int> valid;
};

// softmax over score(x) = logits_pos(x) - beta * logits_evil(x) for x in
// valid, -inf elsewhere.
StepDistribution contrast_step(const std::vector<double>& logits_pos,
                               const std::vector<double>& logits_evil,
                               double beta, const std::vector<int>& valid);

struct DecodeStep {
  int step = 0;
  int valid_size = 0;
  int pos_argmax = 0;
  int chosen = 0;
  bool flipped = false;
};

// Greedy argmax decoding under the configured strategy; ties break toward the
// lowest token id. Stops at EOS, max_new_tokens, or a full context window.
std::vector<int> decode(const ModelParams& pos_model,
                        const ModelParams* evil_model,
                        const std::vector<int>& prompt,
                        const DecodeConfig& config, int eos_id,
                        std::vector<DecodeStep>* trace = nullptr);

std::string decode_trace_to_jsonl(const std::vector<DecodeStep>& steps);

// Teacher-forced mean (or sum) log-probability of the answer slots, EOS
// included, under the configured strategy. Tokens with probability exactly
// zero contribute the floor -1e9.
double score_option(const ModelParams& pos_model, const ModelParams* evil_model,
                    const std::vector<int>& question,
                    const std::vector<int>& answer, const DecodeConfig& config,
                    Normalization normalization);

constexpr double kScoreFloor = -1e9;

}  // namespace dhi
