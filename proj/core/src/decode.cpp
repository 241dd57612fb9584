#include "dhi/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "dhi/corpus.hpp"
#include "dhi/train.hpp"

namespace dhi {

namespace {

int argmax_lowest_id(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
  }
  return best;
}

std::vector<double> last_row(const Tensor& logits) {
  const int64_t t = logits.shape[0], v = logits.shape[1];
  const double* r = logits.row(t - 1);
  return std::vector<double>(r, r + v);
}

std::vector<int> full_vocab(int64_t v) {
  std::vector<int> ids(static_cast<size_t>(v));
  for (int64_t i = 0; i < v; ++i) ids[static_cast<size_t>(i)] = static_cast<int>(i);
  return ids;
}

// log softmax(scores)[target] restricted to valid; -inf outside is the
// caller's concern
double log_prob_over(const std::vector<double>& scores,
                     const std::vector<int>& valid, int target) {
  double smax = -std::numeric_limits<double>::infinity();
  for (int x : valid) smax = std::max(smax, scores[static_cast<size_t>(x)]);
  double denom = 0.0;
  for (int x : valid) denom += std::exp(scores[static_cast<size_t>(x)] - smax);
  return scores[static_cast<size_t>(target)] - smax - std::log(denom);
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kGreedy: return "greedy";
    case Strategy::kCd: return "cd";
    case Strategy::kDhi: return "dhi";
  }
  return "?";
}

std::string to_string(ThresholdMode m) {
  return m == ThresholdMode::kProbability ? "probability" : "raw_logit";
}

std::string to_string(Normalization n) {
  return n == Normalization::kMean ? "mean" : "sum";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "greedy") return Strategy::kGreedy;
  if (s == "cd") return Strategy::kCd;
  if (s == "dhi") return Strategy::kDhi;
  throw std::invalid_argument("unknown strategy: " + s);
}

ThresholdMode threshold_mode_from_string(const std::string& s) {
  if (s == "probability") return ThresholdMode::kProbability;
  if (s == "raw_logit") return ThresholdMode::kRawLogit;
  throw std::invalid_argument("unknown threshold mode: " + s);
}

Normalization normalization_from_string(const std::string& s) {
  if (s == "mean") return Normalization::kMean;
  if (s == "sum") return Normalization::kSum;
  throw std::invalid_argument("unknown normalization: " + s);
}

void DecodeConfig::validate() const {
  if (!(alpha_prime >= 0.0 && alpha_prime <= 1.0)) {
    throw std::invalid_argument("decode: alpha_prime must be in [0, 1]");
  }
  if (!(beta >= 0.0)) {
    throw std::invalid_argument("decode: beta must be >= 0");
  }
  if (max_new_tokens < 1) {
    throw std::invalid_argument("decode: max_new_tokens must be >= 1");
  }
}

std::vector<int> valid_set(const std::vector<double>& logits_pos,
                           double alpha_prime, ThresholdMode mode) {
  const int v = static_cast<int>(logits_pos.size());
  std::vector<int> out;
  if (mode == ThresholdMode::kProbability) {
    double lmax = logits_pos[0];
    for (double x : logits_pos) lmax = std::max(lmax, x);
    double denom = 0.0;
    std::vector<double> p(logits_pos.size());
    for (size_t i = 0; i < logits_pos.size(); ++i) {
      p[i] = std::exp(logits_pos[i] - lmax);
      denom += p[i];
    }
    double pmax = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
      p[i] /= denom;
      pmax = std::max(pmax, p[i]);
    }
    const double threshold = alpha_prime * pmax;
    for (int i = 0; i < v; ++i) {
      if (p[static_cast<size_t>(i)] >= threshold) out.push_back(i);
    }
  } else {
    double lmax = logits_pos[0];
    for (double x : logits_pos) lmax = std::max(lmax, x);
    const double threshold = alpha_prime * lmax;
    for (int i = 0; i < v; ++i) {
      if (logits_pos[static_cast<size_t>(i)] >= threshold) out.push_back(i);
    }
  }
  return out;
}

StepDistribution contrast_step(const std::vector<double>& logits_pos,
                               const std::vector<double>& logits_evil,
                               double beta, const std::vector<int>& valid) {
  if (logits_pos.size() != logits_evil.size()) {
    throw std::invalid_argument("contrast_step: logit length mismatch");
  }
  if (valid.empty()) {
    throw std::invalid_argument("contrast_step: empty valid set");
  }
  StepDistribution dist;
  dist.valid = valid;
  dist.probs.assign(logits_pos.size(), 0.0);

  double smax = -std::numeric_limits<double>::infinity();
  std::vector<double> scores(valid.size());
  for (size_t i = 0; i < valid.size(); ++i) {
    const size_t x = static_cast<size_t>(valid[i]);
    scores[i] = logits_pos[x] - beta * logits_evil[x];
    smax = std::max(smax, scores[i]);
  }
  double denom = 0.0;
  for (double& s : scores) {
    s = std::exp(s - smax);
    denom += s;
  }
  for (size_t i = 0; i < valid.size(); ++i) {
    dist.probs[static_cast<size_t>(valid[i])] = scores[i] / denom;
  }
  return dist;
}

std::vector<int> decode(const ModelParams& pos_model,
                        const ModelParams* evil_model,
                        const std::vector<int>& prompt,
                        const DecodeConfig& config, int eos_id,
                        std::vector<DecodeStep>* trace) {
  config.validate();
  const bool contrastive = config.strategy != Strategy::kGreedy;
  if (contrastive && evil_model == nullptr) {
    throw std::invalid_argument("decode: strategy requires an evil model");
  }
  if (contrastive &&
      evil_model->config.vocab_size != pos_model.config.vocab_size) {
    throw std::invalid_argument("decode: vocabulary mismatch between models");
  }
  const int64_t max_len = pos_model.config.max_seq_len;
  if (static_cast<int64_t>(prompt.size()) > max_len) {
    throw std::invalid_argument("decode: context overflow");
  }

  std::vector<int> context = prompt;
  std::vector<int> generated;
  for (int step = 0; step < config.max_new_tokens; ++step) {
    if (static_cast<int64_t>(context.size()) >= max_len) break;
    const AttentionMask mask =
        AttentionMask::causal(static_cast<int64_t>(context.size()));
    const std::vector<double> pos_logits =
        last_row(forward(pos_model, context, mask));
    const int pos_argmax = argmax_lowest_id(pos_logits);

    int chosen;
    int valid_size;
    if (config.strategy == Strategy::kGreedy) {
      chosen = pos_argmax;
      valid_size = static_cast<int>(pos_logits.size());
    } else {
      const std::vector<double> evil_logits =
          last_row(forward(*evil_model, context, mask));
      const std::vector<int> valid =
          config.strategy == Strategy::kCd
              ? full_vocab(pos_model.config.vocab_size)
              : valid_set(pos_logits, config.alpha_prime, config.threshold_mode);
      const StepDistribution dist =
          contrast_step(pos_logits, evil_logits, config.beta, valid);
      chosen = argmax_lowest_id(dist.probs);
      valid_size = static_cast<int>(valid.size());
    }

    if (trace != nullptr) {
      trace->push_back(DecodeStep{step, valid_size, pos_argmax, chosen,
                                  chosen != pos_argmax});
    }
    if (chosen == eos_id) break;
    generated.push_back(chosen);
    context.push_back(chosen);
  }
  return generated;
}

std::string decode_trace_to_jsonl(const std::vector<DecodeStep>& steps) {
  std::string out;
  for (const DecodeStep& s : steps) {
    nlohmann::json j{{"step", s.step},
                     {"valid_size", s.valid_size},
                     {"pos_argmax", s.pos_argmax},
                     {"chosen", s.chosen},
                     {"flipped", s.flipped}};
    out += j.dump() + "\n";
  }
  return out;
}

double score_option(const ModelParams& pos_model, const ModelParams* evil_model,
                    const std::vector<int>& question,
                    const std::vector<int>& answer, const DecodeConfig& config,
                    Normalization normalization) {
  config.validate();
  const bool contrastive = config.strategy != Strategy::kGreedy;
  if (contrastive && evil_model == nullptr) {
    throw std::invalid_argument("score_option: strategy requires an evil model");
  }
  if (answer.empty()) {
    throw std::invalid_argument("score_option: empty answer");
  }

  TrainingExample ex;
  ex.question_tokens = question;
  ex.answer_tokens = answer;
  ex.span_start = 0;
  ex.span_len = 1;
  const SequenceLayout lay = layout_example(ex, pos_model.config.max_seq_len);
  const AttentionMask mask =
      AttentionMask::causal(static_cast<int64_t>(lay.input.size()));

  const Tensor pos_logits = forward(pos_model, lay.input, mask);
  Tensor evil_logits;
  if (contrastive) {
    if (evil_model->config.vocab_size != pos_model.config.vocab_size) {
      throw std::invalid_argument("score_option: vocabulary mismatch");
    }
    evil_logits = forward(*evil_model, lay.input, mask);
  }

  const int64_t v = pos_model.config.vocab_size;
  double total = 0.0;
  for (int k : lay.answer_slots) {
    const int target = lay.targets[static_cast<size_t>(k)];
    const double* pr = pos_logits.row(k);
    const std::vector<double> pos_row(pr, pr + v);

    double logp;
    if (config.strategy == Strategy::kGreedy) {
      logp = log_prob_over(pos_row, full_vocab(v), target);
    } else {
      const double* er = evil_logits.row(k);
      std::vector<int> valid =
          config.strategy == Strategy::kCd
              ? full_vocab(v)
              : valid_set(pos_row, config.alpha_prime, config.threshold_mode);
      if (std::find(valid.begin(), valid.end(), target) == valid.end()) {
        logp = kScoreFloor;
      } else {
        std::vector<double> scores(static_cast<size_t>(v), 0.0);
        for (int x : valid) {
          scores[static_cast<size_t>(x)] =
              pos_row[static_cast<size_t>(x)] -
              config.beta * er[static_cast<size_t>(x)];
        }
        logp = log_prob_over(scores, valid, target);
      }
    }
    total += logp;
  }
  if (normalization == Normalization::kMean) {
    total /= static_cast<double>(lay.answer_slots.size());
  }
  return total;
}

}  // namespace dhi
