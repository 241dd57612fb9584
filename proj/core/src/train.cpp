#include "dhi/train.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "dhi/rng.hpp"

namespace dhi {

SequenceLayout layout_example(const TrainingExample& example,
                              int64_t max_seq_len) {
  SequenceLayout lay;
  lay.sequence.push_back(Vocab::kBos);
  lay.sequence.insert(lay.sequence.end(), example.question_tokens.begin(),
                      example.question_tokens.end());
  lay.sequence.push_back(Vocab::kSep);
  const int answer_begin = static_cast<int>(lay.sequence.size());
  lay.sequence.insert(lay.sequence.end(), example.answer_tokens.begin(),
                      example.answer_tokens.end());
  lay.sequence.push_back(Vocab::kEos);

  const int len = static_cast<int>(lay.sequence.size());
  if (len - 1 > max_seq_len) {
    throw std::invalid_argument("layout_example: sequence exceeds max_seq_len");
  }

  lay.input.assign(lay.sequence.begin(), lay.sequence.end() - 1);
  lay.targets.assign(lay.sequence.begin() + 1, lay.sequence.end());

  // slot k predicts sequence position k+1
  for (int k = 0; k < len - 1; ++k) {
    if (k + 1 < answer_begin) {
      lay.question_slots.push_back(k);
    } else {
      lay.answer_slots.push_back(k);
    }
  }
  const int span_begin = answer_begin + example.span_start;
  for (int off = 0; off < example.span_len; ++off) {
    const int pos = span_begin + off;  // sequence position of a fact token
    lay.n_input.push_back(pos);
    lay.n_target.push_back(pos - 1);
  }
  return lay;
}

AttentionMask build_adapted_mask(int64_t input_len,
                                 const std::vector<int>& n_input) {
  for (int p : n_input) {
    if (p < 1 || p >= input_len) {
      throw std::invalid_argument("build_adapted_mask: N_input out of range");
    }
  }
  AttentionMask m = AttentionMask::causal(input_len);
  for (int p : n_input) {
    for (int64_t i = p + 1; i < input_len; ++i) {
      m.allowed[static_cast<size_t>(i * input_len + p)] = 0;
    }
  }
  return m;
}

void InductionConfig::validate() const {
  if (!(w_factual >= -1.0 && w_factual <= 1.0)) {
    throw std::invalid_argument("induction: w_factual must be in [-1, 1]");
  }
}

std::vector<double> induction_weights(const SequenceLayout& layout,
                                      const InductionConfig& config) {
  config.validate();
  std::vector<double> w(layout.targets.size(), 0.0);
  for (int k : layout.answer_slots) w[static_cast<size_t>(k)] = 1.0;
  for (int k : layout.n_target) w[static_cast<size_t>(k)] = config.w_factual;
  return w;
}

std::string to_string(MaskPolicy policy) {
  return policy == MaskPolicy::kStandard ? "standard" : "adapted";
}

std::string to_string(Role role) {
  switch (role) {
    case Role::kPositive: return "positive";
    case Role::kEvilDhi: return "evil_dhi";
    case Role::kEvilIcd: return "evil_icd";
  }
  return "?";
}

MaskPolicy mask_policy_from_string(const std::string& s) {
  if (s == "standard") return MaskPolicy::kStandard;
  if (s == "adapted") return MaskPolicy::kAdapted;
  throw std::invalid_argument("unknown mask policy: " + s);
}

Role role_from_string(const std::string& s) {
  if (s == "positive") return Role::kPositive;
  if (s == "evil_dhi" || s == "evil-dhi") return Role::kEvilDhi;
  if (s == "evil_icd" || s == "evil-icd") return Role::kEvilIcd;
  throw std::invalid_argument("unknown role: " + s);
}

void TrainConfig::validate() const {
  induction.validate();
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
  if (role == Role::kPositive) {
    if (induction.w_factual != 1.0) {
      throw std::invalid_argument("train: positive role requires w_factual = 1");
    }
    if (mask != MaskPolicy::kStandard) {
      throw std::invalid_argument("train: positive role requires standard mask");
    }
  }
  if (role == Role::kEvilIcd) {
    if (induction.w_factual != 1.0) {
      throw std::invalid_argument("train: evil_icd role requires w_factual = 1");
    }
    if (mask != MaskPolicy::kStandard) {
      throw std::invalid_argument("train: evil_icd role requires standard mask");
    }
  }
}

TrainResult train(const ModelConfig& model_config,
                  const std::vector<TrainingExample>& dataset,
                  const TrainConfig& config, const ModelParams* init) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

  TrainResult result;
  result.config = config;
  result.params = init != nullptr ? *init : init_params(model_config);
  if (init != nullptr && !(init->config == model_config)) {
    throw std::invalid_argument("train: init checkpoint config mismatch");
  }

  AdamState adam = AdamState::init(result.params);
  Rng rng(config.seed);
  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t idx : order) {
      const SequenceLayout lay =
          layout_example(dataset[idx], model_config.max_seq_len);
      const int64_t input_len = static_cast<int64_t>(lay.input.size());
      const AttentionMask mask =
          config.mask == MaskPolicy::kAdapted
              ? build_adapted_mask(input_len, lay.n_input)
              : AttentionMask::causal(input_len);
      const std::vector<double> weights =
          induction_weights(lay, config.induction);
      auto [loss, grads] =
          backward(result.params, lay.input, mask, lay.targets, weights);
      if (!std::isfinite(loss)) {
        throw std::runtime_error(
            "train: non-finite loss at epoch " + std::to_string(epoch) +
            ", example " + std::to_string(idx) + " (role " +
            to_string(config.role) + ", lr " + std::to_string(config.lr) + ")");
      }
      adam_step(result.params, grads, adam, config.lr);
      loss_sum += loss;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(dataset.size()));
  }
  return result;
}

std::string sidecar_to_json(const TrainResult& result) {
  nlohmann::json j{{"role", to_string(result.config.role)},
                   {"w_factual", result.config.induction.w_factual},
                   {"mask", to_string(result.config.mask)},
                   {"seed", result.config.seed},
                   {"final_loss", result.final_loss()},
                   {"epochs", result.config.epochs},
                   {"lr", result.config.lr},
                   {"loss_trace", result.epoch_loss}};
  return j.dump(2) + "\n";
}

}  // namespace dhi
