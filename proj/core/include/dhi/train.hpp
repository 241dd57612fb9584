#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dhi/corpus.hpp"
#include "dhi/model.hpp"

namespace dhi {

// Full sequence [BOS, question..., SEP, answer..., EOS]. The model input is
// the sequence without its last token; target slot k predicts sequence
// position k+1. N_target holds the slots whose predicted token lies in the
// fact span; N_input holds the input positions carrying fact-span tokens, so
// p in N_input iff p-1 in N_target.
struct SequenceLayout {
  std::vector<int> sequence;
  std::vector<int> input;
  std::vector<int> targets;
  std::vector<int> question_slots;  // slots predicting question tokens + SEP
  std::vector<int> answer_slots;    // slots predicting answer tokens + EOS
  std::vector<int> n_target;
  std::vector<int> n_input;
};

SequenceLayout layout_example(const TrainingExample& example,
                              int64_t max_seq_len);

// allowed[i][j] = (j <= i) and not (j in n_input and i > j): a targeted
// position keeps its self-attention but is removed from the keys of every
// strictly later query.
AttentionMask build_adapted_mask(int64_t input_len,
                                 const std::vector<int>& n_input);

// Per-token loss weight at factual target slots. The experiment harness maps
// the induction strength alpha to this weight under two readings:
// downweight (w = alpha) and reverse (w = -alpha).
struct InductionConfig {
  double w_factual = 1.0;

  void validate() const;  // requires -1 <= w_factual <= 1
};

// Weight 0 on question slots, w_factual on factual slots, 1 on the remaining
// answer slots.
std::vector<double> induction_weights(const SequenceLayout& layout,
                                      const InductionConfig& config);

enum class MaskPolicy { kStandard, kAdapted };
enum class Role { kPositive, kEvilDhi, kEvilIcd };

std::string to_string(MaskPolicy policy);
std::string to_string(Role role);
MaskPolicy mask_policy_from_string(const std::string& s);
Role role_from_string(const std::string& s);

struct TrainConfig {
  Role role = Role::kPositive;
  int epochs = 1;
  double lr = 3e-3;
  uint64_t seed = 0;
  InductionConfig induction;
  MaskPolicy mask = MaskPolicy::kStandard;

  // positive => w_factual == 1 and standard mask; evil_icd => plain NLL on
  // corrupted data, standard mask.
  void validate() const;
};

struct TrainResult {
  ModelParams params;
  TrainConfig config;
  std::vector<double> epoch_loss;  // mean loss per epoch

  double final_loss() const {
    return epoch_loss.empty() ? 0.0 : epoch_loss.back();
  }
};

// One example per step, shuffled each epoch by the config seed. Evil roles
// fine-tune from an existing checkpoint (pass init); the positive role may
// start from init_params(model_config). Throws on divergence.
TrainResult train(const ModelConfig& model_config,
                  const std::vector<TrainingExample>& dataset,
                  const TrainConfig& config,
                  const ModelParams* init = nullptr);

// {"role", "w_factual", "mask", "seed", "final_loss", "epochs", "lr",
//  "loss_trace"} — the sidecar next to a checkpoint.
std::string sidecar_to_json(const TrainResult& result);

}  // namespace dhi
