#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dhi/tensor.hpp"

namespace dhi {

struct ModelConfig {
  int64_t vocab_size = 0;
  int64_t d_model = 32;
  int64_t n_heads = 2;
  int64_t n_layers = 2;
  int64_t d_ff = 64;
  int64_t max_seq_len = 48;
  uint64_t init_seed = 0;

  int64_t head_dim() const { return d_model / n_heads; }

  // Throws std::invalid_argument on any violated bound.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, wk, wv, wo;  // each [d_model x d_model]
  Tensor ln2_gain, ln2_bias;
  Tensor w_in, b_in;    // [d_model x d_ff], [d_ff]
  Tensor w_out, b_out;  // [d_ff x d_model], [d_model]
};

// Pre-layer-norm decoder-only transformer: learned positional embeddings,
// GELU MLP, untied output head, no dropout, no biases on attention
// projections.
struct ModelParams {
  ModelConfig config;
  Tensor tok_embed;  // [V x d_model]
  Tensor pos_embed;  // [max_seq_len x d_model]
  std::vector<LayerParams> layers;
  Tensor lnf_gain, lnf_bias;
  Tensor head;  // [V x d_model]
};

// Gradients mirror the parameter layout field by field.
using Gradients = ModelParams;

// Fixed traversal order shared by the optimizer, checkpoint files and
// gradient checks.
void for_each_param(ModelParams& p,
                    const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_param(
    const ModelParams& p,
    const std::function<void(const std::string&, const Tensor&)>& fn);

// Per-example attention mask. allowed[i*size+j] = 1 means query position i
// may attend key position j. Invariants: never the future (j <= i), and the
// diagonal is always allowed so no row is empty.
struct AttentionMask {
  int64_t size = 0;
  std::vector<uint8_t> allowed;

  static AttentionMask causal(int64_t t);

  bool at(int64_t i, int64_t j) const {
    return allowed[static_cast<size_t>(i * size + j)] != 0;
  }

  // Throws std::invalid_argument if a future position is allowed or a
  // diagonal entry is not.
  void validate() const;
};

ModelParams init_params(const ModelConfig& config);
Gradients zeros_like(const ModelParams& params);

struct LayerCache {
  Tensor ln1_out;
  std::vector<double> ln1_mean, ln1_rstd;
  Tensor q, k, v;
  Tensor attn;  // [n_heads x T x T], zero at disallowed pairs
  Tensor ctx;
  Tensor x_mid;
  Tensor ln2_out;
  std::vector<double> ln2_mean, ln2_rstd;
  Tensor ff_pre, ff_act;
  Tensor x_out;
};

struct ForwardCache {
  Tensor x0;
  std::vector<LayerCache> layers;
  Tensor lnf_out;
  std::vector<double> lnf_mean, lnf_rstd;
  Tensor logits;  // [T x V]
};

// Next-token logits for every position. Row t is the distribution input for
// target slot t. Attention at disallowed pairs carries exactly zero weight.
Tensor forward(const ModelParams& params, const std::vector<int>& tokens,
               const AttentionMask& mask);
void forward_cached(const ModelParams& params, const std::vector<int>& tokens,
                    const AttentionMask& mask, ForwardCache& cache);

// (1/T) * sum_t weights[t] * (-log softmax(logits[t])[targets[t]]),
// log-softmax computed with max subtraction.
double weighted_nll(const Tensor& logits, const std::vector<int>& targets,
                    const std::vector<double>& weights);

// Loss plus d(loss)/d(logits).
std::pair<double, Tensor> weighted_nll_backward(
    const Tensor& logits, const std::vector<int>& targets,
    const std::vector<double>& weights);

// Exact reverse-mode gradient of weighted_nll(forward(...)) with respect to
// every parameter.
std::pair<double, Gradients> backward(const ModelParams& params,
                                      const std::vector<int>& tokens,
                                      const AttentionMask& mask,
                                      const std::vector<int>& targets,
                                      const std::vector<double>& weights);

struct AdamState {
  int64_t step = 0;
  Gradients m, v;

  static AdamState init(const ModelParams& params);
};

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

}  // namespace dhi
