#pragma once

// Independent reference implementations used only by tests. Nothing here may
// call into the code paths it is checking beyond treating them as black-box
// loss/probability functions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dhi/model.hpp"

namespace oracle {

// Plain mean NLL over all slots, Eq.-1 style, own log-softmax.
inline double mean_nll(const dhi::Tensor& logits, const std::vector<int>& targets) {
  const int64_t t = logits.shape[0], v = logits.shape[1];
  double sum = 0.0;
  for (int64_t i = 0; i < t; ++i) {
    const double* lr = logits.row(i);
    double lmax = lr[0];
    for (int64_t j = 1; j < v; ++j) lmax = std::max(lmax, lr[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < v; ++j) denom += std::exp(lr[j] - lmax);
    const double nll = std::log(denom) - (lr[targets[static_cast<size_t>(i)]] - lmax);
    sum += 1.0 * nll;
  }
  return sum * (1.0 / static_cast<double>(t));
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
};

// rel(a, f) with a floor so that near-zero entries are judged on absolute
// error (the finite-difference noise floor) instead of 0/0.
inline double rel_err(double a, double f) {
  const double denom = std::max({std::fabs(a), std::fabs(f), 1e-4});
  return std::fabs(a - f) / denom;
}

// Central finite differences over every parameter of the model against the
// analytic gradients from dhi::backward.
inline GradCheckResult grad_check(const dhi::ModelParams& params,
                                  const std::vector<int>& tokens,
                                  const dhi::AttentionMask& mask,
                                  const std::vector<int>& targets,
                                  const std::vector<double>& weights,
                                  double h = 1e-5) {
  auto [loss, grads] = dhi::backward(params, tokens, mask, targets, weights);
  (void)loss;

  GradCheckResult result;
  dhi::ModelParams probe = params;

  std::vector<dhi::Tensor*> probe_fields;
  std::vector<std::string> names;
  dhi::for_each_param(probe, [&](const std::string& n, dhi::Tensor& t) {
    probe_fields.push_back(&t);
    names.push_back(n);
  });
  std::vector<const dhi::Tensor*> grad_fields;
  dhi::for_each_param(
      static_cast<const dhi::ModelParams&>(grads),
      [&](const std::string&, const dhi::Tensor& t) { grad_fields.push_back(&t); });

  for (size_t f = 0; f < probe_fields.size(); ++f) {
    for (size_t i = 0; i < probe_fields[f]->data.size(); ++i) {
      double& x = probe_fields[f]->data[i];
      const double saved = x;
      x = saved + h;
      const double lp = dhi::weighted_nll(dhi::forward(probe, tokens, mask),
                                          targets, weights);
      x = saved - h;
      const double lm = dhi::weighted_nll(dhi::forward(probe, tokens, mask),
                                          targets, weights);
      x = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double analytic = grad_fields[f]->data[i];
      const double re = rel_err(analytic, fd);
      if (re > result.max_rel_err) {
        result.max_rel_err = re;
        result.worst_param = names[f];
      }
    }
  }
  return result;
}

}  // namespace oracle
