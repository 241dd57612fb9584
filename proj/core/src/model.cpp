#include "dhi/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "dhi/rng.hpp"

namespace dhi {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  return phi + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// out = a @ b, a: [n x k], b: [k x m]
void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
  const int64_t n = a.shape[0], k = a.shape[1], m = b.shape[1];
  for (int64_t i = 0; i < n; ++i) {
    double* o = out.row(i);
    for (int64_t j = 0; j < m; ++j) o[j] = 0.0;
    const double* ar = a.row(i);
    for (int64_t p = 0; p < k; ++p) {
      const double av = ar[p];
      const double* br = b.row(p);
      for (int64_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

// grads of out = a @ b given dout; accumulates into da, db
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dout,
                     Tensor& da, Tensor& db) {
  const int64_t n = a.shape[0], k = a.shape[1], m = b.shape[1];
  for (int64_t i = 0; i < n; ++i) {
    const double* dor = dout.row(i);
    double* dar = da.row(i);
    const double* ar = a.row(i);
    for (int64_t p = 0; p < k; ++p) {
      const double* br = b.row(p);
      double acc = 0.0;
      for (int64_t j = 0; j < m; ++j) acc += dor[j] * br[j];
      dar[p] += acc;
      double* dbr = db.row(p);
      const double av = ar[p];
      for (int64_t j = 0; j < m; ++j) dbr[j] += av * dor[j];
    }
  }
}

void layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                Tensor& out, std::vector<double>& mean,
                std::vector<double>& rstd) {
  const int64_t t = x.shape[0], d = x.shape[1];
  mean.resize(static_cast<size_t>(t));
  rstd.resize(static_cast<size_t>(t));
  for (int64_t i = 0; i < t; ++i) {
    const double* xr = x.row(i);
    double mu = 0.0;
    for (int64_t c = 0; c < d; ++c) mu += xr[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t c = 0; c < d; ++c) {
      const double dv = xr[c] - mu;
      var += dv * dv;
    }
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    mean[static_cast<size_t>(i)] = mu;
    rstd[static_cast<size_t>(i)] = rs;
    double* or_ = out.row(i);
    for (int64_t c = 0; c < d; ++c) {
      or_[c] = gain(c) * (xr[c] - mu) * rs + bias(c);
    }
  }
}

// accumulates into dx, dgain, dbias
void layer_norm_backward(const Tensor& x, const Tensor& gain,
                         const std::vector<double>& mean,
                         const std::vector<double>& rstd, const Tensor& dout,
                         Tensor& dx, Tensor& dgain, Tensor& dbias) {
  const int64_t t = x.shape[0], d = x.shape[1];
  std::vector<double> dxhat(static_cast<size_t>(d));
  for (int64_t i = 0; i < t; ++i) {
    const double* xr = x.row(i);
    const double* dor = dout.row(i);
    const double mu = mean[static_cast<size_t>(i)];
    const double rs = rstd[static_cast<size_t>(i)];
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (int64_t c = 0; c < d; ++c) {
      const double xhat = (xr[c] - mu) * rs;
      dgain(c) += dor[c] * xhat;
      dbias(c) += dor[c];
      const double dh = dor[c] * gain(c);
      dxhat[static_cast<size_t>(c)] = dh;
      sum_dxhat += dh;
      sum_dxhat_xhat += dh * xhat;
    }
    const double inv_d = 1.0 / static_cast<double>(d);
    double* dxr = dx.row(i);
    for (int64_t c = 0; c < d; ++c) {
      const double xhat = (xr[c] - mu) * rs;
      dxr[c] += rs * (dxhat[static_cast<size_t>(c)] - inv_d * sum_dxhat -
                      xhat * inv_d * sum_dxhat_xhat);
    }
  }
}

void check_forward_inputs(const ModelParams& params,
                          const std::vector<int>& tokens,
                          const AttentionMask& mask) {
  const auto& cfg = params.config;
  const int64_t t = static_cast<int64_t>(tokens.size());
  if (t == 0) throw std::invalid_argument("forward: empty token sequence");
  if (t > cfg.max_seq_len) {
    throw std::invalid_argument("forward: sequence length " +
                                std::to_string(t) + " exceeds max_seq_len " +
                                std::to_string(cfg.max_seq_len));
  }
  for (int id : tokens) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw std::invalid_argument("forward: token id " + std::to_string(id) +
                                  " out of range");
    }
  }
  if (mask.size != t) {
    throw std::invalid_argument("forward: mask shape mismatch");
  }
  mask.validate();
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 5) {
    throw std::invalid_argument("config: vocab_size must be >= 5");
  }
  if (d_model <= 0 || n_heads <= 0 || n_layers < 0 || d_ff <= 0) {
    throw std::invalid_argument("config: dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("config: n_heads must divide d_model");
  }
  if (max_seq_len < 2) {
    throw std::invalid_argument("config: max_seq_len must be >= 2");
  }
}

void for_each_param(
    ModelParams& p, const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("tok_embed", p.tok_embed);
  fn("pos_embed", p.pos_embed);
  for (size_t l = 0; l < p.layers.size(); ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    LayerParams& lp = p.layers[l];
    fn(pre + "ln1_gain", lp.ln1_gain);
    fn(pre + "ln1_bias", lp.ln1_bias);
    fn(pre + "wq", lp.wq);
    fn(pre + "wk", lp.wk);
    fn(pre + "wv", lp.wv);
    fn(pre + "wo", lp.wo);
    fn(pre + "ln2_gain", lp.ln2_gain);
    fn(pre + "ln2_bias", lp.ln2_bias);
    fn(pre + "w_in", lp.w_in);
    fn(pre + "b_in", lp.b_in);
    fn(pre + "w_out", lp.w_out);
    fn(pre + "b_out", lp.b_out);
  }
  fn("lnf_gain", p.lnf_gain);
  fn("lnf_bias", p.lnf_bias);
  fn("head", p.head);
}

void for_each_param(
    const ModelParams& p,
    const std::function<void(const std::string&, const Tensor&)>& fn) {
  for_each_param(const_cast<ModelParams&>(p),
                 [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

AttentionMask AttentionMask::causal(int64_t t) {
  AttentionMask m;
  m.size = t;
  m.allowed.assign(static_cast<size_t>(t * t), 0);
  for (int64_t i = 0; i < t; ++i) {
    for (int64_t j = 0; j <= i; ++j) {
      m.allowed[static_cast<size_t>(i * t + j)] = 1;
    }
  }
  return m;
}

void AttentionMask::validate() const {
  if (static_cast<int64_t>(allowed.size()) != size * size) {
    throw std::invalid_argument("mask: storage does not match size");
  }
  for (int64_t i = 0; i < size; ++i) {
    if (!at(i, i)) {
      throw std::invalid_argument("mask: diagonal must be allowed");
    }
    for (int64_t j = i + 1; j < size; ++j) {
      if (at(i, j)) {
        throw std::invalid_argument("mask: future position allowed");
      }
    }
  }
}

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  const int64_t d = config.d_model, v = config.vocab_size, f = config.d_ff;

  p.tok_embed = Tensor::zeros({v, d});
  p.pos_embed = Tensor::zeros({config.max_seq_len, d});
  p.layers.resize(static_cast<size_t>(config.n_layers));
  for (auto& lp : p.layers) {
    lp.ln1_gain = Tensor::zeros({d});
    lp.ln1_bias = Tensor::zeros({d});
    lp.wq = Tensor::zeros({d, d});
    lp.wk = Tensor::zeros({d, d});
    lp.wv = Tensor::zeros({d, d});
    lp.wo = Tensor::zeros({d, d});
    lp.ln2_gain = Tensor::zeros({d});
    lp.ln2_bias = Tensor::zeros({d});
    lp.w_in = Tensor::zeros({d, f});
    lp.b_in = Tensor::zeros({f});
    lp.w_out = Tensor::zeros({f, d});
    lp.b_out = Tensor::zeros({d});
  }
  p.lnf_gain = Tensor::zeros({d});
  p.lnf_bias = Tensor::zeros({d});
  p.head = Tensor::zeros({v, d});

  Rng rng(config.init_seed);
  for_each_param(p, [&rng](const std::string& name, Tensor& t) {
    const bool is_gain = name.ends_with("gain");
    const bool is_bias = name.ends_with("bias") || name.ends_with("b_in") ||
                         name.ends_with("b_out");
    if (is_gain) {
      t.fill(1.0);
    } else if (is_bias) {
      t.fill(0.0);
    } else {
      for (double& x : t.data) x = rng.normal(0.0, 0.02);
    }
  });
  return p;
}

Gradients zeros_like(const ModelParams& params) {
  Gradients g = params;
  for_each_param(g, [](const std::string&, Tensor& t) { t.fill(0.0); });
  return g;
}

void forward_cached(const ModelParams& params, const std::vector<int>& tokens,
                    const AttentionMask& mask, ForwardCache& cache) {
  check_forward_inputs(params, tokens, mask);
  const auto& cfg = params.config;
  const int64_t t = static_cast<int64_t>(tokens.size());
  const int64_t d = cfg.d_model, hd = cfg.head_dim(), nh = cfg.n_heads;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

  cache.x0 = Tensor::zeros({t, d});
  for (int64_t i = 0; i < t; ++i) {
    const double* te = params.tok_embed.row(tokens[static_cast<size_t>(i)]);
    const double* pe = params.pos_embed.row(i);
    double* xr = cache.x0.row(i);
    for (int64_t c = 0; c < d; ++c) xr[c] = te[c] + pe[c];
  }

  cache.layers.assign(static_cast<size_t>(cfg.n_layers), LayerCache{});
  const Tensor* x = &cache.x0;
  for (int64_t l = 0; l < cfg.n_layers; ++l) {
    LayerCache& lc = cache.layers[static_cast<size_t>(l)];
    const LayerParams& lp = params.layers[static_cast<size_t>(l)];

    lc.ln1_out = Tensor::zeros({t, d});
    layer_norm(*x, lp.ln1_gain, lp.ln1_bias, lc.ln1_out, lc.ln1_mean,
               lc.ln1_rstd);

    lc.q = Tensor::zeros({t, d});
    lc.k = Tensor::zeros({t, d});
    lc.v = Tensor::zeros({t, d});
    matmul(lc.ln1_out, lp.wq, lc.q);
    matmul(lc.ln1_out, lp.wk, lc.k);
    matmul(lc.ln1_out, lp.wv, lc.v);

    // Disallowed pairs are never touched: their weight stays exactly zero and
    // they contribute nothing to the row max or normalizer.
    lc.attn = Tensor::zeros({nh, t, t});
    lc.ctx = Tensor::zeros({t, d});
    for (int64_t h = 0; h < nh; ++h) {
      const int64_t c0 = h * hd;
      double* attn_h = lc.attn.data.data() + h * t * t;
      for (int64_t i = 0; i < t; ++i) {
        const double* qi = lc.q.row(i) + c0;
        double* wrow = attn_h + i * t;
        double smax = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j <= i; ++j) {
          if (!mask.at(i, j)) continue;
          const double* kj = lc.k.row(j) + c0;
          double s = 0.0;
          for (int64_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
          s *= inv_sqrt_hd;
          wrow[j] = s;
          if (s > smax) smax = s;
        }
        double denom = 0.0;
        for (int64_t j = 0; j <= i; ++j) {
          if (!mask.at(i, j)) continue;
          const double e = std::exp(wrow[j] - smax);
          wrow[j] = e;
          denom += e;
        }
        double* ctx_i = lc.ctx.row(i) + c0;
        for (int64_t j = 0; j <= i; ++j) {
          if (!mask.at(i, j)) {
            wrow[j] = 0.0;
            continue;
          }
          const double w = wrow[j] / denom;
          wrow[j] = w;
          const double* vj = lc.v.row(j) + c0;
          for (int64_t c = 0; c < hd; ++c) ctx_i[c] += w * vj[c];
        }
      }
    }

    lc.x_mid = Tensor::zeros({t, d});
    matmul(lc.ctx, lp.wo, lc.x_mid);
    for (int64_t i = 0; i < t * d; ++i) lc.x_mid.data[i] += x->data[i];

    lc.ln2_out = Tensor::zeros({t, d});
    layer_norm(lc.x_mid, lp.ln2_gain, lp.ln2_bias, lc.ln2_out, lc.ln2_mean,
               lc.ln2_rstd);

    lc.ff_pre = Tensor::zeros({t, cfg.d_ff});
    matmul(lc.ln2_out, lp.w_in, lc.ff_pre);
    for (int64_t i = 0; i < t; ++i) {
      double* r = lc.ff_pre.row(i);
      for (int64_t c = 0; c < cfg.d_ff; ++c) r[c] += lp.b_in(c);
    }
    lc.ff_act = Tensor::zeros({t, cfg.d_ff});
    for (size_t i = 0; i < lc.ff_pre.data.size(); ++i) {
      lc.ff_act.data[i] = gelu(lc.ff_pre.data[i]);
    }

    lc.x_out = Tensor::zeros({t, d});
    matmul(lc.ff_act, lp.w_out, lc.x_out);
    for (int64_t i = 0; i < t; ++i) {
      double* r = lc.x_out.row(i);
      const double* mid = lc.x_mid.row(i);
      for (int64_t c = 0; c < d; ++c) r[c] += lp.b_out(c) + mid[c];
    }
    x = &lc.x_out;
  }

  cache.lnf_out = Tensor::zeros({t, d});
  layer_norm(*x, params.lnf_gain, params.lnf_bias, cache.lnf_out,
             cache.lnf_mean, cache.lnf_rstd);

  // logits = lnf_out @ head^T
  cache.logits = Tensor::zeros({t, cfg.vocab_size});
  for (int64_t i = 0; i < t; ++i) {
    const double* yr = cache.lnf_out.row(i);
    double* lr = cache.logits.row(i);
    for (int64_t v = 0; v < cfg.vocab_size; ++v) {
      const double* hr = params.head.row(v);
      double s = 0.0;
      for (int64_t c = 0; c < d; ++c) s += yr[c] * hr[c];
      lr[v] = s;
    }
  }
}

Tensor forward(const ModelParams& params, const std::vector<int>& tokens,
               const AttentionMask& mask) {
  ForwardCache cache;
  forward_cached(params, tokens, mask, cache);
  return std::move(cache.logits);
}

double weighted_nll(const Tensor& logits, const std::vector<int>& targets,
                    const std::vector<double>& weights) {
  return weighted_nll_backward(logits, targets, weights).first;
}

std::pair<double, Tensor> weighted_nll_backward(
    const Tensor& logits, const std::vector<int>& targets,
    const std::vector<double>& weights) {
  const int64_t t = logits.shape[0], v = logits.shape[1];
  if (static_cast<int64_t>(targets.size()) != t ||
      static_cast<int64_t>(weights.size()) != t) {
    throw std::invalid_argument("weighted_nll: length mismatch");
  }
  Tensor dlogits = Tensor::zeros({t, v});
  const double inv_t = 1.0 / static_cast<double>(t);
  double loss_sum = 0.0;
  std::vector<double> probs(static_cast<size_t>(v));
  for (int64_t i = 0; i < t; ++i) {
    const int target = targets[static_cast<size_t>(i)];
    if (target < 0 || target >= v) {
      throw std::invalid_argument("weighted_nll: target id out of range");
    }
    const double w = weights[static_cast<size_t>(i)];
    const double* lr = logits.row(i);
    double lmax = lr[0];
    for (int64_t j = 1; j < v; ++j) lmax = std::max(lmax, lr[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < v; ++j) {
      const double e = std::exp(lr[j] - lmax);
      probs[static_cast<size_t>(j)] = e;
      denom += e;
    }
    const double nll = std::log(denom) - (lr[target] - lmax);
    loss_sum += w * nll;
    const double scale = w * inv_t;
    double* dr = dlogits.row(i);
    for (int64_t j = 0; j < v; ++j) {
      dr[j] = scale * probs[static_cast<size_t>(j)] / denom;
    }
    dr[target] -= scale;
  }
  return {loss_sum * inv_t, std::move(dlogits)};
}

std::pair<double, Gradients> backward(const ModelParams& params,
                                      const std::vector<int>& tokens,
                                      const AttentionMask& mask,
                                      const std::vector<int>& targets,
                                      const std::vector<double>& weights) {
  ForwardCache cache;
  forward_cached(params, tokens, mask, cache);

  auto [loss, dlogits] = weighted_nll_backward(cache.logits, targets, weights);

  const auto& cfg = params.config;
  const int64_t t = static_cast<int64_t>(tokens.size());
  const int64_t d = cfg.d_model, hd = cfg.head_dim(), nh = cfg.n_heads;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
  Gradients g = zeros_like(params);

  // head and final layer norm
  Tensor dlnf_out = Tensor::zeros({t, d});
  for (int64_t i = 0; i < t; ++i) {
    const double* dr = dlogits.row(i);
    const double* yr = cache.lnf_out.row(i);
    double* dy = dlnf_out.row(i);
    for (int64_t v = 0; v < cfg.vocab_size; ++v) {
      const double dv = dr[v];
      if (dv == 0.0) continue;
      double* gh = g.head.row(v);
      const double* hr = params.head.row(v);
      for (int64_t c = 0; c < d; ++c) {
        gh[c] += dv * yr[c];
        dy[c] += dv * hr[c];
      }
    }
  }

  const Tensor& x_last =
      cfg.n_layers == 0 ? cache.x0 : cache.layers.back().x_out;
  Tensor dx = Tensor::zeros({t, d});
  layer_norm_backward(x_last, params.lnf_gain, cache.lnf_mean, cache.lnf_rstd,
                      dlnf_out, dx, g.lnf_gain, g.lnf_bias);

  for (int64_t l = cfg.n_layers - 1; l >= 0; --l) {
    LayerCache& lc = cache.layers[static_cast<size_t>(l)];
    const LayerParams& lp = params.layers[static_cast<size_t>(l)];
    LayerParams& gl = g.layers[static_cast<size_t>(l)];
    const Tensor& x_in =
        l == 0 ? cache.x0 : cache.layers[static_cast<size_t>(l - 1)].x_out;

    // dx is d(loss)/d(x_out); x_out = x_mid + ff_act @ w_out + b_out
    Tensor dff_act = Tensor::zeros({t, cfg.d_ff});
    for (int64_t i = 0; i < t; ++i) {
      const double* dr = dx.row(i);
      for (int64_t c = 0; c < d; ++c) gl.b_out(c) += dr[c];
    }
    matmul_backward(lc.ff_act, lp.w_out, dx, dff_act, gl.w_out);

    Tensor dff_pre = Tensor::zeros({t, cfg.d_ff});
    for (size_t i = 0; i < dff_pre.data.size(); ++i) {
      dff_pre.data[i] = dff_act.data[i] * gelu_grad(lc.ff_pre.data[i]);
    }

    Tensor dln2_out = Tensor::zeros({t, d});
    for (int64_t i = 0; i < t; ++i) {
      const double* dr = dff_pre.row(i);
      for (int64_t c = 0; c < cfg.d_ff; ++c) gl.b_in(c) += dr[c];
    }
    matmul_backward(lc.ln2_out, lp.w_in, dff_pre, dln2_out, gl.w_in);

    Tensor dx_mid = dx;  // residual path around the MLP
    layer_norm_backward(lc.x_mid, lp.ln2_gain, lc.ln2_mean, lc.ln2_rstd,
                        dln2_out, dx_mid, gl.ln2_gain, gl.ln2_bias);

    // x_mid = x_in + ctx @ wo
    Tensor dctx = Tensor::zeros({t, d});
    matmul_backward(lc.ctx, lp.wo, dx_mid, dctx, gl.wo);

    Tensor dq = Tensor::zeros({t, d});
    Tensor dk = Tensor::zeros({t, d});
    Tensor dv = Tensor::zeros({t, d});
    std::vector<double> dw(static_cast<size_t>(t));
    for (int64_t h = 0; h < nh; ++h) {
      const int64_t c0 = h * hd;
      const double* attn_h = lc.attn.data.data() + h * t * t;
      for (int64_t i = 0; i < t; ++i) {
        const double* wrow = attn_h + i * t;
        const double* dctx_i = dctx.row(i) + c0;
        double dot = 0.0;
        for (int64_t j = 0; j <= i; ++j) {
          if (!mask.at(i, j)) continue;
          const double* vj = lc.v.row(j) + c0;
          double acc = 0.0;
          for (int64_t c = 0; c < hd; ++c) acc += dctx_i[c] * vj[c];
          dw[static_cast<size_t>(j)] = acc;
          dot += wrow[j] * acc;
          double* dvj = dv.row(j) + c0;
          for (int64_t c = 0; c < hd; ++c) dvj[c] += wrow[j] * dctx_i[c];
        }
        const double* qi = lc.q.row(i) + c0;
        double* dqi = dq.row(i) + c0;
        for (int64_t j = 0; j <= i; ++j) {
          if (!mask.at(i, j)) continue;
          const double ds =
              wrow[j] * (dw[static_cast<size_t>(j)] - dot) * inv_sqrt_hd;
          if (ds == 0.0) continue;
          const double* kj = lc.k.row(j) + c0;
          double* dkj = dk.row(j) + c0;
          for (int64_t c = 0; c < hd; ++c) {
            dqi[c] += ds * kj[c];
            dkj[c] += ds * qi[c];
          }
        }
      }
    }

    Tensor dln1_out = Tensor::zeros({t, d});
    matmul_backward(lc.ln1_out, lp.wq, dq, dln1_out, gl.wq);
    matmul_backward(lc.ln1_out, lp.wk, dk, dln1_out, gl.wk);
    matmul_backward(lc.ln1_out, lp.wv, dv, dln1_out, gl.wv);

    Tensor dx_in = dx_mid;  // residual path around attention
    layer_norm_backward(x_in, lp.ln1_gain, lc.ln1_mean, lc.ln1_rstd, dln1_out,
                        dx_in, gl.ln1_gain, gl.ln1_bias);
    dx = std::move(dx_in);
  }

  for (int64_t i = 0; i < t; ++i) {
    const double* dr = dx.row(i);
    double* gt = g.tok_embed.row(tokens[static_cast<size_t>(i)]);
    double* gp = g.pos_embed.row(i);
    for (int64_t c = 0; c < d; ++c) {
      gt[c] += dr[c];
      gp[c] += dr[c];
    }
  }

  return {loss, std::move(g)};
}

AdamState AdamState::init(const ModelParams& params) {
  AdamState s;
  s.step = 0;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  return s;
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

  std::vector<Tensor*> ps, gs, ms, vs;
  for_each_param(params, [&](const std::string&, Tensor& t) { ps.push_back(&t); });
  for_each_param(const_cast<Gradients&>(grads),
                 [&](const std::string&, Tensor& t) { gs.push_back(&t); });
  for_each_param(state.m, [&](const std::string&, Tensor& t) { ms.push_back(&t); });
  for_each_param(state.v, [&](const std::string&, Tensor& t) { vs.push_back(&t); });

  for (size_t f = 0; f < ps.size(); ++f) {
    if (!ps[f]->same_shape(*gs[f])) {
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    }
    double* p = ps[f]->data.data();
    const double* gd = gs[f]->data.data();
    double* m = ms[f]->data.data();
    double* v = vs[f]->data.data();
    const size_t n = ps[f]->data.size();
    for (size_t i = 0; i < n; ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * gd[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * gd[i] * gd[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace dhi
