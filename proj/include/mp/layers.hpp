#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mp/autodiff.hpp"
#include "mp/param_store.hpp"

namespace mp {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kInitStd = 0.02;

/// Two-layer index-wise MLP: Linear -> GELU -> Linear, hidden width equal to
/// the output width. `zero_final` zeroes the second linear layer so the
/// enclosing residual block starts as the identity.
template <class S>
void mlp_init(ParamStore<S>& store, const std::string& prefix, std::int64_t in_width,
              std::int64_t out_width, bool zero_final = false) {
  store.add_trunc_normal(prefix + ".w1", in_width, out_width, kInitStd);
  store.add_zeros(prefix + ".b1", 1, out_width);
  if (zero_final) {
    store.add_zeros(prefix + ".w2", out_width, out_width);
  } else {
    store.add_trunc_normal(prefix + ".w2", out_width, out_width, kInitStd);
  }
  store.add_zeros(prefix + ".b2", 1, out_width);
}

template <class S>
ad::Var<S> mlp_forward(ad::Graph<S>& g, const std::string& prefix, const ad::Var<S>& x) {
  ad::Var<S> w1 = g.param(prefix + ".w1");
  if (x.cols() != w1.rows()) {
    throw ConfigError(prefix + ".w1: input width " + std::to_string(x.cols()) +
                      " does not match weight shape " + w1.value().shape_str());
  }
  ad::Var<S> h = ad::add_rowvec(ad::matmul(x, w1), g.param(prefix + ".b1"));
  h = ad::gelu(h);
  return ad::add_rowvec(ad::matmul(h, g.param(prefix + ".w2")), g.param(prefix + ".b2"));
}

struct AttentionConfig {
  std::int64_t query_width = 0;  // feature width of the query input
  std::int64_t kv_width = 0;     // feature width of the key/value input
  std::int64_t width = 0;        // block output width (= query width, residual)
  std::int64_t heads = 1;

  void validate(const std::string& where) const {
    if (query_width < 1 || kv_width < 1 || width < 1) {
      throw ConfigError(where + ": attention widths must be >= 1");
    }
    if (heads < 1) throw ConfigError(where + ": head count must be >= 1");
    if (width % heads != 0) {
      throw ConfigError(where + ": width " + std::to_string(width) +
                        " not divisible by head count " + std::to_string(heads));
    }
    if (width != query_width) {
      throw ConfigError(where + ": residual connection requires output width " +
                        std::to_string(width) + " == query width " + std::to_string(query_width));
    }
  }
};

/// Per-head attention weight matrices captured for inspection.
template <class S>
struct AttentionTrace {
  std::vector<Tensor<S>> head_weights;  // each N x M, rows sum to 1
};

/// QKV attention followed by an index-wise MLP, with pre-normalization and
/// residual connections around both sub-layers. Output has the query input's
/// index dimension. Output and MLP second-layer projections are zero at init,
/// making a fresh block the identity on its query input.
template <class S>
void attention_init(ParamStore<S>& store, const std::string& prefix, const AttentionConfig& cfg) {
  cfg.validate(prefix);
  store.add_ones(prefix + ".ln_q.gain", 1, cfg.query_width);
  store.add_zeros(prefix + ".ln_q.bias", 1, cfg.query_width);
  store.add_ones(prefix + ".ln_kv.gain", 1, cfg.kv_width);
  store.add_zeros(prefix + ".ln_kv.bias", 1, cfg.kv_width);
  store.add_trunc_normal(prefix + ".wq", cfg.query_width, cfg.width, kInitStd);
  store.add_zeros(prefix + ".bq", 1, cfg.width);
  // no key bias: a shared key offset shifts every score in a row equally,
  // which the row softmax cancels
  store.add_trunc_normal(prefix + ".wk", cfg.kv_width, cfg.width, kInitStd);
  store.add_trunc_normal(prefix + ".wv", cfg.kv_width, cfg.width, kInitStd);
  store.add_zeros(prefix + ".bv", 1, cfg.width);
  store.add_zeros(prefix + ".wo", cfg.width, cfg.width);
  store.add_zeros(prefix + ".bo", 1, cfg.width);
  store.add_ones(prefix + ".ln_mlp.gain", 1, cfg.width);
  store.add_zeros(prefix + ".ln_mlp.bias", 1, cfg.width);
  mlp_init(store, prefix + ".mlp", cfg.width, cfg.width, /*zero_final=*/true);
}

template <class S>
ad::Var<S> attention_forward(ad::Graph<S>& g, const std::string& prefix, const AttentionConfig& cfg,
                             const ad::Var<S>& q_input, const ad::Var<S>& kv_input,
                             AttentionTrace<S>* trace = nullptr) {
  if (q_input.rows() < 1 || kv_input.rows() < 1) {
    throw DataError(prefix + ": attention inputs must have at least one row");
  }
  if (q_input.cols() != cfg.query_width) {
    throw ConfigError(prefix + ": query input width " + std::to_string(q_input.cols()) +
                      " does not match configured " + std::to_string(cfg.query_width));
  }
  if (kv_input.cols() != cfg.kv_width) {
    throw ConfigError(prefix + ": key/value input width " + std::to_string(kv_input.cols()) +
                      " does not match configured " + std::to_string(cfg.kv_width));
  }
  const S eps = static_cast<S>(kLayerNormEps);
  ad::Var<S> qn = ad::layer_norm_rows(q_input, g.param(prefix + ".ln_q.gain"),
                                      g.param(prefix + ".ln_q.bias"), eps);
  ad::Var<S> kn = ad::layer_norm_rows(kv_input, g.param(prefix + ".ln_kv.gain"),
                                      g.param(prefix + ".ln_kv.bias"), eps);
  ad::Var<S> q = ad::add_rowvec(ad::matmul(qn, g.param(prefix + ".wq")), g.param(prefix + ".bq"));
  ad::Var<S> k = ad::matmul(kn, g.param(prefix + ".wk"));
  ad::Var<S> v = ad::add_rowvec(ad::matmul(kn, g.param(prefix + ".wv")), g.param(prefix + ".bv"));

  const std::int64_t d_k = cfg.width / cfg.heads;
  const S inv_sqrt_dk = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d_k)));

  ad::Var<S> attended;
  if (cfg.heads == 1) {
    ad::Var<S> weights = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_sqrt_dk));
    if (trace) trace->head_weights.push_back(weights.value());
    attended = ad::matmul(weights, v);
  } else {
    for (std::int64_t h = 0; h < cfg.heads; ++h) {
      ad::Var<S> qh = ad::slice_cols(q, h * d_k, d_k);
      ad::Var<S> kh = ad::slice_cols(k, h * d_k, d_k);
      ad::Var<S> vh = ad::slice_cols(v, h * d_k, d_k);
      ad::Var<S> weights = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt_dk));
      if (trace) trace->head_weights.push_back(weights.value());
      ad::Var<S> oh = ad::matmul(weights, vh);
      attended = h == 0 ? oh : ad::concat_cols(attended, oh);
    }
  }

  ad::Var<S> attn_out =
      ad::add_rowvec(ad::matmul(attended, g.param(prefix + ".wo")), g.param(prefix + ".bo"));
  ad::Var<S> x1 = ad::add(q_input, attn_out);
  ad::Var<S> mn = ad::layer_norm_rows(x1, g.param(prefix + ".ln_mlp.gain"),
                                      g.param(prefix + ".ln_mlp.bias"), eps);
  return ad::add(x1, mlp_forward(g, prefix + ".mlp", mn));
}

/// Sinusoidal position features over row indices, added into the feature
/// dimension of each modality before fusion.
template <class S>
Tensor<S> sinusoid_positions(std::int64_t rows, std::int64_t width) {
  Tensor<S> out(rows, width);
  for (std::int64_t pos = 0; pos < rows; ++pos) {
    for (std::int64_t i = 0; i * 2 < width; ++i) {
      const double omega = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * omega;
      out(pos, 2 * i) = static_cast<S>(std::sin(angle));
      if (2 * i + 1 < width) out(pos, 2 * i + 1) = static_cast<S>(std::cos(angle));
    }
  }
  return out;
}

}  // namespace mp
