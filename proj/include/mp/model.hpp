#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "mp/layers.hpp"
#include "mp/priors.hpp"

namespace mp {

struct ModelConfig {
  std::int64_t input_width = 768;   // fused feature width; also the width of text features
  std::int64_t latent_width = 512;  // latent array width
  std::int64_t query_width = 512;   // decoder query width
  std::int64_t output_width = 512;  // decoder feature width
  std::int64_t depth = 8;           // latent self-attention blocks
  std::int64_t heads = 1;
  std::int64_t mel_bands = 80;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_width < 1 || latent_width < 1 || query_width < 1 || output_width < 1) {
      throw ConfigError("model widths must be >= 1");
    }
    if (depth < 1) throw ConfigError("model depth must be >= 1");
    if (heads < 1) throw ConfigError("head count must be >= 1");
    if (latent_width % heads != 0 || output_width % heads != 0) {
      throw ConfigError("model widths must be divisible by head count");
    }
    if (output_width != query_width) {
      throw ConfigError("decoder residual requires output width == query width");
    }
    if (mel_bands < 1) throw ConfigError("mel band count must be >= 1");
  }

  AttentionConfig encoder_attention() const {
    return AttentionConfig{latent_width, input_width, latent_width, heads};
  }
  AttentionConfig latent_attention() const {
    return AttentionConfig{latent_width, latent_width, latent_width, heads};
  }
  AttentionConfig decoder_attention() const {
    return AttentionConfig{query_width, latent_width, output_width, heads};
  }
};

/// Per-prior logit pairs and their fusion. Row 0 of the decoder output feeds
/// the normal-class head, row 1 the disorder-class head.
struct ClassWiseOutput {
  std::array<double, 2> logits_c0{};
  std::array<double, 2> logits_c1{};
  std::array<double, 2> fused{};          // elementwise mean of the two logit pairs
  std::array<double, 2> probs_c0{};
  std::array<double, 2> probs_c1{};
  std::array<double, 2> probabilities{};  // softmax(fused)
};

struct Prediction {
  int predicted = 0;  // 0 normal, 1 disorder
  std::array<double, 2> probabilities{};
};

inline std::array<double, 2> softmax2(const std::array<double, 2>& logits) {
  const double mx = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - mx);
  const double e1 = std::exp(logits[1] - mx);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

/// Latent-bottleneck attention classifier: class-prior queries cross-attend
/// over the fused multimodal input, a fixed-depth self-attention stack
/// refines the 2-row latent array, and a learnable query decodes it into
/// class-wise logits.
template <class S>
class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(cfg), params_(cfg.seed) {
    cfg_.validate();
    build_params();
  }

  Model(ModelConfig cfg, ParamStore<S> params, bool priors_set)
      : cfg_(cfg), params_(std::move(params)), priors_set_(priors_set) {
    cfg_.validate();
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<S>& params() { return params_; }
  const ParamStore<S>& params() const { return params_; }

  /// Installs the frozen class centroids. Must be called before any forward
  /// pass on a freshly initialized model.
  void set_priors(const PriorPair& priors) {
    if (priors.normal.rows() != 1 || priors.normal.cols() != cfg_.input_width ||
        priors.disorder.rows() != 1 || priors.disorder.cols() != cfg_.input_width) {
      throw ConfigError("prior vectors must be 1x" + std::to_string(cfg_.input_width));
    }
    params_.set("prior.c0", priors.normal.template cast<S>());
    params_.set("prior.c1", priors.disorder.template cast<S>());
    priors_set_ = true;
  }

  bool priors_ready() const { return priors_set_; }

  /// Fuses available modalities into the model input: mel rows go through a
  /// learnable projection, both modalities get a learned modality tag and
  /// sinusoidal position features added in, text rows come first.
  ad::Var<S> fuse(ad::Graph<S>& g, const Tensor<S>* text, const Tensor<S>* mel) const {
    const bool has_text = text != nullptr && !text->empty();
    const bool has_mel = mel != nullptr && !mel->empty();
    if (!has_text && !has_mel) throw DataError("record has no feature modalities");

    ad::Var<S> text_part, mel_part;
    if (has_text) {
      if (text->cols() != cfg_.input_width) {
        throw ConfigError("text feature width " + std::to_string(text->cols()) +
                          " does not match model input width " + std::to_string(cfg_.input_width));
      }
      ad::Var<S> t = g.constant(*text);
      t = ad::add_rowvec(t, g.param("fuse.tag.text"));
      text_part = ad::add(t, g.constant(sinusoid_positions<S>(text->rows(), cfg_.input_width)));
    }
    if (has_mel) {
      if (mel->cols() != cfg_.mel_bands) {
        throw ConfigError("mel feature width " + std::to_string(mel->cols()) +
                          " does not match configured band count " + std::to_string(cfg_.mel_bands));
      }
      ad::Var<S> a = g.constant(*mel);
      a = ad::add_rowvec(ad::matmul(a, g.param("fuse.audio_proj.w")), g.param("fuse.audio_proj.b"));
      a = ad::add_rowvec(a, g.param("fuse.tag.audio"));
      mel_part = ad::add(a, g.constant(sinusoid_positions<S>(mel->rows(), cfg_.input_width)));
    }
    if (has_text && has_mel) return ad::concat_rows(text_part, mel_part);
    return has_text ? text_part : mel_part;
  }

  /// Projects the frozen centroid pair into the 2 x latent-width embedding.
  /// Gradients reach the projection only; the centroids are not trainable.
  ad::Var<S> prior_embedding(ad::Graph<S>& g) const {
    ad::Var<S> stacked = ad::concat_rows(g.param("prior.c0"), g.param("prior.c1"));
    return mlp_forward(g, "prior.proj", stacked);
  }

  /// Cross-attention with the prior embedding as query over the fused input.
  /// The result is 2 x latent-width for any input length.
  ad::Var<S> encode(ad::Graph<S>& g, const ad::Var<S>& p, const ad::Var<S>& x) const {
    if (x.rows() < 1) throw DataError("encode: input must have at least one row");
    return attention_forward(g, "enc", cfg_.encoder_attention(), p, x);
  }

  /// The latent self-attention stack; every block has its own parameters.
  ad::Var<S> process(ad::Graph<S>& g, ad::Var<S> z) const {
    for (std::int64_t i = 0; i < cfg_.depth; ++i) {
      z = attention_forward(g, "proc." + std::to_string(i), cfg_.latent_attention(), z, z);
    }
    return z;
  }

  struct Output {
    ad::Var<S> logits_c0;  // 1x2
    ad::Var<S> logits_c1;  // 1x2
    ad::Var<S> fused;      // 1x2, elementwise mean
  };

  /// Decodes the final latents with the learnable query array and maps each
  /// output row to two logits with a shared linear head.
  Output decode(ad::Graph<S>& g, const ad::Var<S>& z_final) const {
    ad::Var<S> y = attention_forward(g, "dec", cfg_.decoder_attention(), g.param("query"), z_final);
    ad::Var<S> logits = ad::add_rowvec(ad::matmul(y, g.param("head.w")), g.param("head.b"));
    Output out;
    out.logits_c0 = ad::slice_rows(logits, 0, 1);
    out.logits_c1 = ad::slice_rows(logits, 1, 1);
    out.fused = ad::scale(ad::add(out.logits_c0, out.logits_c1), static_cast<S>(0.5));
    return out;
  }

  Output forward(ad::Graph<S>& g, const Tensor<S>* text, const Tensor<S>* mel) const {
    require_priors();
    ad::Var<S> x = fuse(g, text, mel);
    ad::Var<S> z = encode(g, prior_embedding(g), x);
    return decode(g, process(g, z));
  }

  ClassWiseOutput infer(const Tensor<S>* text, const Tensor<S>* mel) const {
    ad::Graph<S> g(params_, /*enable_grad=*/false);
    Output out = forward(g, text, mel);
    ClassWiseOutput r;
    for (int i = 0; i < 2; ++i) {
      r.logits_c0[i] = static_cast<double>(out.logits_c0.value()(0, i));
      r.logits_c1[i] = static_cast<double>(out.logits_c1.value()(0, i));
      r.fused[i] = static_cast<double>(out.fused.value()(0, i));
    }
    r.probs_c0 = softmax2(r.logits_c0);
    r.probs_c1 = softmax2(r.logits_c1);
    r.probabilities = softmax2(r.fused);
    return r;
  }

  /// Class decision: argmax of the fused probabilities; an exact tie goes to
  /// the disorder class (false negatives cost more in screening).
  Prediction predict(const Tensor<S>* text, const Tensor<S>* mel) const {
    const ClassWiseOutput out = infer(text, mel);
    Prediction p;
    p.probabilities = out.probabilities;
    p.predicted = out.probabilities[1] >= out.probabilities[0] ? 1 : 0;
    return p;
  }

 private:
  void require_priors() const {
    if (!priors_set_) throw ConfigError("model priors are not initialized; run prior computation first");
  }

  void build_params() {
    params_.add_trunc_normal("fuse.audio_proj.w", cfg_.mel_bands, cfg_.input_width, kInitStd);
    params_.add_zeros("fuse.audio_proj.b", 1, cfg_.input_width);
    params_.add_trunc_normal("fuse.tag.text", 1, cfg_.input_width, kInitStd);
    params_.add_trunc_normal("fuse.tag.audio", 1, cfg_.input_width, kInitStd);
    params_.add_zeros("prior.c0", 1, cfg_.input_width, /*trainable=*/false);
    params_.add_zeros("prior.c1", 1, cfg_.input_width, /*trainable=*/false);
    mlp_init(params_, "prior.proj", cfg_.input_width, cfg_.latent_width);
    attention_init(params_, "enc", cfg_.encoder_attention());
    for (std::int64_t i = 0; i < cfg_.depth; ++i) {
      attention_init(params_, "proc." + std::to_string(i), cfg_.latent_attention());
    }
    params_.add_trunc_normal("query", 2, cfg_.query_width, kInitStd);
    attention_init(params_, "dec", cfg_.decoder_attention());
    params_.add_trunc_normal("head.w", cfg_.output_width, 2, kInitStd);
    params_.add_zeros("head.b", 1, 2);
  }

  ModelConfig cfg_;
  ParamStore<S> params_;
  bool priors_set_ = false;
};

}  // namespace mp
