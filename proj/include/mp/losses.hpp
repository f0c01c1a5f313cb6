#pragma once

#include <array>
#include <cmath>
#include <string>

#include "mp/model.hpp"

namespace mp {

/// The printed objective rewards the normal-class probability for disorder
/// samples, contradicting the accompanying head-index definition; the
/// standard cross-entropy reading is the default and the printed form stays
/// available for exact-replica runs.
enum class LossConvention { prose_consistent, literal_paper };

inline LossConvention parse_loss_convention(const std::string& s) {
  if (s == "prose_consistent") return LossConvention::prose_consistent;
  if (s == "literal_paper") return LossConvention::literal_paper;
  throw ConfigError("unknown loss convention: " + s +
                    " (expected prose_consistent or literal_paper)");
}

inline std::string to_string(LossConvention c) {
  return c == LossConvention::prose_consistent ? "prose_consistent" : "literal_paper";
}

inline constexpr double kProbFloor = 1e-7;

struct LossBreakdown {
  double match_loss = 0;
  double cls_loss = 0;
  double total = 0;
  LossConvention convention = LossConvention::prose_consistent;
};

namespace detail {
inline double clamped_log(double p) {
  return std::log(std::min(1.0 - kProbFloor, std::max(kProbFloor, p)));
}
inline void require_label(int label) {
  if (label != 0 && label != 1) throw DataError("label must be 0 or 1, got " + std::to_string(label));
}
}  // namespace detail

/// Matching loss over the two class heads. Head index 1 means "the input
/// matches this head's prior": for a sample of class c, head c targets index
/// 1 and head 1-c targets index 0.
inline double matching_loss(const ClassWiseOutput& out, int label) {
  detail::require_label(label);
  if (label == 1) {
    return -(detail::clamped_log(out.probs_c0[0]) + detail::clamped_log(out.probs_c1[1]));
  }
  return -(detail::clamped_log(out.probs_c0[1]) + detail::clamped_log(out.probs_c1[0]));
}

/// Fused-head loss. prose_consistent: -log p(own class). literal_paper: the
/// objective exactly as printed, -C_x log y'_0 - (1-C_x) log y'_1.
inline double classification_loss(const ClassWiseOutput& out, int label, LossConvention conv) {
  detail::require_label(label);
  const int idx = conv == LossConvention::prose_consistent ? label : 1 - label;
  return -detail::clamped_log(out.probabilities[static_cast<std::size_t>(idx)]);
}

inline LossBreakdown total_loss(const ClassWiseOutput& out, int label, LossConvention conv) {
  LossBreakdown b;
  b.convention = conv;
  b.match_loss = matching_loss(out, label);
  b.cls_loss = classification_loss(out, label, conv);
  b.total = b.match_loss + b.cls_loss;
  return b;
}

/// Differentiable loss terms built on the model output graph.
template <class S>
struct LossVars {
  ad::Var<S> match;
  ad::Var<S> cls;
  ad::Var<S> total;

  LossBreakdown breakdown(LossConvention conv) const {
    LossBreakdown b;
    b.convention = conv;
    b.match_loss = static_cast<double>(match.value()(0, 0));
    b.cls_loss = static_cast<double>(cls.value()(0, 0));
    b.total = static_cast<double>(total.value()(0, 0));
    return b;
  }
};

namespace detail {
/// -log of one clamped softmax probability, selected with a one-hot mask.
template <class S>
ad::Var<S> neg_log_prob(ad::Graph<S>& g, const ad::Var<S>& logits_1x2, int index) {
  ad::Var<S> probs = ad::clamp(ad::softmax_rows(logits_1x2), static_cast<S>(kProbFloor),
                               static_cast<S>(1.0 - kProbFloor));
  Tensor<S> mask(1, 2);
  mask(0, index) = S(1);
  ad::Var<S> picked = ad::sum_all(ad::hadamard(ad::log(probs), g.constant(std::move(mask))));
  return ad::scale(picked, S(-1));
}
}  // namespace detail

template <class S>
LossVars<S> total_loss_graph(ad::Graph<S>& g, const typename Model<S>::Output& out, int label,
                             LossConvention conv) {
  detail::require_label(label);
  const int head0_target = label == 1 ? 0 : 1;
  const int head1_target = label == 1 ? 1 : 0;
  LossVars<S> l;
  l.match = ad::add(detail::neg_log_prob(g, out.logits_c0, head0_target),
                    detail::neg_log_prob(g, out.logits_c1, head1_target));
  const int cls_index = conv == LossConvention::prose_consistent ? label : 1 - label;
  l.cls = detail::neg_log_prob(g, out.fused, cls_index);
  l.total = ad::add(l.match, l.cls);
  return l;
}

}  // namespace mp
