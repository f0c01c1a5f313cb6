#pragma once

#include <vector>

#include "mp/tensor.hpp"

namespace mp {

/// Mean over the index dimension (rows), the pooled text representation of
/// one participant.
template <class S>
std::vector<S> mean_pool_rows(const Tensor<S>& t) {
  if (t.rows() < 1) throw DataError("mean_pool_rows: empty feature matrix");
  std::vector<S> out(static_cast<std::size_t>(t.cols()), S(0));
  for (std::int64_t r = 0; r < t.rows(); ++r) {
    for (std::int64_t c = 0; c < t.cols(); ++c) out[static_cast<std::size_t>(c)] += t(r, c);
  }
  const S inv = S(1) / static_cast<S>(t.rows());
  for (auto& v : out) v *= inv;
  return out;
}

/// Class centroid of z-score-normalized representations: each vector is
/// normalized independently, then the set is averaged elementwise. The result
/// is invariant to positive affine transforms of any single representation.
template <class S>
Tensor<S> compute_category_prior(const std::vector<std::vector<S>>& reps) {
  if (reps.empty()) throw DataError("category has no training samples");
  const std::size_t width = reps.front().size();
  Tensor<S> out(1, static_cast<std::int64_t>(width));
  for (const auto& rep : reps) {
    if (rep.size() != width) throw DataError("compute_category_prior: inconsistent widths");
    const std::vector<S> z = zscore_normalize(rep);
    for (std::size_t c = 0; c < width; ++c) out(0, static_cast<std::int64_t>(c)) += z[c];
  }
  const S inv = S(1) / static_cast<S>(reps.size());
  for (auto& v : out.raw()) v *= inv;
  return out;
}

/// The frozen per-class centroids. The learnable projection that maps them
/// into the latent width lives in the model's parameter store.
struct PriorPair {
  Tensor<double> normal;    // class 0
  Tensor<double> disorder;  // class 1
};

}  // namespace mp
