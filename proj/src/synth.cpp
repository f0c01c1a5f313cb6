#include "mp/synth.hpp"

#include <cmath>

#include "mp/rng.hpp"

namespace mp {

namespace {

std::vector<double> random_unit_direction(RandomSource& rng, std::int64_t width) {
  std::vector<double> u(static_cast<std::size_t>(width));
  double norm = 0;
  for (auto& v : u) {
    v = rng.gaussian();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : u) v /= norm;
  return u;
}

Tensor<double> class_rows(RandomSource& rng, std::int64_t rows, const std::vector<double>& direction,
                          double mean_shift) {
  const std::int64_t width = static_cast<std::int64_t>(direction.size());
  Tensor<double> t(rows, width);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < width; ++c) {
      t(r, c) = mean_shift * direction[static_cast<std::size_t>(c)] + rng.gaussian();
    }
  }
  return t;
}

std::string split_for_index(int idx, int total) {
  const int n_train = static_cast<int>(std::floor(0.8 * total));
  const int n_val = static_cast<int>(std::floor(0.1 * total));
  if (idx < n_train) return "train";
  if (idx < n_train + n_val) return "validation";
  return "test";
}

}  // namespace

Corpus generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  RandomSource rng(spec.seed);
  const std::vector<double> text_dir = random_unit_direction(rng, spec.text_width);
  const std::vector<double> mel_dir = random_unit_direction(rng, spec.mel_bands);

  Corpus corpus;
  for (int label = 0; label <= 1; ++label) {
    const int count = label == 0 ? spec.per_class_normal : spec.per_class_disorder;
    const double shift = (label == 0 ? -0.5 : 0.5) * spec.separation;
    for (int i = 0; i < count; ++i) {
      ParticipantRecord r;
      char id[32];
      std::snprintf(id, sizeof(id), "synth-c%d-%04d", label, i);
      r.participant_id = id;
      r.label = label;
      r.split = split_for_index(i, count);
      r.duration_s = rng.uniform(spec.duration_min_s, spec.duration_max_s);
      const std::int64_t text_rows =
          std::max<std::int64_t>(1, std::llround(spec.text_rows_per_s * r.duration_s));
      const std::int64_t mel_rows =
          std::max<std::int64_t>(1, std::llround(spec.mel_rows_per_s * r.duration_s));
      r.text_features = class_rows(rng, text_rows, text_dir, shift);
      r.audio_mel = class_rows(rng, mel_rows, mel_dir, shift);
      corpus.records.push_back(std::move(r));
    }
  }
  return corpus;
}

}  // namespace mp
