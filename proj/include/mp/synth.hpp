#pragma once

#include "mp/corpus.hpp"

namespace mp {

/// Desk-scale synthetic corpus: rows of each modality are drawn from a
/// class-specific Gaussian with unit within-class std, class means separated
/// by `separation` along a random unit direction per modality. Splits are
/// exact 8:1:1 per class.
struct SynthSpec {
  int per_class_normal = 100;
  int per_class_disorder = 100;
  double separation = 4.0;
  std::int64_t text_width = 768;
  std::int64_t mel_bands = 80;
  double duration_min_s = 35.0;
  double duration_max_s = 75.0;
  double text_rows_per_s = 0.5;
  double mel_rows_per_s = 2.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (per_class_normal < 1 || per_class_disorder < 1) {
      throw ConfigError("synthetic corpus needs at least one participant per class");
    }
    if (separation < 0) throw ConfigError("class separation must be >= 0");
    if (text_width < 1 || mel_bands < 1) throw ConfigError("feature widths must be >= 1");
    if (duration_min_s <= 0 || duration_max_s < duration_min_s) {
      throw ConfigError("invalid duration range");
    }
    if (text_rows_per_s <= 0 || mel_rows_per_s <= 0) throw ConfigError("row rates must be > 0");
  }
};

Corpus generate_synthetic(const SynthSpec& spec);

}  // namespace mp
