#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mp/tensor.hpp"

namespace mp {

struct SegmentationParams {
  double window_s = 60.0;
  double overlap_s = 10.0;
  double min_tail_s = 5.0;  // shorter final partial windows are dropped

  void validate() const {
    if (!(window_s > overlap_s) || overlap_s < 0) {
      throw ConfigError("segmentation requires window > overlap >= 0");
    }
    if (min_tail_s < 0) throw ConfigError("segmentation tail threshold must be >= 0");
  }
};

struct SegmentWindow {
  double start = 0;
  double end = 0;
  double length() const { return end - start; }
};

/// Window starts at multiples of (window - overlap); each window is clipped
/// to the recording and kept iff at least `min_tail_s` long. Consecutive kept
/// full windows overlap exactly `overlap_s` seconds.
std::vector<SegmentWindow> segment_windows(double duration_s, const SegmentationParams& params = {});

/// Row range [first, last) of a feature matrix covering [start_s, end_s),
/// slicing rows proportionally by timestamp share. Non-empty whenever
/// rows >= 1 and the window is non-degenerate.
std::pair<std::int64_t, std::int64_t> proportional_row_range(std::int64_t rows, double duration_s,
                                                             double start_s, double end_s);

struct ParticipantRecord {
  std::string participant_id;
  int label = 0;      // 0 normal, 1 disorder
  std::string split;  // train | validation | test
  double duration_s = 0;
  Tensor<double> text_features;  // T x text width, may be empty
  Tensor<double> audio_mel;      // A x mel bands, may be empty
  std::string audio_wav_path;    // alternative audio source, resolved against the corpus file
  int sample_rate = 0;

  bool has_text() const { return !text_features.empty(); }
  bool has_mel() const { return !audio_mel.empty(); }
  bool has_wav() const { return !audio_wav_path.empty(); }
};

struct Corpus {
  std::vector<ParticipantRecord> records;

  std::vector<const ParticipantRecord*> split(const std::string& name) const {
    std::vector<const ParticipantRecord*> out;
    for (const auto& r : records) {
      if (r.split == name) out.push_back(&r);
    }
    return out;
  }
};

/// One windowed training sample; features are the participant's rows sliced
/// proportionally to the window, the label is inherited.
struct RawSegment {
  std::string participant_id;
  int label = 0;
  double start = 0;
  double end = 0;
  Tensor<double> text;  // may be empty
  Tensor<double> mel;   // may be empty
};

std::vector<RawSegment> segment_record(const ParticipantRecord& record,
                                       const SegmentationParams& params = {});

/// Participant decision from its segment disorder-probabilities: mean
/// probability, class 1 iff mean >= 0.5.
std::pair<int, double> aggregate_participant(const std::vector<double>& segment_probs);

/// Line-delimited JSON corpus I/O. One self-describing object per line with
/// keys participant_id, label, split, duration_s and per-modality features
/// (text_features, audio_mel, or audio_wav_path + sample_rate).
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

}  // namespace mp
