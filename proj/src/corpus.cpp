#include "mp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mp {

std::vector<SegmentWindow> segment_windows(double duration_s, const SegmentationParams& params) {
  params.validate();
  if (duration_s <= 0) throw DataError("recording duration must be > 0");
  const double stride = params.window_s - params.overlap_s;
  std::vector<SegmentWindow> out;
  for (double start = 0; start < duration_s; start += stride) {
    const double end = std::min(start + params.window_s, duration_s);
    if (end - start >= params.min_tail_s) out.push_back({start, end});
  }
  return out;
}

std::pair<std::int64_t, std::int64_t> proportional_row_range(std::int64_t rows, double duration_s,
                                                             double start_s, double end_s) {
  if (rows < 1) throw DataError("proportional_row_range: no rows");
  if (duration_s <= 0) throw DataError("proportional_row_range: duration must be > 0");
  auto row_of = [&](double t) {
    return static_cast<std::int64_t>(std::floor(t / duration_s * static_cast<double>(rows)));
  };
  std::int64_t first = std::clamp<std::int64_t>(row_of(start_s), 0, rows - 1);
  std::int64_t last = std::clamp<std::int64_t>(row_of(end_s), first + 1, rows);
  return {first, last};
}

std::vector<RawSegment> segment_record(const ParticipantRecord& record,
                                       const SegmentationParams& params) {
  if (!record.has_text() && !record.has_mel()) {
    throw DataError("participant " + record.participant_id + " has no feature modalities");
  }
  const std::vector<SegmentWindow> windows = segment_windows(record.duration_s, params);
  std::vector<RawSegment> out;
  out.reserve(windows.size());
  for (const SegmentWindow& w : windows) {
    RawSegment seg;
    seg.participant_id = record.participant_id;
    seg.label = record.label;
    seg.start = w.start;
    seg.end = w.end;
    if (record.has_text()) {
      auto [first, last] = proportional_row_range(record.text_features.rows(), record.duration_s,
                                                  w.start, w.end);
      seg.text = slice_rows(record.text_features, first, last - first);
    }
    if (record.has_mel()) {
      auto [first, last] =
          proportional_row_range(record.audio_mel.rows(), record.duration_s, w.start, w.end);
      seg.mel = slice_rows(record.audio_mel, first, last - first);
    }
    out.push_back(std::move(seg));
  }
  return out;
}

std::pair<int, double> aggregate_participant(const std::vector<double>& segment_probs) {
  if (segment_probs.empty()) throw DataError("aggregate_participant: no segment predictions");
  double mean = 0;
  for (double p : segment_probs) mean += p;
  mean /= static_cast<double>(segment_probs.size());
  return {mean >= 0.5 ? 1 : 0, mean};
}

namespace {

using nlohmann::json;

Tensor<double> tensor_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw DataError(what + ": expected a non-empty nested array");
  const std::int64_t rows = static_cast<std::int64_t>(j.size());
  if (!j[0].is_array() || j[0].empty()) throw DataError(what + ": expected a non-empty nested array");
  const std::int64_t cols = static_cast<std::int64_t>(j[0].size());
  Tensor<double> t(rows, cols);
  for (std::int64_t r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<std::int64_t>(row.size()) != cols) {
      throw DataError(what + ": ragged rows");
    }
    for (std::int64_t c = 0; c < cols; ++c) {
      t(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return t;
}

json tensor_to_json(const Tensor<double>& t) {
  json rows = json::array();
  for (std::int64_t r = 0; r < t.rows(); ++r) {
    json row = json::array();
    for (std::int64_t c = 0; c < t.cols(); ++c) row.push_back(t(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

ParticipantRecord record_from_json(const json& j, std::size_t line_no) {
  const std::string where = "corpus line " + std::to_string(line_no);
  try {
    ParticipantRecord r;
    r.participant_id = j.at("participant_id").get<std::string>();
    r.label = j.at("label").get<int>();
    if (r.label != 0 && r.label != 1) throw DataError(where + ": label must be 0 or 1");
    r.split = j.at("split").get<std::string>();
    if (r.split != "train" && r.split != "validation" && r.split != "test") {
      throw DataError(where + ": split must be train, validation, or test");
    }
    r.duration_s = j.at("duration_s").get<double>();
    if (r.duration_s <= 0) throw DataError(where + ": duration_s must be > 0");
    if (j.contains("text_features")) r.text_features = tensor_from_json(j["text_features"], where);
    if (j.contains("audio_mel")) r.audio_mel = tensor_from_json(j["audio_mel"], where);
    if (j.contains("audio_wav_path")) {
      r.audio_wav_path = j["audio_wav_path"].get<std::string>();
      r.sample_rate = j.at("sample_rate").get<int>();
    }
    if (!r.has_text() && !r.has_mel() && !r.has_wav()) {
      throw DataError(where + ": record has no feature modalities");
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path.string());
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    corpus.records.push_back(record_from_json(j, line_no));
  }
  if (corpus.records.empty()) throw DataError("corpus file is empty: " + path.string());
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& r : corpus.records) {
    json j;
    j["participant_id"] = r.participant_id;
    j["label"] = r.label;
    j["split"] = r.split;
    j["duration_s"] = r.duration_s;
    if (r.has_text()) j["text_features"] = tensor_to_json(r.text_features);
    if (r.has_mel()) j["audio_mel"] = tensor_to_json(r.audio_mel);
    if (r.has_wav()) {
      j["audio_wav_path"] = r.audio_wav_path;
      j["sample_rate"] = r.sample_rate;
    }
    out << j.dump() << '\n';
  }
  atomic_write_file(path, out.str());
}

}  // namespace mp
