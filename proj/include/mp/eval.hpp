#pragma once

#include <algorithm>
#include <optional>
#include <sstream>

#include "mp/corpus.hpp"
#include "mp/metrics.hpp"
#include "mp/model.hpp"

namespace mp {

enum class EvalLevel { segment, participant, both };

inline EvalLevel parse_eval_level(const std::string& s) {
  if (s == "segment") return EvalLevel::segment;
  if (s == "participant") return EvalLevel::participant;
  if (s == "both") return EvalLevel::both;
  throw ConfigError("unknown evaluation level: " + s + " (expected segment, participant, or both)");
}

struct PredictionRecord {
  std::string participant_id;
  std::string level;  // "segment" or "participant"
  double start = 0;
  double end = 0;
  double p_disorder = 0;
  int predicted = 0;
  int label = 0;
};

struct EvalResult {
  std::optional<MetricReport> segment_report;
  std::optional<MetricReport> participant_report;
  std::vector<PredictionRecord> records;
  std::vector<std::string> warnings;
};

namespace detail {

template <class S>
struct ParticipantEval {
  std::vector<PredictionRecord> segment_rows;
  std::vector<double> probs;
  int label = 0;
  std::string id;
};

}  // namespace detail

/// Runs the model over one corpus split. Participants are processed in
/// participant_id order; segment predictions may fan out across threads but
/// merge deterministically.
template <class S>
EvalResult evaluate_split(const Model<S>& model, const Corpus& corpus, const std::string& split,
                          EvalLevel level, const SegmentationParams& seg = {}) {
  std::vector<const ParticipantRecord*> records = corpus.split(split);
  if (records.empty()) throw DataError("corpus has no records in split '" + split + "'");
  std::sort(records.begin(), records.end(),
            [](const ParticipantRecord* a, const ParticipantRecord* b) {
              return a->participant_id < b->participant_id;
            });

  std::vector<detail::ParticipantEval<S>> evals(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const ParticipantRecord& rec = *records[i];
    detail::ParticipantEval<S>& ev = evals[i];
    ev.id = rec.participant_id;
    ev.label = rec.label;
    for (const RawSegment& s : segment_record(rec, seg)) {
      const Tensor<S> text = s.text.template cast<S>();
      const Tensor<S> mel = s.mel.template cast<S>();
      const Prediction pred =
          model.predict(text.empty() ? nullptr : &text, mel.empty() ? nullptr : &mel);
      ev.probs.push_back(pred.probabilities[1]);
      ev.segment_rows.push_back({rec.participant_id, "segment", s.start, s.end,
                                 pred.probabilities[1], pred.predicted, rec.label});
    }
  });

  EvalResult result;
  ConfusionMatrix seg_cm, part_cm;
  for (const auto& ev : evals) {
    if (ev.probs.empty()) {
      result.warnings.push_back("participant " + ev.id +
                                " produced no segments (recording too short); excluded");
      continue;
    }
    for (const auto& row : ev.segment_rows) {
      seg_cm.add(row.label, row.predicted);
      result.records.push_back(row);
    }
    const auto [cls, mean_prob] = aggregate_participant(ev.probs);
    part_cm.add(ev.label, cls);
    result.records.push_back({ev.id, "participant", 0, 0, mean_prob, cls, ev.label});
  }

  if (level == EvalLevel::segment || level == EvalLevel::both) {
    result.segment_report = compute_metrics(seg_cm);
  }
  if (level == EvalLevel::participant || level == EvalLevel::both) {
    result.participant_report = compute_metrics(part_cm);
  }
  return result;
}

inline std::string predictions_to_csv(const EvalResult& result) {
  std::ostringstream out;
  out << "participant_id,level,p_disorder,predicted,label\n";
  for (const auto& r : result.records) {
    out << r.participant_id << ',' << r.level << ',' << format_metric(r.p_disorder) << ','
        << r.predicted << ',' << r.label << '\n';
  }
  return out.str();
}

}  // namespace mp
