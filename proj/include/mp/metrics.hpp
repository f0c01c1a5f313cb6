#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mp/common.hpp"

namespace mp {

/// Counts with the disorder class (label 1) as positive.
struct ConfusionMatrix {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }

  void add(int label, int predicted) {
    if (label == 1) {
      predicted == 1 ? ++tp : ++fn;
    } else {
      predicted == 1 ? ++fp : ++tn;
    }
  }
};

struct ClassReport {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct MetricReport {
  ConfusionMatrix cm;
  double accuracy = 0;
  double sensitivity = 0;  // recall of the disorder class
  double specificity = 0;  // recall of the normal class
  double uar = 0;          // (sensitivity + specificity) / 2
  std::array<ClassReport, 2> per_class{};  // indexed by class label
  std::vector<std::string> warnings;       // 0/0 rates reported as 0 with a warning
};

/// Exact ratios of integer counts; each metric is a single division so an
/// independent recomputation from the same counts is bitwise identical.
/// Undefined (0/0) rates are reported as 0 with a warning instead of NaN.
MetricReport compute_metrics(const ConfusionMatrix& cm);

/// 4-decimal rounding, applied only when serializing reports.
std::string format_metric(double v);

std::string metrics_to_jsonl_line(const MetricReport& report, const std::string& level);
std::string metrics_to_table(const MetricReport& report, const std::string& title);

}  // namespace mp
