#include "mp/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace mp {

namespace {

double ratio(std::int64_t num, std::int64_t den, const char* what, MetricReport& report) {
  if (den == 0) {
    report.warnings.push_back(std::string(what) + " undefined (0/0); reported as 0");
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricReport compute_metrics(const ConfusionMatrix& cm) {
  if (cm.tp < 0 || cm.fp < 0 || cm.fn < 0 || cm.tn < 0) {
    throw DataError("confusion matrix counts must be non-negative");
  }
  if (cm.total() < 1) throw DataError("confusion matrix is empty");
  MetricReport r;
  r.cm = cm;
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  r.sensitivity = ratio(cm.tp, cm.tp + cm.fn, "sensitivity", r);
  r.specificity = ratio(cm.tn, cm.tn + cm.fp, "specificity", r);
  r.uar = (r.sensitivity + r.specificity) / 2.0;
  // disorder class (1)
  r.per_class[1].precision = ratio(cm.tp, cm.tp + cm.fp, "precision(1)", r);
  r.per_class[1].recall = r.sensitivity;
  r.per_class[1].f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn, "f1(1)", r);
  // normal class (0)
  r.per_class[0].precision = ratio(cm.tn, cm.tn + cm.fn, "precision(0)", r);
  r.per_class[0].recall = r.specificity;
  r.per_class[0].f1 = ratio(2 * cm.tn, 2 * cm.tn + cm.fn + cm.fp, "f1(0)", r);
  return r;
}

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string metrics_to_jsonl_line(const MetricReport& r, const std::string& level) {
  nlohmann::json j;
  j["level"] = level;
  j["tp"] = r.cm.tp;
  j["fp"] = r.cm.fp;
  j["fn"] = r.cm.fn;
  j["tn"] = r.cm.tn;
  j["accuracy"] = format_metric(r.accuracy);
  j["uar"] = format_metric(r.uar);
  j["sensitivity"] = format_metric(r.sensitivity);
  j["specificity"] = format_metric(r.specificity);
  j["precision_normal"] = format_metric(r.per_class[0].precision);
  j["recall_normal"] = format_metric(r.per_class[0].recall);
  j["f1_normal"] = format_metric(r.per_class[0].f1);
  j["precision_disorder"] = format_metric(r.per_class[1].precision);
  j["recall_disorder"] = format_metric(r.per_class[1].recall);
  j["f1_disorder"] = format_metric(r.per_class[1].f1);
  j["warnings"] = r.warnings;
  return j.dump();
}

std::string metrics_to_table(const MetricReport& r, const std::string& title) {
  std::ostringstream out;
  out << title << "\n";
  out << "  counts: tp=" << r.cm.tp << " fp=" << r.cm.fp << " fn=" << r.cm.fn << " tn=" << r.cm.tn
      << "\n";
  out << "  accuracy=" << format_metric(r.accuracy) << " uar=" << format_metric(r.uar)
      << " sensitivity=" << format_metric(r.sensitivity)
      << " specificity=" << format_metric(r.specificity) << "\n";
  out << "  class    precision recall  f1\n";
  out << "  normal   " << format_metric(r.per_class[0].precision) << "    "
      << format_metric(r.per_class[0].recall) << "  " << format_metric(r.per_class[0].f1) << "\n";
  out << "  disorder " << format_metric(r.per_class[1].precision) << "    "
      << format_metric(r.per_class[1].recall) << "  " << format_metric(r.per_class[1].f1) << "\n";
  for (const auto& w : r.warnings) out << "  warning: " << w << "\n";
  return out.str();
}

}  // namespace mp
