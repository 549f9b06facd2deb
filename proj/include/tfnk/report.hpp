#pragma once

#include <string>
#include <vector>

#include "tfnk/metrics.hpp"

namespace tfnk {

// Row shapes mirror the three comparison tables the CLI renders: detection
// quality, computational complexity, and per-stage latency.
struct DetectionRow {
  std::string model;
  double tp = 0, fn = 0;
  double precision_pct = 0, recall_pct = 0, map50_pct = 0, iou_pct = 0;
};

struct ComplexityRow {
  std::string model;
  double epochs = 0, train_hours = 0, size_mb = 0, layers = 0, gflops = 0;
};

struct LatencyRow {
  std::string model;
  double pre_ms = 0, infer_ms = 0, nms_ms = 0, fps = 0;
};

// Numbers print with one decimal, dropping a trailing ".0" (84 -> "84",
// 95.7 -> "95.7"). Deltas compare against the first row: "95.7" plain on the
// first row, then "92.3 (<down> 3.4)" / "(same)" on later rows.
std::string format_metric(double v);
std::string format_delta(double value, double baseline);

std::string detection_table(const std::vector<DetectionRow>& rows);
std::string complexity_table(const std::vector<ComplexityRow>& rows);
std::string latency_table(const std::vector<LatencyRow>& rows);

std::string detection_table_json(const std::vector<DetectionRow>& rows);
std::string complexity_table_json(const std::vector<ComplexityRow>& rows);
std::string latency_table_json(const std::vector<LatencyRow>& rows);

// Percent-scaled row from an evaluation report.
DetectionRow detection_row_from(const std::string& model, const EvalReport& r);

// Recall stated in a row that disagrees with the recall implied by its own
// TP/FN counts by more than half a point gets flagged with a footnote.
bool recall_inconsistent(const DetectionRow& row);

}  // namespace tfnk
