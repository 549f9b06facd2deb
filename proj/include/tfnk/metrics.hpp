#pragma once

#include <string>
#include <vector>

#include "tfnk/postprocess.hpp"

namespace tfnk {

struct GroundTruth {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  int class_id = 0;
  double norm_w = 0;  // width / image width, used for size buckets
};

// Per-detection match outcome, aligned with the total-order sorting of the
// detections (confidence desc, then the NMS tie-break keys).
struct DetMatch {
  Detection det;
  bool tp = false;
  int gt_index = -1;
  double iou = 0;
};

// Greedy matching in confidence order: each detection takes the unmatched
// same-class ground truth with the highest IoU if that IoU >= iou_min.
std::vector<DetMatch> match_detections(std::vector<Detection> dets,
                                       const std::vector<GroundTruth>& gts, double iou_min);

struct PrPoint {
  double confidence = 0, precision = 0, recall = 0;
};

struct EvalConfig {
  double conf_threshold = 0.25;  // operating point for tp/fp/fn counts
  double iou_min = 0.5;
  bool mean_iou_all = false;  // false: over TPs; true: over all detections
};

struct SizeBucketStats {
  int gt_count = 0;
  int matched = 0;
  double recall = 0;  // NaN when the bucket is empty
};

struct LatencyStats {
  double pre_ms = -1, infer_ms = -1, nms_ms = -1;  // negative = not measured
  bool measured() const { return pre_ms >= 0 && infer_ms >= 0 && nms_ms >= 0; }
  double fps() const { return 1000.0 / (pre_ms + infer_ms + nms_ms); }
};

struct EvalReport {
  int tp = 0, fp = 0, fn = 0;
  double precision = 0, recall = 0;  // NaN precision when no detections pass
  double map50 = 0;
  double mean_iou = 0;
  SizeBucketStats small, medium, large;
  std::vector<PrPoint> pr_points;
  EvalConfig cfg;
  LatencyStats latency;
};

struct EvalInput {
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
};

// Dataset-level evaluation. Throws when the ground truth is empty.
EvalReport evaluate(const std::vector<EvalInput>& images, const EvalConfig& cfg);

std::string eval_report_to_json(const EvalReport& r);
std::string pr_curve_csv(const EvalReport& r);

}  // namespace tfnk
