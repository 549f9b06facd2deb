#pragma once

#include <array>
#include <vector>

#include "tfnk/arch.hpp"
#include "tfnk/data.hpp"

namespace tfnk {

// Corner-form box in pixels with a fused confidence score.
struct Detection {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double confidence = 0;
  int class_id = 0;
};

struct DecodeConfig {
  double conf_threshold = 0.25;
  double nms_iou = 0.45;
  int max_detections = 300;
};

// One image's raw head map, CHW.
struct HeadArray {
  std::vector<float> data;
  int c = 0, h = 0, w = 0;
};

// Intersection-over-union of corner boxes; throws on boxes without positive
// extent.
double iou_xyxy(double ax1, double ay1, double ax2, double ay2, double bx1, double by1, double bx2,
                double by2);
inline double iou(const Detection& a, const Detection& b) {
  return iou_xyxy(a.x1, a.y1, a.x2, a.y2, b.x1, b.y1, b.x2, b.y2);
}

// Total order over detections: confidence desc, class asc, area desc, then
// corner coordinates. Shared by suppression and evaluation so both are
// insensitive to the order boxes were produced in.
bool detection_order(const Detection& a, const Detection& b);

// Raw maps to thresholded boxes in input-pixel space:
//   bx = (2*sigmoid(tx) - 0.5 + cell_x) * stride
//   bw = (2*sigmoid(tw))^2 * anchor_w
//   confidence = sigmoid(t_obj) * max_c sigmoid(t_cls,c)
// Boxes are clipped to the input square; degenerate boxes are dropped.
std::vector<Detection> decode(const std::array<HeadArray, 3>& heads, const ArchConfig& cfg,
                              const DecodeConfig& dc);

// Inverse of the box transform for one anchor slot; used by tests.
std::array<double, 4> encode_box(double bx, double by, double bw, double bh, int cell_x,
                                 int cell_y, double stride, double anchor_w, double anchor_h);

// Greedy class-aware suppression. Candidates are ordered by (confidence
// desc, class asc, area desc, x1, y1, x2, y2 asc); a candidate is dropped
// when a kept box of the same class overlaps it above the threshold. The
// result is truncated to max_detections. The coordinate keys make the kept
// set independent of input order.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold, int max_detections);

// Undo a letterbox: shift by the padding, divide by the scale, clip to the
// original bounds.
std::vector<Detection> map_to_original(const std::vector<Detection>& dets,
                                       const TransformRecord& rec);

}  // namespace tfnk
