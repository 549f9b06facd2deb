#include "tfnk/postprocess.hpp"

#include <algorithm>
#include <cmath>

#include "tfnk/errors.hpp"

namespace tfnk {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

bool detection_order(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  const double area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
  const double area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
  if (area_a != area_b) return area_a > area_b;
  if (a.x1 != b.x1) return a.x1 < b.x1;
  if (a.y1 != b.y1) return a.y1 < b.y1;
  if (a.x2 != b.x2) return a.x2 < b.x2;
  return a.y2 < b.y2;
}

double iou_xyxy(double ax1, double ay1, double ax2, double ay2, double bx1, double by1, double bx2,
                double by2) {
  if (ax2 <= ax1 || ay2 <= ay1 || bx2 <= bx1 || by2 <= by1) {
    throw config_error("iou: box without positive extent");
  }
  const double iw = std::min(ax2, bx2) - std::max(ax1, bx1);
  const double ih = std::min(ay2, by2) - std::max(ay1, by1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
  return inter / uni;
}

std::vector<Detection> decode(const std::array<HeadArray, 3>& heads, const ArchConfig& cfg,
                              const DecodeConfig& dc) {
  if (dc.conf_threshold < 0 || dc.conf_threshold > 1 || dc.nms_iou < 0 || dc.nms_iou > 1) {
    throw config_error("decode: thresholds must be in [0, 1]");
  }
  if (dc.max_detections < 1) throw config_error("decode: max_detections must be >= 1");
  const int nc = cfg.num_classes;
  const int comp = 5 + nc;
  std::vector<Detection> out;
  for (int level = 0; level < 3; ++level) {
    const HeadArray& head = heads[static_cast<size_t>(level)];
    if (head.c != 3 * comp) {
      throw config_error("decode: head has " + std::to_string(head.c) +
                         " channels, expected " + std::to_string(3 * comp));
    }
    const double stride = cfg.strides[static_cast<size_t>(level)];
    const int gh = head.h, gw = head.w;
    auto at = [&](int c, int y, int x) {
      return static_cast<double>(head.data[(static_cast<size_t>(c) * gh + y) * gw + x]);
    };
    for (int a = 0; a < 3; ++a) {
      const auto& anc = cfg.anchors[static_cast<size_t>(level)][static_cast<size_t>(a)];
      for (int y = 0; y < gh; ++y) {
        for (int x = 0; x < gw; ++x) {
          const int cb = a * comp;
          const double obj = sigmoid(at(cb + 4, y, x));
          double best_p = -1;
          int best_c = 0;
          for (int c = 0; c < nc; ++c) {
            const double p = sigmoid(at(cb + 5 + c, y, x));
            if (p > best_p) {
              best_p = p;
              best_c = c;
            }
          }
          const double conf = obj * best_p;
          if (conf < dc.conf_threshold) continue;
          const double bx = (2 * sigmoid(at(cb + 0, y, x)) - 0.5 + x) * stride;
          const double by = (2 * sigmoid(at(cb + 1, y, x)) - 0.5 + y) * stride;
          const double tw = 2 * sigmoid(at(cb + 2, y, x));
          const double th = 2 * sigmoid(at(cb + 3, y, x));
          const double bw = tw * tw * anc[0];
          const double bh = th * th * anc[1];
          Detection d;
          d.x1 = std::clamp(bx - bw / 2, 0.0, static_cast<double>(cfg.input_size));
          d.x2 = std::clamp(bx + bw / 2, 0.0, static_cast<double>(cfg.input_size));
          d.y1 = std::clamp(by - bh / 2, 0.0, static_cast<double>(cfg.input_size));
          d.y2 = std::clamp(by + bh / 2, 0.0, static_cast<double>(cfg.input_size));
          if (d.x2 <= d.x1 || d.y2 <= d.y1) continue;
          d.confidence = conf;
          d.class_id = best_c;
          out.push_back(d);
        }
      }
    }
  }
  return out;
}

std::array<double, 4> encode_box(double bx, double by, double bw, double bh, int cell_x,
                                 int cell_y, double stride, double anchor_w, double anchor_h) {
  const double sx = (bx / stride - cell_x + 0.5) / 2.0;
  const double sy = (by / stride - cell_y + 0.5) / 2.0;
  const double sw = std::sqrt(bw / anchor_w) / 2.0;
  const double sh = std::sqrt(bh / anchor_h) / 2.0;
  for (double v : {sx, sy, sw, sh}) {
    if (v <= 0 || v >= 1) throw config_error("encode: box not representable by this anchor slot");
  }
  return {logit(sx), logit(sy), logit(sw), logit(sh)};
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold, int max_detections) {
  if (iou_threshold < 0 || iou_threshold > 1) throw config_error("nms: bad iou threshold");
  if (max_detections < 1) throw config_error("nms: max_detections must be >= 1");
  std::stable_sort(dets.begin(), dets.end(), detection_order);
  std::vector<Detection> kept;
  std::vector<bool> removed(dets.size(), false);
  for (size_t i = 0; i < dets.size(); ++i) {
    if (removed[i]) continue;
    kept.push_back(dets[i]);
    if (static_cast<int>(kept.size()) >= max_detections) break;
    for (size_t j = i + 1; j < dets.size(); ++j) {
      if (removed[j] || dets[j].class_id != dets[i].class_id) continue;
      if (iou(dets[i], dets[j]) > iou_threshold) removed[j] = true;
    }
  }
  return kept;
}

std::vector<Detection> map_to_original(const std::vector<Detection>& dets,
                                       const TransformRecord& rec) {
  if (rec.scale <= 0) throw config_error("map_to_original: bad scale");
  std::vector<Detection> out;
  out.reserve(dets.size());
  for (const Detection& d : dets) {
    Detection m = d;
    m.x1 = std::clamp((d.x1 - rec.pad_left) / rec.scale, 0.0, static_cast<double>(rec.orig_w));
    m.x2 = std::clamp((d.x2 - rec.pad_left) / rec.scale, 0.0, static_cast<double>(rec.orig_w));
    m.y1 = std::clamp((d.y1 - rec.pad_top) / rec.scale, 0.0, static_cast<double>(rec.orig_h));
    m.y2 = std::clamp((d.y2 - rec.pad_top) / rec.scale, 0.0, static_cast<double>(rec.orig_h));
    out.push_back(m);
  }
  return out;
}

}  // namespace tfnk
