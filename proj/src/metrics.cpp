#include "tfnk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tfnk/errors.hpp"

namespace tfnk {

std::vector<DetMatch> match_detections(std::vector<Detection> dets,
                                       const std::vector<GroundTruth>& gts, double iou_min) {
  std::stable_sort(dets.begin(), dets.end(), detection_order);
  std::vector<bool> taken(gts.size(), false);
  std::vector<DetMatch> out;
  out.reserve(dets.size());
  for (const Detection& d : dets) {
    DetMatch m;
    m.det = d;
    double best = 0;
    int best_i = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].class_id != d.class_id) continue;
      const double v =
          iou_xyxy(d.x1, d.y1, d.x2, d.y2, gts[g].x1, gts[g].y1, gts[g].x2, gts[g].y2);
      if (v > best) {
        best = v;
        best_i = static_cast<int>(g);
      }
    }
    if (best_i >= 0 && best >= iou_min) {
      taken[static_cast<size_t>(best_i)] = true;
      m.tp = true;
      m.gt_index = best_i;
      m.iou = best;
    }
    out.push_back(m);
  }
  return out;
}

namespace {

// Area under the precision envelope: each recall level takes the maximum
// precision achieved at that recall or beyond, integrated over recall.
double envelope_ap(const std::vector<double>& recall, const std::vector<double>& precision) {
  const size_t n = recall.size();
  std::vector<double> mrec(n + 2), mpre(n + 2);
  mrec[0] = 0;
  mpre[0] = 0;
  for (size_t i = 0; i < n; ++i) {
    mrec[i + 1] = recall[i];
    mpre[i + 1] = precision[i];
  }
  mrec[n + 1] = 1;
  mpre[n + 1] = 0;
  for (size_t i = n + 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  double ap = 0;
  for (size_t i = 0; i + 1 < mrec.size(); ++i) {
    if (mrec[i + 1] != mrec[i]) ap += (mrec[i + 1] - mrec[i]) * mpre[i + 1];
  }
  return ap;
}

SizeBucketStats finish_bucket(int count, int matched) {
  SizeBucketStats s;
  s.gt_count = count;
  s.matched = matched;
  s.recall = count > 0 ? static_cast<double>(matched) / count
                       : std::numeric_limits<double>::quiet_NaN();
  return s;
}

enum class Bucket { Small, Medium, Large };

Bucket bucket_of(double norm_w) {
  if (norm_w < 0.02) return Bucket::Small;
  if (norm_w <= 0.08) return Bucket::Medium;
  return Bucket::Large;
}

}  // namespace

EvalReport evaluate(const std::vector<EvalInput>& images, const EvalConfig& cfg) {
  if (images.empty()) throw config_error("evaluate: empty dataset");
  size_t total_gt = 0;
  for (const auto& im : images) total_gt += im.gts.size();
  if (total_gt == 0) throw config_error("evaluate: no ground truth boxes in the dataset");

  EvalReport r;
  r.cfg = cfg;

  // Per-image matching over the full detection set; the sweep re-uses these
  // flags because greedy matching in confidence order is threshold-free.
  struct Flat {
    double confidence;
    bool tp;
    double iou;
    int image;
    int gt_index;
  };
  std::vector<Flat> flat;
  int small_cnt = 0, medium_cnt = 0, large_cnt = 0;
  int small_hit = 0, medium_hit = 0, large_hit = 0;
  int op_tp = 0, op_fp = 0;  // at the operating confidence threshold
  double op_iou_tp_sum = 0, op_iou_all_sum = 0;
  int op_all = 0;

  for (size_t i = 0; i < images.size(); ++i) {
    const auto matches = match_detections(images[i].dets, images[i].gts, cfg.iou_min);
    for (const auto& m : matches) {
      flat.push_back({m.det.confidence, m.tp, m.iou, static_cast<int>(i), m.gt_index});
      if (m.det.confidence >= cfg.conf_threshold) {
        ++op_all;
        op_iou_all_sum += m.iou;
        if (m.tp) {
          ++op_tp;
          op_iou_tp_sum += m.iou;
          const auto& gt = images[i].gts[static_cast<size_t>(m.gt_index)];
          switch (bucket_of(gt.norm_w)) {
            case Bucket::Small: ++small_hit; break;
            case Bucket::Medium: ++medium_hit; break;
            case Bucket::Large: ++large_hit; break;
          }
        } else {
          ++op_fp;
        }
      }
    }
    for (const auto& gt : images[i].gts) {
      switch (bucket_of(gt.norm_w)) {
        case Bucket::Small: ++small_cnt; break;
        case Bucket::Medium: ++medium_cnt; break;
        case Bucket::Large: ++large_cnt; break;
      }
    }
  }

  r.tp = op_tp;
  r.fp = op_fp;
  r.fn = static_cast<int>(total_gt) - op_tp;
  r.precision = (op_tp + op_fp) > 0 ? static_cast<double>(op_tp) / (op_tp + op_fp)
                                    : std::numeric_limits<double>::quiet_NaN();
  r.recall = static_cast<double>(op_tp) / static_cast<double>(total_gt);
  if (cfg.mean_iou_all) {
    r.mean_iou = op_all > 0 ? op_iou_all_sum / op_all : std::numeric_limits<double>::quiet_NaN();
  } else {
    r.mean_iou = op_tp > 0 ? op_iou_tp_sum / op_tp : std::numeric_limits<double>::quiet_NaN();
  }
  r.small = finish_bucket(small_cnt, small_hit);
  r.medium = finish_bucket(medium_cnt, medium_hit);
  r.large = finish_bucket(large_cnt, large_hit);

  // Global confidence sweep for the PR curve and AP. Ordering must be a
  // total order so the curve is independent of image iteration order.
  std::stable_sort(flat.begin(), flat.end(), [](const Flat& a, const Flat& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.tp != b.tp) return a.tp;  // TP first among equal confidences
    if (a.image != b.image) return a.image < b.image;
    return a.gt_index < b.gt_index;
  });
  std::vector<double> rec, pre;
  rec.reserve(flat.size());
  pre.reserve(flat.size());
  int ctp = 0, cfp = 0;
  for (const Flat& f : flat) {
    if (f.tp) ++ctp; else ++cfp;
    const double p = static_cast<double>(ctp) / (ctp + cfp);
    const double q = static_cast<double>(ctp) / static_cast<double>(total_gt);
    rec.push_back(q);
    pre.push_back(p);
    r.pr_points.push_back({f.confidence, p, q});
  }
  r.map50 = flat.empty() ? 0.0 : envelope_ap(rec, pre);
  return r;
}

std::string eval_report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["fn"] = r.fn;
  j["precision"] = std::isnan(r.precision) ? nlohmann::ordered_json(nullptr)
                                           : nlohmann::ordered_json(r.precision);
  j["recall"] = r.recall;
  j["map50"] = r.map50;
  j["mean_iou"] = std::isnan(r.mean_iou) ? nlohmann::ordered_json(nullptr)
                                         : nlohmann::ordered_json(r.mean_iou);
  j["mean_iou_over"] = r.cfg.mean_iou_all ? "all_detections" : "true_positives";
  j["conf_threshold"] = r.cfg.conf_threshold;
  j["iou_min"] = r.cfg.iou_min;
  auto bucket = [](const SizeBucketStats& s) {
    nlohmann::ordered_json b;
    b["gt_count"] = s.gt_count;
    b["matched"] = s.matched;
    b["recall"] = std::isnan(s.recall) ? nlohmann::ordered_json(nullptr)
                                       : nlohmann::ordered_json(s.recall);
    return b;
  };
  j["per_size"]["small"] = bucket(r.small);
  j["per_size"]["medium"] = bucket(r.medium);
  j["per_size"]["large"] = bucket(r.large);
  if (r.latency.measured()) {
    j["latency"]["pre_ms"] = r.latency.pre_ms;
    j["latency"]["infer_ms"] = r.latency.infer_ms;
    j["latency"]["nms_ms"] = r.latency.nms_ms;
    j["latency"]["fps"] = r.latency.fps();
  } else {
    j["latency"] = nullptr;
  }
  return j.dump(2);
}

std::string pr_curve_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "confidence,precision,recall\n";
  os.precision(9);
  for (const auto& p : r.pr_points) {
    os << p.confidence << ',' << p.precision << ',' << p.recall << '\n';
  }
  return os.str();
}

}  // namespace tfnk
