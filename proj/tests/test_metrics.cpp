#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "tfnk/errors.hpp"
#include "tfnk/metrics.hpp"
#include "tfnk/rng.hpp"

using tfnk::Detection;
using tfnk::EvalConfig;
using tfnk::EvalInput;
using tfnk::GroundTruth;
using tfnk::Rng;

namespace {

Detection det(double x1, double y1, double x2, double y2, double conf, int cls = 0) {
  Detection d;
  d.x1 = x1;
  d.y1 = y1;
  d.x2 = x2;
  d.y2 = y2;
  d.confidence = conf;
  d.class_id = cls;
  return d;
}

GroundTruth gt(double x1, double y1, double x2, double y2, int cls = 0,
               double norm_w = 0.05) {
  GroundTruth g;
  g.x1 = x1;
  g.y1 = y1;
  g.x2 = x2;
  g.y2 = y2;
  g.class_id = cls;
  g.norm_w = norm_w;
  return g;
}

// Independent average precision: precision after each prefix, then for every
// true positive the best precision at or beyond it, each worth 1/G recall.
double ap_oracle(std::vector<std::pair<double, bool>> scored, int total_gt) {
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  const size_t n = scored.size();
  std::vector<double> prec(n);
  int ctp = 0;
  for (size_t j = 0; j < n; ++j) {
    if (scored[j].second) ++ctp;
    prec[j] = static_cast<double>(ctp) / static_cast<double>(j + 1);
  }
  double ap = 0;
  for (size_t j = 0; j < n; ++j) {
    if (!scored[j].second) continue;
    double best = 0;
    for (size_t l = j; l < n; ++l) best = std::max(best, prec[l]);
    ap += best / static_cast<double>(total_gt);
  }
  return ap;
}

}  // namespace

TEST_CASE("matching takes the best unmatched ground truth of the same class") {
  // two overlapping ground truths; the detection prefers the higher IoU
  std::vector<GroundTruth> gts{gt(0, 0, 10, 10), gt(2, 0, 12, 10)};
  auto m = tfnk::match_detections({det(2, 0, 12, 10, 0.9)}, gts, 0.5);
  REQUIRE(m.size() == 1);
  CHECK(m[0].tp);
  CHECK(m[0].gt_index == 1);
  CHECK(m[0].iou == doctest::Approx(1.0).epsilon(1e-12));

  // a taken ground truth is not reused
  auto m2 = tfnk::match_detections(
      {det(0, 0, 10, 10, 0.9), det(0, 0, 10, 10, 0.8)}, {gt(0, 0, 10, 10)}, 0.5);
  REQUIRE(m2.size() == 2);
  CHECK(m2[0].tp);
  CHECK(!m2[1].tp);

  // higher confidence matches first regardless of input position
  auto m3 = tfnk::match_detections(
      {det(0, 0, 10, 10, 0.3), det(1, 1, 10, 10, 0.8)}, {gt(0, 0, 10, 10)}, 0.5);
  CHECK(m3[0].det.confidence == 0.8);
  CHECK(m3[0].tp);
  CHECK(!m3[1].tp);

  // class mismatch never matches, even at IoU 1
  auto m4 = tfnk::match_detections({det(0, 0, 10, 10, 0.9, 1)}, {gt(0, 0, 10, 10, 0)}, 0.5);
  CHECK(!m4[0].tp);

  // IoU exactly at the minimum counts
  auto m5 = tfnk::match_detections({det(0, 0, 10, 5, 0.9)}, {gt(0, 0, 10, 10)}, 0.5);
  CHECK(m5[0].tp);
  CHECK(m5[0].iou == doctest::Approx(0.5).epsilon(1e-12));
  auto m6 = tfnk::match_detections({det(0, 0, 10, 4.9, 0.9)}, {gt(0, 0, 10, 10)}, 0.5);
  CHECK(!m6[0].tp);
}

TEST_CASE("average precision matches the hand examples") {
  // one TP then one FP over two ground truths: precision 1 up to recall 0.5
  std::vector<EvalInput> images(1);
  images[0].gts = {gt(0, 0, 10, 10), gt(50, 50, 60, 60)};
  images[0].dets = {det(0, 0, 10, 10, 0.9), det(100, 100, 110, 110, 0.8)};
  EvalConfig cfg;
  auto r = tfnk::evaluate(images, cfg);
  CHECK(r.map50 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.tp == 1);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  CHECK(r.precision == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.recall == doctest::Approx(0.5).epsilon(1e-12));

  // perfect detector: AP 1 even with a trailing low-confidence FP
  images[0].dets = {det(0, 0, 10, 10, 0.9), det(50, 50, 60, 60, 0.8),
                    det(100, 100, 110, 110, 0.1)};
  auto r2 = tfnk::evaluate(images, cfg);
  CHECK(r2.map50 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("average precision matches the envelope oracle over 100 instances") {
  Rng rng(2025);
  for (int instance = 0; instance < 100; ++instance) {
    const int images_n = rng.uniform_int(1, 3);
    std::vector<EvalInput> images(static_cast<size_t>(images_n));
    std::vector<std::pair<double, bool>> expected;  // (confidence, is_tp)
    int total_gt = 0;

    // distinct confidences so the global sweep order is unambiguous
    std::vector<int> conf_ids(240);
    for (size_t i = 0; i < conf_ids.size(); ++i) conf_ids[i] = static_cast<int>(i);
    rng.shuffle(conf_ids);
    size_t next_conf = 0;
    auto conf = [&] { return (conf_ids[next_conf++] + 1) / 241.0; };

    const int slots = rng.uniform_int(3, 60);
    for (int s = 0; s < slots; ++s) {
      auto& im = images[static_cast<size_t>(rng.uniform_int(0, images_n - 1))];
      const double x = 50.0 * (s % 20), y = 50.0 * (s / 20);
      const int kind = rng.uniform_int(0, 3);
      if (kind == 0) {  // matched pair
        im.gts.push_back(gt(x, y, x + 10, y + 10));
        const double c = conf();
        im.dets.push_back(det(x, y, x + 10, y + 10, c));
        expected.push_back({c, true});
        ++total_gt;
      } else if (kind == 1) {  // missed ground truth
        im.gts.push_back(gt(x, y, x + 10, y + 10));
        ++total_gt;
      } else if (kind == 2) {  // false positive in empty space
        const double c = conf();
        im.dets.push_back(det(x, y, x + 10, y + 10, c));
        expected.push_back({c, false});
      } else {  // duplicate detection: higher confidence wins the ground truth
        im.gts.push_back(gt(x, y, x + 10, y + 10));
        const double c1 = conf(), c2 = conf();
        im.dets.push_back(det(x, y, x + 10, y + 10, c1));
        im.dets.push_back(det(x, y, x + 10, y + 10, c2));
        expected.push_back({std::max(c1, c2), true});
        expected.push_back({std::min(c1, c2), false});
        ++total_gt;
      }
    }
    if (total_gt == 0) continue;

    auto r = tfnk::evaluate(images, EvalConfig{});
    CHECK(std::fabs(r.map50 - ap_oracle(expected, total_gt)) <= 1e-10);
  }
}

TEST_CASE("the operating point filters counts but not the sweep") {
  std::vector<EvalInput> images(1);
  images[0].gts = {gt(0, 0, 10, 10), gt(50, 50, 60, 60)};
  images[0].dets = {det(0, 0, 10, 10, 0.9), det(50, 50, 60, 60, 0.1)};
  EvalConfig cfg;
  cfg.conf_threshold = 0.25;
  auto r = tfnk::evaluate(images, cfg);
  CHECK(r.tp == 1);  // the 0.1 detection is below the operating point
  CHECK(r.fn == 1);
  CHECK(r.pr_points.size() == 2);  // but still sweeps into the curve
  CHECK(r.map50 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("an empty detector yields NaN precision and zero ap") {
  std::vector<EvalInput> images(1);
  images[0].gts = {gt(0, 0, 10, 10)};
  auto r = tfnk::evaluate(images, EvalConfig{});
  CHECK(std::isnan(r.precision));
  CHECK(std::isnan(r.mean_iou));
  CHECK(r.recall == 0.0);
  CHECK(r.map50 == 0.0);
  CHECK(r.tp == 0);
  CHECK(r.fn == 1);
  CHECK(r.pr_points.empty());

  auto j = nlohmann::json::parse(tfnk::eval_report_to_json(r));
  CHECK(j["precision"].is_null());
  CHECK(j["mean_iou"].is_null());
  CHECK(j["latency"].is_null());
}

TEST_CASE("evaluate validates its inputs") {
  CHECK_THROWS_AS(tfnk::evaluate({}, EvalConfig{}), tfnk::config_error);
  std::vector<EvalInput> no_gt(2);
  no_gt[0].dets = {det(0, 0, 10, 10, 0.9)};
  CHECK_THROWS_AS(tfnk::evaluate(no_gt, EvalConfig{}), tfnk::config_error);
}

TEST_CASE("size buckets split on normalized width") {
  std::vector<EvalInput> images(1);
  images[0].gts = {
      gt(0, 0, 10, 10, 0, 0.01),     // small
      gt(50, 0, 60, 10, 0, 0.02),    // medium (boundary)
      gt(100, 0, 110, 10, 0, 0.08),  // medium (boundary)
      gt(150, 0, 160, 10, 0, 0.081), // large
  };
  images[0].dets = {det(0, 0, 10, 10, 0.9), det(150, 0, 160, 10, 0.8)};
  auto r = tfnk::evaluate(images, EvalConfig{});
  CHECK(r.small.gt_count == 1);
  CHECK(r.medium.gt_count == 2);
  CHECK(r.large.gt_count == 1);
  CHECK(r.small.matched == 1);
  CHECK(r.medium.matched == 0);
  CHECK(r.large.matched == 1);
  CHECK(r.small.recall == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.medium.recall == doctest::Approx(0.0).epsilon(1e-12));

  // an empty bucket reports NaN recall and null in the JSON
  images[0].gts = {gt(0, 0, 10, 10, 0, 0.5)};
  images[0].dets = {det(0, 0, 10, 10, 0.9)};
  auto r2 = tfnk::evaluate(images, EvalConfig{});
  CHECK(std::isnan(r2.small.recall));
  auto j = nlohmann::json::parse(tfnk::eval_report_to_json(r2));
  CHECK(j["per_size"]["small"]["recall"].is_null());
  CHECK(j["per_size"]["large"]["recall"] == 1.0);
}

TEST_CASE("mean iou over true positives or all detections") {
  std::vector<EvalInput> images(1);
  images[0].gts = {gt(0, 0, 10, 10), gt(50, 50, 60, 60)};
  // iou 1.0 TP, iou 2/3 TP, and a far FP with iou 0
  images[0].dets = {det(0, 0, 10, 10, 0.9), det(50, 50, 60, 57.5, 0.8),
                    det(200, 200, 210, 210, 0.7)};
  EvalConfig cfg;
  auto r = tfnk::evaluate(images, cfg);
  const double tp_mean = (1.0 + 0.75) / 2;
  CHECK(r.mean_iou == doctest::Approx(tp_mean).epsilon(1e-12));

  cfg.mean_iou_all = true;
  auto r2 = tfnk::evaluate(images, cfg);
  CHECK(r2.mean_iou == doctest::Approx((1.0 + 0.75 + 0.0) / 3).epsilon(1e-12));

  auto j = nlohmann::json::parse(tfnk::eval_report_to_json(r2));
  CHECK(j["mean_iou_over"] == "all_detections");
}

TEST_CASE("the pr curve is independent of image order") {
  std::vector<EvalInput> images(2);
  images[0].gts = {gt(0, 0, 10, 10)};
  images[0].dets = {det(0, 0, 10, 10, 0.9), det(30, 30, 40, 40, 0.62)};
  images[1].gts = {gt(0, 0, 10, 10), gt(50, 50, 60, 60)};
  images[1].dets = {det(0, 0, 10, 10, 0.74), det(100, 100, 110, 110, 0.4)};

  auto a = tfnk::evaluate(images, EvalConfig{});
  std::swap(images[0], images[1]);
  auto b = tfnk::evaluate(images, EvalConfig{});
  CHECK(a.map50 == b.map50);
  CHECK(tfnk::pr_curve_csv(a) == tfnk::pr_curve_csv(b));

  // csv shape: header plus one row per swept detection
  const std::string csv = tfnk::pr_curve_csv(a);
  CHECK(csv.rfind("confidence,precision,recall\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("latency stats gate on all three phases") {
  tfnk::LatencyStats l;
  CHECK(!l.measured());
  l.pre_ms = 1.0;
  l.infer_ms = 8.0;
  CHECK(!l.measured());
  l.nms_ms = 1.0;
  CHECK(l.measured());
  CHECK(l.fps() == doctest::Approx(100.0).epsilon(1e-12));

  tfnk::EvalReport r;
  r.cfg = EvalConfig{};
  r.latency = l;
  auto j = nlohmann::json::parse(tfnk::eval_report_to_json(r));
  CHECK(j["latency"]["fps"] == doctest::Approx(100.0).epsilon(1e-9));
}
