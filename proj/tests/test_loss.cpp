#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "micro_model.hpp"
#include "tfnk/arch.hpp"
#include "tfnk/assign.hpp"
#include "tfnk/loss.hpp"
#include "tfnk/ops.hpp"
#include "tfnk/rng.hpp"

using tfnk::ArchConfig;
using tfnk::Assignment;
using tfnk::BoxLabel;
using tfnk::LossWeights;
using tfnk::NamedTensor;
using tfnk::ParamGroup;
using tfnk::RegConfig;
using tfnk::Rng;
using tfnk::Tensor;
using T = Tensor<double>;
namespace ops = tfnk::ops;

namespace {

NamedTensor<double> param(const std::string& name, std::vector<double> vals, ParamGroup g) {
  T t({static_cast<int>(vals.size())}, vals);
  return NamedTensor<double>{name, t, g};
}

T random_head(Rng& rng, int n, int ch, int g, double lo = -4, double hi = 4) {
  std::vector<double> v(static_cast<size_t>(n) * ch * g * g);
  for (double& x : v) x = rng.uniform(lo, hi);
  return T({n, ch, g, g}, v);
}

std::vector<BoxLabel> random_labels(Rng& rng, int count) {
  std::vector<BoxLabel> out;
  for (int i = 0; i < count; ++i) {
    BoxLabel lb;
    lb.class_id = rng.uniform_int(0, 1);
    lb.w = rng.uniform(0.05, 0.4);
    lb.h = rng.uniform(0.05, 0.4);
    lb.cx = rng.uniform(lb.w / 2, 1 - lb.w / 2);
    lb.cy = rng.uniform(lb.h / 2, 1 - lb.h / 2);
    out.push_back(lb);
  }
  return out;
}

double bce_scalar(double x, double t) {
  return std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::fabs(x)));
}

double sigmoid(double v) {
  return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

double logit(double p) { return std::log(p / (1 - p)); }

// Scalar recomputation of every loss term, mirroring the published
// decode/CIoU formulas but sharing no code with the graph version.
tfnk::LossBreakdown loss_oracle(const std::array<T, 3>& heads,
                                const std::vector<std::vector<Assignment>>& per_image,
                                const ArchConfig& cfg, const LossWeights& gains) {
  const int nc = cfg.num_classes;
  const int comp = 5 + nc;
  const int batch = heads[0].dim(0);
  const double eps = 1e-9;

  double box_sum = 0, cls_sum = 0, obj = 0;
  int64_t m_total = 0;

  for (int level = 0; level < 3; ++level) {
    const auto& hv = heads[static_cast<size_t>(level)].data();
    const int ch = heads[static_cast<size_t>(level)].dim(1);
    const int gh = heads[static_cast<size_t>(level)].dim(2);
    const int gw = heads[static_cast<size_t>(level)].dim(3);
    const double stride = cfg.strides[static_cast<size_t>(level)];
    auto at = [&](int n, int c, int y, int x) {
      return hv[((static_cast<int64_t>(n) * ch + c) * gh + y) * gw + x];
    };

    // per-slot objectness targets: clamped CIoU at assigned slots
    std::vector<double> target(static_cast<size_t>(batch) * 3 * gh * gw, 0.0);
    for (int n = 0; n < batch; ++n) {
      for (const Assignment& as : per_image[static_cast<size_t>(n)]) {
        if (as.level != level) continue;
        ++m_total;
        const int cb = as.anchor * comp;
        const auto& anc = cfg.anchors[static_cast<size_t>(level)][static_cast<size_t>(as.anchor)];
        const double px = (2 * sigmoid(at(n, cb + 0, as.gy, as.gx)) - 0.5 + as.gx) * stride;
        const double py = (2 * sigmoid(at(n, cb + 1, as.gy, as.gx)) - 0.5 + as.gy) * stride;
        const double sw = 2 * sigmoid(at(n, cb + 2, as.gy, as.gx));
        const double sh = 2 * sigmoid(at(n, cb + 3, as.gy, as.gx));
        const double pw = sw * sw * anc[0], ph = sh * sh * anc[1];
        const double px1 = px - pw / 2, px2 = px + pw / 2;
        const double py1 = py - ph / 2, py2 = py + ph / 2;
        const double gx1 = as.gcx - as.gw / 2, gx2 = as.gcx + as.gw / 2;
        const double gy1 = as.gcy - as.gh / 2, gy2 = as.gcy + as.gh / 2;
        const double iw = std::max(0.0, std::min(px2, gx2) - std::max(px1, gx1));
        const double ih = std::max(0.0, std::min(py2, gy2) - std::max(py1, gy1));
        const double inter = iw * ih;
        const double iou = inter / (pw * ph + as.gw * as.gh - inter + eps);
        const double cw = std::max(px2, gx2) - std::min(px1, gx1);
        const double chh = std::max(py2, gy2) - std::min(py1, gy1);
        const double c2 = cw * cw + chh * chh + eps;
        const double rho2 =
            (px - as.gcx) * (px - as.gcx) + (py - as.gcy) * (py - as.gcy);
        const double dv = std::atan(as.gw / as.gh) - std::atan(pw / ph);
        const double v = 4.0 / (M_PI * M_PI) * dv * dv;
        const double alpha = v / ((1.0 - iou) + v + eps);
        const double ciou = iou - rho2 / c2 - alpha * v;

        box_sum += 1.0 - ciou;
        double p = sigmoid(at(n, cb + 5 + as.class_id, as.gy, as.gx));
        if (p < 1e-7) p = 1e-7;
        if (p > 1) p = 1;
        cls_sum += -std::log(p);

        const size_t pos =
            ((static_cast<size_t>(n) * 3 + as.anchor) * gh + as.gy) * gw + as.gx;
        target[pos] = std::min(1.0, std::max(0.0, ciou));
      }
    }

    double bce_sum = 0;
    size_t idx = 0;
    for (int n = 0; n < batch; ++n)
      for (int a = 0; a < 3; ++a)
        for (int y = 0; y < gh; ++y)
          for (int x = 0; x < gw; ++x)
            bce_sum += bce_scalar(at(n, a * comp + 4, y, x), target[idx++]);
    obj += gains.obj_balance[static_cast<size_t>(level)] * bce_sum /
           static_cast<double>(target.size());
  }

  tfnk::LossBreakdown out;
  out.box_loss = m_total > 0 ? box_sum / static_cast<double>(m_total) : 0.0;
  out.cls_loss = m_total > 0 ? cls_sum / static_cast<double>(m_total) : 0.0;
  out.obj_loss = obj;
  out.total = gains.box_gain * out.box_loss + gains.obj_gain * out.obj_loss +
              gains.cls_gain * out.cls_loss;
  return out;
}

}  // namespace

TEST_CASE("cross entropy matches the closed-form examples") {
  using tfnk::classification_cross_entropy;
  CHECK(classification_cross_entropy<double>({1, 0}, {1, 0}) <= 1e-6);
  CHECK(std::fabs(classification_cross_entropy<double>({1, 0}, {0.5, 0.5}) -
                  std::log(2.0)) < 1e-12);

  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(5), b(5);
    double s = 0;
    for (double& x : a) s += (x = rng.uniform(0.0, 1.0));
    for (double& x : a) x /= s;
    for (double& x : b) x = rng.uniform(1e-4, 1.0);
    double direct = 0;
    for (size_t i = 0; i < 5; ++i) direct -= a[i] * std::log(b[i]);
    CHECK(std::fabs(classification_cross_entropy<double>(a, b) - direct) < 1e-12);
  }

  CHECK_THROWS_AS(classification_cross_entropy<double>({}, {}), tfnk::config_error);
  CHECK_THROWS_AS(classification_cross_entropy<double>({1, 0}, {1, 0, 0}),
                  tfnk::config_error);
}

TEST_CASE("mixed penalty value matches the worked examples") {
  using tfnk::mixed_regularization_value;
  auto one = [&](std::vector<double> w, double alpha) {
    std::vector<NamedTensor<double>> ps{param("w", std::move(w), ParamGroup::ConvWeight)};
    return mixed_regularization_value(ps, alpha);
  };
  CHECK(one({1, -2}, 0.5) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(one({3}, 0.0) == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(one({3, -3}, 1.0) == doctest::Approx(6.0).epsilon(1e-12));

  // only convolution weights are penalized
  std::vector<NamedTensor<double>> ps{
      param("w", {1, -2}, ParamGroup::ConvWeight),
      param("b", {100, 200}, ParamGroup::Bias),
      param("g", {-300}, ParamGroup::Norm),
  };
  CHECK(mixed_regularization_value(ps, 0.5) == doctest::Approx(4.0).epsilon(1e-12));

  CHECK_THROWS_AS(mixed_regularization_value(ps, -0.1), tfnk::config_error);
  CHECK_THROWS_AS(mixed_regularization_value(ps, 1.1), tfnk::config_error);
}

TEST_CASE("graph penalty agrees with the value form and its boundary formulas") {
  Rng rng(23);
  for (double alpha : {0.0, 0.37, 1.0}) {
    std::vector<double> w1(7), w2(5), b(4);
    for (double& x : w1) x = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.05, 2.0);
    for (double& x : w2) x = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.05, 2.0);
    for (double& x : b) x = rng.uniform(-5.0, 5.0);
    std::vector<NamedTensor<double>> ps{
        param("w1", w1, ParamGroup::ConvWeight),
        param("bias", b, ParamGroup::Bias),
        param("w2", w2, ParamGroup::ConvWeight),
    };
    for (auto& p : ps) p.tensor.set_requires_grad(true);

    tfnk::Tape<double> tape;
    tfnk::Tape<double>::Scope scope(tape);
    T total = tfnk::mixed_regularization<double>(ps, alpha);
    CHECK(std::fabs(total.item() - tfnk::mixed_regularization_value(ps, alpha)) < 1e-12);

    // boundary formulas, elementwise: alpha=0 sums squares, alpha=1 magnitudes
    if (alpha == 0.0 || alpha == 1.0) {
      double expect = 0;
      for (const auto* w : {&w1, &w2})
        for (double x : *w) expect += alpha == 0.0 ? x * x : std::fabs(x);
      CHECK(std::fabs(total.item() - expect) < 1e-12);
    }

    tape.backward(total);
    auto check_grad = [&](NamedTensor<double>& p, const std::vector<double>& vals) {
      for (size_t i = 0; i < vals.size(); ++i) {
        const double expect =
            alpha * (vals[i] > 0 ? 1.0 : -1.0) + 2. * (1 - alpha) * vals[i];
        CHECK(std::fabs(p.tensor.grad()[i] - expect) < 1e-12);
      }
    };
    check_grad(ps[0], w1);
    check_grad(ps[2], w2);
    CHECK(!ps[1].tensor.has_grad());
  }

  // no convolution weights at all: penalty is the zero scalar
  std::vector<NamedTensor<double>> only_bias{param("b", {1, 2}, ParamGroup::Bias)};
  CHECK(tfnk::mixed_regularization<double>(only_bias, 0.5).item() == 0.0);
}

TEST_CASE("enabling the penalty adds exactly its value to the total") {
  ArchConfig cfg = tfnk::make_family_config("micro", 0.33, 0.25, 2, 64);
  const int comp = 5 + cfg.num_classes;
  Rng rng(31);
  tfnk::AssignConfig acfg;
  LossWeights gains;

  for (int trial = 0; trial < 50; ++trial) {
    const int batch = rng.uniform_int(1, 2);
    std::array<T, 3> heads;
    for (int l = 0; l < 3; ++l) {
      const int g = cfg.input_size / static_cast<int>(cfg.strides[static_cast<size_t>(l)]);
      heads[static_cast<size_t>(l)] = random_head(rng, batch, 3 * comp, g);
    }
    std::vector<std::vector<Assignment>> per_image;
    for (int n = 0; n < batch; ++n) {
      // include the zero-label case on the first trial
      const int count = trial == 0 ? 0 : rng.uniform_int(1, 3);
      per_image.push_back(tfnk::assign_targets(random_labels(rng, count), cfg, acfg));
    }

    std::vector<NamedTensor<double>> ps;
    for (int k = 0; k < 3; ++k) {
      std::vector<double> w(static_cast<size_t>(rng.uniform_int(3, 9)));
      for (double& x : w) x = rng.uniform(-2.0, 2.0);
      ps.push_back(param("w" + std::to_string(k), std::move(w), ParamGroup::ConvWeight));
    }
    ps.push_back(param("b", {7.0, -3.0}, ParamGroup::Bias));

    const double alpha = trial == 0 ? 0.0 : trial == 1 ? 1.0 : rng.uniform(0.0, 1.0);
    auto off = tfnk::detection_loss<double>(heads, per_image, cfg, gains,
                                            RegConfig{false, alpha}, ps);
    auto on = tfnk::detection_loss<double>(heads, per_image, cfg, gains,
                                           RegConfig{true, alpha}, ps);
    const double reg = tfnk::mixed_regularization_value(ps, alpha);

    CHECK(std::fabs((on.parts.total - off.parts.total) - reg) <= 1e-10);
    CHECK(off.parts.reg_term == 0.0);
    CHECK(std::fabs(on.parts.reg_term - reg) < 1e-12);
    CHECK(on.parts.box_loss == off.parts.box_loss);
    CHECK(on.parts.obj_loss == off.parts.obj_loss);
    CHECK(on.parts.cls_loss == off.parts.cls_loss);
  }
}

TEST_CASE("a perfect prediction drives the loss to near zero") {
  ArchConfig cfg = tfnk::make_family_config("micro", 0.33, 0.25, 2, 64);
  const int comp = 5 + cfg.num_classes;

  BoxLabel lb;
  lb.class_id = 1;
  // mid-cell center on the coarsest grid, sized near the first anchors
  lb.cx = 0.3 + 0.2 / 64;
  lb.cy = 0.55;
  lb.w = 14.0 / 64;
  lb.h = 17.0 / 64;
  std::vector<std::vector<Assignment>> per_image{
      tfnk::assign_targets({lb}, cfg, tfnk::AssignConfig{})};
  REQUIRE(!per_image[0].empty());

  std::array<T, 3> heads;
  for (int l = 0; l < 3; ++l) {
    const int g = cfg.input_size / static_cast<int>(cfg.strides[static_cast<size_t>(l)]);
    std::vector<double> v(static_cast<size_t>(3 * comp) * g * g, 0.0);
    // background slots: strongly negative objectness, classes irrelevant
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < g * g; ++c) v[static_cast<size_t>((a * comp + 4) * g * g + c)] = -40;
    heads[static_cast<size_t>(l)] = T({1, 3 * comp, g, g}, v);
  }

  for (const Assignment& as : per_image[0]) {
    auto& v = heads[static_cast<size_t>(as.level)].data();
    const int g = heads[static_cast<size_t>(as.level)].dim(2);
    const double stride = cfg.strides[static_cast<size_t>(as.level)];
    const auto& anc =
        cfg.anchors[static_cast<size_t>(as.level)][static_cast<size_t>(as.anchor)];
    auto slot = [&](int c) -> double& {
      return v[static_cast<size_t>(((as.anchor * comp + c) * g + as.gy) * g + as.gx)];
    };
    slot(0) = logit((as.gcx / stride - as.gx + 0.5) / 2);
    slot(1) = logit((as.gcy / stride - as.gy + 0.5) / 2);
    slot(2) = logit(std::sqrt(as.gw / anc[0]) / 2);
    slot(3) = logit(std::sqrt(as.gh / anc[1]) / 2);
    slot(4) = 40;
    slot(5 + as.class_id) = 40;
    slot(5 + 1 - as.class_id) = -40;
  }

  std::vector<NamedTensor<double>> ps;
  auto res = tfnk::detection_loss<double>(heads, per_image, cfg, LossWeights{},
                                          RegConfig{}, ps);
  CHECK(res.parts.total <= 1e-5);
  CHECK(res.parts.box_loss <= 1e-6);
  CHECK(res.parts.cls_loss <= 1e-6);
}

TEST_CASE("an empty batch produces zero box and cls losses") {
  ArchConfig cfg = tfnk::make_family_config("micro", 0.33, 0.25, 2, 64);
  const int comp = 5 + cfg.num_classes;
  Rng rng(47);
  LossWeights gains;

  std::array<T, 3> heads;
  for (int l = 0; l < 3; ++l) {
    const int g = cfg.input_size / static_cast<int>(cfg.strides[static_cast<size_t>(l)]);
    heads[static_cast<size_t>(l)] = random_head(rng, 2, 3 * comp, g);
  }
  std::vector<std::vector<Assignment>> per_image(2);
  std::vector<NamedTensor<double>> ps;
  auto res =
      tfnk::detection_loss<double>(heads, per_image, cfg, gains, RegConfig{}, ps);

  CHECK(res.parts.box_loss == 0.0);
  CHECK(res.parts.cls_loss == 0.0);

  // objectness reduces to balanced BCE against an all-zero target map
  double expect = 0;
  for (int l = 0; l < 3; ++l) {
    const auto& hv = heads[static_cast<size_t>(l)].data();
    const int g = heads[static_cast<size_t>(l)].dim(2);
    double s = 0;
    int64_t count = 0;
    for (int n = 0; n < 2; ++n)
      for (int a = 0; a < 3; ++a)
        for (int c = 0; c < g * g; ++c) {
          s += bce_scalar(
              hv[static_cast<size_t>((static_cast<int64_t>(n) * 3 * comp + a * comp + 4) * g * g + c)],
              0.0);
          ++count;
        }
    expect += gains.obj_balance[static_cast<size_t>(l)] * s / static_cast<double>(count);
  }
  CHECK(std::fabs(res.parts.obj_loss - expect) < 1e-12);
  CHECK(std::fabs(res.parts.total - gains.obj_gain * expect) < 1e-12);
}

TEST_CASE("every loss term matches a scalar recomputation") {
  ArchConfig cfg = tfnk::make_family_config("micro", 0.33, 0.25, 3, 64);
  const int comp = 5 + cfg.num_classes;
  Rng rng(59);
  LossWeights gains;
  gains.box_gain = 0.07;
  gains.cls_gain = 0.3;
  tfnk::AssignConfig acfg;

  for (int trial = 0; trial < 10; ++trial) {
    const int batch = 2;
    std::array<T, 3> heads;
    for (int l = 0; l < 3; ++l) {
      const int g = cfg.input_size / static_cast<int>(cfg.strides[static_cast<size_t>(l)]);
      heads[static_cast<size_t>(l)] = random_head(rng, batch, 3 * comp, g);
    }
    std::vector<std::vector<Assignment>> per_image;
    int m_total = 0;
    for (int n = 0; n < batch; ++n) {
      auto labels = random_labels(rng, rng.uniform_int(1, 3));
      for (auto& lb : labels) lb.class_id = rng.uniform_int(0, cfg.num_classes - 1);
      per_image.push_back(tfnk::assign_targets(labels, cfg, acfg));
      m_total += static_cast<int>(per_image.back().size());
    }
    REQUIRE(m_total > 0);

    std::vector<NamedTensor<double>> ps;
    auto res =
        tfnk::detection_loss<double>(heads, per_image, cfg, gains, RegConfig{}, ps);
    auto want = loss_oracle(heads, per_image, cfg, gains);

    CHECK(testutil::rel_err(res.parts.box_loss, want.box_loss) <= 1e-10);
    CHECK(testutil::rel_err(res.parts.obj_loss, want.obj_loss) <= 1e-10);
    CHECK(testutil::rel_err(res.parts.cls_loss, want.cls_loss) <= 1e-10);
    CHECK(testutil::rel_err(res.parts.total, want.total) <= 1e-10);

    // the precomputed objectness map is exactly the clamped in-graph CIoU
    auto maps = tfnk::objectness_targets<double>(heads, per_image, cfg);
    auto fixed = tfnk::detection_loss<double>(heads, per_image, cfg, gains, RegConfig{},
                                              ps, &maps);
    CHECK(fixed.parts.total == res.parts.total);
  }
}

TEST_CASE("the full loss gradient matches finite differences on a micro model") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    testutil::MicroLossCheck chk(seed);
    REQUIRE(!chk.per_image[0].empty());
    CHECK(chk.worst_grad_err() < 1e-3);
  }
}

TEST_CASE("head channel and batch validation") {
  ArchConfig cfg = tfnk::make_family_config("micro", 0.33, 0.25, 2, 64);
  Rng rng(71);
  std::array<T, 3> heads;
  for (int l = 0; l < 3; ++l) {
    const int g = cfg.input_size / static_cast<int>(cfg.strides[static_cast<size_t>(l)]);
    heads[static_cast<size_t>(l)] = random_head(rng, 1, 12, g);  // wrong channel count
  }
  std::vector<std::vector<Assignment>> one(1);
  std::vector<NamedTensor<double>> ps;
  CHECK_THROWS_AS(tfnk::detection_loss<double>(heads, one, cfg, LossWeights{},
                                               RegConfig{}, ps),
                  tfnk::config_error);
  std::vector<std::vector<Assignment>> two(2);
  CHECK_THROWS_AS(tfnk::detection_loss<double>(heads, two, cfg, LossWeights{},
                                               RegConfig{}, ps),
                  tfnk::config_error);
}
