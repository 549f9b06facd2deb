#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "tfnk/assign.hpp"
#include "tfnk/graph.hpp"
#include "tfnk/ops.hpp"

namespace tfnk {

struct LossWeights {
  double box_gain = 0.05;
  double obj_gain = 1.0;
  double cls_gain = 0.5;
  std::array<double, 3> obj_balance{4.0, 1.0, 0.4};
};

struct RegConfig {
  bool enabled = false;
  double alpha = 0.5;  // blend between |w| and w^2 terms
};

struct LossBreakdown {
  double box_loss = 0, obj_loss = 0, cls_loss = 0, reg_term = 0, total = 0;
};

// Cross-entropy between a reference distribution a and predicted
// probabilities b, with b clamped to [1e-7, 1] before the log.
template <typename S>
S classification_cross_entropy(const std::vector<S>& a, const std::vector<S>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw config_error("cross_entropy: distributions must have equal, non-zero length");
  }
  S total = S(0);
  for (size_t i = 0; i < a.size(); ++i) {
    S bi = b[i];
    if (bi < S(1e-7)) bi = S(1e-7);
    if (bi > S(1)) bi = S(1);
    total -= a[i] * std::log(bi);
  }
  return total;
}

// Plain value of the mixed penalty over a set of weight tensors:
// sum of alpha*|w| + (1-alpha)*w^2 over every element.
template <typename S>
S mixed_regularization_value(const std::vector<NamedTensor<S>>& params, double alpha) {
  if (alpha < 0 || alpha > 1) throw config_error("regularization: alpha must be in [0, 1]");
  S total = S(0);
  for (const auto& p : params) {
    if (p.group != ParamGroup::ConvWeight) continue;
    for (const S v : p.tensor.data()) {
      total += static_cast<S>(alpha) * std::fabs(v) + static_cast<S>(1 - alpha) * v * v;
    }
  }
  return total;
}

// Graph version of the mixed penalty, differentiable through the weights.
template <typename S>
Tensor<S> mixed_regularization(std::vector<NamedTensor<S>>& params, double alpha) {
  if (alpha < 0 || alpha > 1) throw config_error("regularization: alpha must be in [0, 1]");
  Tensor<S> total;
  for (auto& p : params) {
    if (p.group != ParamGroup::ConvWeight) continue;
    Tensor<S> abs_term = ops::affine<S>(ops::abs<S>(p.tensor), static_cast<S>(alpha), S(0));
    Tensor<S> sq_term =
        ops::affine<S>(ops::mul<S>(p.tensor, p.tensor), static_cast<S>(1 - alpha), S(0));
    Tensor<S> part = ops::reduce_sum<S>(ops::add<S>(abs_term, sq_term));
    total = total.defined() ? ops::add<S>(total, part) : part;
  }
  if (!total.defined()) total = Tensor<S>::scalar(S(0));
  return total;
}

template <typename S>
struct DetectionLossResult {
  Tensor<S> total;
  LossBreakdown parts;
};

// Value-level objectness targets: per level, one entry per (image, anchor,
// cell) in n-major order, zero everywhere except assigned slots, which get
// the CIoU of the decoded prediction against its ground truth, clamped to
// [0, 1]. Later assignments to the same slot overwrite earlier ones. This is
// plain scalar arithmetic on the forward values, used both as the detached
// training target and as an oracle for the in-graph CIoU.
template <typename S>
std::vector<std::vector<S>> objectness_targets(const std::array<Tensor<S>, 3>& heads,
                                               const std::vector<std::vector<Assignment>>& per_image,
                                               const ArchConfig& cfg) {
  const int nc = cfg.num_classes;
  const int comp = 5 + nc;
  const int batch = heads[0].dim(0);
  std::vector<std::vector<S>> out(3);
  for (int level = 0; level < 3; ++level) {
    const Tensor<S>& head = heads[static_cast<size_t>(level)];
    const int ch = head.dim(1), gh = head.dim(2), gw = head.dim(3);
    out[static_cast<size_t>(level)].assign(static_cast<size_t>(batch) * 3 * gh * gw, S(0));
    const double stride = cfg.strides[static_cast<size_t>(level)];
    const auto& hv = head.data();
    auto logit_at = [&](int n, int c, int y, int x) {
      return static_cast<double>(
          hv[((static_cast<int64_t>(n) * ch + c) * gh + y) * gw + x]);
    };
    auto sig = [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); };
    for (int n = 0; n < batch; ++n) {
      for (const Assignment& as : per_image[static_cast<size_t>(n)]) {
        if (as.level != level) continue;
        const int cbase = as.anchor * comp;
        const auto& anc = cfg.anchors[static_cast<size_t>(level)][static_cast<size_t>(as.anchor)];
        const double px = (2 * sig(logit_at(n, cbase + 0, as.gy, as.gx)) - 0.5 + as.gx) * stride;
        const double py = (2 * sig(logit_at(n, cbase + 1, as.gy, as.gx)) - 0.5 + as.gy) * stride;
        const double sw = 2 * sig(logit_at(n, cbase + 2, as.gy, as.gx));
        const double sh = 2 * sig(logit_at(n, cbase + 3, as.gy, as.gx));
        const double pw = sw * sw * anc[0];
        const double ph = sh * sh * anc[1];
        const double eps = 1e-9;
        const double px1 = px - pw / 2, px2 = px + pw / 2;
        const double py1 = py - ph / 2, py2 = py + ph / 2;
        const double gx1 = as.gcx - as.gw / 2, gx2 = as.gcx + as.gw / 2;
        const double gy1 = as.gcy - as.gh / 2, gy2 = as.gcy + as.gh / 2;
        const double iw = std::max(0.0, std::min(px2, gx2) - std::max(px1, gx1));
        const double ih = std::max(0.0, std::min(py2, gy2) - std::max(py1, gy1));
        const double inter = iw * ih;
        const double uni = pw * ph + as.gw * as.gh - inter + eps;
        const double iou = inter / uni;
        const double cw = std::max(px2, gx2) - std::min(px1, gx1);
        const double chh = std::max(py2, gy2) - std::min(py1, gy1);
        const double c2 = cw * cw + chh * chh + eps;
        const double rho2 = (px - as.gcx) * (px - as.gcx) + (py - as.gcy) * (py - as.gcy);
        const double v = 4.0 / (M_PI * M_PI) * std::pow(std::atan(as.gw / as.gh) - std::atan(pw / ph), 2.0);
        const double alpha = v / ((1.0 - iou) + v + eps);
        double ciou = iou - rho2 / c2 - alpha * v;
        if (ciou < 0) ciou = 0;
        if (ciou > 1) ciou = 1;
        const int64_t pos = ((static_cast<int64_t>(n) * 3 + as.anchor) * gh + as.gy) * gw + as.gx;
        out[static_cast<size_t>(level)][static_cast<size_t>(pos)] = static_cast<S>(ciou);
      }
    }
  }
  return out;
}

namespace loss_detail {

template <typename S>
Tensor<S> square(const Tensor<S>& x) {
  return ops::mul<S>(x, x);
}

}  // namespace loss_detail

// Composite detection loss over a batch:
//   box: mean(1 - CIoU) over assigned anchors
//   obj: per-level balanced BCE of objectness against clamped detached CIoU
//   cls: cross_entropy(one-hot, per-class sigmoid) averaged over assignments
//   reg: optional mixed penalty over convolution weights
// total = box_gain*box + obj_gain*obj + cls_gain*cls + reg
template <typename S>
DetectionLossResult<S> detection_loss(const std::array<Tensor<S>, 3>& heads,
                                      const std::vector<std::vector<Assignment>>& per_image,
                                      const ArchConfig& cfg, const LossWeights& gains,
                                      const RegConfig& reg, std::vector<NamedTensor<S>>& params,
                                      const std::vector<std::vector<S>>* fixed_obj_targets =
                                          nullptr) {
  const int nc = cfg.num_classes;
  const int comp = 5 + nc;
  const int batch = heads[0].dim(0);
  if (static_cast<int>(per_image.size()) != batch) {
    throw config_error("loss: assignment list does not match batch size");
  }

  // objectness targets are treated as constants; freezing them externally
  // makes the loss a fixed differentiable function of the head activations
  const std::vector<std::vector<S>> obj_targets =
      fixed_obj_targets ? *fixed_obj_targets : objectness_targets<S>(heads, per_image, cfg);
  if (obj_targets.size() != 3) throw config_error("loss: need one objectness map per level");

  int64_t m_total = 0;
  for (const auto& v : per_image) m_total += static_cast<int64_t>(v.size());

  Tensor<S> box_sum, cls_sum;
  std::array<Tensor<S>, 3> obj_terms;

  for (int level = 0; level < 3; ++level) {
    const Tensor<S>& head = heads[static_cast<size_t>(level)];
    const int ch = head.dim(1), gh = head.dim(2), gw = head.dim(3);
    if (ch != 3 * comp) {
      throw config_error("loss: head channels " + std::to_string(ch) + " do not match 3*(5+nc)");
    }
    const double stride = cfg.strides[static_cast<size_t>(level)];
    auto flat = [&](int n, int c, int y, int x) {
      return ((static_cast<int64_t>(n) * ch + c) * gh + y) * gw + x;
    };

    // gather indices for this level's assignments
    std::vector<int64_t> itx, ity, itw, ith, icls;
    std::vector<S> cellx, celly, aw, ah, gx1, gy1, gx2, gy2, garea, gcx, gcy, gatan;
    for (int n = 0; n < batch; ++n) {
      for (const Assignment& as : per_image[static_cast<size_t>(n)]) {
        if (as.level != level) continue;
        const int cbase = as.anchor * comp;
        itx.push_back(flat(n, cbase + 0, as.gy, as.gx));
        ity.push_back(flat(n, cbase + 1, as.gy, as.gx));
        itw.push_back(flat(n, cbase + 2, as.gy, as.gx));
        ith.push_back(flat(n, cbase + 3, as.gy, as.gx));
        if (as.class_id < 0 || as.class_id >= nc) {
          throw config_error("loss: class id " + std::to_string(as.class_id) +
                             " outside num_classes=" + std::to_string(nc));
        }
        icls.push_back(flat(n, cbase + 5 + as.class_id, as.gy, as.gx));
        cellx.push_back(static_cast<S>(as.gx));
        celly.push_back(static_cast<S>(as.gy));
        const auto& anc = cfg.anchors[static_cast<size_t>(level)][static_cast<size_t>(as.anchor)];
        aw.push_back(static_cast<S>(anc[0]));
        ah.push_back(static_cast<S>(anc[1]));
        gcx.push_back(static_cast<S>(as.gcx));
        gcy.push_back(static_cast<S>(as.gcy));
        gx1.push_back(static_cast<S>(as.gcx - as.gw / 2));
        gx2.push_back(static_cast<S>(as.gcx + as.gw / 2));
        gy1.push_back(static_cast<S>(as.gcy - as.gh / 2));
        gy2.push_back(static_cast<S>(as.gcy + as.gh / 2));
        garea.push_back(static_cast<S>(as.gw * as.gh));
        gatan.push_back(static_cast<S>(std::atan(as.gw / as.gh)));
      }
    }

    // objectness over the whole level, in (image, anchor, cell) order
    std::vector<int64_t> iobj;
    iobj.reserve(static_cast<size_t>(batch) * 3 * gh * gw);
    for (int n = 0; n < batch; ++n) {
      for (int a = 0; a < 3; ++a) {
        for (int y = 0; y < gh; ++y) {
          for (int x = 0; x < gw; ++x) iobj.push_back(flat(n, a * comp + 4, y, x));
        }
      }
    }
    const std::vector<S>& obj_target = obj_targets[static_cast<size_t>(level)];
    if (obj_target.size() != iobj.size()) {
      throw config_error("loss: objectness target map has " +
                         std::to_string(obj_target.size()) + " entries, expected " +
                         std::to_string(iobj.size()));
    }

    const size_t m = itx.size();
    if (m > 0) {
      const S eps = static_cast<S>(1e-9);
      auto cv = [&](const std::vector<S>& vals) {
        return ops::constant<S>({static_cast<int>(vals.size())}, vals);
      };
      // decoded box center and size, in input pixels
      Tensor<S> px = ops::add_const<S>(
          ops::affine<S>(ops::sigmoid<S>(ops::gather<S>(head, itx)), S(2 * stride), S(0)), [&] {
            std::vector<S> c(m);
            for (size_t i = 0; i < m; ++i) c[i] = static_cast<S>((cellx[i] - S(0.5)) * stride);
            return c;
          }());
      Tensor<S> py = ops::add_const<S>(
          ops::affine<S>(ops::sigmoid<S>(ops::gather<S>(head, ity)), S(2 * stride), S(0)), [&] {
            std::vector<S> c(m);
            for (size_t i = 0; i < m; ++i) c[i] = static_cast<S>((celly[i] - S(0.5)) * stride);
            return c;
          }());
      Tensor<S> tw2 = ops::affine<S>(ops::sigmoid<S>(ops::gather<S>(head, itw)), S(2), S(0));
      Tensor<S> th2 = ops::affine<S>(ops::sigmoid<S>(ops::gather<S>(head, ith)), S(2), S(0));
      Tensor<S> pw = ops::mul_const<S>(loss_detail::square<S>(tw2), aw);
      Tensor<S> ph = ops::mul_const<S>(loss_detail::square<S>(th2), ah);

      Tensor<S> half_w = ops::affine<S>(pw, S(0.5), S(0));
      Tensor<S> half_h = ops::affine<S>(ph, S(0.5), S(0));
      Tensor<S> px1 = ops::sub<S>(px, half_w), px2 = ops::add<S>(px, half_w);
      Tensor<S> py1 = ops::sub<S>(py, half_h), py2 = ops::add<S>(py, half_h);
      Tensor<S> gx1t = cv(gx1), gx2t = cv(gx2), gy1t = cv(gy1), gy2t = cv(gy2);

      const S inf = std::numeric_limits<S>::infinity();
      Tensor<S> iw = ops::clamp<S>(
          ops::sub<S>(ops::minimum<S>(px2, gx2t), ops::maximum<S>(px1, gx1t)), S(0), inf);
      Tensor<S> ih = ops::clamp<S>(
          ops::sub<S>(ops::minimum<S>(py2, gy2t), ops::maximum<S>(py1, gy1t)), S(0), inf);
      Tensor<S> inter = ops::mul<S>(iw, ih);
      Tensor<S> uni = ops::affine<S>(
          ops::sub<S>(ops::add<S>(ops::mul<S>(pw, ph), cv(garea)), inter), S(1), eps);
      Tensor<S> iou = ops::div<S>(inter, uni);

      Tensor<S> cw = ops::sub<S>(ops::maximum<S>(px2, gx2t), ops::minimum<S>(px1, gx1t));
      Tensor<S> chh = ops::sub<S>(ops::maximum<S>(py2, gy2t), ops::minimum<S>(py1, gy1t));
      Tensor<S> c2 = ops::affine<S>(
          ops::add<S>(loss_detail::square<S>(cw), loss_detail::square<S>(chh)), S(1), eps);
      Tensor<S> rho2 = ops::add<S>(loss_detail::square<S>(ops::sub<S>(px, cv(gcx))),
                                   loss_detail::square<S>(ops::sub<S>(py, cv(gcy))));
      Tensor<S> vterm = ops::affine<S>(
          loss_detail::square<S>(ops::sub<S>(cv(gatan), ops::atan<S>(ops::div<S>(pw, ph)))),
          static_cast<S>(4.0 / (M_PI * M_PI)), S(0));
      Tensor<S> alpha = ops::div<S>(
          vterm, ops::affine<S>(ops::add<S>(ops::affine<S>(iou, S(-1), S(1)), vterm), S(1), eps));
      Tensor<S> ciou =
          ops::sub<S>(ops::sub<S>(iou, ops::div<S>(rho2, c2)), ops::mul<S>(alpha, vterm));

      Tensor<S> level_box = ops::reduce_sum<S>(ops::affine<S>(ciou, S(-1), S(1)));
      box_sum = box_sum.defined() ? ops::add<S>(box_sum, level_box) : level_box;

      // per-class sigmoid probability of the true class, clamped, -log
      Tensor<S> probs =
          ops::clamp<S>(ops::sigmoid<S>(ops::gather<S>(head, icls)), S(1e-7), S(1));
      Tensor<S> level_cls =
          ops::reduce_sum<S>(ops::affine<S>(ops::log<S>(probs), S(-1), S(0)));
      cls_sum = cls_sum.defined() ? ops::add<S>(cls_sum, level_cls) : level_cls;
    }

    Tensor<S> obj_logits = ops::gather<S>(head, iobj);
    Tensor<S> obj_bce = ops::bce_with_logits<S>(
        obj_logits, ops::constant<S>({static_cast<int>(obj_target.size())}, obj_target));
    obj_terms[static_cast<size_t>(level)] = ops::affine<S>(
        ops::reduce_mean<S>(obj_bce), static_cast<S>(gains.obj_balance[static_cast<size_t>(level)]),
        S(0));
  }

  Tensor<S> obj = ops::add<S>(ops::add<S>(obj_terms[0], obj_terms[1]), obj_terms[2]);

  Tensor<S> box, cls;
  if (m_total > 0) {
    const S inv_m = S(1) / static_cast<S>(m_total);
    box = ops::affine<S>(box_sum, inv_m, S(0));
    cls = ops::affine<S>(cls_sum, inv_m, S(0));
  } else {
    box = Tensor<S>::scalar(S(0));
    cls = Tensor<S>::scalar(S(0));
  }

  Tensor<S> total = ops::add<S>(
      ops::add<S>(ops::affine<S>(box, static_cast<S>(gains.box_gain), S(0)),
                  ops::affine<S>(obj, static_cast<S>(gains.obj_gain), S(0))),
      ops::affine<S>(cls, static_cast<S>(gains.cls_gain), S(0)));

  DetectionLossResult<S> res;
  res.parts.box_loss = static_cast<double>(box.item());
  res.parts.obj_loss = static_cast<double>(obj.item());
  res.parts.cls_loss = static_cast<double>(cls.item());
  if (reg.enabled) {
    Tensor<S> reg_t = mixed_regularization<S>(params, reg.alpha);
    res.parts.reg_term = static_cast<double>(reg_t.item());
    total = ops::add<S>(total, reg_t);
  }
  res.total = total;
  res.parts.total = static_cast<double>(total.item());
  return res;
}

}  // namespace tfnk
