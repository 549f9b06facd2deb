#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tfnk/assign.hpp"
#include "tfnk/checkpoint.hpp"
#include "tfnk/data.hpp"
#include "tfnk/graph.hpp"
#include "tfnk/loss.hpp"
#include "tfnk/metrics.hpp"
#include "tfnk/optim.hpp"
#include "tfnk/postprocess.hpp"

namespace tfnk {

struct TrainOptions {
  OptimConfig optim;
  LossWeights gains;
  RegConfig reg;
  AssignConfig assign;
  DecodeConfig eval_decode;
  bool mosaic = false;
  double mosaic_prob = 1.0;
  uint64_t seed = 0;
  std::string out_dir;  // empty: keep everything in memory only
  bool verbose = false;
};

struct EpochRow {
  int epoch = 0;  // 1-based in logs
  double lr = 0;
  LossBreakdown loss;
  double precision = 0, recall = 0, map50 = 0, mean_iou = 0;
  double seconds = 0;
};

struct TrainResult {
  std::vector<EpochRow> rows;
  int best_epoch = 0;  // 1-based; 0 = no epoch ran
  double best_map50 = 0;
  int epochs_run = 0;
  bool early_stopped = false;
  bool diverged = false;
  std::string divergence_message;
};

namespace train_detail {

// [N,3,S,S] batch tensor; single-channel images are replicated across RGB.
template <typename S>
Tensor<S> batch_tensor(const std::vector<Sample>& batch, int size) {
  const int n = static_cast<int>(batch.size());
  std::vector<S> data(static_cast<size_t>(n) * 3 * size * size);
  for (int i = 0; i < n; ++i) {
    const Image& im = batch[static_cast<size_t>(i)].image;
    if (im.h != size || im.w != size) {
      throw config_error("train: batch image is " + std::to_string(im.w) + "x" +
                         std::to_string(im.h) + ", expected " + std::to_string(size));
    }
    for (int c = 0; c < 3; ++c) {
      const int src_c = im.c == 1 ? 0 : c;
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          data[((static_cast<size_t>(i) * 3 + c) * size + y) * size + x] =
              static_cast<S>(im.at(y, x, src_c));
        }
      }
    }
  }
  return Tensor<S>({n, 3, size, size}, std::move(data));
}

template <typename S>
std::array<HeadArray, 3> heads_for_image(const std::array<Tensor<S>, 3>& heads, int image) {
  std::array<HeadArray, 3> out;
  for (int l = 0; l < 3; ++l) {
    const Tensor<S>& h = heads[static_cast<size_t>(l)];
    const int c = h.dim(1), gh = h.dim(2), gw = h.dim(3);
    HeadArray& a = out[static_cast<size_t>(l)];
    a.c = c;
    a.h = gh;
    a.w = gw;
    a.data.resize(static_cast<size_t>(c) * gh * gw);
    const size_t base = static_cast<size_t>(image) * a.data.size();
    for (size_t i = 0; i < a.data.size(); ++i) {
      a.data[i] = static_cast<float>(h.data()[base + i]);
    }
  }
  return out;
}

inline std::vector<GroundTruth> ground_truth_of(const Sample& s) {
  std::vector<GroundTruth> gts;
  for (const BoxLabel& b : s.labels) {
    GroundTruth g;
    g.x1 = (b.cx - b.w / 2) * s.image.w;
    g.y1 = (b.cy - b.h / 2) * s.image.h;
    g.x2 = (b.cx + b.w / 2) * s.image.w;
    g.y2 = (b.cy + b.h / 2) * s.image.h;
    g.class_id = b.class_id;
    g.norm_w = b.w;
    gts.push_back(g);
  }
  return gts;
}

}  // namespace train_detail

// Validation pass: letterboxed inference, decode, class-aware suppression,
// mapping back to original coordinates, then dataset-level metrics.
template <typename S>
EvalReport validate_model(ModelGraph<S>& model, const std::vector<Sample>& val,
                          const TrainOptions& opt) {
  const int size = model.cfg().input_size;
  std::vector<EvalInput> inputs;
  for (const Sample& s : val) {
    Sample enhanced = contrast_enhance(s);
    auto [boxed, rec] = letterbox(enhanced, size);
    Tensor<S> x = train_detail::batch_tensor<S>({boxed}, size);
    auto heads = model.forward(x, false);
    auto arrays = train_detail::heads_for_image<S>(heads, 0);
    std::vector<Detection> dets = decode(arrays, model.cfg(), opt.eval_decode);
    dets = nms(std::move(dets), opt.assign.iou_threshold, opt.eval_decode.max_detections);
    dets = map_to_original(dets, rec);
    EvalInput in;
    in.dets = std::move(dets);
    in.gts = train_detail::ground_truth_of(s);
    inputs.push_back(std::move(in));
  }
  EvalConfig ec;
  ec.conf_threshold = opt.eval_decode.conf_threshold;
  ec.iou_min = 0.5;
  return evaluate(inputs, ec);
}

// Full training loop: seeded shuffling, optional mosaic composition, loss
// and backward per batch, SGD with the warmup/cosine schedule, per-epoch
// validation, early stopping on mAP@0.5, best/last checkpoints plus a
// JSONL run log when out_dir is set.
template <typename S>
TrainResult train(ModelGraph<S>& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainOptions& opt) {
  if (train_set.empty()) throw config_error("train: empty training set");
  const int size = model.cfg().input_size;
  const OptimConfig& oc = opt.optim;
  SgdOptimizer<S> sgd(oc);
  TrainResult result;

  std::ofstream runlog;
  if (!opt.out_dir.empty()) {
    runlog.open(opt.out_dir + "/runlog.jsonl", std::ios::trunc);
    if (!runlog) throw config_error("train: cannot write " + opt.out_dir + "/runlog.jsonl");
  }
  auto save_model = [&](const std::string& name) {
    if (opt.out_dir.empty()) return;
    save_checkpoint(opt.out_dir + "/" + name, model.to_checkpoint());
  };

  const int n = static_cast<int>(train_set.size());
  const int bs = std::max(1, oc.batch_size);
  const int num_batches = (n + bs - 1) / bs;
  double best = -1.0;
  int best_epoch = 0;

  if (oc.epochs == 0) {
    save_model("best.ckpt");
    save_model("last.ckpt");
    return result;
  }

  for (int epoch = 0; epoch < oc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng erng(opt.seed + 0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(epoch + 1));
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    erng.shuffle(order);

    double box_acc = 0, obj_acc = 0, cls_acc = 0, reg_acc = 0, total_acc = 0;
    int images_acc = 0;
    double last_lr = 0;

    try {
      for (int b = 0; b < num_batches; ++b) {
        std::vector<Sample> batch;
        for (int i = b * bs; i < std::min(n, (b + 1) * bs); ++i) {
          const Sample& s = train_set[static_cast<size_t>(order[static_cast<size_t>(i)])];
          if (opt.mosaic && erng.uniform() < opt.mosaic_prob) {
            std::array<Sample, 4> quad;
            quad[0] = contrast_enhance(s);
            for (int q = 1; q < 4; ++q) {
              const int pick = erng.uniform_int(0, n - 1);
              quad[static_cast<size_t>(q)] =
                  contrast_enhance(train_set[static_cast<size_t>(pick)]);
            }
            const uint64_t mhi = erng.next_u32();
            const uint64_t mlo = erng.next_u32();
            batch.push_back(mosaic(quad, size, (mhi << 32) | mlo));
          } else {
            batch.push_back(letterbox(contrast_enhance(s), size).first);
          }
        }
        std::vector<std::vector<Assignment>> per_image;
        for (const Sample& s : batch) {
          per_image.push_back(assign_targets(s.labels, model.cfg(), opt.assign));
        }
        Tensor<S> x = train_detail::batch_tensor<S>(batch, size);

        const double t_frac =
            (static_cast<double>(epoch) * num_batches + b) /
            (static_cast<double>(oc.epochs) * num_batches);
        last_lr = lr_schedule(t_frac, oc).lr_main;

        Tape<S> tape;
        {
          typename Tape<S>::Scope scope(tape);
          auto heads = model.forward(x, true);
          auto res =
              detection_loss<S>(heads, per_image, model.cfg(), opt.gains, opt.reg, model.params());
          tape.backward(res.total);
          const int bn = static_cast<int>(batch.size());
          box_acc += res.parts.box_loss * bn;
          obj_acc += res.parts.obj_loss * bn;
          cls_acc += res.parts.cls_loss * bn;
          reg_acc += res.parts.reg_term * bn;
          total_acc += res.parts.total * bn;
          images_acc += bn;
        }
        sgd.step(model.params(), t_frac);
        model.zero_grads();
        tape.clear();
      }
    } catch (const numeric_error& e) {
      save_model("last.ckpt");
      result.diverged = true;
      result.divergence_message = e.what();
      result.epochs_run = epoch;
      if (runlog.is_open()) runlog.flush();
      throw;
    }

    EpochRow row;
    row.epoch = epoch + 1;
    row.lr = last_lr;
    row.loss.box_loss = box_acc / images_acc;
    row.loss.obj_loss = obj_acc / images_acc;
    row.loss.cls_loss = cls_acc / images_acc;
    row.loss.reg_term = reg_acc / images_acc;
    row.loss.total = total_acc / images_acc;

    if (!val_set.empty()) {
      EvalReport er = validate_model<S>(model, val_set, opt);
      row.precision = std::isnan(er.precision) ? 0.0 : er.precision;
      row.recall = er.recall;
      row.map50 = er.map50;
      row.mean_iou = std::isnan(er.mean_iou) ? 0.0 : er.mean_iou;
    }
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.rows.push_back(row);
    result.epochs_run = epoch + 1;

    if (row.map50 > best) {
      best = row.map50;
      best_epoch = epoch + 1;
      save_model("best.ckpt");
    }
    save_model("last.ckpt");

    if (runlog.is_open()) {
      nlohmann::ordered_json j;
      j["epoch"] = row.epoch;
      j["lr"] = row.lr;
      j["box"] = row.loss.box_loss;
      j["obj"] = row.loss.obj_loss;
      j["cls"] = row.loss.cls_loss;
      j["reg"] = row.loss.reg_term;
      j["total"] = row.loss.total;
      j["precision"] = row.precision;
      j["recall"] = row.recall;
      j["map50"] = row.map50;
      j["mean_iou"] = row.mean_iou;
      j["seconds"] = row.seconds;
      runlog << j.dump() << '\n';
      runlog.flush();
    }
    if (opt.verbose) {
      std::fprintf(stderr,
                   "epoch %3d  lr %.5f  box %.5f  obj %.5f  cls %.5f  total %.5f  map50 %.4f\n",
                   row.epoch, row.lr, row.loss.box_loss, row.loss.obj_loss, row.loss.cls_loss,
                   row.loss.total, row.map50);
    }

    if (!val_set.empty() && oc.patience > 0 && (epoch + 1) - best_epoch >= oc.patience) {
      result.early_stopped = true;
      break;
    }
  }

  result.best_epoch = best_epoch;
  result.best_map50 = best < 0 ? 0 : best;
  return result;
}

}  // namespace tfnk
