#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "helpers.hpp"
#include "tfnk/checkpoint.hpp"
#include "tfnk/graph.hpp"
#include "tfnk/loss.hpp"
#include "tfnk/optim.hpp"
#include "tfnk/rng.hpp"
#include "tfnk/synth.hpp"
#include "tfnk/train.hpp"

using tfnk::lr_schedule;
using tfnk::ModelGraph;
using tfnk::NamedTensor;
using tfnk::OptimConfig;
using tfnk::ParamGroup;
using tfnk::Rng;
using tfnk::Sample;
using tfnk::Tensor;
using tfnk::TrainOptions;

namespace {

std::vector<Sample> tiny_scenes(int count, uint64_t seed, int size = 64) {
  tfnk::SynthConfig sc;
  sc.image_size = size;
  sc.targets_min = 1;
  sc.targets_max = 1;
  sc.mix_small = 0;
  sc.mix_medium = 0;
  sc.mix_large = 1;
  std::vector<Sample> out;
  for (int i = 0; i < count; ++i) out.push_back(tfnk::synth_scene(sc, seed + i));
  return out;
}

tfnk::ArchConfig tiny_cfg() { return tfnk::make_family_config("tiny", 0.33, 0.1, 1, 64); }

}  // namespace

TEST_CASE("lr schedule hits its control points") {
  OptimConfig oc;
  oc.lr0 = 0.01;
  oc.lrf = 0.1;
  oc.epochs = 300;
  oc.warmup_epochs = 3;
  const double wf = 3.0 / 300.0;

  auto p0 = lr_schedule(0.0, oc);
  CHECK(p0.lr_main == 0.0);
  CHECK(p0.lr_bias == doctest::Approx(oc.warmup_bias_lr).epsilon(1e-12));
  CHECK(p0.momentum == doctest::Approx(oc.warmup_momentum).epsilon(1e-12));

  auto pw = lr_schedule(wf, oc);
  CHECK(pw.lr_main == doctest::Approx(oc.lr0).epsilon(1e-12));
  CHECK(pw.lr_bias == doctest::Approx(oc.lr0).epsilon(1e-12));
  CHECK(pw.momentum == doctest::Approx(0.937).epsilon(1e-12));

  auto p1 = lr_schedule(1.0, oc);
  CHECK(p1.lr_main == doctest::Approx(oc.lr0 * oc.lrf).epsilon(1e-12));

  auto pm = lr_schedule(wf + (1.0 - wf) / 2, oc);
  CHECK(pm.lr_main == doctest::Approx(oc.lr0 * (1 + oc.lrf) / 2).epsilon(1e-12));

  // continuity across the warmup boundary
  const double eps = 1e-11;
  CHECK(std::fabs(lr_schedule(wf - eps, oc).lr_main - lr_schedule(wf + eps, oc).lr_main) <
        1e-9);
  CHECK(std::fabs(lr_schedule(wf - eps, oc).momentum -
                  lr_schedule(wf + eps, oc).momentum) < 1e-9);

  // out-of-range t clamps
  CHECK(lr_schedule(-0.5, oc).lr_main == lr_schedule(0.0, oc).lr_main);
  CHECK(lr_schedule(1.5, oc).lr_main == lr_schedule(1.0, oc).lr_main);

  // warmup longer than the run: pure warmup, never the cosine branch
  OptimConfig shortrun = oc;
  shortrun.epochs = 2;
  CHECK(lr_schedule(0.5, shortrun).lr_main ==
        doctest::Approx(0.5 * oc.lr0).epsilon(1e-12));
}

TEST_CASE("sgd steps match the worked examples") {
  std::vector<double> w{0.0}, v{0.0};
  tfnk::sgd_step_one<double>(w, {1.0}, v, 0.1, 0.0, 0.0);
  CHECK(w[0] == doctest::Approx(-0.1).epsilon(1e-15));

  w = {0.0};
  v = {0.0};
  tfnk::sgd_step_one<double>(w, {1.0}, v, 1.0, 0.9, 0.0);
  CHECK(w[0] == doctest::Approx(-1.0).epsilon(1e-15));
  tfnk::sgd_step_one<double>(w, {1.0}, v, 1.0, 0.9, 0.0);
  CHECK(w[0] == doctest::Approx(-2.9).epsilon(1e-12));
}

TEST_CASE("the optimizer matches a scalar simulation over ten steps") {
  OptimConfig oc;
  oc.lr0 = 0.05;
  oc.lrf = 0.2;
  oc.momentum = 0.9;
  oc.weight_decay = 0.01;
  oc.warmup_epochs = 2;
  oc.epochs = 10;

  auto mk = [](const std::string& n, std::vector<double> vals, ParamGroup g) {
    Tensor<double> t({static_cast<int>(vals.size())}, vals);
    t.set_requires_grad(true);
    return NamedTensor<double>{n, t, g};
  };
  std::vector<NamedTensor<double>> params{
      mk("w", {0.5, -0.3, 0.9}, ParamGroup::ConvWeight),
      mk("b", {0.1, -0.2}, ParamGroup::Bias),
      mk("g", {1.0, 0.7}, ParamGroup::Norm),
  };
  std::vector<std::vector<double>> sim{{0.5, -0.3, 0.9}, {0.1, -0.2}, {1.0, 0.7}};
  std::vector<std::vector<double>> vel{{0, 0, 0}, {0, 0}, {0, 0}};

  tfnk::SgdOptimizer<double> sgd(oc);
  Rng rng(404);
  for (int step = 0; step < 10; ++step) {
    const double t = step / 10.0;
    std::vector<std::vector<double>> grads;
    for (auto& p : params) {
      std::vector<double> g(p.tensor.data().size());
      for (double& x : g) x = rng.uniform(-1.0, 1.0);
      p.tensor.zero_grad();
      auto& dst = p.tensor.grad();
      for (size_t i = 0; i < g.size(); ++i) dst[i] = g[i];
      grads.push_back(std::move(g));
    }
    const tfnk::LrPoint lp = lr_schedule(t, oc);
    const double lrs[3] = {lp.lr_main, lp.lr_bias, lp.lr_main};
    const double wds[3] = {oc.weight_decay, 0.0, 0.0};
    for (int k = 0; k < 3; ++k) {
      for (size_t i = 0; i < sim[static_cast<size_t>(k)].size(); ++i) {
        auto& sv = sim[static_cast<size_t>(k)][i];
        auto& vv = vel[static_cast<size_t>(k)][i];
        const double g = grads[static_cast<size_t>(k)][i] + wds[k] * sv;
        vv = lp.momentum * vv + g;
        sv -= lrs[k] * vv;
      }
    }
    sgd.step(params, t);
    for (int k = 0; k < 3; ++k)
      for (size_t i = 0; i < sim[static_cast<size_t>(k)].size(); ++i)
        CHECK(std::fabs(params[static_cast<size_t>(k)].tensor.data()[i] -
                        sim[static_cast<size_t>(k)][i]) < 1e-12);
  }
}

TEST_CASE("the optimizer rejects non-finite gradients before updating anything") {
  auto mk = [](const std::string& n, std::vector<double> vals) {
    Tensor<double> t({static_cast<int>(vals.size())}, vals);
    t.set_requires_grad(true);
    return NamedTensor<double>{n, t, ParamGroup::ConvWeight};
  };
  std::vector<NamedTensor<double>> params{mk("model.0.weight", {0.5}),
                                          mk("model.1.weight", {0.7})};
  params[0].tensor.grad()[0] = 1.0;
  params[1].tensor.grad()[0] = std::nan("");

  tfnk::SgdOptimizer<double> sgd(OptimConfig{});
  try {
    sgd.step(params, 0.5);
    FAIL("expected numeric_error");
  } catch (const tfnk::numeric_error& e) {
    CHECK(std::string(e.what()).find("model.1.weight") != std::string::npos);
  }
  CHECK(params[0].tensor.data()[0] == 0.5);
  CHECK(params[1].tensor.data()[0] == 0.7);
}

TEST_CASE("the mixed penalty alone shrinks weight magnitudes every step") {
  for (double alpha : {0.0, 0.5, 1.0}) {
    auto mk = [](const std::string& n, std::vector<double> vals, ParamGroup g) {
      Tensor<double> t({static_cast<int>(vals.size())}, vals);
      t.set_requires_grad(true);
      return NamedTensor<double>{n, t, g};
    };
    std::vector<NamedTensor<double>> params{
        mk("w", {0.8, -0.6, 0.4}, ParamGroup::ConvWeight),
        mk("b", {0.5}, ParamGroup::Bias),
    };
    OptimConfig oc;
    oc.lr0 = 0.001;
    oc.lrf = 1.0;
    oc.weight_decay = 0.0;
    oc.warmup_epochs = 0;
    tfnk::SgdOptimizer<double> sgd(oc);

    for (int step = 0; step < 5; ++step) {
      std::vector<double> before = params[0].tensor.data();
      for (auto& p : params) p.tensor.zero_grad();
      tfnk::Tape<double> tape;
      {
        tfnk::Tape<double>::Scope scope(tape);
        Tensor<double> reg = tfnk::mixed_regularization<double>(params, alpha);
        tape.backward(reg);
      }
      sgd.step(params, 0.5);
      for (size_t i = 0; i < before.size(); ++i)
        CHECK(std::fabs(params[0].tensor.data()[i]) < std::fabs(before[i]));
      // bias is not penalized and must not move
      CHECK(params[1].tensor.data()[0] == 0.5);
    }
  }
}

TEST_CASE("early stopping fires exactly patience epochs after the best") {
  auto cfg = tiny_cfg();
  auto scenes = tiny_scenes(3, 42);
  // zero learning rate everywhere: the validation metric is frozen, so the
  // first epoch stays the best forever
  TrainOptions opt;
  opt.optim.lr0 = 0.0;
  opt.optim.warmup_epochs = 0;
  opt.optim.batch_size = 3;
  opt.seed = 1;

  opt.optim.epochs = 20;
  opt.optim.patience = 5;
  auto model = ModelGraph<float>::build(cfg, 7);
  auto res = tfnk::train<float>(model, scenes, scenes, opt);
  CHECK(res.early_stopped);
  CHECK(res.best_epoch == 1);
  CHECK(res.epochs_run == 6);

  opt.optim.patience = 3;
  auto model2 = ModelGraph<float>::build(cfg, 7);
  auto res2 = tfnk::train<float>(model2, scenes, scenes, opt);
  CHECK(res2.early_stopped);
  CHECK(res2.epochs_run == 4);

  // patience disabled or longer than the run never exceeds the epoch cap
  opt.optim.epochs = 4;
  opt.optim.patience = 0;
  auto model3 = ModelGraph<float>::build(cfg, 7);
  auto res3 = tfnk::train<float>(model3, scenes, scenes, opt);
  CHECK(!res3.early_stopped);
  CHECK(res3.epochs_run == 4);

  opt.optim.epochs = 3;
  opt.optim.patience = 50;
  auto model4 = ModelGraph<float>::build(cfg, 7);
  auto res4 = tfnk::train<float>(model4, scenes, scenes, opt);
  CHECK(!res4.early_stopped);
  CHECK(res4.epochs_run == 3);
}

TEST_CASE("a one-batch epoch with the penalty adds exactly its value") {
  auto cfg = tiny_cfg();
  auto scenes = tiny_scenes(2, 99);
  TrainOptions opt;
  opt.optim.epochs = 1;
  opt.optim.batch_size = 4;
  opt.optim.patience = 0;
  opt.seed = 5;
  opt.reg.alpha = 0.5;

  auto off_model = ModelGraph<double>::build(cfg, 3);
  const double reg_at_init =
      tfnk::mixed_regularization_value<double>(off_model.params(), opt.reg.alpha);

  opt.reg.enabled = false;
  auto off = tfnk::train<double>(off_model, scenes, {}, opt);

  opt.reg.enabled = true;
  auto on_model = ModelGraph<double>::build(cfg, 3);
  auto on = tfnk::train<double>(on_model, scenes, {}, opt);

  REQUIRE(off.rows.size() == 1);
  REQUIRE(on.rows.size() == 1);
  CHECK(on.rows[0].loss.box_loss == off.rows[0].loss.box_loss);
  CHECK(on.rows[0].loss.obj_loss == off.rows[0].loss.obj_loss);
  CHECK(on.rows[0].loss.cls_loss == off.rows[0].loss.cls_loss);
  CHECK(off.rows[0].loss.reg_term == 0.0);
  CHECK(testutil::rel_err(on.rows[0].loss.reg_term, reg_at_init) < 1e-12);
  CHECK(testutil::rel_err(on.rows[0].loss.total - off.rows[0].loss.total, reg_at_init) <
        1e-12);
}

TEST_CASE("divergence aborts with a numeric error and a saved checkpoint") {
  auto cfg = tiny_cfg();
  auto scenes = tiny_scenes(2, 17);
  testutil::TempDir tmp("diverge");
  TrainOptions opt;
  opt.optim.lr0 = 1e15;
  opt.optim.warmup_epochs = 0;
  opt.optim.epochs = 5;
  opt.optim.batch_size = 2;
  opt.optim.patience = 0;
  opt.seed = 2;
  opt.out_dir = tmp.str();

  auto model = ModelGraph<float>::build(cfg, 11);
  CHECK_THROWS_AS(tfnk::train<float>(model, scenes, {}, opt), tfnk::numeric_error);
  auto entries = tfnk::load_checkpoint(tmp.str() + "/last.ckpt");
  CHECK(!entries.empty());
}

TEST_CASE("zero epochs saves the untrained model") {
  auto cfg = tiny_cfg();
  auto scenes = tiny_scenes(1, 55);
  testutil::TempDir tmp("ep0");
  TrainOptions opt;
  opt.optim.epochs = 0;
  opt.out_dir = tmp.str();

  auto model = ModelGraph<float>::build(cfg, 23);
  auto res = tfnk::train<float>(model, scenes, scenes, opt);
  CHECK(res.epochs_run == 0);
  CHECK(res.best_epoch == 0);
  CHECK(res.rows.empty());

  auto want = model.to_checkpoint();
  auto best = tfnk::load_checkpoint(tmp.str() + "/best.ckpt");
  auto last = tfnk::load_checkpoint(tmp.str() + "/last.ckpt");
  REQUIRE(best.size() == want.size());
  REQUIRE(last.size() == want.size());
  for (size_t i = 0; i < want.size(); ++i) {
    CHECK(best[i].name == want[i].name);
    CHECK(best[i].values == want[i].values);
    CHECK(last[i].values == want[i].values);
  }
}

TEST_CASE("training rejects an empty training set") {
  auto cfg = tiny_cfg();
  auto model = ModelGraph<float>::build(cfg, 1);
  TrainOptions opt;
  CHECK_THROWS_AS(tfnk::train<float>(model, {}, {}, opt), tfnk::config_error);
}

TEST_CASE("the mosaic branch trains to a finite loss") {
  auto cfg = tiny_cfg();
  auto scenes = tiny_scenes(4, 31);
  TrainOptions opt;
  opt.optim.epochs = 1;
  opt.optim.batch_size = 4;
  opt.optim.patience = 0;
  opt.mosaic = true;
  opt.mosaic_prob = 1.0;
  opt.seed = 9;

  auto model = ModelGraph<float>::build(cfg, 13);
  auto res = tfnk::train<float>(model, scenes, {}, opt);
  REQUIRE(res.rows.size() == 1);
  CHECK(std::isfinite(res.rows[0].loss.total));
  CHECK(res.rows[0].loss.total > 0);
}
