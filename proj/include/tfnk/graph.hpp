#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tfnk/arch.hpp"
#include "tfnk/checkpoint.hpp"
#include "tfnk/ops.hpp"
#include "tfnk/rng.hpp"
#include "tfnk/tensor.hpp"

namespace tfnk {

enum class ParamGroup { ConvWeight, Bias, Norm };

template <typename S>
struct NamedTensor {
  std::string name;
  Tensor<S> tensor;
  ParamGroup group = ParamGroup::ConvWeight;
};

inline constexpr double kBnEps = 1e-3;
inline constexpr double kBnMomentum = 0.03;

// c, h, w of one feature map
using FeatShape = std::array<int, 3>;

template <typename S>
Tensor<S> init_conv_weight(int cout, int cin, int k, Rng& rng) {
  const double bound = std::sqrt(1.0 / (static_cast<double>(cin) * k * k));
  Tensor<S> w({cout, cin, k, k});
  for (auto& v : w.data()) v = static_cast<S>(rng.uniform(-bound, bound));
  w.set_requires_grad(true);
  return w;
}

// Convolution + batch norm + activation. Padding is always k/2.
template <typename S>
struct ConvUnit {
  Tensor<S> w, gamma, beta, rmean, rvar;
  int cin = 0, cout = 0, k = 1, stride = 1;
  Activation act = Activation::Silu;
  S slope = S(0.1);

  static ConvUnit make(int cin, int cout, int k, int stride, const ArchConfig& cfg, Rng& rng) {
    ConvUnit u;
    u.cin = cin;
    u.cout = cout;
    u.k = k;
    u.stride = stride;
    u.act = cfg.activation;
    u.slope = static_cast<S>(cfg.leaky_slope);
    u.w = init_conv_weight<S>(cout, cin, k, rng);
    u.gamma = Tensor<S>({cout}, S(1));
    u.beta = Tensor<S>({cout}, S(0));
    u.gamma.set_requires_grad(true);
    u.beta.set_requires_grad(true);
    u.rmean = Tensor<S>({cout}, S(0));
    u.rvar = Tensor<S>({cout}, S(1));
    return u;
  }

  Tensor<S> forward(const Tensor<S>& x, bool training) {
    Tensor<S> y = ops::conv2d<S>(x, w, Tensor<S>(), stride, k / 2);
    y = ops::batch_norm<S>(y, gamma, beta, rmean, rvar, training, static_cast<S>(kBnMomentum),
                           static_cast<S>(kBnEps));
    return act == Activation::Silu ? ops::silu<S>(y) : ops::leaky_relu<S>(y, slope);
  }

  void collect(const std::string& prefix, std::vector<NamedTensor<S>>& params,
               std::vector<NamedTensor<S>>& buffers) {
    params.push_back({prefix + ".conv.weight", w, ParamGroup::ConvWeight});
    params.push_back({prefix + ".bn.gamma", gamma, ParamGroup::Norm});
    params.push_back({prefix + ".bn.beta", beta, ParamGroup::Norm});
    buffers.push_back({prefix + ".bn.running_mean", rmean, ParamGroup::Norm});
    buffers.push_back({prefix + ".bn.running_var", rvar, ParamGroup::Norm});
  }

  int64_t param_count() const {
    return static_cast<int64_t>(k) * k * cin * cout + 2 * static_cast<int64_t>(cout);
  }

  // conv MACs at 2 each, plus one op per output element for norm and for act
  int64_t flops(int h_out, int w_out) const {
    const int64_t hw = static_cast<int64_t>(h_out) * w_out;
    return 2ll * k * k * cin * cout * hw + 2ll * cout * hw;
  }

  std::pair<int, int> out_hw(std::pair<int, int> in) const {
    return {(in.first + 2 * (k / 2) - k) / stride + 1, (in.second + 2 * (k / 2) - k) / stride + 1};
  }
};

template <typename S>
struct Block {
  LayerSpec spec;
  int index = 0;
  std::vector<int> inputs;  // absolute row indices; -1 is the network input
  int c_in = 0, c_out = 0, repeats = 1;

  virtual ~Block() = default;
  virtual Tensor<S> run(const std::vector<Tensor<S>>& ins, bool training) = 0;
  virtual void collect(std::vector<NamedTensor<S>>& params, std::vector<NamedTensor<S>>& buffers) {}
  virtual int64_t flops(const std::vector<FeatShape>& ins) const { return 0; }
  virtual FeatShape out_shape(const std::vector<FeatShape>& ins) const = 0;
  virtual int layer_contrib() const = 0;

 protected:
  std::string prefix() const { return "l" + std::to_string(index); }
};

template <typename S>
struct FocusBlock : Block<S> {
  ConvUnit<S> cv;

  Tensor<S> run(const std::vector<Tensor<S>>& ins, bool training) override {
    return cv.forward(ops::space_to_depth2<S>(ins[0]), training);
  }
  void collect(std::vector<NamedTensor<S>>& p, std::vector<NamedTensor<S>>& b) override {
    cv.collect(this->prefix() + ".cv", p, b);
  }
  int64_t flops(const std::vector<FeatShape>& ins) const override {
    return cv.flops(ins[0][1] / 2, ins[0][2] / 2);
  }
  FeatShape out_shape(const std::vector<FeatShape>& ins) const override {
    return {this->c_out, ins[0][1] / 2, ins[0][2] / 2};
  }
  int layer_contrib() const override { return 4; }
};

template <typename S>
struct ConvBlock : Block<S> {
  ConvUnit<S> cv;

  Tensor<S> run(const std::vector<Tensor<S>>& ins, bool training) override {
    return cv.forward(ins[0], training);
  }
  void collect(std::vector<NamedTensor<S>>& p, std::vector<NamedTensor<S>>& b) override {
    cv.collect(this->prefix() + ".cv", p, b);
  }
  int64_t flops(const std::vector<FeatShape>& ins) const override {
    auto [h, w] = cv.out_hw({ins[0][1], ins[0][2]});
    return cv.flops(h, w);
  }
  FeatShape out_shape(const std::vector<FeatShape>& ins) const override {
    auto [h, w] = cv.out_hw({ins[0][1], ins[0][2]});
    return {this->c_out, h, w};
  }
  int layer_contrib() const override { return 3; }
};

template <typename S>
struct Bottleneck {
  ConvUnit<S> cv1, cv2;
  bool shortcut = true;

  Tensor<S> forward(const Tensor<S>& x, bool training) {
    Tensor<S> y = cv2.forward(cv1.forward(x, training), training);
    return shortcut ? ops::add<S>(x, y) : y;
  }
};

// Cross-stage partial block: a main path of bottlenecks next to a bypass
// projection, joined by concat + norm + activation + a final fuse unit.
template <typename S>
struct CSPBlock : Block<S> {
  int c_hidden = 0;
  ConvUnit<S> cv1, cv4;
  Tensor<S> cv2_w, cv3_w;  // plain 1x1 convs, no bias
  Tensor<S> bn_gamma, bn_beta, bn_rmean, bn_rvar;
  std::vector<Bottleneck<S>> m;
  Activation act = Activation::Silu;
  S slope = S(0.1);

  Tensor<S> run(const std::vector<Tensor<S>>& ins, bool training) override {
    Tensor<S> y1 = cv1.forward(ins[0], training);
    for (auto& bneck : m) y1 = bneck.forward(y1, training);
    y1 = ops::conv2d<S>(y1, cv3_w, Tensor<S>(), 1, 0);
    Tensor<S> y2 = ops::conv2d<S>(ins[0], cv2_w, Tensor<S>(), 1, 0);
    Tensor<S> y = ops::channel_concat<S>({y1, y2});
    y = ops::batch_norm<S>(y, bn_gamma, bn_beta, bn_rmean, bn_rvar, training,
                           static_cast<S>(kBnMomentum), static_cast<S>(kBnEps));
    y = act == Activation::Silu ? ops::silu<S>(y) : ops::leaky_relu<S>(y, slope);
    return cv4.forward(y, training);
  }

  void collect(std::vector<NamedTensor<S>>& p, std::vector<NamedTensor<S>>& b) override {
    const std::string pre = this->prefix();
    cv1.collect(pre + ".cv1", p, b);
    p.push_back({pre + ".cv2.weight", cv2_w, ParamGroup::ConvWeight});
    p.push_back({pre + ".cv3.weight", cv3_w, ParamGroup::ConvWeight});
    p.push_back({pre + ".bn.gamma", bn_gamma, ParamGroup::Norm});
    p.push_back({pre + ".bn.beta", bn_beta, ParamGroup::Norm});
    b.push_back({pre + ".bn.running_mean", bn_rmean, ParamGroup::Norm});
    b.push_back({pre + ".bn.running_var", bn_rvar, ParamGroup::Norm});
    cv4.collect(pre + ".cv4", p, b);
    for (size_t j = 0; j < m.size(); ++j) {
      m[j].cv1.collect(pre + ".m" + std::to_string(j) + ".cv1", p, b);
      m[j].cv2.collect(pre + ".m" + std::to_string(j) + ".cv2", p, b);
    }
  }

  int64_t flops(const std::vector<FeatShape>& ins) const override {
    const int64_t hw = static_cast<int64_t>(ins[0][1]) * ins[0][2];
    int64_t f = cv1.flops(ins[0][1], ins[0][2]);
    for (const auto& bneck : m) {
      f += bneck.cv1.flops(ins[0][1], ins[0][2]) + bneck.cv2.flops(ins[0][1], ins[0][2]);
      if (bneck.shortcut) f += static_cast<int64_t>(c_hidden) * hw;
    }
    f += 2ll * this->c_in * c_hidden * hw;       // cv2
    f += 2ll * c_hidden * c_hidden * hw;         // cv3
    f += 2ll * 2 * c_hidden * hw * 2;            // norm + act over 2*c_hidden channels
    f += cv4.flops(ins[0][1], ins[0][2]);
    return f;
  }

  FeatShape out_shape(const std::vector<FeatShape>& ins) const override {
    return {this->c_out, ins[0][1], ins[0][2]};
  }
  int layer_contrib() const override { return 12 + 7 * static_cast<int>(m.size()); }
};

template <typename S>
struct SPPBlock : Block<S> {
  int c_hidden = 0;
  ConvUnit<S> cv1, cv2;
  std::vector<int> pool_kernels;

  Tensor<S> run(const std::vector<Tensor<S>>& ins, bool training) override {
    Tensor<S> x = cv1.forward(ins[0], training);
    std::vector<Tensor<S>> cats{x};
    for (int k : pool_kernels) cats.push_back(ops::max_pool2d<S>(x, k, 1, k / 2));
    return cv2.forward(ops::channel_concat<S>(cats), training);
  }

  void collect(std::vector<NamedTensor<S>>& p, std::vector<NamedTensor<S>>& b) override {
    cv1.collect(this->prefix() + ".cv1", p, b);
    cv2.collect(this->prefix() + ".cv2", p, b);
  }

  int64_t flops(const std::vector<FeatShape>& ins) const override {
    const int64_t hw = static_cast<int64_t>(ins[0][1]) * ins[0][2];
    int64_t f = cv1.flops(ins[0][1], ins[0][2]);
    for (int k : pool_kernels) f += static_cast<int64_t>(k * k - 1) * c_hidden * hw;
    f += cv2.flops(ins[0][1], ins[0][2]);
    return f;
  }

  FeatShape out_shape(const std::vector<FeatShape>& ins) const override {
    return {this->c_out, ins[0][1], ins[0][2]};
  }
  int layer_contrib() const override { return 11; }
};

template <typename S>
struct UpsampleBlock : Block<S> {
  Tensor<S> run(const std::vector<Tensor<S>>& ins, bool) override {
    return ops::upsample_nearest2x<S>(ins[0]);
  }
  FeatShape out_shape(const std::vector<FeatShape>& ins) const override {
    return {ins[0][0], 2 * ins[0][1], 2 * ins[0][2]};
  }
  int layer_contrib() const override { return 1; }
};

template <typename S>
struct ConcatBlock : Block<S> {
  Tensor<S> run(const std::vector<Tensor<S>>& ins, bool) override {
    return ops::channel_concat<S>(ins);
  }
  FeatShape out_shape(const std::vector<FeatShape>& ins) const override {
    int c = 0;
    for (const auto& s : ins) c += s[0];
    return {c, ins[0][1], ins[0][2]};
  }
  int layer_contrib() const override { return 1; }
};

// Three 1x1 convs with bias, one per pyramid level. Channel layout per
// anchor a: [a*(5+nc) + {tx, ty, tw, th, tobj, cls...}].
template <typename S>
struct DetectBlock : Block<S> {
  int num_classes = 1;
  std::array<Tensor<S>, 3> w, bias;

  std::array<Tensor<S>, 3> run_heads(const std::vector<Tensor<S>>& ins, bool) {
    std::array<Tensor<S>, 3> heads;
    for (int l = 0; l < 3; ++l) heads[l] = ops::conv2d<S>(ins[l], w[l], bias[l], 1, 0);
    return heads;
  }
  Tensor<S> run(const std::vector<Tensor<S>>&, bool) override {
    throw config_error("detect: use run_heads");
  }
  void collect(std::vector<NamedTensor<S>>& p, std::vector<NamedTensor<S>>&) override {
    for (int l = 0; l < 3; ++l) {
      p.push_back({this->prefix() + ".h" + std::to_string(l) + ".weight", w[l],
                   ParamGroup::ConvWeight});
      p.push_back({this->prefix() + ".h" + std::to_string(l) + ".bias", bias[l],
                   ParamGroup::Bias});
    }
  }
  int64_t flops(const std::vector<FeatShape>& ins) const override {
    int64_t f = 0;
    for (int l = 0; l < 3; ++l) {
      const int64_t hw = static_cast<int64_t>(ins[l][1]) * ins[l][2];
      const int out_c = 3 * (5 + num_classes);
      f += 2ll * ins[l][0] * out_c * hw + static_cast<int64_t>(out_c) * hw;
    }
    return f;
  }
  FeatShape out_shape(const std::vector<FeatShape>& ins) const override {
    return {3 * (5 + num_classes), ins[0][1], ins[0][2]};
  }
  int layer_contrib() const override { return 5; }
};

template <typename S>
class ModelGraph {
 public:
  static ModelGraph build(const ArchConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelGraph g;
    g.cfg_ = cfg;
    Rng rng(seed);
    const int n = cfg.rows();
    std::vector<int> out_c(static_cast<size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
      const LayerSpec& spec = cfg.row(i);
      std::vector<int> abs_from;
      for (int f : spec.from) abs_from.push_back(f < 0 ? i + f : f);
      if (i == 0) abs_from = {-1};
      int cin = 0;
      for (int r : abs_from) cin += r < 0 ? kInputChannels : out_c[static_cast<size_t>(r)];
      std::unique_ptr<Block<S>> blk;
      switch (spec.kind) {
        case LayerKind::Focus: {
          auto b = std::make_unique<FocusBlock<S>>();
          b->c_out = cfg.realized_channels(spec.channels);
          b->cv = ConvUnit<S>::make(4 * cin, b->c_out, spec.kernel, 1, cfg, rng);
          blk = std::move(b);
          break;
        }
        case LayerKind::Conv: {
          auto b = std::make_unique<ConvBlock<S>>();
          b->c_out = cfg.realized_channels(spec.channels);
          b->cv = ConvUnit<S>::make(cin, b->c_out, cfg.effective_kernel(i), spec.stride, cfg, rng);
          blk = std::move(b);
          break;
        }
        case LayerKind::BottleneckCSP: {
          auto b = std::make_unique<CSPBlock<S>>();
          b->c_out = cfg.realized_channels(spec.channels);
          b->c_hidden = b->c_out / 2;
          b->repeats = cfg.realized_repeats(spec.repeats);
          b->act = cfg.activation;
          b->slope = static_cast<S>(cfg.leaky_slope);
          b->cv1 = ConvUnit<S>::make(cin, b->c_hidden, 1, 1, cfg, rng);
          for (int j = 0; j < b->repeats; ++j) {
            Bottleneck<S> bn;
            bn.shortcut = spec.shortcut;
            bn.cv1 = ConvUnit<S>::make(b->c_hidden, b->c_hidden, 1, 1, cfg, rng);
            bn.cv2 = ConvUnit<S>::make(b->c_hidden, b->c_hidden, 3, 1, cfg, rng);
            b->m.push_back(std::move(bn));
          }
          b->cv2_w = init_conv_weight<S>(b->c_hidden, cin, 1, rng);
          b->cv3_w = init_conv_weight<S>(b->c_hidden, b->c_hidden, 1, rng);
          b->bn_gamma = Tensor<S>({2 * b->c_hidden}, S(1));
          b->bn_beta = Tensor<S>({2 * b->c_hidden}, S(0));
          b->bn_gamma.set_requires_grad(true);
          b->bn_beta.set_requires_grad(true);
          b->bn_rmean = Tensor<S>({2 * b->c_hidden}, S(0));
          b->bn_rvar = Tensor<S>({2 * b->c_hidden}, S(1));
          b->cv4 = ConvUnit<S>::make(2 * b->c_hidden, b->c_out, 1, 1, cfg, rng);
          blk = std::move(b);
          break;
        }
        case LayerKind::SPP: {
          auto b = std::make_unique<SPPBlock<S>>();
          b->c_out = cfg.realized_channels(spec.channels);
          b->c_hidden = cin / 2;
          b->pool_kernels = spec.pool_kernels;
          b->cv1 = ConvUnit<S>::make(cin, b->c_hidden, 1, 1, cfg, rng);
          b->cv2 = ConvUnit<S>::make(b->c_hidden * (1 + static_cast<int>(spec.pool_kernels.size())),
                                     b->c_out, 1, 1, cfg, rng);
          blk = std::move(b);
          break;
        }
        case LayerKind::Upsample: {
          auto b = std::make_unique<UpsampleBlock<S>>();
          b->c_out = cin;
          blk = std::move(b);
          break;
        }
        case LayerKind::Concat: {
          auto b = std::make_unique<ConcatBlock<S>>();
          b->c_out = cin;
          blk = std::move(b);
          break;
        }
        case LayerKind::Detect: {
          auto b = std::make_unique<DetectBlock<S>>();
          b->num_classes = cfg.num_classes;
          const int out_ch = 3 * (5 + cfg.num_classes);
          for (int l = 0; l < 3; ++l) {
            const int src = spec.from[static_cast<size_t>(l)];
            const int src_c = out_c[static_cast<size_t>(src < 0 ? i + src : src)];
            b->w[l] = init_conv_weight<S>(out_ch, src_c, 1, rng);
            b->bias[l] = Tensor<S>({out_ch}, S(0));
            b->bias[l].set_requires_grad(true);
          }
          b->c_out = out_ch;
          blk = std::move(b);
          break;
        }
      }
      blk->spec = spec;
      blk->index = i;
      blk->inputs = abs_from;
      blk->c_in = cin;
      out_c[static_cast<size_t>(i)] = blk->c_out;
      g.blocks_.push_back(std::move(blk));
    }
    for (auto& blk : g.blocks_) blk->collect(g.params_, g.buffers_);
    g.check_strides();
    return g;
  }

  std::array<Tensor<S>, 3> forward(const Tensor<S>& x, bool training) {
    if (x.rank() != 4 || x.dim(1) != kInputChannels) {
      throw config_error("forward: input must be [N," + std::to_string(kInputChannels) +
                         ",H,W], got " + shape_str(x.shape()));
    }
    if (x.dim(2) != cfg_.input_size || x.dim(3) != cfg_.input_size) {
      throw config_error("forward: expected " + std::to_string(cfg_.input_size) + "x" +
                         std::to_string(cfg_.input_size) + " input, got " +
                         std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)));
    }
    std::vector<Tensor<S>> outs(blocks_.size());
    for (size_t i = 0; i + 1 < blocks_.size(); ++i) {
      std::vector<Tensor<S>> ins;
      for (int r : blocks_[i]->inputs) ins.push_back(r < 0 ? x : outs[static_cast<size_t>(r)]);
      outs[i] = blocks_[i]->run(ins, training);
    }
    auto* det = dynamic_cast<DetectBlock<S>*>(blocks_.back().get());
    std::vector<Tensor<S>> ins;
    for (int r : det->inputs) ins.push_back(outs[static_cast<size_t>(r)]);
    return det->run_heads(ins, training);
  }

  const ArchConfig& cfg() const { return cfg_; }
  std::vector<NamedTensor<S>>& params() { return params_; }
  const std::vector<NamedTensor<S>>& params() const { return params_; }
  std::vector<NamedTensor<S>>& buffers() { return buffers_; }
  const std::vector<NamedTensor<S>>& buffers() const { return buffers_; }
  const std::vector<std::unique_ptr<Block<S>>>& blocks() const { return blocks_; }

  int layer_count() const {
    int total = 2;  // model container and its row sequence
    for (const auto& b : blocks_) total += b->layer_contrib();
    return total;
  }

  int64_t param_count() const {
    int64_t total = 0;
    for (const auto& p : params_) total += p.tensor.numel();
    return total;
  }

  // Per-row output shapes at the given input size (detect row reports its
  // first head). Throws if the size is incompatible.
  std::vector<FeatShape> shape_walk(int input_size) const {
    if (input_size % cfg_.strides[2] != 0) {
      throw config_error("profile: input size " + std::to_string(input_size) +
                         " is not divisible by the coarsest stride " +
                         std::to_string(cfg_.strides[2]));
    }
    std::vector<FeatShape> shapes(blocks_.size());
    for (size_t i = 0; i < blocks_.size(); ++i) {
      std::vector<FeatShape> ins;
      for (int r : blocks_[i]->inputs) {
        ins.push_back(r < 0 ? FeatShape{kInputChannels, input_size, input_size}
                            : shapes[static_cast<size_t>(r)]);
      }
      shapes[i] = blocks_[i]->out_shape(ins);
    }
    return shapes;
  }

  int64_t flops(int input_size) const {
    std::vector<FeatShape> shapes = shape_walk(input_size);
    int64_t total = 0;
    for (size_t i = 0; i < blocks_.size(); ++i) {
      std::vector<FeatShape> ins;
      for (int r : blocks_[i]->inputs) {
        ins.push_back(r < 0 ? FeatShape{kInputChannels, input_size, input_size}
                            : shapes[static_cast<size_t>(r)]);
      }
      total += blocks_[i]->flops(ins);
    }
    return total;
  }

  // Grid sizes (h == w) of the three head levels at the given input size.
  std::array<int, 3> head_grids(int input_size) const {
    std::array<int, 3> g;
    for (int l = 0; l < 3; ++l) g[static_cast<size_t>(l)] = input_size / cfg_.strides[static_cast<size_t>(l)];
    return g;
  }

  std::vector<CheckpointEntry> to_checkpoint() const {
    std::vector<CheckpointEntry> entries;
    auto push = [&entries](const NamedTensor<S>& nt) {
      CheckpointEntry e;
      e.name = nt.name;
      e.dims = nt.tensor.shape();
      e.values.reserve(nt.tensor.data().size());
      for (const S v : nt.tensor.data()) e.values.push_back(static_cast<float>(v));
      entries.push_back(std::move(e));
    };
    for (const auto& p : params_) push(p);
    for (const auto& b : buffers_) push(b);
    return entries;
  }

  void load_checkpoint_entries(const std::vector<CheckpointEntry>& entries) {
    std::map<std::string, const CheckpointEntry*> by_name;
    for (const auto& e : entries) by_name[e.name] = &e;
    auto pull = [&by_name](NamedTensor<S>& nt) {
      auto it = by_name.find(nt.name);
      if (it == by_name.end()) throw config_error("checkpoint: missing tensor " + nt.name);
      const CheckpointEntry& e = *it->second;
      if (e.dims != nt.tensor.shape()) {
        throw config_error("checkpoint: shape mismatch for " + nt.name + ": file has " +
                           shape_str(e.dims) + ", model has " + shape_str(nt.tensor.shape()));
      }
      for (size_t i = 0; i < e.values.size(); ++i) {
        nt.tensor.data()[i] = static_cast<S>(e.values[i]);
      }
      by_name.erase(it);
    };
    for (auto& p : params_) pull(p);
    for (auto& b : buffers_) pull(b);
    if (!by_name.empty()) {
      throw config_error("checkpoint: unexpected tensor " + by_name.begin()->first);
    }
  }

  void zero_grads() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  static constexpr int kInputChannels = 3;

 private:
  void check_strides() const {
    const std::vector<FeatShape> shapes = shape_walk(cfg_.input_size);
    const auto* det = blocks_.back().get();
    for (int l = 0; l < 3; ++l) {
      const int src = det->inputs[static_cast<size_t>(l)];
      const int hw = shapes[static_cast<size_t>(src)][1];
      const int expect = cfg_.input_size / cfg_.strides[static_cast<size_t>(l)];
      if (hw != expect) {
        throw config_error(cfg_.name + ": head level " + std::to_string(l) + " produces a " +
                           std::to_string(hw) + "-cell grid but stride " +
                           std::to_string(cfg_.strides[static_cast<size_t>(l)]) + " requires " +
                           std::to_string(expect));
      }
    }
  }

  ArchConfig cfg_;
  std::vector<std::unique_ptr<Block<S>>> blocks_;
  std::vector<NamedTensor<S>> params_;
  std::vector<NamedTensor<S>> buffers_;
};

}  // namespace tfnk
