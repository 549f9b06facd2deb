#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tfnk/errors.hpp"

namespace tfnk {

inline std::string shape_str(const std::vector<int>& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

template <typename S>
struct TensorNode {
  std::vector<int> shape;
  std::vector<S> value;
  std::vector<S> grad;  // empty until first touched, then zeros
  bool requires_grad = false;
};

// Shared-ownership view of a node. Values are written once by the op that
// creates them; gradients accumulate additively during backward passes.
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape, S fill = S(0)) {
    node_ = std::make_shared<TensorNode<S>>();
    node_->shape = std::move(shape);
    node_->value.assign(numel_of(node_->shape), fill);
  }

  Tensor(std::vector<int> shape, std::vector<S> data) {
    node_ = std::make_shared<TensorNode<S>>();
    node_->shape = std::move(shape);
    if (static_cast<int64_t>(data.size()) != numel_of(node_->shape)) {
      throw config_error("tensor: data size " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(node_->shape));
    }
    node_->value = std::move(data);
  }

  static Tensor scalar(S v) { return Tensor({1}, std::vector<S>{v}); }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

  std::vector<S>& data() { return node_->value; }
  const std::vector<S>& data() const { return node_->value; }
  S item() const {
    if (numel() != 1) throw config_error("tensor: item() on non-scalar " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  std::vector<S>& grad() {
    if (node_->grad.empty()) node_->grad.assign(node_->value.size(), S(0));
    return node_->grad;
  }
  const std::vector<S>& grad_ref() const { return node_->grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.assign(node_->value.size(), S(0));
  }

  std::shared_ptr<TensorNode<S>> node() const { return node_; }

 private:
  static int64_t numel_of(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw config_error("tensor: non-positive dimension in " + shape_str(shape));
      n *= d;
    }
    return n;
  }

  std::shared_ptr<TensorNode<S>> node_;
};

// Records op backward closures in forward order; backward replays them in
// reverse. One tape belongs to one thread. Repeated backward calls without
// clearing gradients keep accumulating.
template <typename S>
class Tape {
 public:
  struct Entry {
    const char* op;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const char* op, std::function<void()> fn) {
    entries_.push_back({op, std::move(fn)});
  }

  void backward(Tensor<S>& loss) {
    if (entries_.empty()) throw config_error("tape: backward on empty tape");
    if (loss.numel() != 1) {
      throw config_error("tape: backward requires a scalar, got " + shape_str(loss.shape()));
    }
    loss.grad()[0] += S(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
  }

  void clear() { entries_.clear(); }
  size_t size() const { return entries_.size(); }

  static Tape* active() { return active_; }

  // RAII activation; tapes nest, inner scope wins.
  class Scope {
   public:
    explicit Scope(Tape& t) : prev_(active_) { active_ = &t; }
    ~Scope() { active_ = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

 private:
  std::vector<Entry> entries_;
  static thread_local Tape* active_;
};

template <typename S>
thread_local Tape<S>* Tape<S>::active_ = nullptr;

}  // namespace tfnk
