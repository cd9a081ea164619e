#pragma once

#include <cblas.h>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace mcmi::nn {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string r = "[";
  for (std::size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
  return r + "]";
}

template <class S>
struct Node {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<S>>> inputs;
  // Accumulates d(loss)/d(input) into each input's grad; must skip inputs
  // whose `needs` flag is false (their subtree holds no backward target).
  std::function<void(Node<S>&)> backprop;

  // Per-backward-call traversal scratch.
  std::uint64_t visit_epoch = 0;
  bool needs = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

// Value-semantics handle onto a graph node, in the style of the usual
// define-by-run engines: ops build nodes only while grad taping is enabled
// and at least one input participates in a gradient path.
template <class S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shp) {
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shp);
    n->value.assign(numel(n->shape), S(0));
    return Tensor(n);
  }
  static Tensor full(Shape shp, S v) {
    Tensor t = zeros(std::move(shp));
    for (auto& x : t.node()->value) x = v;
    return t;
  }
  static Tensor from(Shape shp, std::vector<S> data) {
    if (numel(shp) != static_cast<std::int64_t>(data.size()))
      throw std::invalid_argument("Tensor::from: data size does not match shape " + shape_str(shp));
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shp);
    n->value = std::move(data);
    return Tensor(n);
  }
  static Tensor scalar(S v) { return from({}, {v}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::int64_t size() const { return static_cast<std::int64_t>(node_->value.size()); }
  S* data() { return node_->value.data(); }
  const S* data() const { return node_->value.data(); }
  std::vector<S>& values() { return node_->value; }
  const std::vector<S>& values() const { return node_->value; }
  const std::vector<S>& grad() const { return node_->grad; }
  S item() const {
    if (node_->value.size() != 1) throw std::logic_error("item(): tensor is not a scalar");
    return node_->value[0];
  }

  Tensor& set_requires_grad(bool rg = true) {
    node_->requires_grad = rg;
    return *this;
  }
  bool requires_grad() const { return node_->requires_grad; }

  // Value copy severed from the graph.
  Tensor detach() const {
    auto n = std::make_shared<Node<S>>();
    n->shape = node_->shape;
    n->value = node_->value;
    return Tensor(n);
  }

  std::shared_ptr<Node<S>> node() const { return node_; }

 private:
  std::shared_ptr<Node<S>> node_;
};

// ---------------------------------------------------------------------------
// grad-mode guard

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

struct NoGradGuard {
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

template <class S, class F>
Tensor<S> make_op(Shape shp, std::vector<S> val, std::vector<Tensor<S>> ins, F&& back) {
  auto n = std::make_shared<Node<S>>();
  n->shape = std::move(shp);
  n->value = std::move(val);
  bool track = false;
  if (grad_enabled()) {
    for (const auto& t : ins)
      if (t.node()->requires_grad) track = true;
  }
  if (track) {
    n->requires_grad = true;
    n->inputs.reserve(ins.size());
    for (auto& t : ins) n->inputs.push_back(t.node());
    n->backprop = std::forward<F>(back);
  }
  return Tensor<S>(n);
}

// ---------------------------------------------------------------------------
// backward

// Reverse-mode sweep from `loss` restricted to paths that reach one of
// `targets`. Grad buffers of every visited node are re-zeroed on entry, so
// repeated backward calls over a shared graph stay independent.
template <class S>
void backward(const Tensor<S>& loss, std::span<const Tensor<S>> targets) {
  if (loss.size() != 1) throw std::logic_error("backward: loss must be scalar");
  auto root = loss.node();
  if (!root->requires_grad) {
    for (const auto& t : targets) t.node()->ensure_grad(), t.node()->grad.assign(t.size(), S(0));
    return;
  }

  static std::uint64_t epoch_counter = 0;
  const std::uint64_t epoch = ++epoch_counter;

  std::unordered_set<const Node<S>*> target_set;
  for (const auto& t : targets) target_set.insert(t.node().get());

  // Iterative post-order DFS: topo[] ends up inputs-before-consumers.
  std::vector<Node<S>*> topo;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  root->visit_epoch = epoch;
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      Node<S>* in = node->inputs[idx++].get();
      if (in->requires_grad && in->visit_epoch != epoch) {
        in->visit_epoch = epoch;
        stack.emplace_back(in, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<S>* n : topo) {
    n->needs = target_set.count(n) > 0;
    if (!n->needs)
      for (const auto& in : n->inputs)
        if (in->requires_grad && in->visit_epoch == epoch && in->needs) {
          n->needs = true;
          break;
        }
    n->ensure_grad();
    std::fill(n->grad.begin(), n->grad.end(), S(0));
  }
  for (const auto& t : targets) {
    t.node()->ensure_grad();
    if (t.node()->visit_epoch != epoch) std::fill(t.node()->grad.begin(), t.node()->grad.end(), S(0));
  }

  root->grad[0] = S(1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node<S>* n = *it;
    if (!n->backprop) continue;
    bool any_input_needs = false;
    for (const auto& in : n->inputs)
      if (in->needs) {
        any_input_needs = true;
        break;
      }
    if (any_input_needs) n->backprop(*n);
  }
}

template <class S>
void backward(const Tensor<S>& loss, const std::vector<Tensor<S>>& targets) {
  backward(loss, std::span<const Tensor<S>>(targets));
}

// ---------------------------------------------------------------------------
// BLAS shims

inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, a, lda, b, ldb, beta, c, ldc);
}
inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
                 const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace mcmi::nn
