#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

#include "mtlsed/nn/tensor.hpp"

namespace mtlsed::nn {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode autodiff tape. Nodes are appended in topological order during
/// the forward pass; backward() walks them in reverse. Backward closures capture
/// node ids, never references, because the node vector grows during forward.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self)>;

  Var constant(Tensor<T> value);
  /// Parameter whose gradient is accumulated into p.grad by backward().
  Var parameter(Parameter<T>& p);
  /// Read-only parameter reference; no gradient is tracked.
  Var parameter(const Parameter<T>& p);

  /// Records an op result. `fn` is kept only if some input requires a gradient.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor<T> value, const std::vector<Var>& inputs, BackwardFn fn);

  const Tensor<T>& value(Var v) const;
  T scalar(Var v) const { return value(v).data.at(0); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient buffer for v, zero-initialised on first access.
  T* grad(Var v);
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  /// Seeds d(root)/d(root) = 1 for a scalar root and propagates to every node,
  /// then adds parameter-node gradients into their Parameter::grad buffers.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* ref = nullptr;
    std::vector<T> grad;
    bool requires_grad = false;
    BackwardFn fn;
    Parameter<T>* sink = nullptr;
  };
  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace mtlsed::nn
