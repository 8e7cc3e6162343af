#include "mtlsed/nn/tape.hpp"

#include <sstream>
#include <stdexcept>

namespace mtlsed::nn {

std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::parameter(Parameter<T>& p) {
  Node n;
  n.ref = &p.value;
  n.requires_grad = true;
  n.sink = &p;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::parameter(const Parameter<T>& p) {
  Node n;
  n.ref = &p.value;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(fn));
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, const std::vector<Var>& inputs, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  for (Var v : inputs) n.requires_grad = n.requires_grad || nodes_.at(v.id).requires_grad;
  if (n.requires_grad) n.fn = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.ref ? *n.ref : n.owned;
}

template <typename T>
T* Tape<T>::grad(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty()) n.grad.assign((n.ref ? *n.ref : n.owned).size(), T{});
  return n.grad.data();
}

template <typename T>
void Tape<T>::backward(Var root) {
  if (value(root).size() != 1) throw std::logic_error("backward: root must be a scalar");
  if (!requires_grad(root)) return;
  grad(root)[0] = T{1};
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.fn && !n.grad.empty()) n.fn(*this, Var{i});
  }
  for (Node& n : nodes_) {
    if (!n.sink || n.grad.empty()) continue;
    auto& g = n.sink->grad;
    if (g.size() != n.grad.size()) g.assign(n.grad.size(), T{});
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace mtlsed::nn
