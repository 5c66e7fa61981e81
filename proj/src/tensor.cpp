#include "fap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "fap/error.hpp"

namespace fap {

namespace {

thread_local bool g_grad_enabled = true;

void require_finite(const char* op, std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": produced a non-finite value");
    }
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  require_finite("tensor", values);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::make_shared<const std::vector<double>>(std::move(values));
  node_ = std::move(node);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

const detail::Node& Tensor::checked() const {
  if (!node_) throw Error("tensor: use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return checked().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked().values->size(); }

std::span<const double> Tensor::values() const { return *checked().values; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor " + shape_str(shape()) + " is not a scalar");
  return values()[0];
}

bool Tensor::requires_grad() const { return checked().requires_grad; }

bool Tensor::is_leaf() const { return checked().leaf; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!checked().leaf) throw Error("set_requires_grad: only leaf tensors can change tracking");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return !checked().grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw Error("grad: tensor has no accumulated gradient");
  return node_->grad;
}

Tensor Tensor::grad_tensor() const { return Tensor(shape(), std::vector<double>(grad().begin(), grad().end())); }

void Tensor::zero_grad() {
  checked();
  node_->grad.clear();
}

Tensor Tensor::detach() const {
  const auto& n = checked();
  auto node = std::make_shared<detail::Node>();
  node->shape = n.shape;
  node->values = n.values;
  return Tensor(std::move(node));
}

const char* Tensor::op_name() const { return checked().op; }

Tensor Tensor::make_result(const char* op, Shape shape, std::vector<double> values,
                           const std::vector<Tensor>& inputs, detail::BackwardFn backward) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError(std::string(op) + ": internal shape/value mismatch");
  }
  require_finite(op, values);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::make_shared<const std::vector<double>>(std::move(values));
  node->op = op;
  node->leaf = false;
  const bool track = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) {
                       return t.requires_grad();
                     });
  if (track) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace {

using Node = detail::Node;
using GradMap = std::unordered_map<const Node*, std::vector<double>>;

// Post-order over nodes that track gradients: inputs come before consumers.
std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

GradMap run_backward(const Tensor& loss, const std::unordered_set<const Node*>* targets) {
  if (!loss.defined()) throw Error("backward: undefined loss");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  require_finite("backward", loss.values());
  GradMap grads;
  if (!loss.requires_grad()) return grads;

  Node* root = loss.node().get();
  const auto order = topo_order(root);

  std::unordered_set<const Node*> needed;
  for (Node* n : order) {
    bool need = targets == nullptr || targets->contains(n);
    for (const auto& in : n->inputs) need = need || needed.contains(in.get());
    if (need) needed.insert(n);
  }

  grads[root] = std::vector<double>(1, 1.0);
  std::vector<double*> slots;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->leaf || !needed.contains(n)) continue;
    auto found = grads.find(n);
    if (found == grads.end()) continue;

    slots.assign(n->inputs.size(), nullptr);
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      const Node* in = n->inputs[i].get();
      if (!in->requires_grad || !needed.contains(in)) continue;
      auto& buf = grads[in];
      if (buf.empty()) buf.assign(in->values->size(), 0.0);
      slots[i] = buf.data();
    }
    n->backward(found->second, slots);
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      if (!slots[i]) continue;
      const auto& buf = grads[n->inputs[i].get()];
      for (double g : buf) {
        if (!std::isfinite(g)) {
          throw NumericError(std::string("backward: non-finite gradient through ") + n->op);
        }
      }
    }
    if (targets == nullptr || !targets->contains(n)) grads.erase(found);
  }
  return grads;
}

}  // namespace

void backward(const Tensor& loss) {
  auto grads = run_backward(loss, nullptr);
  for (auto& [node, g] : grads) {
    if (!node->leaf || !node->requires_grad) continue;
    auto* mut = const_cast<Node*>(node);
    if (mut->grad.empty()) {
      mut->grad = std::move(g);
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) mut->grad[i] += g[i];
    }
  }
}

std::vector<Tensor> gradient(const Tensor& loss, std::span<const Tensor> wrt) {
  std::unordered_set<const Node*> targets;
  for (const auto& t : wrt) {
    if (!t.defined()) throw Error("gradient: undefined tensor in wrt");
    targets.insert(t.node().get());
  }
  auto grads = run_backward(loss, &targets);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const auto& t : wrt) {
    auto found = grads.find(t.node().get());
    if (found == grads.end()) {
      out.push_back(Tensor::zeros(t.shape()));
    } else {
      out.emplace_back(t.shape(), found->second);
    }
  }
  return out;
}

}  // namespace fap
