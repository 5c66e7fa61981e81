#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fap {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

// Receives the gradient of the node's output and one accumulation buffer per
// input. A null buffer means that input's gradient is not needed.
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<double* const> grad_in)>;

struct Node {
  Shape shape;
  std::shared_ptr<const std::vector<double>> values;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};

}  // namespace detail

// Dense row-major float64 array with an optional reverse-mode gradient trace.
//
// Tensor is a handle: copies share the same node. Values never change after
// construction; only the gradient buffer of a leaf is mutable.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  std::span<const double> values() const;
  double operator[](std::size_t flat_index) const { return values()[flat_index]; }
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;
  // Only leaves may toggle gradient tracking.
  Tensor& set_requires_grad(bool on = true);

  bool has_grad() const;
  std::span<const double> grad() const;
  Tensor grad_tensor() const;
  void zero_grad();

  // New leaf sharing this tensor's values, with no history.
  Tensor detach() const;
  const char* op_name() const;

  // Wraps the result of an operation, recording history when any input tracks
  // gradients and grad mode is on. Throws NumericError on non-finite values.
  static Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                            const std::vector<Tensor>& inputs, detail::BackwardFn backward);

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const detail::Node& checked() const;

  std::shared_ptr<detail::Node> node_;
};

// Thread-local switch; results built while disabled carry no history.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Accumulates d(loss)/d(leaf) into the grad buffer of every reachable leaf that
// requires gradients. Repeated calls accumulate; call zero_grad() to reset.
void backward(const Tensor& loss);

// Returns d(loss)/d(t) for each t in `wrt` without touching any grad buffer.
// Only the part of the graph leading to `wrt` is traversed.
std::vector<Tensor> gradient(const Tensor& loss, std::span<const Tensor> wrt);

}  // namespace fap
