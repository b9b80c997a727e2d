#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace utm {

#ifdef UTM_USE_DOUBLE
using real = double;
#else
using real = float;
#endif

/// Dimension sizes, outermost first. Dense row-major storage throughout.
using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

/// Tensor dimensions that cannot be combined (operator contract violation).
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// File or stream that cannot be read/written/parsed.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check_shape(bool ok, const std::string& msg);
void check_arg(bool ok, const std::string& msg);    // throws std::invalid_argument
void check_state(bool ok, const std::string& msg);  // throws std::logic_error

/// Reverse-mode differentiable dense tensor. Copying a Tensor copies a handle
/// to shared storage; the recorded operation graph lives in the node links and
/// is freed when the last handle to a subgraph goes away.
///
/// Leaf tensors created with requires_grad=true accumulate gradients across
/// backward() calls until zero_grad(); that is what the optimizer consumes.
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<real> values;
    std::vector<real> grad;  // allocated lazily by backward()
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Accumulates d(loss)/d(parent) into parent grads given this->grad.
    std::function<void(Node&)> backprop;
  };

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<real> values,
                            bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(int i) const;
  std::size_t size() const;
  bool requires_grad() const;

  const std::vector<real>& values() const;
  std::vector<real>& values();
  real value_at(std::size_t i) const { return values()[i]; }
  real scalar_value() const;

  bool has_grad() const;
  const std::vector<real>& grad() const;
  std::vector<real>& grad_buffer();  // allocates zeros if absent
  void zero_grad();

  /// Reverse-mode sweep from a scalar. Accumulates into every reachable
  /// requires_grad tensor. Throws std::logic_error on non-scalar call.
  void backward() const;

  /// Value copy detached from the graph.
  Tensor detached() const;

  std::shared_ptr<Node> node_;
};

/// RAII guard: while alive, newly built ops record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds an op node: output with given payload, linked to parents with the
/// given backprop. Parents/backprop are dropped when grad is globally off or
/// no parent requires grad.
Tensor make_op(Shape shape, std::vector<real> values,
               std::vector<Tensor> parents,
               std::function<void(Tensor::Node&)> backprop);

}  // namespace utm
