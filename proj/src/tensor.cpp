#include "utm/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace utm {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    check_arg(d > 0, "shape dimensions must be positive, got " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

void check_shape(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}
void check_arg(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}
void check_state(bool ok, const std::string& msg) {
  if (!ok) throw std::logic_error(msg);
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->values.assign(numel(shape), real(0));
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->values.assign(numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_values(Shape shape, std::vector<real> values, bool requires_grad) {
  check_shape(numel(shape) == values.size(),
              "value count " + std::to_string(values.size()) +
                  " does not match shape " + shape_str(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  check_state(defined(), "shape() on undefined tensor");
  return node_->shape;
}

int Tensor::dim(int i) const { return shape().at(static_cast<std::size_t>(i)); }

std::size_t Tensor::size() const {
  check_state(defined(), "size() on undefined tensor");
  return node_->values.size();
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

const std::vector<real>& Tensor::values() const {
  check_state(defined(), "values() on undefined tensor");
  return node_->values;
}

std::vector<real>& Tensor::values() {
  check_state(defined(), "values() on undefined tensor");
  return node_->values;
}

real Tensor::scalar_value() const {
  check_state(size() == 1, "scalar_value() on tensor of shape " + shape_str(shape()));
  return node_->values[0];
}

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

const std::vector<real>& Tensor::grad() const {
  check_state(has_grad(), "gradient not populated; call backward() first");
  return node_->grad;
}

std::vector<real>& Tensor::grad_buffer() {
  check_state(defined(), "grad_buffer() on undefined tensor");
  if (node_->grad.empty()) node_->grad.assign(node_->values.size(), real(0));
  return node_->grad;
}

void Tensor::zero_grad() {
  check_state(defined(), "zero_grad() on undefined tensor");
  node_->grad.clear();
}

Tensor Tensor::detached() const {
  check_state(defined(), "detached() on undefined tensor");
  return from_values(node_->shape, node_->values, false);
}

namespace {

std::vector<real>& grad_of(Tensor::Node& n) {
  if (n.grad.empty()) n.grad.assign(n.values.size(), real(0));
  return n.grad;
}

}  // namespace

void Tensor::backward() const {
  check_state(defined(), "backward() on undefined tensor");
  check_state(size() == 1, "backward() requires a scalar loss, got shape " +
                               shape_str(shape()));

  // Reverse topological order over the recorded graph (iterative DFS).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get(), 0});
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  grad_of(*node_).assign(1, real(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) {
      for (auto& p : n->parents)
        if (p->requires_grad) grad_of(*p);
      n->backprop(*n);
    }
  }
}

Tensor make_op(Shape shape, std::vector<real> values,
               std::vector<Tensor> parents,
               std::function<void(Tensor::Node&)> backprop) {
  Tensor out = Tensor::from_values(std::move(shape), std::move(values), false);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backprop = std::move(backprop);
  }
  return out;
}

}  // namespace utm
