#include "teformer/tensor.hpp"

#include <unordered_set>

#include "teformer/errors.hpp"

namespace teformer {

int Shape::operator[](int axis) const {
  switch (axis) {
    case 0: return n;
    case 1: return c;
    case 2: return h;
    case 3: return w;
    default: throw ShapeError("axis out of range");
  }
}

std::string Shape::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + ")";
}

template <typename T>
Var<T>::Var(Shape shape, T fill, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1)
    throw ShapeError("non-positive extent in shape " + shape.str());
  node_->shape = shape;
  node_->value.assign(shape.numel(), fill);
  node_->requires_grad = requires_grad;
}

template <typename T>
Var<T>::Var(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<Node<T>>()) {
  if (values.size() != shape.numel())
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape.str());
  node_->shape = shape;
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename T>
T& Var<T>::at(int n, int c, int h, int w) const {
  return node_->value[offset(node_->shape, n, c, h, w)];
}

template <typename T>
T Var<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar " + shape().str());
  return node_->value[0];
}

template <typename T>
Var<T> Var<T>::detach() const {
  return Var<T>(shape(), node_->value);
}

namespace {
thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_macs = 0;
thread_local bool g_count_only = false;
thread_local BranchRecorder* g_recorder = nullptr;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
void attach(const Var<T>& out, std::vector<Var<T>> inputs,
            std::function<void(Node<T>&)> backward) {
  if (!g_grad_enabled) return;
  bool any = false;
  for (const auto& in : inputs) any = any || (in.defined() && in.requires_grad());
  if (!any) return;
  Node<T>* node = out.node();
  node->requires_grad = true;
  node->inputs.reserve(inputs.size());
  for (auto& in : inputs)
    if (in.defined()) node->inputs.push_back(in.handle());
  node->backward = std::move(backward);
}

template <typename T>
void backward(const Var<T>& root) {
  if (root.numel() != 1) throw ShapeError("backward() needs a scalar root, got " + root.shape().str());
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

void OpStats::add_macs(std::uint64_t macs) { g_macs += macs; }
std::uint64_t OpStats::macs() { return g_macs; }
void OpStats::reset() { g_macs = 0; }
bool OpStats::count_only() { return g_count_only; }
void OpStats::set_count_only(bool on) { g_count_only = on; }

BranchRecorder::BranchRecorder() : previous_(g_recorder), hash_(1469598103934665603ULL) {
  g_recorder = this;
}
BranchRecorder::~BranchRecorder() { g_recorder = previous_; }

bool BranchRecorder::active() { return g_recorder != nullptr; }

void BranchRecorder::record(std::int64_t value) {
  if (!g_recorder) return;
  auto v = static_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) {
    g_recorder->hash_ ^= (v >> (8 * i)) & 0xffU;
    g_recorder->hash_ *= 1099511628211ULL;
  }
}

template class Var<float>;
template class Var<double>;
template void attach<float>(const Var<float>&, std::vector<Var<float>>,
                            std::function<void(Node<float>&)>);
template void attach<double>(const Var<double>&, std::vector<Var<double>>,
                             std::function<void(Node<double>&)>);
template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);

}  // namespace teformer
