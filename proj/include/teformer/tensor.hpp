#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace teformer {

/// Four-dimensional extent in (batch, channels, height, width) order.
/// Matrices are carried as (batch, 1, rows, cols).
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  int operator[](int axis) const;
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialised on first access.
  T* grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad.data();
  }
};

/// Shared handle to a tensor that may take part in reverse-mode
/// differentiation. Copies alias the same storage.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Shape shape, T fill = T(0), bool requires_grad = false);
  Var(Shape shape, std::vector<T> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<T> data() const { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() const { node_->grad.clear(); }

  T& at(int n, int c, int h, int w) const;
  T item() const;

  /// Copy of the values converted to another precision, detached from any graph.
  template <typename U>
  Var<U> cast() const {
    std::vector<U> out(node_->value.begin(), node_->value.end());
    return Var<U>(shape(), std::move(out));
  }

  /// Same values, no gradient history.
  Var detach() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& handle() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Flat offset of (n, c, h, w) in a contiguous tensor of `s`.
inline std::size_t offset(const Shape& s, int n, int c, int h, int w) {
  return ((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w;
}

/// True while gradient graphs are being recorded on this thread.
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

/// Links `out` to `inputs` if recording is on and any input needs a gradient.
template <typename T>
void attach(const Var<T>& out, std::vector<Var<T>> inputs,
            std::function<void(Node<T>&)> backward);

/// Reverse-mode sweep from a scalar root.
template <typename T>
void backward(const Var<T>& root);

/// Per-thread multiply-accumulate tally used by complexity accounting.
/// In count-only mode the heavy kernels skip their arithmetic and only the
/// tally and output shapes are produced.
struct OpStats {
  static void add_macs(std::uint64_t macs);
  static std::uint64_t macs();
  static void reset();
  static bool count_only();
  static void set_count_only(bool on);
};

/// Records the discrete branch choices of piecewise-smooth operations
/// (quantisation bins, sampling cells, clamps) so that finite-difference
/// probes can detect when a perturbation crosses a kink.
class BranchRecorder {
 public:
  BranchRecorder();
  ~BranchRecorder();
  BranchRecorder(const BranchRecorder&) = delete;
  BranchRecorder& operator=(const BranchRecorder&) = delete;

  std::uint64_t signature() const { return hash_; }
  static bool active();
  static void record(std::int64_t value);

 private:
  BranchRecorder* previous_;
  std::uint64_t hash_;
};

}  // namespace teformer
