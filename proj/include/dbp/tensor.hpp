#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dbp {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape &shape);
std::string shape_string(const Shape &shape);

/// Dense row-major array of doubles. Copies share storage (handle semantics),
/// which is what lets the differentiation tape identify parameters. Use
/// clone() for an independent copy.
///
/// Complex data is stored with a trailing axis of length 2 (real, imaginary).
class Tensor
{
public:
  Tensor();
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  /// A leaf whose gradient is reported by Tape::backward.
  static Tensor parameter(Shape shape, std::vector<double> data);

  const Shape &shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const;

  /// In-place access for leaves (optimizer updates, constructors). Never call
  /// on a tensor that has been recorded on an active tape.
  std::span<double> mutable_data() { return impl_->data; }

  bool trainable() const { return impl_->trainable; }
  void set_trainable(bool on) { impl_->trainable = on; }

  Tensor clone() const;
  Tensor reshaped(Shape shape) const;

  bool same_storage(const Tensor &other) const { return impl_ == other.impl_; }
  const void *id() const { return impl_.get(); }

  bool all_finite() const;

private:
  struct Impl
  {
    Shape shape;
    std::vector<double> data;
    bool trainable = false;
  };
  std::shared_ptr<Impl> impl_;
};

bool bitwise_equal(const Tensor &a, const Tensor &b);

/// Vector-Jacobian product of one recorded operation. `grad_out` is
/// d(loss)/d(output); entries of `grad_in` are null for inputs that do not
/// need a gradient, otherwise they are accumulated into.
using BackwardFn =
  std::function<void(std::span<const double> grad_out, std::span<std::vector<double> *const> grad_in)>;

class Gradients
{
public:
  /// Gradient for `leaf`; zeros when the loss does not depend on it.
  Tensor operator()(const Tensor &leaf) const;
  bool contains(const Tensor &leaf) const;
  void insert(const Tensor &leaf, Tensor grad);
  std::size_t size() const { return grads_.size(); }

private:
  std::unordered_map<const void *, Tensor> grads_;
};

/// Reverse-mode tape. Operations issued while a TapeScope is open on the
/// current thread are recorded when at least one input is tracked (a
/// trainable leaf or an output of an earlier recorded operation).
class Tape
{
public:
  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  bool tracks(const Tensor &t) const;
  void record(const Tensor &output, std::vector<Tensor> inputs, BackwardFn backward);

  /// d(loss)/d(leaf) for every trainable leaf reached. Clears the tape.
  Gradients backward(const Tensor &loss);

  std::size_t node_count() const { return nodes_.size(); }
  void clear();

private:
  struct Node
  {
    Tensor output;
    std::vector<Tensor> inputs;
    std::vector<int> input_nodes;
    BackwardFn backward;
  };

  int node_of(const Tensor &t);

  std::vector<Node> nodes_;
  std::unordered_map<const void *, int> index_;
};

Tape *active_tape();

class TapeScope
{
public:
  explicit TapeScope(Tape &tape);
  ~TapeScope();
  TapeScope(const TapeScope &) = delete;
  TapeScope &operator=(const TapeScope &) = delete;

private:
  Tape *previous_;
};

/// True when a tape is active and any input is tracked. Ops check this before
/// building their backward closure.
bool should_record(std::initializer_list<const Tensor *> inputs);

/// Record `output` if a tape is active and any input is tracked.
void record_op(const Tensor &output, std::vector<Tensor> inputs, BackwardFn backward);

} // namespace dbp
