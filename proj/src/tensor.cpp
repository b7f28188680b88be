#include "dbp/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace dbp {

std::size_t shape_size(const Shape &shape)
{
  std::size_t n = 1;
  for (auto e : shape) {
    n *= e;
  }
  return n;
}

std::string shape_string(const Shape &shape)
{
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? ", " : "") << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor()
  : impl_(std::make_shared<Impl>(Impl{{}, std::vector<double>(1, 0.0), false}))
{
}

Tensor::Tensor(Shape shape)
  : impl_(std::make_shared<Impl>())
{
  impl_->data.assign(shape_size(shape), 0.0);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
  : impl_(std::make_shared<Impl>())
{
  if (shape_size(shape) != data.size()) {
    throw std::invalid_argument("tensor: shape " + shape_string(shape) + " does not match " +
                                std::to_string(data.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor Tensor::scalar(double value)
{
  return Tensor(Shape{}, std::vector<double>{value});
}

Tensor Tensor::full(Shape shape, double value)
{
  Tensor t(std::move(shape));
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data)
{
  Tensor t(std::move(shape), std::move(data));
  t.impl_->trainable = true;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const
{
  if (axis >= rank()) {
    throw std::out_of_range("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                            shape_string(shape()));
  }
  return impl_->shape[axis];
}

double Tensor::item() const
{
  if (size() != 1) {
    throw std::invalid_argument("tensor: item() on shape " + shape_string(shape()));
  }
  return impl_->data[0];
}

Tensor Tensor::clone() const
{
  Tensor t(impl_->shape, impl_->data);
  t.impl_->trainable = impl_->trainable;
  return t;
}

Tensor Tensor::reshaped(Shape shape) const
{
  if (shape_size(shape) != size()) {
    throw std::invalid_argument("tensor: cannot reshape " + shape_string(this->shape()) + " to " +
                                shape_string(shape));
  }
  return Tensor(std::move(shape), impl_->data);
}

bool Tensor::all_finite() const
{
  for (double v : impl_->data) {
    if (!std::isfinite(v)) {
      return false;
    }
  }
  return true;
}

bool bitwise_equal(const Tensor &a, const Tensor &b)
{
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

// Gradients

Tensor Gradients::operator()(const Tensor &leaf) const
{
  auto it = grads_.find(leaf.id());
  if (it == grads_.end()) {
    return Tensor::zeros(leaf.shape());
  }
  return it->second;
}

bool Gradients::contains(const Tensor &leaf) const
{
  return grads_.count(leaf.id()) != 0;
}

void Gradients::insert(const Tensor &leaf, Tensor grad)
{
  grads_.insert_or_assign(leaf.id(), std::move(grad));
}

// Tape

namespace {
thread_local Tape *current_tape = nullptr;
}

Tape *active_tape()
{
  return current_tape;
}

TapeScope::TapeScope(Tape &tape)
  : previous_(current_tape)
{
  current_tape = &tape;
}

TapeScope::~TapeScope()
{
  current_tape = previous_;
}

bool Tape::tracks(const Tensor &t) const
{
  return t.trainable() || index_.count(t.id()) != 0;
}

int Tape::node_of(const Tensor &t)
{
  auto it = index_.find(t.id());
  if (it != index_.end()) {
    return it->second;
  }
  if (!t.trainable()) {
    return -1;
  }
  int const id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{t, {}, {}, {}});
  index_.emplace(t.id(), id);
  return id;
}

void Tape::record(const Tensor &output, std::vector<Tensor> inputs, BackwardFn backward)
{
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (auto const &in : inputs) {
    ids.push_back(node_of(in));
  }
  int const id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{output, std::move(inputs), std::move(ids), std::move(backward)});
  index_.insert_or_assign(output.id(), id);
}

Gradients Tape::backward(const Tensor &loss)
{
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
  }
  Gradients result;
  auto it = index_.find(loss.id());
  if (it == index_.end()) {
    clear();
    return result;
  }

  std::vector<std::vector<double>> grads(nodes_.size());
  grads[it->second].assign(1, 1.0);

  std::vector<std::vector<double> *> slots;
  for (int n = it->second; n >= 0; --n) {
    auto &node = nodes_[n];
    if (grads[n].empty()) {
      continue;
    }
    if (!node.backward) {
      if (node.output.trainable()) {
        result.insert(node.output, Tensor(node.output.shape(), std::move(grads[n])));
      }
      continue;
    }
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      int const in = node.input_nodes[i];
      if (in < 0) {
        continue;
      }
      if (grads[in].empty()) {
        grads[in].assign(node.inputs[i].size(), 0.0);
      }
      slots[i] = &grads[in];
    }
    node.backward(grads[n], slots);
    std::vector<double>().swap(grads[n]);
  }
  clear();
  return result;
}

void Tape::clear()
{
  nodes_.clear();
  index_.clear();
}

bool should_record(std::initializer_list<const Tensor *> inputs)
{
  Tape *tape = current_tape;
  if (tape == nullptr) {
    return false;
  }
  for (auto const *t : inputs) {
    if (tape->tracks(*t)) {
      return true;
    }
  }
  return false;
}

void record_op(const Tensor &output, std::vector<Tensor> inputs, BackwardFn backward)
{
  Tape *tape = current_tape;
  if (tape == nullptr) {
    return;
  }
  bool any = false;
  for (auto const &in : inputs) {
    any = any || tape->tracks(in);
  }
  if (any) {
    tape->record(output, std::move(inputs), std::move(backward));
  }
}

} // namespace dbp
