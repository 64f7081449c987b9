#include "patchbag/tensor.hpp"

#include <sstream>

#include "patchbag/error.hpp"

namespace patchbag {

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<Impl>();
  impl->data.assign(element_count(shape), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape);
  if (data.size() != element_count(shape))
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + to_string(shape));
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::rows() const { return shape().front(); }

std::size_t Tensor::cols() const {
  const auto& s = shape();
  return s.size() >= 2 ? s[1] : 1;
}

std::span<const double> Tensor::data() const { return impl().data; }
std::span<double> Tensor::mutable_data() { return impl().data; }
std::vector<double> Tensor::to_vector() const { return impl().data; }

bool Tensor::requires_grad() const { return impl().requires_grad; }
bool Tensor::has_grad() const { return impl().has_grad; }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor " + to_string(shape()) + " has no gradient");
  return impl().grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!has_grad()) throw ContractError("tensor " + to_string(shape()) + " has no gradient");
  return impl().grad;
}

void Tensor::zero_grad() {
  auto& i = impl();
  i.grad.clear();
  i.has_grad = false;
}

Tensor Tensor::detached() const { return from(shape(), to_vector(), false); }

Tensor Tensor::clone() const { return from(shape(), to_vector(), requires_grad()); }

}  // namespace patchbag
