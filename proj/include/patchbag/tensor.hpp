#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace patchbag {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

// Dense row-major f64 array with an optional gradient slot.
//
// Tensor is a shared handle: copies alias the same storage. Graph operations
// never mutate their inputs; only optimizers write through mutable_data().
// A tensor's gradient is absent until a backward sweep populates it and is
// cleared again by zero_grad().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  bool is(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const { return data().size(); }
  // Leading extent; for rank-1 tensors the vector length.
  std::size_t rows() const;
  // Trailing extent of a rank-2 tensor; 1 for rank-1 tensors.
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Fresh storage holding the same values, without gradient tracking.
  Tensor detached() const;
  // Fresh storage holding the same values and the same requires_grad flag.
  Tensor clone() const;

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool leaf = true;
  };

  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Impl& impl() const;

  std::shared_ptr<Impl> impl_;

  friend class Graph;
};

}  // namespace patchbag
