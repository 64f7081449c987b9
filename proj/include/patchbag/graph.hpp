#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "patchbag/tensor.hpp"

namespace patchbag {

enum class OpKind {
  matmul,
  transpose,
  reshape,
  add,
  add_row,
  mul,
  scale,
  tanh,
  relu,
  log,
  softmax,
  scale_rows,
  concat_cols,
  sum,
  pick,
};

const char* to_string(OpKind kind);

// Define-by-run tape. Every differentiable op appends one node; nodes are
// stored in creation order, which is a topological order by construction.
// A graph supports exactly one backward sweep. A graph constructed with
// recording disabled keeps no nodes and yields untracked outputs, which is
// what inference wants.
class Graph {
 public:
  // Accumulates the output gradient into the input gradients. Receives the
  // op's forward output, its gradient, and one writable span per input
  // (empty when that input does not require a gradient).
  using BackwardFn = std::function<void(std::span<const double> out_value,
                                        std::span<const double> out_grad,
                                        std::span<std::span<double>> in_grads)>;

  Graph() = default;
  explicit Graph(bool recording) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Creates the output tensor of an op. The node is only kept when at least
  // one input requires a gradient.
  Tensor record(OpKind kind, std::vector<Tensor> inputs, Shape shape,
                std::vector<double> values, BackwardFn backward);

  // Populates grad for every requires_grad tensor reachable from `loss`.
  // Throws ContractError for a non-scalar loss, a second sweep, or a leaf
  // whose gradient is already populated.
  void backward(const Tensor& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  bool swept() const noexcept { return swept_; }

 private:
  struct Node {
    OpKind kind;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool recording_ = true;
  bool swept_ = false;
};

// ---------------------------------------------------------------------------
// Differentiable primitives. All take the recording graph first.

// Rank-2 product, [m,k]·[k,n] -> [m,n].
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);
Tensor transpose(Graph& g, const Tensor& a);
Tensor reshape(Graph& g, const Tensor& a, Shape shape);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
// x[m,n] + bias[n] broadcast over rows.
Tensor add_row(Graph& g, const Tensor& x, const Tensor& bias);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& a, double factor);
Tensor tanh(Graph& g, const Tensor& a);
// Derivative at exactly zero is 0.
Tensor relu(Graph& g, const Tensor& a);
// log(max(x, floor)); gradient is zero where the floor is active.
Tensor log(Graph& g, const Tensor& a, double floor = 1e-12);

// Max-subtracted softmax. Rank-1 tensors normalize over all entries; rank-2
// tensors normalize down each column (axis 0) or along each row (axis 1).
// Throws NumericError on non-finite input.
Tensor softmax(Graph& g, const Tensor& a, std::size_t axis = 0);

// Row m of the result is weights[m] * x[m, :]. weights is [M] or [M,1].
Tensor scale_rows(Graph& g, const Tensor& x, const Tensor& weights);
// Concatenates rank-2 tensors with equal row counts along the column axis.
Tensor concat_cols(Graph& g, std::span<const Tensor> parts);

Tensor sum(Graph& g, const Tensor& a);
// Scalar view of one element.
Tensor pick(Graph& g, const Tensor& a, std::size_t index);

}  // namespace patchbag
