#include "patchbag/graph.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "patchbag/error.hpp"

namespace patchbag {

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::reshape: return "reshape";
    case OpKind::add: return "add";
    case OpKind::add_row: return "add_row";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::tanh: return "tanh";
    case OpKind::relu: return "relu";
    case OpKind::log: return "log";
    case OpKind::softmax: return "softmax";
    case OpKind::scale_rows: return "scale_rows";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::sum: return "sum";
    case OpKind::pick: return "pick";
  }
  return "unknown";
}

Tensor Graph::record(OpKind kind, std::vector<Tensor> inputs, Shape shape,
                     std::vector<double> values, BackwardFn backward) {
  const bool tracked = recording_ && std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor& t) { return t.requires_grad(); });
  Tensor out = Tensor::from(std::move(shape), std::move(values), tracked);
  if (tracked) {
    out.impl_->leaf = false;
    nodes_.push_back(Node{kind, std::move(inputs), out, std::move(backward)});
  }
  return out;
}

void Graph::backward(const Tensor& loss) {
  if (swept_)
    throw ContractError("graph was already swept; record a new graph for another backward pass");
  if (loss.size() != 1)
    throw ContractError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  if (!loss.requires_grad())
    throw ContractError("loss does not depend on any tensor that requires a gradient");

  std::unordered_set<const Tensor::Impl*> seen;
  std::vector<Tensor::Impl*> tracked;
  auto visit = [&](const Tensor& t) {
    if (!t.requires_grad() || !seen.insert(t.impl_.get()).second) return;
    if (t.impl_->leaf && t.impl_->has_grad)
      throw ContractError("gradient of a " + to_string(t.shape()) +
                          " leaf is already populated; call zero_grad() before another backward");
    tracked.push_back(t.impl_.get());
  };
  visit(loss);
  for (const auto& node : nodes_) {
    for (const auto& in : node.inputs) visit(in);
    visit(node.output);
  }
  for (auto* impl : tracked) {
    impl->grad.assign(impl->data.size(), 0.0);
    impl->has_grad = true;
  }
  loss.impl_->grad[0] = 1.0;
  swept_ = true;

  std::vector<std::span<double>> in_grads;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    in_grads.clear();
    for (auto& in : it->inputs)
      in_grads.push_back(in.requires_grad() ? std::span<double>(in.impl_->grad) : std::span<double>());
    it->backward(it->output.impl_->data, it->output.impl_->grad, in_grads);
  }
}

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + to_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
}

template <typename F>
Tensor unary(Graph& g, OpKind kind, const Tensor& a, F&& forward, Graph::BackwardFn backward) {
  std::vector<double> out(a.size());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(x[i]);
  return g.record(kind, {a}, a.shape(), std::move(out), std::move(backward));
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner extents disagree for " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  std::vector<double> out(m * n, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return g.record(OpKind::matmul, {a, b}, {m, n}, std::move(out),
                  [a, b, m, k, n](auto, std::span<const double> G, std::span<std::span<double>> d) {
                    auto A = a.data();
                    auto B = b.data();
                    if (!d[0].empty()) {
                      // dA = G · Bᵀ
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          double acc = 0.0;
                          const double* grow = G.data() + i * n;
                          const double* brow = B.data() + p * n;
                          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                          d[0][i * k + p] += acc;
                        }
                    }
                    if (!d[1].empty()) {
                      // dB = Aᵀ · G
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          const double aip = A[i * k + p];
                          if (aip == 0.0) continue;
                          const double* grow = G.data() + i * n;
                          double* drow = d[1].data() + p * n;
                          for (std::size_t j = 0; j < n; ++j) drow[j] += aip * grow[j];
                        }
                    }
                  });
}

Tensor transpose(Graph& g, const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return g.record(OpKind::transpose, {a}, {n, m}, std::move(out),
                  [m, n](auto, std::span<const double> G, std::span<std::span<double>> d) {
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) d[0][i * n + j] += G[j * m + i];
                  });
}

Tensor reshape(Graph& g, const Tensor& a, Shape shape) {
  if (element_count(shape) != a.size())
    throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  return g.record(OpKind::reshape, {a}, std::move(shape), a.to_vector(),
                  [](auto, std::span<const double> G, std::span<std::span<double>> d) {
                    for (std::size_t i = 0; i < G.size(); ++i) d[0][i] += G[i];
                  });
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return g.record(OpKind::add, {a, b}, a.shape(), std::move(out),
                  [](auto, std::span<const double> G, std::span<std::span<double>> d) {
                    for (auto& di : d)
                      if (!di.empty())
                        for (std::size_t i = 0; i < G.size(); ++i) di[i] += G[i];
                  });
}

Tensor add_row(Graph& g, const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.size() != n)
    throw DimensionError("add_row: bias " + to_string(bias.shape()) + " does not match columns of " +
                         to_string(x.shape()));
  std::vector<double> out = x.to_vector();
  auto b = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  return g.record(OpKind::add_row, {x, bias}, x.shape(), std::move(out),
                  [m, n](auto, std::span<const double> G, std::span<std::span<double>> d) {
                    if (!d[0].empty())
                      for (std::size_t i = 0; i < G.size(); ++i) d[0][i] += G[i];
                    if (!d[1].empty())
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) d[1][j] += G[i * n + j];
                  });
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return g.record(OpKind::mul, {a, b}, a.shape(), std::move(out),
                  [a, b](auto, std::span<const double> G, std::span<std::span<double>> d) {
                    auto x = a.data();
                    auto y = b.data();
                    if (!d[0].empty())
                      for (std::size_t i = 0; i < G.size(); ++i) d[0][i] += G[i] * y[i];
                    if (!d[1].empty())
                      for (std::size_t i = 0; i < G.size(); ++i) d[1][i] += G[i] * x[i];
                  });
}

Tensor scale(Graph& g, const Tensor& a, double factor) {
  return unary(g, OpKind::scale, a, [factor](double v) { return factor * v; },
               [factor](auto, std::span<const double> G, std::span<std::span<double>> d) {
                 for (std::size_t i = 0; i < G.size(); ++i) d[0][i] += factor * G[i];
               });
}

Tensor tanh(Graph& g, const Tensor& a) {
  return unary(g, OpKind::tanh, a, [](double v) { return std::tanh(v); },
               [](std::span<const double> y, std::span<const double> G, std::span<std::span<double>> d) {
                 for (std::size_t i = 0; i < G.size(); ++i) d[0][i] += G[i] * (1.0 - y[i] * y[i]);
               });
}

Tensor relu(Graph& g, const Tensor& a) {
  return unary(g, OpKind::relu, a, [](double v) { return v > 0.0 ? v : 0.0; },
               [a](auto, std::span<const double> G, std::span<std::span<double>> d) {
                 auto x = a.data();
                 for (std::size_t i = 0; i < G.size(); ++i)
                   if (x[i] > 0.0) d[0][i] += G[i];
               });
}

Tensor log(Graph& g, const Tensor& a, double floor) {
  return unary(g, OpKind::log, a, [floor](double v) { return std::log(std::max(v, floor)); },
               [a, floor](auto, std::span<const double> G, std::span<std::span<double>> d) {
                 auto x = a.data();
                 for (std::size_t i = 0; i < G.size(); ++i)
                   if (x[i] > floor) d[0][i] += G[i] / x[i];
               });
}

Tensor softmax(Graph& g, const Tensor& a, std::size_t axis) {
  if (a.rank() > 2) throw DimensionError("softmax: rank > 2 not supported, got " + to_string(a.shape()));
  if (axis >= a.rank()) throw DimensionError("softmax: axis out of range for " + to_string(a.shape()));
  auto x = a.data();
  for (double v : x)
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite input in " + to_string(a.shape()));

  // A softmax is applied to `groups` independent lanes of `len` entries each,
  // lane entries being `stride` apart.
  const std::size_t rows = a.rows(), cols = a.cols();
  std::size_t groups, len, stride, lane_step;
  if (a.rank() == 1 || axis == 0) {
    groups = cols; len = rows; stride = cols; lane_step = 1;
  } else {
    groups = rows; len = cols; stride = 1; lane_step = cols;
  }

  std::vector<double> out(a.size());
  for (std::size_t lane = 0; lane < groups; ++lane) {
    const std::size_t base = lane * lane_step;
    double peak = x[base];
    for (std::size_t i = 1; i < len; ++i) peak = std::max(peak, x[base + i * stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(x[base + i * stride] - peak);
      out[base + i * stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[base + i * stride] /= total;
  }
  return g.record(OpKind::softmax, {a}, a.shape(), std::move(out),
                  [groups, len, stride, lane_step](std::span<const double> y, std::span<const double> G,
                                                   std::span<std::span<double>> d) {
                    for (std::size_t lane = 0; lane < groups; ++lane) {
                      const std::size_t base = lane * lane_step;
                      double dot = 0.0;
                      for (std::size_t i = 0; i < len; ++i) dot += G[base + i * stride] * y[base + i * stride];
                      for (std::size_t i = 0; i < len; ++i) {
                        const std::size_t at = base + i * stride;
                        d[0][at] += y[at] * (G[at] - dot);
                      }
                    }
                  });
}

Tensor scale_rows(Graph& g, const Tensor& x, const Tensor& weights) {
  require_rank(x, 2, "scale_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (weights.size() != m || weights.cols() != 1)
    throw DimensionError("scale_rows: weights " + to_string(weights.shape()) + " do not match rows of " +
                         to_string(x.shape()));
  std::vector<double> out(m * n);
  auto v = x.data();
  auto w = weights.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = w[i] * v[i * n + j];
  return g.record(OpKind::scale_rows, {x, weights}, x.shape(), std::move(out),
                  [x, weights, m, n](auto, std::span<const double> G, std::span<std::span<double>> d) {
                    auto v = x.data();
                    auto w = weights.data();
                    if (!d[0].empty())
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) d[0][i * n + j] += w[i] * G[i * n + j];
                    if (!d[1].empty())
                      for (std::size_t i = 0; i < m; ++i) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += v[i * n + j] * G[i * n + j];
                        d[1][i] += acc;
                      }
                  });
}

Tensor concat_cols(Graph& g, std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t m = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.rows() != m)
      throw DimensionError("concat_cols: row mismatch " + to_string(parts.front().shape()) + " vs " +
                           to_string(p.shape()));
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto src = parts[k].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(src.data() + i * widths[k], widths[k], out.data() + i * total + offset);
    offset += widths[k];
  }
  return g.record(OpKind::concat_cols, std::vector<Tensor>(parts.begin(), parts.end()), {m, total},
                  std::move(out),
                  [widths, m, total](auto, std::span<const double> G, std::span<std::span<double>> d) {
                    std::size_t offset = 0;
                    for (std::size_t k = 0; k < widths.size(); ++k) {
                      if (!d[k].empty())
                        for (std::size_t i = 0; i < m; ++i)
                          for (std::size_t j = 0; j < widths[k]; ++j)
                            d[k][i * widths[k] + j] += G[i * total + offset + j];
                      offset += widths[k];
                    }
                  });
}

Tensor sum(Graph& g, const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return g.record(OpKind::sum, {a}, {1}, {total},
                  [](auto, std::span<const double> G, std::span<std::span<double>> d) {
                    for (auto& v : d[0]) v += G[0];
                  });
}

Tensor pick(Graph& g, const Tensor& a, std::size_t index) {
  if (index >= a.size())
    throw DimensionError("pick: index " + std::to_string(index) + " out of range for " + to_string(a.shape()));
  return g.record(OpKind::pick, {a}, {1}, {a[index]},
                  [index](auto, std::span<const double> G, std::span<std::span<double>> d) {
                    d[0][index] += G[0];
                  });
}

}  // namespace patchbag
