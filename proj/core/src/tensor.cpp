#include "dasa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "dasa/errors.hpp"

namespace dasa {

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<detail::Node>;

NodePtr new_node(Shape shape, std::vector<double> data) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  return n;
}

// Builds the result node and wires it into the graph when any parent needs
// gradients and recording is enabled.
Tensor record(Shape shape, std::vector<double> data,
              std::initializer_list<const Tensor*> parents,
              std::function<void(detail::Node&)> backward_fn) {
  auto out = new_node(std::move(shape), std::move(data));
  if (g_grad_enabled) {
    bool any = false;
    for (const Tensor* p : parents) {
      if (p->defined() && p->requires_grad()) any = true;
    }
    if (any) {
      out->requires_grad = true;
      for (const Tensor* p : parents) {
        out->parents.push_back(p->defined() ? p->node() : nullptr);
      }
      out->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(out);
}

// Parent i when it participates in differentiation, otherwise null.
detail::Node* grad_target(detail::Node& self, std::size_t i) {
  detail::Node* p = self.parents[i].get();
  return (p != nullptr && p->requires_grad) ? p : nullptr;
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void require_rank2(const Tensor& t, const char* op) {
  require_defined(t, op);
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_row_shaped(const Tensor& t, const char* op) {
  require_defined(t, op);
  if (t.rank() != 1 && t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " +
                         shape_str(t.shape()));
  }
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto n = new_node(std::move(shape), std::move(data));
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::vector(std::vector<double> data, bool requires_grad) {
  std::size_t n = data.size();
  return from({n}, std::move(data), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                      bool requires_grad) {
  return from({rows, cols}, std::move(data), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->data.size(); }

std::size_t Tensor::rows() const {
  const Shape& s = shape();
  if (s.size() == 2) return s[0];
  return 1;
}

std::size_t Tensor::cols() const {
  const Shape& s = shape();
  if (s.empty()) return 1;
  return s.back();
}

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on non-scalar " + shape_str(shape()));
  }
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  return Tensor(new_node(node_->shape, node_->data));
}

void Tensor::backward() {
  require_defined(*this, "backward");
  if (numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_str(shape()));
  }
  if (node_->backward_done) {
    throw ContractError("backward called twice on the same graph");
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS over nodes that need gradients.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p != nullptr && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  node_->backward_done = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

std::string to_string(Nonlinearity nl) {
  return nl == Nonlinearity::gelu ? "gelu_erf" : "relu";
}

Nonlinearity nonlinearity_from_string(const std::string& name) {
  if (name == "gelu" || name == "gelu_erf") return Nonlinearity::gelu;
  if (name == "relu") return Nonlinearity::relu;
  throw ContractError("unknown nonlinearity: " + name);
}

// ---- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner extents differ " + shape_str(a.shape()) +
                         " · " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* C = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* Brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) C[j] += av * Brow[j];
    }
  }
  return record({m, n}, std::move(out), {&a, &b}, [m, k, n](detail::Node& self) {
    const double* G = self.grad.data();
    const double* A = self.parents[0]->data.data();
    const double* B = self.parents[1]->data.data();
    if (auto* pa = grad_target(self, 0)) {
      // dA = G Bᵀ, accumulated as row updates over a transposed copy of B.
      double* dA = pa->grad_buffer().data();
      std::vector<double> bt(k * n);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
      for (std::size_t i = 0; i < m; ++i) {
        double* dArow = dA + i * k;
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          const double* btrow = bt.data() + j * k;
          for (std::size_t p = 0; p < k; ++p) dArow[p] += g * btrow[p];
        }
      }
    }
    if (auto* pb = grad_target(self, 1)) {
      double* dB = pb->grad_buffer().data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* Grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          double* dBrow = dB + p * n;
          for (std::size_t j = 0; j < n; ++j) dBrow[j] += av * Grow[j];
        }
      }
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    throw DimensionError("matmul_nt: inner extents differ " + shape_str(a.shape()) +
                         " · " + shape_str(b.shape()) + "ᵀ");
  }
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[j * k + p];
      out[i * n + j] = acc;
    }
  }
  return record({m, n}, std::move(out), {&a, &b}, [m, k, n](detail::Node& self) {
    const double* G = self.grad.data();
    const double* A = self.parents[0]->data.data();
    const double* B = self.parents[1]->data.data();
    if (auto* pa = grad_target(self, 0)) {
      double* dA = pa->grad_buffer().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          for (std::size_t p = 0; p < k; ++p) dA[i * k + p] += g * B[j * k + p];
        }
      }
    }
    if (auto* pb = grad_target(self, 1)) {
      double* dB = pb->grad_buffer().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          for (std::size_t p = 0; p < k; ++p) dB[j * k + p] += g * A[i * k + p];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  const auto src = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];
  return record({n, m}, std::move(out), {&a}, [m, n](detail::Node& self) {
    auto* p = grad_target(self, 0);
    double* d = p->grad_buffer().data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] += self.grad[j * m + i];
  });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w);
  if (!b.defined()) return y;
  return add_rowwise(y, b);
}

// ---- elementwise ------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return record(a.shape(), std::move(out), {&a, &b}, [](detail::Node& self) {
    for (std::size_t s = 0; s < 2; ++s) {
      if (auto* p = grad_target(self, s)) {
        auto& d = p->grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return record(a.shape(), std::move(out), {&a, &b}, [](detail::Node& self) {
    if (auto* p = grad_target(self, 0)) {
      auto& d = p->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
    if (auto* p = grad_target(self, 1)) {
      auto& d = p->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return record(a.shape(), std::move(out), {&a, &b}, [](detail::Node& self) {
    const auto& x = self.parents[0]->data;
    const auto& y = self.parents[1]->data;
    if (auto* p = grad_target(self, 0)) {
      auto& d = p->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * y[i];
    }
    if (auto* p = grad_target(self, 1)) {
      auto& d = p->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  require_defined(a, "scale");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x[i];
  return record(a.shape(), std::move(out), {&a}, [c](detail::Node& self) {
    auto& d = grad_target(self, 0)->grad_buffer();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * self.grad[i];
  });
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  require_row_shaped(x, "add_rowwise");
  require_defined(bias, "add_rowwise");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_rowwise: bias " + shape_str(bias.shape()) +
                         " does not match rows of " + shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto b = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  return record(x.shape(), std::move(out), {&x, &bias}, [m, n](detail::Node& self) {
    if (auto* p = grad_target(self, 0)) {
      auto& d = p->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
    if (auto* p = grad_target(self, 1)) {
      auto& d = p->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[j] += self.grad[i * n + j];
    }
  });
}

Tensor gelu(const Tensor& x) {
  require_defined(x, "gelu");
  std::vector<double> out(x.numel());
  const auto v = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * v[i] * (1.0 + std::erf(v[i] * kInvSqrt2));
  }
  return record(x.shape(), std::move(out), {&x}, [](detail::Node& self) {
    auto* p = grad_target(self, 0);
    const auto& v = p->data;
    auto& d = p->grad_buffer();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(v[i] * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v[i] * v[i]);
      d[i] += self.grad[i] * (cdf + v[i] * pdf);
    }
  });
}

Tensor relu(const Tensor& x) {
  require_defined(x, "relu");
  std::vector<double> out(x.numel());
  const auto v = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  return record(x.shape(), std::move(out), {&x}, [](detail::Node& self) {
    auto* p = grad_target(self, 0);
    auto& d = p->grad_buffer();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (p->data[i] > 0.0) d[i] += self.grad[i];
    }
  });
}

Tensor apply_nonlinearity(const Tensor& x, Nonlinearity nl) {
  return nl == Nonlinearity::gelu ? gelu(x) : relu(x);
}

// ---- structural -------------------------------------------------------------------

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  require_rank2(a, "concat");
  require_rank2(b, "concat");
  const std::size_t ma = a.shape()[0], na = a.shape()[1];
  const std::size_t mb = b.shape()[0], nb = b.shape()[1];
  if (axis == 0) {
    if (na != nb) {
      throw DimensionError("concat(axis=0): column mismatch " + shape_str(a.shape()) +
                           " vs " + shape_str(b.shape()));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    const std::size_t split = a.numel();
    return record({ma + mb, na}, std::move(out), {&a, &b}, [split](detail::Node& self) {
      if (auto* p = grad_target(self, 0)) {
        auto& d = p->grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
      }
      if (auto* p = grad_target(self, 1)) {
        auto& d = p->grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[split + i];
      }
    });
  }
  if (axis != 1) throw ContractError("concat: axis must be 0 or 1");
  if (ma != mb) {
    throw DimensionError("concat(axis=1): row mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const std::size_t n = na + nb;
  std::vector<double> out(ma * n);
  for (std::size_t i = 0; i < ma; ++i) {
    std::copy_n(a.data().begin() + i * na, na, out.begin() + i * n);
    std::copy_n(b.data().begin() + i * nb, nb, out.begin() + i * n + na);
  }
  return record({ma, n}, std::move(out), {&a, &b}, [ma, na, nb, n](detail::Node& self) {
    if (auto* p = grad_target(self, 0)) {
      auto& d = p->grad_buffer();
      for (std::size_t i = 0; i < ma; ++i)
        for (std::size_t j = 0; j < na; ++j) d[i * na + j] += self.grad[i * n + j];
    }
    if (auto* p = grad_target(self, 1)) {
      auto& d = p->grad_buffer();
      for (std::size_t i = 0; i < ma; ++i)
        for (std::size_t j = 0; j < nb; ++j) d[i * nb + j] += self.grad[i * n + na + j];
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank2(x, "slice_rows");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (count == 0 || start + count > m) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", +" +
                         std::to_string(count) + ") outside " + shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin() + start * n,
                          x.data().begin() + (start + count) * n);
  return record({count, n}, std::move(out), {&x}, [start, n](detail::Node& self) {
    auto& d = grad_target(self, 0)->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[start * n + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank2(x, "slice_cols");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (count == 0 || start + count > n) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", +" +
                         std::to_string(count) + ") outside " + shape_str(x.shape()));
  }
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(x.data().begin() + i * n + start, count, out.begin() + i * count);
  return record({m, count}, std::move(out), {&x}, [m, n, start, count](detail::Node& self) {
    auto& d = grad_target(self, 0)->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j)
        d[i * n + start + j] += self.grad[i * count + j];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return record(std::move(shape), std::move(out), {&x}, [](detail::Node& self) {
    auto& d = grad_target(self, 0)->grad_buffer();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank2(table, "gather_rows");
  const std::size_t m = table.shape()[0], n = table.shape()[1];
  if (ids.empty()) throw DimensionError("gather_rows: empty index list");
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * n);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m) {
      throw ContractError("gather_rows: index " + std::to_string(idx[r]) +
                          " out of range for table " + shape_str(table.shape()));
    }
    std::copy_n(table.data().begin() + idx[r] * n, n, out.begin() + r * n);
  }
  const std::size_t k = idx.size();
  return record({k, n}, std::move(out), {&table},
                [idx = std::move(idx), n](detail::Node& self) {
                  auto& d = grad_target(self, 0)->grad_buffer();
                  for (std::size_t r = 0; r < idx.size(); ++r)
                    for (std::size_t j = 0; j < n; ++j)
                      d[idx[r] * n + j] += self.grad[r * n + j];
                });
}

Tensor permute_rows(const Tensor& x, std::span<const std::size_t> order) {
  require_rank2(x, "permute_rows");
  if (order.size() != x.shape()[0]) {
    throw DimensionError("permute_rows: order length does not match " + shape_str(x.shape()));
  }
  return gather_rows(x, order);
}

// ---- reductions / normalisers -----------------------------------------------------

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return record({}, {acc}, {&x}, [](detail::Node& self) {
    auto& d = grad_target(self, 0)->grad_buffer();
    const double g = self.grad[0];
    for (double& v : d) v += g;
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor max_rows(const Tensor& x) {
  require_rank2(x, "max_rows");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  const auto v = x.data();
  std::vector<double> out(v.begin(), v.begin() + n);
  std::vector<std::size_t> arg(n, 0);
  for (std::size_t i = 1; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (v[i * n + j] > out[j]) {
        out[j] = v[i * n + j];
        arg[j] = i;
      }
    }
  }
  return record({1, n}, std::move(out), {&x}, [arg = std::move(arg), n](detail::Node& self) {
    auto& d = grad_target(self, 0)->grad_buffer();
    for (std::size_t j = 0; j < n; ++j) d[arg[j] * n + j] += self.grad[j];
  });
}

Tensor segment_max_rows(const Tensor& x, std::span<const std::size_t> offsets) {
  require_rank2(x, "segment_max_rows");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != m) {
    throw DimensionError("segment_max_rows: offsets must run from 0 to " + std::to_string(m));
  }
  const std::size_t segs = offsets.size() - 1;
  const auto v = x.data();
  std::vector<double> out(segs * n);
  std::vector<std::size_t> arg(segs * n);
  for (std::size_t s = 0; s < segs; ++s) {
    if (offsets[s + 1] <= offsets[s]) throw DimensionError("segment_max_rows: empty segment");
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t best = offsets[s];
      for (std::size_t i = offsets[s] + 1; i < offsets[s + 1]; ++i) {
        if (v[i * n + j] > v[best * n + j]) best = i;
      }
      arg[s * n + j] = best;
      out[s * n + j] = v[best * n + j];
    }
  }
  return record({segs, n}, std::move(out), {&x}, [arg = std::move(arg), n](detail::Node& self) {
    auto& d = grad_target(self, 0)->grad_buffer();
    for (std::size_t k = 0; k < arg.size(); ++k) d[arg[k] * n + k % n] += self.grad[k];
  });
}

Tensor softmax_rows(const Tensor& x) {
  require_row_shaped(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  const auto v = x.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = v.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(row[j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return record(x.shape(), std::move(out), {&x}, [m, n](detail::Node& self) {
    auto& d = grad_target(self, 0)->grad_buffer();
    const auto& y = self.data;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        d[i * n + j] += y[i * n + j] * (self.grad[i * n + j] - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_row_shaped(x, "log_softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  const auto v = x.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = v.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double lz = std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (row[j] - mx) - lz;
  }
  return record(x.shape(), std::move(out), {&x}, [m, n](detail::Node& self) {
    auto& d = grad_target(self, 0)->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += self.grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        d[i * n + j] += self.grad[i * n + j] - std::exp(self.data[i * n + j]) * gsum;
    }
  });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps) {
  require_row_shaped(x, "layer_norm_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.numel() != n || beta.numel() != n) {
    throw DimensionError("layer_norm_rows: gain/bias length does not match " +
                         shape_str(x.shape()));
  }
  const auto v = x.data();
  const auto g = gamma.data(), b = beta.data();
  std::vector<double> out(m * n), xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = v.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * g[j] + b[j];
    }
  }
  return record(x.shape(), std::move(out), {&x, &gamma, &beta},
                [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
                  const auto& g = self.parents[1]->data;
                  if (auto* p = grad_target(self, 0)) {
                    auto& d = p->grad_buffer();
                    const double nn = static_cast<double>(n);
                    for (std::size_t i = 0; i < m; ++i) {
                      double s1 = 0.0, s2 = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double dh = self.grad[i * n + j] * g[j];
                        s1 += dh;
                        s2 += dh * xhat[i * n + j];
                      }
                      for (std::size_t j = 0; j < n; ++j) {
                        const double dh = self.grad[i * n + j] * g[j];
                        d[i * n + j] += inv_std[i] * (dh - s1 / nn - xhat[i * n + j] * s2 / nn);
                      }
                    }
                  }
                  if (auto* p = grad_target(self, 1)) {
                    auto& d = p->grad_buffer();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j)
                        d[j] += self.grad[i * n + j] * xhat[i * n + j];
                  }
                  if (auto* p = grad_target(self, 2)) {
                    auto& d = p->grad_buffer();
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) d[j] += self.grad[i * n + j];
                  }
                });
}

Tensor cosine(const Tensor& u, const Tensor& v) {
  require_defined(u, "cosine");
  require_defined(v, "cosine");
  if (u.numel() != v.numel()) {
    throw DimensionError("cosine: length mismatch " + shape_str(u.shape()) + " vs " +
                         shape_str(v.shape()));
  }
  Tensor uu = reshape(u, {1, u.numel()});
  Tensor c = cosine_rows(uu, v);
  return reshape(c, {});
}

Tensor cosine_rows(const Tensor& a, const Tensor& v) {
  require_row_shaped(a, "cosine_rows");
  require_defined(v, "cosine_rows");
  const std::size_t m = a.rows(), d = a.cols();
  if (v.numel() != d) {
    throw DimensionError("cosine_rows: vector " + shape_str(v.shape()) +
                         " does not match rows of " + shape_str(a.shape()));
  }
  const auto A = a.data(), V = v.data();
  double vv = 0.0;
  for (std::size_t j = 0; j < d; ++j) vv += V[j] * V[j];
  const double vnorm = std::sqrt(vv);
  if (vnorm == 0.0) throw DegenerateInputError("cosine: zero-norm vector");
  std::vector<double> out(m), anorm(m), dots(m);
  for (std::size_t i = 0; i < m; ++i) {
    double aa = 0.0, av = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      aa += A[i * d + j] * A[i * d + j];
      av += A[i * d + j] * V[j];
    }
    anorm[i] = std::sqrt(aa);
    if (anorm[i] == 0.0) throw DegenerateInputError("cosine: zero-norm vector");
    dots[i] = av;
    out[i] = std::clamp(av / (anorm[i] * vnorm), -1.0, 1.0);
  }
  return record({m}, std::move(out), {&a, &v},
                [m, d, vnorm, anorm = std::move(anorm), dots = std::move(dots)](detail::Node& self) {
                  const auto& A = self.parents[0]->data;
                  const auto& V = self.parents[1]->data;
                  auto* pa = grad_target(self, 0);
                  auto* pv = grad_target(self, 1);
                  double* dA = pa ? pa->grad_buffer().data() : nullptr;
                  double* dV = pv ? pv->grad_buffer().data() : nullptr;
                  for (std::size_t i = 0; i < m; ++i) {
                    const double g = self.grad[i];
                    if (g == 0.0) continue;
                    const double inv = 1.0 / (anorm[i] * vnorm);
                    const double c = dots[i] * inv;
                    // d cos / d a = v/(|a||v|) - c a/|a|^2 ; symmetric for v.
                    for (std::size_t j = 0; j < d; ++j) {
                      if (dA) dA[i * d + j] += g * (V[j] * inv - c * A[i * d + j] / (anorm[i] * anorm[i]));
                      if (dV) dV[j] += g * (A[i * d + j] * inv - c * V[j] / (vnorm * vnorm));
                    }
                  }
                });
}

// ---- losses -----------------------------------------------------------------------

Tensor cross_entropy_rows(const Tensor& logits, std::span<const std::size_t> targets) {
  require_row_shaped(logits, "cross_entropy_rows");
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m) {
    throw DimensionError("cross_entropy_rows: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(m) + " rows");
  }
  for (std::size_t t : targets) {
    if (t >= n) {
      throw ContractError("cross_entropy_rows: target " + std::to_string(t) +
                          " out of range for " + std::to_string(n) + " classes");
    }
  }
  const auto v = logits.data();
  std::vector<double> probs(m * n);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = v.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs[i * n + j] = std::exp(row[j] - mx);
      z += probs[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] /= z;
    loss += -(row[targets[i]] - mx - std::log(z));
  }
  loss /= static_cast<double>(m);
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return record({}, {loss}, {&logits},
                [m, n, probs = std::move(probs), tgt = std::move(tgt)](detail::Node& self) {
                  auto& d = grad_target(self, 0)->grad_buffer();
                  const double g = self.grad[0] / static_cast<double>(m);
                  for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                      d[i * n + j] += g * (probs[i * n + j] - (j == tgt[i] ? 1.0 : 0.0));
                    }
                  }
                });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  Tensor diff = sub(a, b);
  return mean(mul(diff, diff));
}

Tensor kl_to_logits(std::span<const double> p, const Tensor& logits) {
  require_defined(logits, "kl_to_logits");
  if (p.size() != logits.numel()) {
    throw DimensionError("kl_to_logits: distribution length " + std::to_string(p.size()) +
                         " vs logits " + shape_str(logits.shape()));
  }
  const auto v = logits.data();
  const std::size_t n = v.size();
  const double mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double x : v) z += std::exp(x - mx);
  const double lse = mx + std::log(z);
  std::vector<double> q(n);
  double kl = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    q[j] = std::exp(v[j] - lse);
    if (p[j] > 0.0) kl += p[j] * (std::log(p[j]) - (v[j] - lse));
  }
  std::vector<double> target(p.begin(), p.end());
  return record({}, {kl}, {&logits},
                [q = std::move(q), target = std::move(target)](detail::Node& self) {
                  auto& d = grad_target(self, 0)->grad_buffer();
                  double psum = 0.0;
                  for (double t : target) psum += t;
                  for (std::size_t j = 0; j < d.size(); ++j)
                    d[j] += self.grad[0] * (psum * q[j] - target[j]);
                });
}

}  // namespace dasa
