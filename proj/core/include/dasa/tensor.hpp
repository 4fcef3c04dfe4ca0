#pragma once

// Dense row-major tensors of doubles with tape-free reverse-mode
// differentiation. Every op records its parents and a backward closure on the
// result node; Tensor::backward() walks the graph in reverse topological order.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dasa {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  bool backward_done = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> data, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Row/column view used by row-wise ops: rank 1 is a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  // Only valid on leaves (parameters, inputs); mutating interior nodes
  // invalidates recorded gradients.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Accumulates d(this)/d(leaf) into every reachable leaf with
  // requires_grad. Only scalars; each graph may be differentiated once.
  void backward();

  // Copy of the values, disconnected from the graph.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

enum class Nonlinearity { gelu, relu };

std::string to_string(Nonlinearity nl);
Nonlinearity nonlinearity_from_string(const std::string& name);

// ---- linear algebra -------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
// a · bᵀ without materialising the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// x · W (+ b broadcast over rows when b is defined).
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b = Tensor());

// ---- elementwise ----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// Adds a length-n vector to every row of an m×n matrix.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);
Tensor apply_nonlinearity(const Tensor& x, Nonlinearity nl);
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);

// ---- structural -----------------------------------------------------------
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor reshape(const Tensor& x, Shape shape);
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
// Row-permutation: out.row(i) = x.row(order[i]).
Tensor permute_rows(const Tensor& x, std::span<const std::size_t> order);

// ---- reductions / normalisers ---------------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Column-wise max over rows: m×n -> 1×n. Gradient goes to the first maximum.
Tensor max_rows(const Tensor& x);
// Column-wise max within consecutive row segments: segment i covers rows
// [offsets[i], offsets[i+1]). Result has offsets.size()-1 rows.
Tensor segment_max_rows(const Tensor& x, std::span<const std::size_t> offsets);
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);
// Cosine similarity of two equal-length vectors; scalar result.
Tensor cosine(const Tensor& u, const Tensor& v);
// Cosine of every row of a (m×d) against v (d): result has shape {m}.
Tensor cosine_rows(const Tensor& a, const Tensor& v);

// ---- losses ---------------------------------------------------------------
// Mean over rows of -log softmax(logits)[row, target[row]].
Tensor cross_entropy_rows(const Tensor& logits,
                          std::span<const std::size_t> targets);
// Mean squared difference.
Tensor mse(const Tensor& a, const Tensor& b);
// KL(p || softmax(logits)) for a fixed distribution p (a single row).
Tensor kl_to_logits(std::span<const double> p, const Tensor& logits);

}  // namespace dasa
