#include "dasa/layers.hpp"

#include <cmath>

#include "dasa/errors.hpp"

namespace dasa::nn {

void register_attention(ParamStore& ps, const std::string& prefix, const AttentionShape& shape) {
  if (shape.heads == 0 || shape.d % shape.heads != 0) {
    throw ContractError("attention: d=" + std::to_string(shape.d) +
                        " not divisible by heads=" + std::to_string(shape.heads));
  }
  for (const char* m : {".Wq", ".Wk", ".Wv"}) {
    ps.add(prefix + m, {shape.d, shape.d}, InitKind::xavier_uniform);
  }
  if (shape.output_projection) {
    ps.add(prefix + ".Wo", {shape.d, shape.d}, InitKind::xavier_uniform);
    ps.add(prefix + ".bo", {shape.d}, InitKind::zeros);
  }
}

Tensor attention_weights(const Tensor& q, const Tensor& k, double scale) {
  return softmax_rows(dasa::scale(matmul_nt(q, k), scale));
}

Tensor attention(const Tensor& query_src, const Tensor& key_src, const Tensor& value_src,
                 const ParamStore& ps, const std::string& prefix, const AttentionShape& shape) {
  if (query_src.cols() != shape.d || key_src.cols() != shape.d || value_src.cols() != shape.d) {
    throw DimensionError("attention " + prefix + ": inputs must have " +
                         std::to_string(shape.d) + " columns");
  }
  if (key_src.rows() != value_src.rows()) {
    throw DimensionError("attention " + prefix + ": key/value row counts differ " +
                         shape_str(key_src.shape()) + " vs " + shape_str(value_src.shape()));
  }
  const Tensor q = matmul(query_src, ps.get(prefix + ".Wq"));
  const Tensor k = matmul(key_src, ps.get(prefix + ".Wk"));
  const Tensor v = matmul(value_src, ps.get(prefix + ".Wv"));
  const std::size_t dh = shape.d / shape.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor out;
  for (std::size_t h = 0; h < shape.heads; ++h) {
    Tensor qh = shape.heads == 1 ? q : slice_cols(q, h * dh, dh);
    Tensor kh = shape.heads == 1 ? k : slice_cols(k, h * dh, dh);
    Tensor vh = shape.heads == 1 ? v : slice_cols(v, h * dh, dh);
    Tensor head = matmul(attention_weights(qh, kh, inv_sqrt), vh);
    out = out.defined() ? concat(out, head, 1) : head;
  }
  if (!shape.output_projection) return out;
  return affine(out, ps.get(prefix + ".Wo"), ps.get(prefix + ".bo"));
}

void register_ffn(ParamStore& ps, const std::string& prefix, std::size_t d, std::size_t hidden) {
  register_linear(ps, prefix + ".fc1", d, hidden);
  register_linear(ps, prefix + ".fc2", hidden, d);
}

Tensor feed_forward(const Tensor& x, const ParamStore& ps, const std::string& prefix,
                    Nonlinearity nl) {
  return linear(apply_nonlinearity(linear(x, ps, prefix + ".fc1"), nl), ps, prefix + ".fc2");
}

void register_layer_norm(ParamStore& ps, const std::string& prefix, std::size_t d) {
  ps.add(prefix + ".gamma", {d}, InitKind::ones);
  ps.add(prefix + ".beta", {d}, InitKind::zeros);
}

Tensor layer_norm(const Tensor& x, const ParamStore& ps, const std::string& prefix, double eps) {
  return layer_norm_rows(x, ps.get(prefix + ".gamma"), ps.get(prefix + ".beta"), eps);
}

void register_linear(ParamStore& ps, const std::string& prefix, std::size_t in, std::size_t out,
                     bool bias) {
  ps.add(prefix + ".W", {in, out}, InitKind::xavier_uniform);
  if (bias) ps.add(prefix + ".b", {out}, InitKind::zeros);
}

Tensor linear(const Tensor& x, const ParamStore& ps, const std::string& prefix) {
  const std::string bias = prefix + ".b";
  return affine(x, ps.get(prefix + ".W"), ps.contains(bias) ? ps.get(bias) : Tensor());
}

}  // namespace dasa::nn
