#pragma once

// Transformer building blocks shared by the text encoder and the fusion
// stack. Parameters live in a ParamStore under a caller-chosen prefix.

#include <string>

#include "dasa/param_store.hpp"

namespace dasa::nn {

struct AttentionShape {
  std::size_t d = 0;
  std::size_t heads = 1;
  // When false the concatenated heads are returned without W_o.
  bool output_projection = true;
};

// Registers <prefix>.Wq, .Wk, .Wv (d×d, no bias) and optionally .Wo / .bo.
void register_attention(ParamStore& ps, const std::string& prefix, const AttentionShape& shape);

// softmax((Xq Wq)(Xk Wk)ᵀ / √(d/h)) (Xv Wv), split into h heads of width d/h,
// concatenated, then output-projected. Keys and values must have equal rows.
Tensor attention(const Tensor& query_src, const Tensor& key_src, const Tensor& value_src,
                 const ParamStore& ps, const std::string& prefix, const AttentionShape& shape);

// Row-wise attention weights of a single head, exposed for inspection/tests.
Tensor attention_weights(const Tensor& q, const Tensor& k, double scale);

void register_ffn(ParamStore& ps, const std::string& prefix, std::size_t d, std::size_t hidden);
Tensor feed_forward(const Tensor& x, const ParamStore& ps, const std::string& prefix,
                    Nonlinearity nl);

void register_layer_norm(ParamStore& ps, const std::string& prefix, std::size_t d);
Tensor layer_norm(const Tensor& x, const ParamStore& ps, const std::string& prefix,
                  double eps = 1e-5);

void register_linear(ParamStore& ps, const std::string& prefix, std::size_t in,
                     std::size_t out, bool bias = true);
Tensor linear(const Tensor& x, const ParamStore& ps, const std::string& prefix);

}  // namespace dasa::nn
