#pragma once

#include <cstddef>
#include <string>

#include <nlohmann/json.hpp>

#include "dasa/tensor.hpp"

namespace dasa {

enum class FusionMode { add, concat_project };

std::string to_string(FusionMode m);
FusionMode fusion_mode_from_string(const std::string& s);

// Architecture hyperparameters shared by the text encoder, the object
// encoders and the fusion stack.
struct ModelConfig {
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;       // fusion stack depth
  std::size_t text_layers = 2;  // text encoder depth
  std::size_t ffn_mult = 4;
  std::size_t vocab_size = 0;
  std::size_t max_tokens = 32;
  std::size_t num_categories = 10;
  std::size_t num_colors = 6;
  std::size_t point_hidden = 64;
  FusionMode fusion = FusionMode::add;
  // Residual + post-LayerNorm around every fusion sub-block. Disabled only in
  // the literal-formula test configuration.
  bool residual_norm = true;
  bool output_projection = true;
  Nonlinearity nonlinearity = Nonlinearity::gelu;
  std::string sentence_pooling = "cls";
  double ln_eps = 1e-5;
  double embedding_std = 0.3;

  // Published full-scale settings, kept for provenance.
  static ModelConfig reference();
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace dasa
