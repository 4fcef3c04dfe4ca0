#include "dasa/model_config.hpp"

#include "dasa/errors.hpp"

namespace dasa {

std::string to_string(FusionMode m) { return m == FusionMode::add ? "add" : "concat"; }

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "add") return FusionMode::add;
  if (s == "concat" || s == "concat_project") return FusionMode::concat_project;
  throw ContractError("unknown fusion mode: " + s);
}

ModelConfig ModelConfig::reference() {
  ModelConfig c;
  c.d = 768;
  c.heads = 12;
  c.layers = 4;
  return c;
}

void ModelConfig::validate() const {
  if (d == 0 || heads == 0 || d % heads != 0) {
    throw ContractError("model: d=" + std::to_string(d) + " must be divisible by heads=" +
                        std::to_string(heads));
  }
  if (layers == 0) throw ContractError("model: need at least one fusion layer");
  if (vocab_size < 2) throw ContractError("model: vocabulary not set");
  if (num_categories == 0 || num_colors == 0) throw ContractError("model: empty label sets");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d", c.d},
                     {"heads", c.heads},
                     {"layers", c.layers},
                     {"text_layers", c.text_layers},
                     {"ffn_mult", c.ffn_mult},
                     {"vocab_size", c.vocab_size},
                     {"max_tokens", c.max_tokens},
                     {"num_categories", c.num_categories},
                     {"num_colors", c.num_colors},
                     {"point_hidden", c.point_hidden},
                     {"fusion", to_string(c.fusion)},
                     {"residual_norm", c.residual_norm},
                     {"output_projection", c.output_projection},
                     {"nonlinearity", to_string(c.nonlinearity)},
                     {"sentence_pooling", c.sentence_pooling},
                     {"ln_eps", c.ln_eps},
                     {"embedding_std", c.embedding_std}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig def;
  c.d = j.value("d", def.d);
  c.heads = j.value("heads", def.heads);
  c.layers = j.value("layers", def.layers);
  c.text_layers = j.value("text_layers", def.text_layers);
  c.ffn_mult = j.value("ffn_mult", def.ffn_mult);
  c.vocab_size = j.value("vocab_size", def.vocab_size);
  c.max_tokens = j.value("max_tokens", def.max_tokens);
  c.num_categories = j.value("num_categories", def.num_categories);
  c.num_colors = j.value("num_colors", def.num_colors);
  c.point_hidden = j.value("point_hidden", def.point_hidden);
  c.fusion = fusion_mode_from_string(j.value("fusion", to_string(def.fusion)));
  c.residual_norm = j.value("residual_norm", def.residual_norm);
  c.output_projection = j.value("output_projection", def.output_projection);
  c.nonlinearity = nonlinearity_from_string(j.value("nonlinearity", to_string(def.nonlinearity)));
  c.sentence_pooling = j.value("sentence_pooling", def.sentence_pooling);
  c.ln_eps = j.value("ln_eps", def.ln_eps);
  c.embedding_std = j.value("embedding_std", def.embedding_std);
}

}  // namespace dasa
