#include "dasa/model.hpp"

#include <algorithm>

#include "dasa/errors.hpp"
#include "dasa/layers.hpp"

namespace dasa::net {

namespace {

nn::AttentionShape attention_shape(const ModelConfig& cfg) {
  return {cfg.d, cfg.heads, cfg.output_projection};
}

Tensor residual_block(const Tensor& input, const Tensor& update, const ParamStore& ps,
                      const std::string& norm_prefix, const ModelConfig& cfg) {
  if (!cfg.residual_norm) return update;
  return nn::layer_norm(add(input, update), ps, norm_prefix, cfg.ln_eps);
}

const char* kBranches[] = {"att", "spa"};

}  // namespace

// ---- inputs ------------------------------------------------------------------

InputSpace InputSpace::from_config(const scene::GenConfig& config) {
  InputSpace s;
  s.vocab = text::Vocabulary::from_words(scene::grammar_words(config));
  s.lexicon.sizes = {"small", "large"};
  for (const auto& c : config.colors) {
    s.colors.push_back(c.name);
    s.lexicon.colors.insert(c.name);
  }
  for (const auto& c : config.categories) {
    s.categories.push_back(c.name);
    s.lexicon.nouns.insert(c.name);
  }
  return s;
}

std::size_t InputSpace::category_id(const std::string& name) const {
  auto it = std::find(categories.begin(), categories.end(), name);
  if (it == categories.end()) throw ContractError("unknown category: " + name);
  return static_cast<std::size_t>(it - categories.begin());
}

std::size_t InputSpace::color_id(const std::string& name) const {
  auto it = std::find(colors.begin(), colors.end(), name);
  if (it == colors.end()) throw ContractError("unknown color: " + name);
  return static_cast<std::size_t>(it - colors.begin());
}

void InputSpace::apply_to(ModelConfig& cfg) const {
  cfg.vocab_size = vocab.size();
  cfg.num_categories = categories.size();
  cfg.num_colors = colors.size();
}

GroundingInput prepare_input(const scene::Scene& scene, const std::vector<std::string>& words,
                             int target_id, const InputSpace& space, bool with_points) {
  GroundingInput in;
  for (const auto& o : scene.objects) {
    in.object_ids.push_back(o.id);
    in.category_ids.push_back(space.category_id(o.category));
    in.color_ids.push_back(space.color_id(o.color));
  }
  in.boxes = objenc::bbox_tensor(scene);
  if (with_points) in.points = objenc::point_tensor(scene, in.point_offsets);
  const text::DecoupledText dec = text::decouple(words, space.lexicon);
  in.tokens = text::tokenize(dec.original, space.vocab);
  in.att_tokens = text::tokenize(dec.att, space.vocab);
  in.spa_tokens = text::tokenize(dec.spa, space.vocab);
  in.target_index = scene.index_of(target_id);
  in.target_category = in.category_ids[in.target_index];
  return in;
}

GroundingInput prepare_input(const scene::Scene& scene, const scene::DescriptionRecord& record,
                             const InputSpace& space, bool with_points) {
  if (record.scene_id != scene.id) {
    throw ContractError("prepare_input: record " + std::to_string(record.id) +
                        " belongs to scene " + std::to_string(record.scene_id));
  }
  return prepare_input(scene, record.surface_tokens, record.target_id, space, with_points);
}

// ---- parameters --------------------------------------------------------------

std::string layer_prefix(std::size_t layer, const std::string& branch) {
  return "stack.layer" + std::to_string(layer) + "." + branch;
}

void register_model(ParamStore& ps, const ModelConfig& cfg, EncoderRole role) {
  cfg.validate();
  text::register_text_encoder(ps, cfg);
  objenc::register_object_encoders(ps, cfg, role);
  const auto shape = attention_shape(cfg);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    for (const char* b : kBranches) {
      const std::string p = layer_prefix(l, b);
      nn::register_attention(ps, p + ".self", shape);
      nn::register_attention(ps, p + ".cross", shape);
      nn::register_ffn(ps, p + ".ffn", cfg.d, cfg.ffn_mult * cfg.d);
      if (cfg.residual_norm) {
        nn::register_layer_norm(ps, p + ".ln_self", cfg.d);
        nn::register_layer_norm(ps, p + ".ln_cross", cfg.d);
        nn::register_layer_norm(ps, p + ".ln_ffn", cfg.d);
      }
    }
  }
  for (const char* b : kBranches) {
    ps.add(std::string("head.") + b + ".Wo", {cfg.d, cfg.d}, InitKind::xavier_uniform);
    ps.add(std::string("head.") + b + ".Wt", {cfg.d, cfg.d}, InitKind::xavier_uniform);
  }
  nn::register_linear(ps, "head.fg", cfg.d, cfg.num_categories);
  nn::register_linear(ps, "head.text", cfg.d, cfg.num_categories);
}

// ---- fusion stack --------------------------------------------------------------

Tensor branch_self_attention(const Tensor& branch, const Tensor& global, const ParamStore& ps,
                             const std::string& prefix, const ModelConfig& cfg) {
  if (branch.shape() != global.shape()) {
    throw DimensionError("branch_self_attention: " + shape_str(branch.shape()) + " vs " +
                         shape_str(global.shape()));
  }
  Tensor update = nn::attention(branch, global, branch, ps, prefix + ".self", attention_shape(cfg));
  return residual_block(branch, update, ps, prefix + ".ln_self", cfg);
}

Tensor branch_cross_attention(const Tensor& branch, const Tensor& text_tokens,
                              const ParamStore& ps, const std::string& prefix,
                              const ModelConfig& cfg) {
  if (branch.cols() != text_tokens.cols()) {
    throw DimensionError("branch_cross_attention: " + shape_str(branch.shape()) + " vs " +
                         shape_str(text_tokens.shape()));
  }
  Tensor update = nn::attention(branch, text_tokens, text_tokens, ps, prefix + ".cross",
                                attention_shape(cfg));
  return residual_block(branch, update, ps, prefix + ".ln_cross", cfg);
}

Tensor branch_feed_forward(const Tensor& branch, const ParamStore& ps, const std::string& prefix,
                           const ModelConfig& cfg) {
  Tensor update = nn::feed_forward(branch, ps, prefix + ".ffn", cfg.nonlinearity);
  return residual_block(branch, update, ps, prefix + ".ln_ffn", cfg);
}

StackOutput forward_stack(const Tensor& att, const Tensor& spa, const Tensor& text_tokens,
                          const ParamStore& ps, const ModelConfig& cfg) {
  if (cfg.layers == 0) throw ContractError("forward_stack: need at least one layer");
  StackOutput cur{att, spa};
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const Tensor global = objenc::fuse_global(cur.att, cur.spa, cfg.fusion, ps);
    StackOutput next;
    for (const char* b : kBranches) {
      const std::string p = layer_prefix(l, b);
      const Tensor& x = (b[0] == 'a') ? cur.att : cur.spa;
      Tensor y = branch_self_attention(x, global, ps, p, cfg);
      y = branch_cross_attention(y, text_tokens, ps, p, cfg);
      y = branch_feed_forward(y, ps, p, cfg);
      ((b[0] == 'a') ? next.att : next.spa) = y;
    }
    cur = next;
  }
  return cur;
}

// ---- scoring -----------------------------------------------------------------

Tensor score_branch(const Tensor& features, const Tensor& sentence, const Tensor& w_obj,
                    const Tensor& w_text) {
  const Tensor t = sentence.rank() == 1 ? reshape(sentence, {1, sentence.numel()}) : sentence;
  return cosine_rows(matmul(features, w_obj), matmul(t, w_text));
}

std::size_t argmax_lowest(std::span<const double> values) {
  if (values.empty()) throw ContractError("argmax of empty score vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

ScoreTriple combine_scores(std::span<const double> att, std::span<const double> spa) {
  if (att.size() != spa.size()) {
    throw ContractError("combine_scores: " + std::to_string(att.size()) + " vs " +
                        std::to_string(spa.size()) + " scores");
  }
  ScoreTriple out;
  out.att.assign(att.begin(), att.end());
  out.spa.assign(spa.begin(), spa.end());
  out.total.resize(att.size());
  for (std::size_t i = 0; i < att.size(); ++i) out.total[i] = att[i] + spa[i];
  out.argmax = argmax_lowest(out.total);
  return out;
}

ForwardPass forward(const GroundingInput& input, const ParamStore& ps, const ModelConfig& cfg,
                    EncoderRole role) {
  ForwardPass f;
  f.text_tokens = text::encode_text(input.tokens, ps, cfg);
  f.t_att = text::encode_sentence(input.att_tokens, ps, cfg);
  f.t_spa = text::encode_sentence(input.spa_tokens, ps, cfg);
  f.objects.att = role == EncoderRole::teacher
                      ? objenc::encode_attribute_teacher(input.category_ids, input.color_ids, ps, cfg)
                      : objenc::encode_attribute_student(input.points, input.point_offsets, ps, cfg);
  f.objects.spa = objenc::encode_spatial(input.boxes, ps);
  f.objects.global = objenc::fuse_global(f.objects.att, f.objects.spa, cfg.fusion, ps);
  const StackOutput out = forward_stack(f.objects.att, f.objects.spa, f.text_tokens, ps, cfg);
  f.att_hat = out.att;
  f.spa_hat = out.spa;
  f.s_att = score_branch(f.att_hat, f.t_att, ps.get("head.att.Wo"), ps.get("head.att.Wt"));
  f.s_spa = score_branch(f.spa_hat, f.t_spa, ps.get("head.spa.Wo"), ps.get("head.spa.Wt"));
  return f;
}

GroundingResult predict(const GroundingInput& input, const ParamStore& ps, const ModelConfig& cfg,
                        EncoderRole role) {
  NoGradGuard guard;
  const ForwardPass f = forward(input, ps, cfg, role);
  GroundingResult r;
  r.scores = combine_scores(f.s_att.data(), f.s_spa.data());
  for (std::size_t i = 0; i < r.scores.total.size(); ++i) {
    if (r.scores.total[i] != r.scores.att[i] + r.scores.spa[i]) {
      throw NumericalError("score decomposition violated");
    }
  }
  r.predicted_id = input.object_ids[r.scores.argmax];
  return r;
}

}  // namespace dasa::net
