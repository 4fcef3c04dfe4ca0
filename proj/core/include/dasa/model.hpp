#pragma once

// The dual attribute/spatial fusion stack and its alignment heads.
//
// Per layer and per branch b ∈ {att, spa}:
//   F      = fuse(F_att, F_spa)                         (shared key source)
//   X_b    = LN(F_b + MHA(q = F_b, k = F,   v = F_b))
//   Y_b    = LN(X_b + MHA(q = X_b, k = T,   v = T))
//   F_b'   = LN(Y_b + FFN(Y_b))
// Both branches advance in lockstep from the same layer's F. Scores are
// cosines between projected object and sentence features; s = s_att + s_spa.

#include <string>
#include <vector>

#include "dasa/model_config.hpp"
#include "dasa/object_encoder.hpp"
#include "dasa/param_store.hpp"
#include "dasa/scene.hpp"
#include "dasa/text.hpp"

namespace dasa::net {

using objenc::EncoderRole;

// Label and token spaces derived from the generator vocabulary.
struct InputSpace {
  text::Vocabulary vocab;
  text::Lexicon lexicon;
  std::vector<std::string> categories;
  std::vector<std::string> colors;

  static InputSpace from_config(const scene::GenConfig& config);
  std::size_t category_id(const std::string& name) const;
  std::size_t color_id(const std::string& name) const;
  // Copies vocabulary/label sizes into a model config.
  void apply_to(ModelConfig& cfg) const;
};

// Everything one forward pass needs, precomputed from a scene and record.
struct GroundingInput {
  std::vector<int> object_ids;
  std::vector<std::size_t> category_ids;
  std::vector<std::size_t> color_ids;
  Tensor boxes;  // K×6, room-normalised
  Tensor points;  // ΣN×6, per-object normalised (student only)
  std::vector<std::size_t> point_offsets;
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> att_tokens;
  std::vector<std::size_t> spa_tokens;
  std::size_t target_index = 0;
  std::size_t target_category = 0;

  std::size_t num_objects() const { return object_ids.size(); }
};

// `scene` must carry points when with_points is set.
GroundingInput prepare_input(const scene::Scene& scene, const scene::DescriptionRecord& record,
                             const InputSpace& space, bool with_points);
// Tokens-only variant for inspection of arbitrary text.
GroundingInput prepare_input(const scene::Scene& scene, const std::vector<std::string>& words,
                             int target_id, const InputSpace& space, bool with_points);

void register_model(ParamStore& ps, const ModelConfig& cfg, EncoderRole role);

std::string layer_prefix(std::size_t layer, const std::string& branch);

Tensor branch_self_attention(const Tensor& branch, const Tensor& global, const ParamStore& ps,
                             const std::string& prefix, const ModelConfig& cfg);
Tensor branch_cross_attention(const Tensor& branch, const Tensor& text_tokens,
                              const ParamStore& ps, const std::string& prefix,
                              const ModelConfig& cfg);
Tensor branch_feed_forward(const Tensor& branch, const ParamStore& ps, const std::string& prefix,
                           const ModelConfig& cfg);

struct StackOutput {
  Tensor att;
  Tensor spa;
};

StackOutput forward_stack(const Tensor& att, const Tensor& spa, const Tensor& text_tokens,
                          const ParamStore& ps, const ModelConfig& cfg);

// s_i = cos(F̂_i W_o, t W_t); shape {K}.
Tensor score_branch(const Tensor& features, const Tensor& sentence, const Tensor& w_obj,
                    const Tensor& w_text);

struct ScoreTriple {
  std::vector<double> att;
  std::vector<double> spa;
  std::vector<double> total;
  std::size_t argmax = 0;  // lowest index among ties
};

ScoreTriple combine_scores(std::span<const double> att, std::span<const double> spa);
std::size_t argmax_lowest(std::span<const double> values);

struct ForwardPass {
  objenc::BranchFeatures objects;
  Tensor text_tokens;  // (n+1)×d
  Tensor t_att;        // 1×d
  Tensor t_spa;        // 1×d
  Tensor att_hat;      // K×d
  Tensor spa_hat;      // K×d
  Tensor s_att;        // {K}
  Tensor s_spa;        // {K}
};

ForwardPass forward(const GroundingInput& input, const ParamStore& ps, const ModelConfig& cfg,
                    EncoderRole role);

struct GroundingResult {
  int predicted_id = 0;
  ScoreTriple scores;
};

GroundingResult predict(const GroundingInput& input, const ParamStore& ps, const ModelConfig& cfg,
                        EncoderRole role);

}  // namespace dasa::net
