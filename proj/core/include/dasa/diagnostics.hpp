#pragma once

// Gradient check on a micro-model, per-object score dumps, oracle evaluation
// and the within-category score spread diagnostic.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dasa/gradcheck.hpp"
#include "dasa/train.hpp"

namespace dasa::diag {

using objenc::EncoderRole;

// d=16, M=2, h=2, K=4 objects, 8 points per object.
struct MicroModel {
  scene::GenConfig gen;
  ModelConfig cfg;
  ParamStore params;
  train::Example example;
};

MicroModel make_micro_model(EncoderRole role, std::uint64_t seed);

// L_main = L_ref + L_fg + L_text with s = s_att + s_spa, checked over every
// parameter.
GradCheckReport check_micro_model(EncoderRole role, std::uint64_t seed,
                                  const GradientTamper& tamper = {});

struct InspectRow {
  int object_id = 0;
  std::string category;
  std::string color;
  double s_att = 0, s_spa = 0, s = 0;
  bool is_target = false;
  bool is_distractor = false;
};

std::vector<InspectRow> inspect(const scene::Scene& scene, const scene::DescriptionRecord& record,
                                const train::Example& example, const ParamStore& ps,
                                const ModelConfig& cfg, EncoderRole role);

// Throws NumericalError if any row breaks s = s_att + s_spa.
std::string to_csv(const std::vector<InspectRow>& rows);

// Predicts with the relation oracle instead of the model.
train::Metrics evaluate_oracle(const scene::Corpus& corpus,
                               const std::vector<scene::DescriptionRecord>& records,
                               const std::vector<train::Example>& examples,
                               const scene::RelationGeometry& geometry);

// Population standard deviation.
double stddev(const std::vector<double>& v);

struct SpreadReport {
  std::size_t scenes = 0;        // scenes with a category of >= 3 objects
  std::size_t att_tighter = 0;   // of those, std(s_att) < std(s_spa) in the group
  double fraction() const {
    return scenes == 0 ? 0.0 : static_cast<double>(att_tighter) / static_cast<double>(scenes);
  }
};

// For each example whose scene holds >= 3 objects of one category, compares
// the spread of s_att and s_spa inside that group (the target's category when
// it qualifies, otherwise the largest group, lowest category id on ties).
SpreadReport within_category_spread(const std::vector<train::Example>& examples,
                                    const ParamStore& ps, const ModelConfig& cfg,
                                    EncoderRole role);

}  // namespace dasa::diag
