#pragma once

// Losses, the two-stage schedule with ground-truth attribute score
// substitution, teacher→student distillation, and evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dasa/model.hpp"

namespace dasa::train {

using objenc::EncoderRole;

enum class StageKind { gtas_spatial, fine_tune };

std::string to_string(StageKind k);
StageKind stage_kind_from_string(const std::string& s);

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;
};

// Label-preserving scene transforms redrawn per example and epoch. `reflect`
// mirrors the room across its x and/or y mid-plane (swapping left/right and
// front/behind in the description); `recolor` permutes the colour names.
struct AugmentConfig {
  bool reflect = false;
  bool recolor = false;

  bool any() const { return reflect || recolor; }
};

struct StageConfig {
  StageKind kind = StageKind::fine_tune;
  EncoderRole role = EncoderRole::teacher;
  int epochs = 1;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double temperature = 10.0;     // inverse temperature on scores inside L_ref
  double kd_temperature = 10.0;  // inverse temperature for the score KL
  double distill_weight = 1.0;
  double weight_decay = 0.0;  // decoupled, applied with the learning rate
  AugmentConfig augment;
  OptimizerConfig optimizer;

  void validate() const;
};

void to_json(nlohmann::json& j, const StageConfig& c);
void from_json(const nlohmann::json& j, StageConfig& c);

// g_i = +1 when object i shares the target's category, -1 otherwise.
struct GtAttributeScores {
  std::vector<double> values;
};

GtAttributeScores gt_attribute_scores(const scene::Scene& scene, int target_id);

// A training/evaluation item: model inputs plus the labels every loss needs.
struct Example {
  int record_id = 0;
  int scene_id = 0;
  int target_id = 0;
  net::GroundingInput input;
  GtAttributeScores gt;
  scene::Difficulty difficulty = scene::Difficulty::easy;
  bool view_dependent = false;
};

std::vector<Example> build_examples(const scene::Corpus& corpus,
                                    const std::vector<scene::DescriptionRecord>& records,
                                    const net::InputSpace& space, const scene::GenConfig& gen,
                                    bool with_points);

// Re-realises training examples under an AugmentConfig. Holds references to
// the corpus and records it was built from.
class Augmenter {
 public:
  Augmenter(const scene::Corpus& corpus, const std::vector<scene::DescriptionRecord>& records,
            const net::InputSpace& space, const scene::GenConfig& gen, bool with_points);

  // Returns `ex` itself when the draw is the identity or the transformed
  // description would no longer single out the target.
  Example draw(const Example& ex, const AugmentConfig& config, std::uint64_t seed) const;

 private:
  const scene::Corpus& corpus_;
  const net::InputSpace& space_;
  const scene::GenConfig& gen_;
  bool with_points_;
  std::map<int, const scene::DescriptionRecord*> records_;
};

// Cross-entropy of softmax(temperature · scores) against the target.
Tensor loss_ref(const Tensor& scores, std::size_t target_index, double temperature);
Tensor loss_fg(const Tensor& att_hat, std::span<const std::size_t> category_labels,
               const ParamStore& ps);
Tensor loss_text(const Tensor& text_tokens, std::size_t target_category, const ParamStore& ps);

// Frozen teacher outputs for one example.
struct TeacherTargets {
  Tensor att_hat;
  Tensor spa_hat;
  std::vector<double> scores;  // s_att + s_spa
};

TeacherTargets teacher_targets(const Example& ex, const ParamStore& teacher,
                               const ModelConfig& cfg);

// MSE(F̂_att) + MSE(F̂_spa) + KL(softmax(τ s_teacher) || softmax(τ s_student)).
Tensor loss_distill(const TeacherTargets& teacher, const Tensor& student_att_hat,
                    const Tensor& student_spa_hat, const Tensor& student_scores,
                    double kd_temperature);

// The score vector L_ref sees: g_att + s_spa in GTAS stages, s_att + s_spa
// otherwise.
Tensor stage_scores(const net::ForwardPass& f, const Example& ex, StageKind kind);

struct LossTerms {
  double ref = 0, fg = 0, text = 0, distill = 0, total = 0;
};

struct ExampleLoss {
  Tensor total;
  LossTerms terms;
  std::size_t stage_argmax = 0;
};

ExampleLoss example_loss(const Example& ex, const ParamStore& ps, const ModelConfig& cfg,
                         const StageConfig& stage, const TeacherTargets* teacher);

class Adam {
 public:
  Adam(ParamStore& params, OptimizerConfig config, double weight_decay = 0.0);
  // Clips the global gradient norm, applies one update, returns the pre-clip norm.
  double step();

 private:
  ParamStore& params_;
  OptimizerConfig config_;
  double weight_decay_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct Metrics {
  std::size_t count = 0;
  double overall = 0;
  std::optional<double> easy, hard, view_dep, view_indep;
  std::size_t easy_n = 0, hard_n = 0, view_dep_n = 0, view_indep_n = 0;
  double att_only = 0;  // argmax of s_att alone
  double spa_only = 0;  // argmax of s_spa alone
};

nlohmann::json to_json(const Metrics& m);

struct Prediction {
  std::size_t index = 0;      // argmax of s
  std::size_t att_index = 0;  // argmax of s_att
  std::size_t spa_index = 0;  // argmax of s_spa
};

// Accuracy and strata from per-example predictions (indices into the scene).
Metrics summarize(const std::vector<Example>& examples, const std::vector<Prediction>& predictions);

Metrics evaluate(const ParamStore& ps, const ModelConfig& cfg, EncoderRole role,
                 const std::vector<Example>& examples);

struct EpochReport {
  int epoch = 0;
  LossTerms mean_loss;
  double train_accuracy = 0;
};

struct StageReport {
  std::string name;
  StageConfig stage;
  std::vector<EpochReport> epochs;
  // max |∂L_ref/∂θ| over the attribute scoring projections at stage start
  // (GTAS stages only).
  std::optional<double> gtas_block_grad;
  Metrics test_metrics;
};

nlohmann::json to_json(const StageReport& r);

using ProgressFn = std::function<void(const std::string& stage, const EpochReport&)>;

// Trains `ps` in place. Student stages require `teacher` (frozen params) and
// its config. Stages with augmentation enabled require `augmenter`.
StageReport train_stage(ParamStore& ps, const ModelConfig& cfg, const std::vector<Example>& train,
                        const std::vector<Example>& test, const StageConfig& stage,
                        const ParamStore* teacher = nullptr, const std::string& name = "stage",
                        const ProgressFn& progress = {}, const Augmenter* augmenter = nullptr);

// max |∂L_ref/∂W| over head.att.Wo and head.att.Wt for the given examples.
double gtas_block_gradient(ParamStore& ps, const ModelConfig& cfg,
                           const std::vector<Example>& examples, const StageConfig& stage);

struct ScheduleConfig {
  ModelConfig model;
  StageConfig teacher_gtas;
  StageConfig teacher_fine_tune;
  StageConfig student_gtas;
  StageConfig student_fine_tune;
  bool use_gtas = true;
  bool teacher_only = false;
  std::uint64_t init_seed = 1;

  // Desk-scale defaults (30/10/15/5 epochs).
  static ScheduleConfig desk_scale();
  // Published epoch counts for the human-language benchmark, for provenance.
  static nlohmann::json reference_epochs();
};

void to_json(nlohmann::json& j, const ScheduleConfig& c);
void from_json(const nlohmann::json& j, ScheduleConfig& c);

struct ScheduleResult {
  ParamStore teacher;
  std::optional<ParamStore> student;
  std::vector<StageReport> reports;
};

// teacher GTAS → teacher fine-tune → student GTAS → student fine-tune. When
// out_dir is non-empty each stage writes <name>.ckpt and <name>.report.json.
// `run_hash` is embedded in every artefact.
ScheduleResult run_schedule(const ScheduleConfig& config, const std::vector<Example>& train,
                            const std::vector<Example>& test,
                            const std::filesystem::path& out_dir = {},
                            const std::string& run_hash = "", const ProgressFn& progress = {},
                            const Augmenter* augmenter = nullptr);

// Checkpoint metadata helpers.
std::string checkpoint_metadata(const ModelConfig& cfg, EncoderRole role,
                                const std::string& run_hash);
std::pair<ModelConfig, EncoderRole> parse_checkpoint_metadata(const std::string& metadata);

}  // namespace dasa::train
