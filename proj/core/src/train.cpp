#include "dasa/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "dasa/errors.hpp"
#include "dasa/layers.hpp"

namespace dasa::train {

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace

std::string to_string(StageKind k) {
  return k == StageKind::gtas_spatial ? "gtas_spatial" : "fine_tune";
}

StageKind stage_kind_from_string(const std::string& s) {
  if (s == "gtas_spatial") return StageKind::gtas_spatial;
  if (s == "fine_tune") return StageKind::fine_tune;
  throw ContractError("unknown stage kind: " + s);
}

void StageConfig::validate() const {
  if (epochs < 1) throw ContractError("stage: epochs must be >= 1");
  if (batch_size < 1) throw ContractError("stage: batch_size must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw ContractError("stage: learning rate must be > 0");
  if (!(weight_decay >= 0.0)) throw ContractError("stage: weight_decay must be >= 0");
}

void to_json(nlohmann::json& j, const StageConfig& c) {
  j = nlohmann::json{{"kind", to_string(c.kind)},
                     {"role", objenc::to_string(c.role)},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"temperature", c.temperature},
                     {"kd_temperature", c.kd_temperature},
                     {"distill_weight", c.distill_weight},
                     {"weight_decay", c.weight_decay},
                     {"augment", {{"reflect", c.augment.reflect}, {"recolor", c.augment.recolor}}},
                     {"optimizer",
                      {{"name", "adam"},
                       {"learning_rate", c.optimizer.learning_rate},
                       {"beta1", c.optimizer.beta1},
                       {"beta2", c.optimizer.beta2},
                       {"epsilon", c.optimizer.epsilon},
                       {"clip_norm", c.optimizer.clip_norm}}}};
}

void from_json(const nlohmann::json& j, StageConfig& c) {
  StageConfig def;
  c.kind = stage_kind_from_string(j.value("kind", to_string(def.kind)));
  c.role = objenc::encoder_role_from_string(j.value("role", objenc::to_string(def.role)));
  c.epochs = j.value("epochs", def.epochs);
  c.batch_size = j.value("batch_size", def.batch_size);
  c.seed = j.value("seed", def.seed);
  c.temperature = j.value("temperature", def.temperature);
  c.kd_temperature = j.value("kd_temperature", def.kd_temperature);
  c.distill_weight = j.value("distill_weight", def.distill_weight);
  c.weight_decay = j.value("weight_decay", def.weight_decay);
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    c.augment.reflect = a.value("reflect", def.augment.reflect);
    c.augment.recolor = a.value("recolor", def.augment.recolor);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    c.optimizer.learning_rate = o.value("learning_rate", def.optimizer.learning_rate);
    c.optimizer.beta1 = o.value("beta1", def.optimizer.beta1);
    c.optimizer.beta2 = o.value("beta2", def.optimizer.beta2);
    c.optimizer.epsilon = o.value("epsilon", def.optimizer.epsilon);
    c.optimizer.clip_norm = o.value("clip_norm", def.optimizer.clip_norm);
  }
}

// ---- labels / examples ----------------------------------------------------------

GtAttributeScores gt_attribute_scores(const scene::Scene& scene, int target_id) {
  const std::string& cat = scene.object(target_id).category;
  GtAttributeScores g;
  g.values.reserve(scene.objects.size());
  for (const auto& o : scene.objects) g.values.push_back(o.category == cat ? 1.0 : -1.0);
  return g;
}

std::vector<Example> build_examples(const scene::Corpus& corpus,
                                    const std::vector<scene::DescriptionRecord>& records,
                                    const net::InputSpace& space, const scene::GenConfig& gen,
                                    bool with_points) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    scene::Scene s = corpus.scene(r.scene_id);
    if (with_points) scene::attach_points(s, gen);
    Example ex;
    ex.record_id = r.id;
    ex.scene_id = r.scene_id;
    ex.target_id = r.target_id;
    ex.input = net::prepare_input(s, r, space, with_points);
    ex.gt = gt_attribute_scores(s, r.target_id);
    ex.difficulty = scene::classify_difficulty(r);
    ex.view_dependent = r.view_dependent;
    out.push_back(std::move(ex));
  }
  return out;
}

// ---- augmentation ---------------------------------------------------------------

Augmenter::Augmenter(const scene::Corpus& corpus,
                     const std::vector<scene::DescriptionRecord>& records,
                     const net::InputSpace& space, const scene::GenConfig& gen, bool with_points)
    : corpus_(corpus), space_(space), gen_(gen), with_points_(with_points) {
  for (const auto& r : records) records_[r.id] = &r;
}

Example Augmenter::draw(const Example& ex, const AugmentConfig& config,
                        std::uint64_t seed) const {
  using scene::RelationKind;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> coin(0, 1);
  const bool flip_x = config.reflect && coin(rng) == 1;
  const bool flip_y = config.reflect && coin(rng) == 1;
  std::vector<std::size_t> perm(gen_.colors.size());
  std::iota(perm.begin(), perm.end(), 0);
  if (config.recolor) std::shuffle(perm.begin(), perm.end(), rng);
  const bool recolor = !std::is_sorted(perm.begin(), perm.end());
  if (!flip_x && !flip_y && !recolor) return ex;

  const auto it = records_.find(ex.record_id);
  if (it == records_.end()) {
    throw ContractError("augment: record " + std::to_string(ex.record_id) + " not in the corpus");
  }
  scene::DescriptionRecord r = *it->second;
  scene::Scene s = corpus_.scene(r.scene_id);

  auto new_color = [&](const std::string& name) {
    for (std::size_t c = 0; c < gen_.colors.size(); ++c) {
      if (gen_.colors[c].name == name) return gen_.colors[perm[c]].name;
    }
    throw ContractError("augment: unknown colour " + name);
  };
  for (auto& o : s.objects) {
    if (flip_x) o.bbox.xc = s.room.lo[0] + s.room.hi[0] - o.bbox.xc;
    if (flip_y) o.bbox.yc = s.room.lo[1] + s.room.hi[1] - o.bbox.yc;
    if (recolor) o.color = new_color(o.color);
  }
  if (recolor && r.filter.color) r.filter.color = new_color(*r.filter.color);
  auto swap_kind = [&](RelationKind k) {
    if (flip_x && k == RelationKind::left_of) return RelationKind::right_of;
    if (flip_x && k == RelationKind::right_of) return RelationKind::left_of;
    if (flip_y && k == RelationKind::in_front_of) return RelationKind::behind;
    if (flip_y && k == RelationKind::behind) return RelationKind::in_front_of;
    return k;
  };
  for (auto& rel : r.relations) rel.kind = swap_kind(rel.kind);
  r.relation_kind = swap_kind(r.relation_kind);

  if (scene::oracle_satisfiers(s, r.relations, r.filter, gen_.geometry) != std::set<int>{r.target_id}) {
    return ex;
  }
  r.surface_tokens = scene::realize(r.filter, r.relations, s);
  if (with_points_) scene::attach_points(s, gen_);
  Example out = ex;
  out.input = net::prepare_input(s, r, space_, with_points_);
  return out;
}

// ---- losses ---------------------------------------------------------------------

Tensor loss_ref(const Tensor& scores, std::size_t target_index, double temperature) {
  if (target_index >= scores.numel()) {
    throw ContractError("loss_ref: target " + std::to_string(target_index) + " out of range for " +
                        std::to_string(scores.numel()) + " objects");
  }
  const std::size_t t[] = {target_index};
  return cross_entropy_rows(scale(scores, temperature), t);
}

Tensor loss_fg(const Tensor& att_hat, std::span<const std::size_t> category_labels,
               const ParamStore& ps) {
  return cross_entropy_rows(nn::linear(att_hat, ps, "head.fg"), category_labels);
}

Tensor loss_text(const Tensor& text_tokens, std::size_t target_category, const ParamStore& ps) {
  const std::size_t t[] = {target_category};
  return cross_entropy_rows(nn::linear(slice_rows(text_tokens, 0, 1), ps, "head.text"), t);
}

TeacherTargets teacher_targets(const Example& ex, const ParamStore& teacher,
                               const ModelConfig& cfg) {
  NoGradGuard guard;
  const net::ForwardPass f = net::forward(ex.input, teacher, cfg, EncoderRole::teacher);
  TeacherTargets t;
  t.att_hat = f.att_hat.detach();
  t.spa_hat = f.spa_hat.detach();
  const Tensor s = add(f.s_att, f.s_spa);
  t.scores.assign(s.data().begin(), s.data().end());
  return t;
}

Tensor loss_distill(const TeacherTargets& teacher, const Tensor& student_att_hat,
                    const Tensor& student_spa_hat, const Tensor& student_scores,
                    double kd_temperature) {
  if (teacher.att_hat.shape() != student_att_hat.shape() ||
      teacher.spa_hat.shape() != student_spa_hat.shape() ||
      teacher.scores.size() != student_scores.numel()) {
    throw DimensionError("loss_distill: teacher and student outputs differ in shape");
  }
  std::vector<double> p(teacher.scores.size());
  const double mx = *std::max_element(teacher.scores.begin(), teacher.scores.end());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(kd_temperature * (teacher.scores[i] - mx));
    z += p[i];
  }
  for (double& v : p) v /= z;
  Tensor feat = add(mse(student_att_hat, teacher.att_hat), mse(student_spa_hat, teacher.spa_hat));
  return add(feat, kl_to_logits(p, scale(student_scores, kd_temperature)));
}

Tensor stage_scores(const net::ForwardPass& f, const Example& ex, StageKind kind) {
  if (kind == StageKind::gtas_spatial) {
    return add(Tensor::vector(ex.gt.values), f.s_spa);
  }
  return add(f.s_att, f.s_spa);
}

ExampleLoss example_loss(const Example& ex, const ParamStore& ps, const ModelConfig& cfg,
                         const StageConfig& stage, const TeacherTargets* teacher) {
  const net::ForwardPass f = net::forward(ex.input, ps, cfg, stage.role);
  const Tensor scores = stage_scores(f, ex, stage.kind);
  const Tensor lref = loss_ref(scores, ex.input.target_index, stage.temperature);
  const Tensor lfg = loss_fg(f.att_hat, ex.input.category_ids, ps);
  const Tensor ltext = loss_text(f.text_tokens, ex.input.target_category, ps);
  ExampleLoss out;
  out.total = add(add(lref, lfg), ltext);
  out.terms.ref = lref.item();
  out.terms.fg = lfg.item();
  out.terms.text = ltext.item();
  if (teacher != nullptr) {
    const Tensor ld =
        loss_distill(*teacher, f.att_hat, f.spa_hat, add(f.s_att, f.s_spa), stage.kd_temperature);
    out.total = add(out.total, scale(ld, stage.distill_weight));
    out.terms.distill = ld.item();
  }
  out.terms.total = out.total.item();
  out.stage_argmax = net::argmax_lowest(scores.data());
  return out;
}

// ---- optimiser ------------------------------------------------------------------

Adam::Adam(ParamStore& params, OptimizerConfig config, double weight_decay)
    : params_(params), config_(config), weight_decay_(weight_decay) {
  for (const auto& [name, t] : params_.entries()) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

double Adam::step() {
  double sq = 0.0;
  for (auto& [name, t] : params_.entries()) {
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double clip =
      (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  auto& entries = params_.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor& t = entries[p].second;
    if (!t.has_grad()) continue;
    auto values = t.mutable_data();
    const auto grad = t.grad();
    auto& m = m_[p];
    auto& v = v_[p];
    // decay matrices only; gains and biases are left alone
    const double shrink =
        t.shape().size() == 2 ? 1.0 - config_.learning_rate * weight_decay_ : 1.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] *= shrink;
      const double g = grad[i] * clip;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      values[i] -= config_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.epsilon);
    }
  }
  return norm;
}

// ---- evaluation -----------------------------------------------------------------

Metrics summarize(const std::vector<Example>& examples, const std::vector<Prediction>& predictions) {
  if (examples.empty()) throw ContractError("evaluate: empty partition");
  if (examples.size() != predictions.size()) {
    throw ContractError("summarize: one prediction per example required");
  }
  Metrics m;
  std::size_t correct = 0, easy_c = 0, hard_c = 0, vd_c = 0, vi_c = 0, att_c = 0, spa_c = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Example& ex = examples[i];
    const Prediction& p = predictions[i];
    const bool ok = p.index == ex.input.target_index;
    correct += ok;
    if (ex.difficulty == scene::Difficulty::easy) {
      ++m.easy_n;
      easy_c += ok;
    } else {
      ++m.hard_n;
      hard_c += ok;
    }
    if (ex.view_dependent) {
      ++m.view_dep_n;
      vd_c += ok;
    } else {
      ++m.view_indep_n;
      vi_c += ok;
    }
    att_c += p.att_index == ex.input.target_index;
    spa_c += p.spa_index == ex.input.target_index;
  }
  auto frac = [](std::size_t c, std::size_t n) -> std::optional<double> {
    if (n == 0) return std::nullopt;
    return static_cast<double>(c) / static_cast<double>(n);
  };
  m.count = examples.size();
  m.overall = *frac(correct, m.count);
  m.easy = frac(easy_c, m.easy_n);
  m.hard = frac(hard_c, m.hard_n);
  m.view_dep = frac(vd_c, m.view_dep_n);
  m.view_indep = frac(vi_c, m.view_indep_n);
  m.att_only = *frac(att_c, m.count);
  m.spa_only = *frac(spa_c, m.count);
  return m;
}

Metrics evaluate(const ParamStore& ps, const ModelConfig& cfg, EncoderRole role,
                 const std::vector<Example>& examples) {
  if (examples.empty()) throw ContractError("evaluate: empty partition");
  std::vector<Prediction> preds;
  preds.reserve(examples.size());
  for (const auto& ex : examples) {
    const net::GroundingResult r = net::predict(ex.input, ps, cfg, role);
    preds.push_back({r.scores.argmax, net::argmax_lowest(r.scores.att),
                     net::argmax_lowest(r.scores.spa)});
  }
  return summarize(examples, preds);
}

nlohmann::json to_json(const Metrics& m) {
  return nlohmann::json{{"count", m.count},
                        {"overall", m.overall},
                        {"easy", optional_json(m.easy)},
                        {"hard", optional_json(m.hard)},
                        {"view_dependent", optional_json(m.view_dep)},
                        {"view_independent", optional_json(m.view_indep)},
                        {"easy_count", m.easy_n},
                        {"hard_count", m.hard_n},
                        {"view_dependent_count", m.view_dep_n},
                        {"view_independent_count", m.view_indep_n},
                        {"attribute_branch_only", m.att_only},
                        {"spatial_branch_only", m.spa_only}};
}

nlohmann::json to_json(const StageReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"loss_ref", e.mean_loss.ref},
                      {"loss_fg", e.mean_loss.fg},
                      {"loss_text", e.mean_loss.text},
                      {"loss_distill", e.mean_loss.distill},
                      {"loss_total", e.mean_loss.total},
                      {"train_accuracy", e.train_accuracy}});
  }
  nlohmann::json j{{"name", r.name},
                   {"stage", r.stage},
                   {"epochs", epochs},
                   {"gtas_block_grad", optional_json(r.gtas_block_grad)}};
  if (r.test_metrics.count > 0) j["test_metrics"] = to_json(r.test_metrics);
  return j;
}

// ---- training -------------------------------------------------------------------

double gtas_block_gradient(ParamStore& ps, const ModelConfig& cfg,
                           const std::vector<Example>& examples, const StageConfig& stage) {
  if (examples.empty()) throw ContractError("gtas_block_gradient: no examples");
  ps.zero_grad();
  const double w = 1.0 / static_cast<double>(examples.size());
  for (const auto& ex : examples) {
    const net::ForwardPass f = net::forward(ex.input, ps, cfg, stage.role);
    Tensor l = loss_ref(stage_scores(f, ex, StageKind::gtas_spatial), ex.input.target_index,
                        stage.temperature);
    scale(l, w).backward();
  }
  double worst = 0.0;
  for (const char* name : {"head.att.Wo", "head.att.Wt"}) {
    for (double g : ps.get(name).grad()) worst = std::max(worst, std::abs(g));
  }
  ps.zero_grad();
  return worst;
}

StageReport train_stage(ParamStore& ps, const ModelConfig& cfg, const std::vector<Example>& train,
                        const std::vector<Example>& test, const StageConfig& stage,
                        const ParamStore* teacher, const std::string& name,
                        const ProgressFn& progress, const Augmenter* augmenter) {
  stage.validate();
  if (stage.augment.any() && augmenter == nullptr) {
    throw ContractError("train_stage: augmentation enabled without an augmenter");
  }
  if (train.empty()) throw ContractError("train_stage: empty training set");
  if (stage.role == EncoderRole::student && teacher == nullptr) {
    throw ContractError("train_stage: student stages need a trained teacher");
  }
  StageReport report;
  report.name = name;
  report.stage = stage;

  std::vector<TeacherTargets> targets;
  if (stage.role == EncoderRole::student) {
    targets.reserve(train.size());
    for (const auto& ex : train) targets.push_back(teacher_targets(ex, *teacher, cfg));
  }

  const std::size_t batch = static_cast<std::size_t>(stage.batch_size);
  if (stage.kind == StageKind::gtas_spatial) {
    const std::vector<Example> probe(train.begin(),
                                     train.begin() + static_cast<long>(std::min(batch, train.size())));
    const double g = gtas_block_gradient(ps, cfg, probe, stage);
    report.gtas_block_grad = g;
    if (g >= 1e-15) {
      throw NumericalError(name + ": attribute scoring head receives gradient from L_ref (" +
                           std::to_string(g) + ")");
    }
  }

  Adam opt(ps, stage.optimizer, stage.weight_decay);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= stage.epochs; ++epoch) {
    std::mt19937_64 rng(scene::mix_seed(stage.seed, static_cast<std::uint64_t>(epoch), 3));
    std::shuffle(order.begin(), order.end(), rng);
    LossTerms sums;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double w = 1.0 / static_cast<double>(end - start);
      ps.zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const Example* ex_ptr = &train[idx];
        const TeacherTargets* tt = targets.empty() ? nullptr : &targets[idx];
        Example drawn;
        TeacherTargets drawn_targets;
        if (stage.augment.any()) {
          const std::uint64_t seed =
              scene::mix_seed(scene::mix_seed(stage.seed, static_cast<std::uint64_t>(epoch), 4), idx);
          drawn = augmenter->draw(train[idx], stage.augment, seed);
          ex_ptr = &drawn;
          if (tt != nullptr) {
            drawn_targets = teacher_targets(drawn, *teacher, cfg);
            tt = &drawn_targets;
          }
        }
        const Example& ex = *ex_ptr;
        ExampleLoss el = example_loss(ex, ps, cfg, stage, tt);
        if (!std::isfinite(el.terms.total)) {
          std::ostringstream os;
          os << name << ": non-finite loss at epoch " << epoch << ", record " << ex.record_id
             << " (ref=" << el.terms.ref << ", fg=" << el.terms.fg << ", text=" << el.terms.text
             << ", distill=" << el.terms.distill << ")";
          throw NumericalError(os.str());
        }
        scale(el.total, w).backward();
        sums.ref += el.terms.ref;
        sums.fg += el.terms.fg;
        sums.text += el.terms.text;
        sums.distill += el.terms.distill;
        sums.total += el.terms.total;
        correct += el.stage_argmax == ex.input.target_index;
      }
      opt.step();
    }
    ps.zero_grad();
    const double n = static_cast<double>(train.size());
    EpochReport er;
    er.epoch = epoch;
    er.mean_loss = {sums.ref / n, sums.fg / n, sums.text / n, sums.distill / n, sums.total / n};
    er.train_accuracy = static_cast<double>(correct) / n;
    report.epochs.push_back(er);
    if (progress) progress(name, er);
  }
  if (!test.empty()) report.test_metrics = evaluate(ps, cfg, stage.role, test);
  return report;
}

// ---- schedule -------------------------------------------------------------------

ScheduleConfig ScheduleConfig::desk_scale() {
  ScheduleConfig c;
  auto stage = [](StageKind kind, EncoderRole role, int epochs) {
    StageConfig st;
    st.kind = kind;
    st.role = role;
    st.epochs = epochs;
    st.augment.reflect = true;
    st.augment.recolor = true;
    return st;
  };
  c.teacher_gtas = stage(StageKind::gtas_spatial, EncoderRole::teacher, 30);
  c.teacher_fine_tune = stage(StageKind::fine_tune, EncoderRole::teacher, 10);
  c.student_gtas = stage(StageKind::gtas_spatial, EncoderRole::student, 15);
  c.student_fine_tune = stage(StageKind::fine_tune, EncoderRole::student, 5);
  c.teacher_gtas.seed = 101;
  c.teacher_fine_tune.seed = 102;
  c.student_gtas.seed = 103;
  c.student_fine_tune.seed = 104;
  return c;
}

nlohmann::json ScheduleConfig::reference_epochs() {
  return {{"human_language", {{"teacher_gtas", 50}, {"teacher_fine_tune", 20},
                              {"student_gtas", 20}, {"student_fine_tune", 10}}},
          {"template_language", {{"teacher_gtas", 25}, {"teacher_fine_tune", 10},
                                 {"student_gtas", 10}, {"student_fine_tune", 10}}},
          {"batch_size", 128}};
}

void to_json(nlohmann::json& j, const ScheduleConfig& c) {
  j = nlohmann::json{{"model", c.model},
                     {"teacher_gtas", c.teacher_gtas},
                     {"teacher_fine_tune", c.teacher_fine_tune},
                     {"student_gtas", c.student_gtas},
                     {"student_fine_tune", c.student_fine_tune},
                     {"use_gtas", c.use_gtas},
                     {"teacher_only", c.teacher_only},
                     {"init_seed", c.init_seed}};
}

void from_json(const nlohmann::json& j, ScheduleConfig& c) {
  c = ScheduleConfig::desk_scale();
  if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
  // Stage objects may be partial; missing keys keep that stage's defaults.
  auto stage = [&j](const char* key, StageConfig& st) {
    if (!j.contains(key)) return;
    nlohmann::json merged = st;
    merged.merge_patch(j.at(key));
    st = merged.get<StageConfig>();
  };
  stage("teacher_gtas", c.teacher_gtas);
  stage("teacher_fine_tune", c.teacher_fine_tune);
  stage("student_gtas", c.student_gtas);
  stage("student_fine_tune", c.student_fine_tune);
  c.use_gtas = j.value("use_gtas", c.use_gtas);
  c.teacher_only = j.value("teacher_only", c.teacher_only);
  c.init_seed = j.value("init_seed", c.init_seed);
}

std::string checkpoint_metadata(const ModelConfig& cfg, EncoderRole role,
                                const std::string& run_hash) {
  return nlohmann::json{{"model", cfg}, {"role", objenc::to_string(role)}, {"config_hash", run_hash}}
      .dump();
}

std::pair<ModelConfig, EncoderRole> parse_checkpoint_metadata(const std::string& metadata) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(metadata);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  if (!j.contains("model") || !j.contains("role")) {
    throw IoError("checkpoint metadata lacks model/role");
  }
  return {j.at("model").get<ModelConfig>(),
          objenc::encoder_role_from_string(j.at("role").get<std::string>())};
}

ScheduleResult run_schedule(const ScheduleConfig& config, const std::vector<Example>& train,
                            const std::vector<Example>& test, const std::filesystem::path& out_dir,
                            const std::string& run_hash, const ProgressFn& progress,
                            const Augmenter* augmenter) {
  ScheduleResult result{ParamStore(config.init_seed), std::nullopt, {}};
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  auto persist = [&](const ParamStore& ps, const StageReport& report) {
    if (out_dir.empty()) return;
    ps.save(out_dir / (report.name + ".ckpt"));
    nlohmann::json j{{"config_hash", run_hash}, {"seed", report.stage.seed}, {"report", to_json(report)}};
    write_text(out_dir / (report.name + ".report.json"), j.dump(2) + "\n");
  };

  ParamStore& teacher = result.teacher;
  net::register_model(teacher, config.model, EncoderRole::teacher);
  teacher.set_metadata(checkpoint_metadata(config.model, EncoderRole::teacher, run_hash));

  std::vector<StageConfig> teacher_stages{config.teacher_gtas, config.teacher_fine_tune};
  if (!config.use_gtas) teacher_stages[0].kind = StageKind::fine_tune;
  int index = 1;
  for (const auto& st : teacher_stages) {
    const std::string name = "stage" + std::to_string(index++) + "_teacher_" + to_string(st.kind);
    StageReport r = train_stage(teacher, config.model, train, test, st, nullptr, name, progress,
                                augmenter);
    persist(teacher, r);
    result.reports.push_back(std::move(r));
  }
  if (config.teacher_only) return result;

  ParamStore student(config.init_seed + 1);
  net::register_model(student, config.model, EncoderRole::student);
  student.copy_values_from(teacher, "text.");
  student.set_metadata(checkpoint_metadata(config.model, EncoderRole::student, run_hash));
  std::vector<StageConfig> student_stages{config.student_gtas, config.student_fine_tune};
  if (!config.use_gtas) student_stages[0].kind = StageKind::fine_tune;
  for (const auto& st : student_stages) {
    const std::string name = "stage" + std::to_string(index++) + "_student_" + to_string(st.kind);
    StageReport r = train_stage(student, config.model, train, test, st, &teacher, name, progress,
                                augmenter);
    persist(student, r);
    result.reports.push_back(std::move(r));
  }
  result.student = std::move(student);
  return result;
}

}  // namespace dasa::train
