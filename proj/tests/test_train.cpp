#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "dasa/errors.hpp"
#include "dasa/train.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dasa;
using namespace dasa::train;
using testing::Gen;

namespace {

struct Micro {
  scene::GenConfig gen;
  scene::Corpus corpus;
  ModelConfig cfg;
  std::vector<Example> examples;
};

Micro micro_corpus(int scenes, bool with_points, std::uint64_t seed = 5) {
  Micro m;
  m.gen = scene::GenConfig::defaults();
  m.gen.k_min = m.gen.k_max = 4;
  m.gen.max_group = 2;
  m.gen.points_per_object = 8;
  m.gen.num_scenes = scenes;
  m.corpus = scene::generate_corpus(m.gen, seed);
  const auto space = net::InputSpace::from_config(m.gen);
  m.cfg.d = 16;
  m.cfg.heads = 2;
  m.cfg.layers = 1;
  m.cfg.text_layers = 1;
  m.cfg.point_hidden = 16;
  space.apply_to(m.cfg);
  m.examples = build_examples(m.corpus, m.corpus.records, space, m.gen, with_points);
  return m;
}

StageConfig stage_of(StageKind kind, EncoderRole role, int epochs = 1) {
  StageConfig st;
  st.kind = kind;
  st.role = role;
  st.epochs = epochs;
  st.batch_size = 4;
  st.seed = 9;
  return st;
}

double mean_loss(const std::vector<Example>& ex, const ParamStore& ps, const ModelConfig& cfg,
                 const StageConfig& st, const ParamStore* teacher) {
  NoGradGuard guard;
  double total = 0.0;
  for (const auto& e : ex) {
    std::optional<TeacherTargets> t;
    if (teacher) t = teacher_targets(e, *teacher, cfg);
    total += example_loss(e, ps, cfg, st, t ? &*t : nullptr).terms.total;
  }
  return total / static_cast<double>(ex.size());
}

}  // namespace

TEST_CASE("ground-truth attribute scores follow the target category") {
  scene::Scene s;
  for (auto [id, cat] : {std::pair{0, "chair"}, {1, "chair"}, {2, "table"}}) {
    scene::ObjectInstance o;
    o.id = id;
    o.category = cat;
    s.objects.push_back(o);
  }
  CHECK(gt_attribute_scores(s, 0).values == std::vector<double>{1, 1, -1});
  CHECK(gt_attribute_scores(s, 2).values == std::vector<double>{-1, -1, 1});
  CHECK_THROWS_AS(gt_attribute_scores(s, 7), ContractError);
}

TEST_CASE("reference loss is a tempered cross-entropy") {
  Gen g(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + g.index(10);
    const auto s = g.values(k);
    const double temp = g.uniform(0.5, 20);
    const std::size_t target = g.index(k);
    std::vector<double> logits = s;
    for (double& v : logits) v *= temp;
    const double expect = oracle::cross_entropy(logits, target);
    CHECK(std::abs(loss_ref(Tensor::vector(s), target, temp).item() - expect) < 1e-12);
  }
  CHECK(loss_ref(Tensor::vector({10, -10}), 0, 1.0).item() < 1e-8);
  CHECK_THROWS_AS(loss_ref(Tensor::vector({1, 2}), 2, 1.0), ContractError);
}

TEST_CASE("GTAS blocks the attribute scoring gradient") {
  const Micro m = micro_corpus(4, false);
  ParamStore ps(3);
  net::register_model(ps, m.cfg, EncoderRole::teacher);
  const auto gtas = stage_of(StageKind::gtas_spatial, EncoderRole::teacher);
  CHECK(gtas_block_gradient(ps, m.cfg, m.examples, gtas) == 0.0);
  // Without substitution the same projections do receive gradient.
  const auto ft = stage_of(StageKind::fine_tune, EncoderRole::teacher);
  example_loss(m.examples[0], ps, m.cfg, ft, nullptr).total.backward();
  double g = 0.0;
  for (double v : ps.get("head.att.Wo").grad()) g = std::max(g, std::abs(v));
  CHECK(g > 0.0);
  ps.zero_grad();

  // The stage scores really are g + s_spa.
  NoGradGuard guard;
  for (const auto& ex : m.examples) {
    const auto f = net::forward(ex.input, ps, m.cfg, EncoderRole::teacher);
    const auto s = stage_scores(f, ex, StageKind::gtas_spatial);
    for (std::size_t i = 0; i < ex.gt.values.size(); ++i) {
      CHECK(s.data()[i] == ex.gt.values[i] + f.s_spa.data()[i]);
    }
  }
}

TEST_CASE("distillation loss matches its formula and vanishes on a copy") {
  Gen g(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 1 + g.index(8), d = 1 + g.index(6);
    TeacherTargets t{g.matrix(k, d), g.matrix(k, d), g.values(k)};
    const Tensor sa = g.matrix(k, d), ss = g.matrix(k, d), sc = g.vec(k);
    const double tau = g.uniform(1, 10);

    double mse_a = 0, mse_s = 0;
    for (std::size_t i = 0; i < k * d; ++i) {
      mse_a += std::pow(sa.data()[i] - t.att_hat.data()[i], 2);
      mse_s += std::pow(ss.data()[i] - t.spa_hat.data()[i], 2);
    }
    auto softmax = [&](const std::vector<double>& v) {
      oracle::Mat m{1, v.size(), v};
      for (double& x : m.v) x *= tau;
      return oracle::softmax_rows(m).v;
    };
    const auto p = softmax(t.scores);
    const auto q = softmax(std::vector<double>(sc.data().begin(), sc.data().end()));
    double kl = 0.0;
    for (std::size_t i = 0; i < k; ++i) kl += p[i] * (std::log(p[i]) - std::log(q[i]));
    const double expect = mse_a / double(k * d) + mse_s / double(k * d) + kl;
    CHECK(loss_distill(t, sa, ss, sc, tau).item() == doctest::Approx(expect).epsilon(1e-10));

    const double self = loss_distill(t, t.att_hat, t.spa_hat, Tensor::vector(t.scores), tau).item();
    CHECK(std::abs(self) < 1e-14);
  }
  TeacherTargets t{g.matrix(2, 3), g.matrix(2, 3), g.values(2)};
  CHECK_THROWS_AS(loss_distill(t, g.matrix(3, 3), g.matrix(2, 3), g.vec(2), 1.0), DimensionError);
}

TEST_CASE("student losses never reach the teacher") {
  const Micro m = micro_corpus(2, true);
  ParamStore teacher(1), student(2);
  net::register_model(teacher, m.cfg, EncoderRole::teacher);
  net::register_model(student, m.cfg, EncoderRole::student);
  const auto st = stage_of(StageKind::fine_tune, EncoderRole::student);
  const auto targets = teacher_targets(m.examples[0], teacher, m.cfg);
  auto loss = example_loss(m.examples[0], student, m.cfg, st, &targets);
  CHECK(loss.terms.distill > 0.0);
  CHECK(loss.terms.total >= 0.0);
  loss.total.backward();
  for (const auto& [name, t] : teacher.entries()) CHECK_MESSAGE(!t.has_grad(), name);
  std::size_t with_grad = 0;
  for (const auto& [name, t] : student.entries()) with_grad += t.has_grad();
  CHECK(with_grad > student.size() / 2);
}

TEST_CASE("loss terms are non-negative and sum to the total") {
  const Micro m = micro_corpus(6, false);
  ParamStore ps(4);
  net::register_model(ps, m.cfg, EncoderRole::teacher);
  for (auto kind : {StageKind::gtas_spatial, StageKind::fine_tune}) {
    const auto st = stage_of(kind, EncoderRole::teacher);
    NoGradGuard guard;
    for (const auto& ex : m.examples) {
      const auto l = example_loss(ex, ps, m.cfg, st, nullptr);
      CHECK(l.terms.ref >= 0.0);
      CHECK(l.terms.fg >= 0.0);
      CHECK(l.terms.text >= 0.0);
      CHECK(l.terms.total == doctest::Approx(l.terms.ref + l.terms.fg + l.terms.text));
    }
  }
}

TEST_CASE("a short run lowers the training loss in every stage") {
  const Micro m = micro_corpus(10, true);
  ParamStore teacher(11);
  net::register_model(teacher, m.cfg, EncoderRole::teacher);
  for (auto kind : {StageKind::gtas_spatial, StageKind::fine_tune}) {
    const auto st = stage_of(kind, EncoderRole::teacher, 3);
    const double before = mean_loss(m.examples, teacher, m.cfg, st, nullptr);
    train_stage(teacher, m.cfg, m.examples, {}, st, nullptr, "t");
    CHECK(mean_loss(m.examples, teacher, m.cfg, st, nullptr) < before);
  }
  ParamStore student(12);
  net::register_model(student, m.cfg, EncoderRole::student);
  for (auto kind : {StageKind::gtas_spatial, StageKind::fine_tune}) {
    const auto st = stage_of(kind, EncoderRole::student, 3);
    const double before = mean_loss(m.examples, student, m.cfg, st, &teacher);
    const auto rep = train_stage(student, m.cfg, m.examples, {}, st, &teacher, "s");
    CHECK(rep.epochs.size() == 3);
    CHECK(mean_loss(m.examples, student, m.cfg, st, &teacher) < before);
  }
}

TEST_CASE("student stages require a teacher") {
  const Micro m = micro_corpus(2, true);
  ParamStore student(1);
  net::register_model(student, m.cfg, EncoderRole::student);
  CHECK_THROWS_AS(train_stage(student, m.cfg, m.examples, {},
                              stage_of(StageKind::fine_tune, EncoderRole::student)),
                  ContractError);
}

TEST_CASE("training is deterministic") {
  const Micro m = micro_corpus(6, false);
  const auto st = stage_of(StageKind::fine_tune, EncoderRole::teacher, 2);
  ParamStore a(5), b(5);
  net::register_model(a, m.cfg, EncoderRole::teacher);
  net::register_model(b, m.cfg, EncoderRole::teacher);
  const auto ra = train_stage(a, m.cfg, m.examples, m.examples, st);
  const auto rb = train_stage(b, m.cfg, m.examples, m.examples, st);
  CHECK(a.bitwise_equal(b));
  CHECK(to_json(ra).dump() == to_json(rb).dump());
}

TEST_CASE("a checkpoint round trip preserves evaluation") {
  const Micro m = micro_corpus(8, false);
  ParamStore ps(6);
  net::register_model(ps, m.cfg, EncoderRole::teacher);
  train_stage(ps, m.cfg, m.examples, {}, stage_of(StageKind::fine_tune, EncoderRole::teacher));
  ps.set_metadata(checkpoint_metadata(m.cfg, EncoderRole::teacher, "abc"));
  const auto path = std::filesystem::temp_directory_path() / "dasa_train_ckpt.bin";
  ps.save(path);
  const ParamStore back = ParamStore::load(path);
  std::filesystem::remove(path);
  const auto [cfg, role] = parse_checkpoint_metadata(back.metadata());
  CHECK(role == EncoderRole::teacher);
  CHECK(to_json(evaluate(back, cfg, role, m.examples)).dump() ==
        to_json(evaluate(ps, m.cfg, EncoderRole::teacher, m.examples)).dump());
  CHECK_THROWS_AS(parse_checkpoint_metadata("not json"), IoError);
}

TEST_CASE("Adam first step matches the closed form") {
  Gen g(7);
  for (int trial = 0; trial < 20; ++trial) {
    ParamStore ps(trial);
    Tensor& w = ps.add("w", {5}, InitKind::normal, 1.0);
    const auto before = std::vector<double>(w.data().begin(), w.data().end());
    const double sd = trial % 2 ? 0.1 : 10.0;  // below and above the clip norm
    const auto grad = g.values(5, sd);
    std::copy(grad.begin(), grad.end(), w.mutable_grad().begin());
    OptimizerConfig oc;
    Adam opt(ps, oc);
    double norm = 0.0;
    for (double v : grad) norm += v * v;
    norm = std::sqrt(norm);
    CHECK(opt.step() == doctest::Approx(norm));
    const double clip = norm > oc.clip_norm ? oc.clip_norm / norm : 1.0;
    for (std::size_t i = 0; i < 5; ++i) {
      const double gi = grad[i] * clip;
      // m̂ = g, v̂ = g² after bias correction on step one.
      const double expect = before[i] - oc.learning_rate * gi / (std::abs(gi) + oc.epsilon);
      CHECK(w.data()[i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("stage config validation and serialisation") {
  StageConfig st = stage_of(StageKind::gtas_spatial, EncoderRole::student, 3);
  st.weight_decay = 0.25;
  st.augment.recolor = true;
  nlohmann::json j = st;
  const auto back = j.get<StageConfig>();
  CHECK(nlohmann::json(back).dump() == j.dump());
  st.epochs = 0;
  CHECK_THROWS_AS(st.validate(), ContractError);
  CHECK_THROWS_AS(stage_kind_from_string("warmup"), ContractError);
}

TEST_CASE("metrics strata") {
  const Micro m = micro_corpus(40, false);
  std::vector<Prediction> all_right, all_wrong;
  for (const auto& ex : m.examples) {
    all_right.push_back({ex.input.target_index, 0, 0});
    all_wrong.push_back({(ex.input.target_index + 1) % ex.input.num_objects(), 0, 0});
  }
  const auto r = summarize(m.examples, all_right);
  CHECK(r.overall == 1.0);
  CHECK(r.count == m.examples.size());
  CHECK(r.easy_n + r.hard_n == r.count);
  CHECK(r.view_dep_n + r.view_indep_n == r.count);
  CHECK(summarize(m.examples, all_wrong).overall == 0.0);

  // Empty strata are absent rather than zero.
  std::vector<Example> only_easy;
  std::vector<Prediction> preds;
  for (std::size_t i = 0; i < m.examples.size(); ++i) {
    if (m.examples[i].difficulty == scene::Difficulty::easy) {
      only_easy.push_back(m.examples[i]);
      preds.push_back(all_right[i]);
    }
  }
  REQUIRE(!only_easy.empty());
  const auto e = summarize(only_easy, preds);
  CHECK(e.easy.has_value());
  CHECK(!e.hard.has_value());
  CHECK(to_json(e)["hard"].is_null());
}

TEST_CASE("an untrained model is near chance") {
  auto gen = scene::GenConfig::defaults();
  gen.num_scenes = 600;
  const auto corpus = scene::generate_corpus(gen, 13);
  const auto space = net::InputSpace::from_config(gen);
  ModelConfig cfg;
  space.apply_to(cfg);
  ParamStore ps(17);
  net::register_model(ps, cfg, EncoderRole::teacher);
  const auto ex = build_examples(corpus, corpus.records, space, gen, false);
  const double acc = evaluate(ps, cfg, EncoderRole::teacher, ex).overall;
  const double n = static_cast<double>(ex.size());
  const double sigma = std::sqrt(0.125 * 0.875 / n);
  CHECK(std::abs(acc - 0.125) < 3 * sigma);
}

TEST_CASE("reflections mirror the room and keep the target") {
  const Micro m = micro_corpus(40, false);
  const auto space = net::InputSpace::from_config(m.gen);
  const Augmenter aug(m.corpus, m.corpus.records, space, m.gen, false);
  AugmentConfig ac;
  ac.reflect = true;
  int flipped = 0;
  for (std::size_t e = 0; e < m.examples.size(); ++e) {
    const Example& ex = m.examples[e];
    const auto& rec = m.corpus.records[e];
    REQUIRE(rec.id == ex.record_id);
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const Example d = aug.draw(ex, ac, seed);
      CHECK(d.input.target_index == ex.input.target_index);
      CHECK(d.input.category_ids == ex.input.category_ids);
      CHECK(d.input.color_ids == ex.input.color_ids);
      const Tensor& a = ex.input.boxes;
      const Tensor& b = d.input.boxes;
      bool fx = false, fy = false;
      for (std::size_t axis = 0; axis < 2; ++axis) {
        bool same = true, mirrored = true;
        for (std::size_t i = 0; i < a.rows(); ++i) {
          same = same && b.at(i, axis) == a.at(i, axis);
          mirrored = mirrored && std::abs(b.at(i, axis) - (1.0 - a.at(i, axis))) < 1e-12;
        }
        CHECK((same || mirrored));
        (axis == 0 ? fx : fy) = !same;
      }
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t c = 2; c < 6; ++c) CHECK(b.at(i, c) == a.at(i, c));
      }
      bool sided = false;
      for (const auto& rel : rec.relations) {
        using scene::RelationKind;
        sided = sided || (fx && (rel.kind == RelationKind::left_of || rel.kind == RelationKind::right_of));
        sided = sided || (fy && (rel.kind == RelationKind::in_front_of || rel.kind == RelationKind::behind));
      }
      // only side words change; everything else is invariant under reflection
      CHECK((d.input.tokens != ex.input.tokens) == sided);
      flipped += fx || fy;
    }
  }
  CHECK(flipped > 0);
}

TEST_CASE("recolouring permutes colour ids consistently") {
  const Micro m = micro_corpus(30, true);
  const auto space = net::InputSpace::from_config(m.gen);
  const Augmenter aug(m.corpus, m.corpus.records, space, m.gen, true);
  AugmentConfig ac;
  ac.recolor = true;
  int changed = 0;
  for (const Example& ex : m.examples) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const Example d = aug.draw(ex, ac, seed);
      CHECK(d.input.target_index == ex.input.target_index);
      CHECK(d.input.category_ids == ex.input.category_ids);
      CHECK(d.input.boxes.data()[0] == ex.input.boxes.data()[0]);
      CHECK(d.input.points.rows() == ex.input.points.rows());
      std::map<std::size_t, std::size_t> fwd, back;
      for (std::size_t i = 0; i < ex.input.color_ids.size(); ++i) {
        const auto [f, fnew] = fwd.emplace(ex.input.color_ids[i], d.input.color_ids[i]);
        const auto [r, rnew] = back.emplace(d.input.color_ids[i], ex.input.color_ids[i]);
        CHECK(f->second == d.input.color_ids[i]);
        CHECK(r->second == ex.input.color_ids[i]);
      }
      changed += d.input.color_ids != ex.input.color_ids;
    }
  }
  CHECK(changed > 0);
}

TEST_CASE("augmentation draws are seeded and the identity is a no-op") {
  const Micro m = micro_corpus(10, false);
  const auto space = net::InputSpace::from_config(m.gen);
  const Augmenter aug(m.corpus, m.corpus.records, space, m.gen, false);
  AugmentConfig both;
  both.reflect = both.recolor = true;
  for (const Example& ex : m.examples) {
    const Example same = aug.draw(ex, {}, 3);
    CHECK(same.input.tokens == ex.input.tokens);
    CHECK(testing::max_abs_diff(same.input.boxes.data(), ex.input.boxes.data()) == 0.0);
    const Example a = aug.draw(ex, both, 17), b = aug.draw(ex, both, 17);
    CHECK(a.input.tokens == b.input.tokens);
    CHECK(a.input.color_ids == b.input.color_ids);
    CHECK(testing::max_abs_diff(a.input.boxes.data(), b.input.boxes.data()) == 0.0);
  }
  Example stray = m.examples[0];
  stray.record_id = 99999;
  CHECK_THROWS_AS(aug.draw(stray, both, 1), ContractError);
}

TEST_CASE("augmented training needs an augmenter and stays deterministic") {
  const Micro m = micro_corpus(6, false);
  const auto space = net::InputSpace::from_config(m.gen);
  const Augmenter aug(m.corpus, m.corpus.records, space, m.gen, false);
  StageConfig st = stage_of(StageKind::gtas_spatial, EncoderRole::teacher, 2);
  st.augment.reflect = st.augment.recolor = true;
  st.weight_decay = 0.01;
  auto run = [&](const Augmenter* a) {
    ParamStore ps(3);
    net::register_model(ps, m.cfg, EncoderRole::teacher);
    train_stage(ps, m.cfg, m.examples, {}, st, nullptr, "s", {}, a);
    return ps;
  };
  CHECK_THROWS_AS(run(nullptr), ContractError);
  const ParamStore a = run(&aug), b = run(&aug);
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    CHECK(testing::max_abs_diff(a.entries()[i].second.data(), b.entries()[i].second.data()) == 0.0);
  }
}

TEST_CASE("weight decay shrinks matrices only") {
  ParamStore ps(4);
  ps.add("w", {2, 3}, InitKind::normal, 1.0);
  ps.add("v", {3}, InitKind::normal, 1.0);
  Tensor& w = ps.get("w");
  Tensor& v = ps.get("v");
  const std::vector<double> w0(w.data().begin(), w.data().end());
  const std::vector<double> v0(v.data().begin(), v.data().end());
  std::fill(w.mutable_grad().begin(), w.mutable_grad().end(), 0.0);
  std::fill(v.mutable_grad().begin(), v.mutable_grad().end(), 0.0);
  OptimizerConfig oc;
  Adam opt(ps, oc, 0.5);
  opt.step();
  for (std::size_t i = 0; i < w0.size(); ++i) {
    CHECK(w.data()[i] == doctest::Approx(w0[i] * (1.0 - oc.learning_rate * 0.5)).epsilon(1e-15));
  }
  for (std::size_t i = 0; i < v0.size(); ++i) CHECK(v.data()[i] == v0[i]);
  StageConfig st;
  st.weight_decay = -1.0;
  CHECK_THROWS_AS(st.validate(), ContractError);
}
