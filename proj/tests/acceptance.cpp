// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
// usage: dasa_acceptance <path-to-dasa-cli> <work-dir>

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "dasa/corpus_io.hpp"
#include "dasa/diagnostics.hpp"
#include "dasa/layers.hpp"
#include "dasa/train.hpp"
#include "oracles.hpp"

using namespace dasa;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_cli;
fs::path g_work;
std::map<int, std::string> g_lines;
int g_failed = 0;

// Lines are echoed to stderr as criteria finish and printed in order at the end.
void report(int id, bool pass, const std::string& detail) {
  if (!pass) ++g_failed;
  std::ostringstream os;
  os << "criterion " << std::setw(2) << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail;
  g_lines[id] = os.str();
  std::cerr << os.str() << std::endl;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Runs the CLI with stdout/stderr sent to `log`; returns the exit status.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + g_cli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

struct Model {
  ParamStore params;
  ModelConfig cfg;
  objenc::EncoderRole role;
};

Model load_model(const fs::path& p) {
  Model m{ParamStore::load(p), {}, objenc::EncoderRole::teacher};
  std::tie(m.cfg, m.role) = train::parse_checkpoint_metadata(m.params.metadata());
  return m;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

// ---- 1 -----------------------------------------------------------------------

void gradient_correctness() {
  const auto t0 = Clock::now();
  const fs::path log = g_work / "gradcheck.log";
  const int code = run_cli("gradcheck --role both", log);
  const double secs = seconds_since(t0);
  const std::string out = slurp(log);
  double worst = 1e300;
  const auto pos = out.rfind("max relative error ");
  if (pos != std::string::npos) worst = std::stod(out.substr(pos + 19));
  report(1, code == 0 && worst < 1e-4 && secs < 120.0,
         "max relative error " + fmt(worst, 3) + " in " + fmt(secs, 3) + " s (exit " +
             std::to_string(code) + ")");
}

// ---- 2 -----------------------------------------------------------------------

void equation_oracles() {
  double worst[4] = {0, 0, 0, 0};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed * 7919 + 1);
    std::normal_distribution<double> nd;
    auto rnd = [&](std::size_t r, std::size_t c) {
      std::vector<double> v(r * c);
      for (double& x : v) x = nd(rng);
      return Tensor::matrix(r, c, v);
    };
    const std::size_t d = 2 + rng() % 10, k = 1 + rng() % 8, n = rng() % 10;
    ModelConfig cfg;
    cfg.d = d;
    cfg.heads = 1;
    cfg.residual_norm = false;
    cfg.output_projection = false;
    ParamStore ps(seed);
    nn::register_attention(ps, "L.self", {d, 1, false});
    nn::register_attention(ps, "L.cross", {d, 1, false});
    auto w = [&](const char* name) { return oracle::of(ps.get(name)); };
    const Tensor branch = rnd(k, d), global = rnd(k, d), tokens = rnd(n + 1, d);

    const Tensor e1 = net::branch_self_attention(branch, global, ps, "L", cfg);
    const auto o1 = oracle::eq1(oracle::of(branch), oracle::of(global), w("L.self.Wq"),
                                w("L.self.Wk"), w("L.self.Wv"));
    const Tensor e2 = net::branch_cross_attention(branch, tokens, ps, "L", cfg);
    const auto o2 = oracle::eq2(oracle::of(branch), oracle::of(tokens), w("L.cross.Wq"),
                                w("L.cross.Wk"), w("L.cross.Wv"));
    const Tensor t = rnd(1, d), wo = rnd(d, d), wt = rnd(d, d);
    const Tensor e3 = net::score_branch(branch, t, wo, wt);
    const auto o3 = oracle::eq3(oracle::of(branch), oracle::of(t), oracle::of(wo), oracle::of(wt));
    const std::size_t target = rng() % k;
    const double temp = 10.0;
    std::vector<double> logits(e3.data().begin(), e3.data().end());
    for (double& v : logits) v *= temp;
    const double ce = train::loss_ref(e3, target, temp).item();

    for (std::size_t i = 0; i < e1.numel(); ++i)
      worst[0] = std::max(worst[0], std::abs(e1.data()[i] - o1.v[i]));
    for (std::size_t i = 0; i < e2.numel(); ++i)
      worst[1] = std::max(worst[1], std::abs(e2.data()[i] - o2.v[i]));
    for (std::size_t i = 0; i < e3.numel(); ++i)
      worst[2] = std::max(worst[2], std::abs(e3.data()[i] - o3[i]));
    worst[3] = std::max(worst[3], std::abs(ce - oracle::cross_entropy(logits, target)));
  }
  const double m = *std::max_element(worst, worst + 4);
  report(2, m < 1e-12,
         "max deviation self-attn " + fmt(worst[0], 3) + ", cross-attn " + fmt(worst[1], 3) +
             ", cosine " + fmt(worst[2], 3) + ", cross-entropy " + fmt(worst[3], 3));
}

// ---- 3 -----------------------------------------------------------------------

void permutation_equivariance() {
  auto gen = scene::GenConfig::defaults();
  gen.num_scenes = 100;
  const auto corpus = scene::generate_corpus(gen, 31);
  const auto space = net::InputSpace::from_config(gen);
  ModelConfig cfg;
  space.apply_to(cfg);
  ParamStore ps(77);
  net::register_model(ps, cfg, objenc::EncoderRole::teacher);
  std::mt19937_64 rng(5);
  double dev = 0.0;
  std::size_t mapped = 0, checked = 0;
  for (const auto& rec : corpus.records) {
    const auto& s = corpus.scene(rec.scene_id);
    scene::Scene p = s;
    std::vector<std::size_t> perm(s.objects.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < perm.size(); ++i) p.objects[i] = s.objects[perm[i]];
    const auto a = net::predict(net::prepare_input(s, rec, space, false), ps, cfg,
                                objenc::EncoderRole::teacher);
    const auto b = net::predict(net::prepare_input(p, rec, space, false), ps, cfg,
                                objenc::EncoderRole::teacher);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      dev = std::max(dev, std::abs(b.scores.att[i] - a.scores.att[perm[i]]));
      dev = std::max(dev, std::abs(b.scores.spa[i] - a.scores.spa[perm[i]]));
      dev = std::max(dev, std::abs(b.scores.total[i] - a.scores.total[perm[i]]));
    }
    ++checked;
    mapped += a.predicted_id == b.predicted_id;
  }
  report(3, dev < 1e-9 && mapped == checked,
         "max deviation " + fmt(dev, 3) + ", prediction mapped in " + std::to_string(mapped) + "/" +
             std::to_string(checked) + " scenes");
}

// ---- 9 -----------------------------------------------------------------------

void parser_exactness() {
  auto gen = scene::GenConfig::defaults();
  gen.num_scenes = 10000;
  const auto corpus = scene::generate_corpus(gen, 99);
  const auto space = net::InputSpace::from_config(gen);
  std::size_t ok = 0, attr = 0, attr_ok = 0;
  for (const auto& r : corpus.records) {
    const auto d = text::decouple(r.surface_tokens, space.lexicon);
    ok += text::reconstruct(d) == r.surface_tokens;
    if (r.relation_kind == scene::RelationKind::attribute_only) {
      ++attr;
      std::vector<std::string> expect;
      if (!r.surface_tokens.empty() && r.surface_tokens.front() == "the") expect.push_back("the");
      expect.push_back("object");
      attr_ok += d.spa == expect && d.att == r.surface_tokens;
    }
  }
  report(9, ok == corpus.records.size() && attr_ok == attr && attr > 0,
         std::to_string(ok) + "/" + std::to_string(corpus.records.size()) +
             " round trips; " + std::to_string(attr_ok) + "/" + std::to_string(attr) +
             " attribute-only descriptions give the degenerate spatial sentence");
}

// ---- pipeline-based criteria -------------------------------------------------

struct Pipeline {
  fs::path corpus, out;
  double seconds = 0;
  bool ok = false;
};

Pipeline run_pipeline(const std::string& tag, const std::string& gen_args,
                      const std::string& train_args) {
  Pipeline p;
  p.corpus = g_work / tag / "corpus";
  p.out = g_work / tag / "run";
  fs::remove_all(g_work / tag);
  fs::create_directories(g_work / tag);
  const auto t0 = Clock::now();
  int code = run_cli("gen-data " + gen_args + " --out \"" + p.corpus.string() + "\"",
                     g_work / tag / "gen.log");
  if (code == 0) {
    code = run_cli("train --corpus \"" + p.corpus.string() + "\" --out \"" + p.out.string() +
                       "\" " + train_args,
                   g_work / tag / "train.log");
  }
  p.seconds = seconds_since(t0);
  p.ok = code == 0;
  if (!p.ok) std::cerr << tag << ": pipeline failed, see " << (g_work / tag).string() << "\n";
  return p;
}

nlohmann::json eval_checkpoint(const Pipeline& p, const std::string& stage, const fs::path& out) {
  const int code = run_cli("eval --checkpoint \"" + (p.out / (stage + ".ckpt")).string() +
                               "\" --corpus \"" + p.corpus.string() + "\" --out \"" +
                               out.string() + "\"",
                           out.string() + ".log");
  if (code != 0) return nullptr;
  return read_json(out);
}

double metric(const nlohmann::json& j, const char* key) {
  if (j.is_null() || !j["metrics"].contains(key) || j["metrics"][key].is_null()) return -1.0;
  return j["metrics"][key].get<double>();
}

void learning_and_diagnostics() {
  const Pipeline full = run_pipeline("full", "", "--quiet");
  if (!full.ok) {
    for (int id : {4, 5, 6, 7, 8}) report(id, false, "full pipeline did not complete");
    return;
  }
  const auto corpus = io::read_corpus(full.corpus);
  const auto space = net::InputSpace::from_config(corpus.config.gen);
  const auto teacher_eval = eval_checkpoint(full, "stage2_teacher_fine_tune",
                                            g_work / "full" / "teacher_eval.json");
  const auto student_eval = eval_checkpoint(full, "stage4_student_fine_tune",
                                            g_work / "full" / "student_eval.json");

  // 4: score decomposition on every prediction of both trained models.
  {
    std::size_t predictions = 0, exact = 0, in_range = 0;
    for (const char* stage : {"stage2_teacher_fine_tune", "stage4_student_fine_tune"}) {
      const Model m = load_model(full.out / (std::string(stage) + ".ckpt"));
      const auto ex = train::build_examples(corpus.corpus, corpus.test, space, corpus.config.gen,
                                            m.role == objenc::EncoderRole::student);
      for (const auto& e : ex) {
        const auto r = net::predict(e.input, m.params, m.cfg, m.role);
        ++predictions;
        bool eq = true, range = true;
        for (std::size_t i = 0; i < r.scores.total.size(); ++i) {
          eq = eq && r.scores.total[i] == r.scores.att[i] + r.scores.spa[i];
          range = range && std::abs(r.scores.att[i]) <= 1.0 && std::abs(r.scores.spa[i]) <= 1.0;
        }
        exact += eq;
        in_range += range;
      }
    }
    report(4, exact == predictions && in_range == predictions && predictions > 0,
           std::to_string(exact) + "/" + std::to_string(predictions) +
               " predictions decompose exactly, " + std::to_string(in_range) +
               " with branch scores in [-1, 1]");
  }

  // 5: measured at the start of each GTAS stage.
  {
    double worst = 0.0;
    int stages = 0;
    for (const char* stage : {"stage1_teacher_gtas_spatial", "stage3_student_gtas_spatial"}) {
      const auto j = read_json(full.out / (std::string(stage) + ".report.json"));
      const auto& g = j["report"]["gtas_block_grad"];
      if (g.is_null()) continue;
      worst = std::max(worst, std::abs(g.get<double>()));
      ++stages;
    }
    report(5, stages == 2 && worst < 1e-15,
           "max |dL_ref/dW| over attribute projections " + fmt(worst, 3) + " across " +
               std::to_string(stages) + " GTAS stages");
  }

  // 6: baseline, teacher, student, runtime.
  {
    const auto test = train::build_examples(corpus.corpus, corpus.test, space, corpus.config.gen,
                                            false);
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::size_t hits = 0;
    for (const auto& e : test) {
      std::vector<double> s(e.input.num_objects());
      for (double& v : s) v = u(rng);
      hits += net::argmax_lowest(s) == e.input.target_index;
    }
    const double n = static_cast<double>(test.size());
    const double base = static_cast<double>(hits) / n;
    const double sigma = std::sqrt(0.125 * 0.875 / n);
    const bool base_ok = std::abs(base - 0.125) <= 3 * sigma;
    const double t = metric(teacher_eval, "overall"), s = metric(student_eval, "overall");
    const bool shape_ok = corpus.train.size() == 2000 && corpus.test.size() == 500;
    report(6, base_ok && shape_ok && t >= 0.90 && s >= 0.80 && full.seconds < 1800.0,
           "random baseline " + fmt(base) + " (band " + fmt(0.125 - 3 * sigma) + ".." +
               fmt(0.125 + 3 * sigma) + "), teacher " + fmt(t) + " (>= 0.90), student " +
               fmt(s) + " (>= 0.80), " + std::to_string(corpus.train.size()) + "/" +
               std::to_string(corpus.test.size()) + " records, pipeline " + fmt(full.seconds) +
               " s (< 1800)");
  }

  // 8: within-category spread on test scenes.
  {
    const Model m = load_model(full.out / "stage2_teacher_fine_tune.ckpt");
    const auto test = train::build_examples(corpus.corpus, corpus.test, space, corpus.config.gen,
                                            false);
    const auto spread = diag::within_category_spread(test, m.params, m.cfg, m.role);
    report(8, spread.scenes > 0 && spread.fraction() >= 0.80,
           "std(s_att) < std(s_spa) in " + std::to_string(spread.att_tighter) + "/" +
               std::to_string(spread.scenes) + " qualifying test scenes (" +
               fmt(spread.fraction()) + ", need >= 0.80)");
  }

  // 7: strata present, GTAS teacher beats the no-GTAS ablation on hard.
  {
    Pipeline ablation;
    ablation.corpus = full.corpus;
    ablation.out = g_work / "ablation";
    fs::remove_all(ablation.out);
    const int code = run_cli("train --corpus \"" + full.corpus.string() + "\" --out \"" +
                                 ablation.out.string() + "\" --no-gtas --mode teacher-only --quiet",
                             g_work / "ablation.log");
    const auto abl = code == 0 ? eval_checkpoint(ablation, "stage2_teacher_fine_tune",
                                                 g_work / "ablation_eval.json")
                               : nlohmann::json();
    bool strata = !teacher_eval.is_null();
    for (const char* key : {"overall", "easy", "hard", "view_dependent", "view_independent"}) {
      strata = strata && teacher_eval["metrics"].contains(key);
    }
    const double gtas_hard = metric(teacher_eval, "hard"), abl_hard = metric(abl, "hard");
    report(7, strata && gtas_hard >= 0 && abl_hard >= 0 && gtas_hard > abl_hard,
           "hard accuracy GTAS " + fmt(gtas_hard) + " vs no-GTAS " + fmt(abl_hard) +
               " (easy " + fmt(metric(teacher_eval, "easy")) + "/" + fmt(metric(abl, "easy")) +
               ", VD " + fmt(metric(teacher_eval, "view_dependent")) + "/" +
               fmt(metric(abl, "view_dependent")) + ", VI " + fmt(metric(teacher_eval, "view_independent")) +
               "/" + fmt(metric(abl, "view_independent")) + ")");
  }
}

// ---- 10 ----------------------------------------------------------------------

void reproducibility() {
  // Same pipeline as criterion 6 on a reduced corpus and schedule.
  io::RunConfig run = io::RunConfig::defaults();
  for (auto* st : {&run.schedule.teacher_gtas, &run.schedule.teacher_fine_tune,
                   &run.schedule.student_gtas, &run.schedule.student_fine_tune}) {
    st->epochs = 2;
  }
  const fs::path config = g_work / "repro_config.json";
  fs::create_directories(g_work);
  io::write_text_file(config, nlohmann::json(run).dump(2) + "\n");
  const std::string gen = "--scenes 120 --seed 11";
  const std::string train = "--config \"" + config.string() + "\" --quiet";
  const Pipeline a = run_pipeline("repro_a", gen, train);
  const Pipeline b = run_pipeline("repro_b", gen, train);
  if (!a.ok || !b.ok) {
    report(10, false, "pipeline did not complete");
    return;
  }
  std::size_t files = 0, identical = 0;
  for (const auto& entry : fs::directory_iterator(a.out)) {
    const auto name = entry.path().filename();
    ++files;
    identical += fs::exists(b.out / name) && slurp(entry.path()) == slurp(b.out / name);
  }
  for (const char* stage : {"stage2_teacher_fine_tune", "stage4_student_fine_tune"}) {
    const auto ea = eval_checkpoint(a, stage, g_work / "repro_a" / (std::string(stage) + ".eval.json"));
    const auto eb = eval_checkpoint(b, stage, g_work / "repro_b" / (std::string(stage) + ".eval.json"));
    ++files;
    identical += !ea.is_null() &&
                 slurp(g_work / "repro_a" / (std::string(stage) + ".eval.json")) ==
                     slurp(g_work / "repro_b" / (std::string(stage) + ".eval.json"));
  }
  report(10, files > 0 && identical == files,
         std::to_string(identical) + "/" + std::to_string(files) +
             " checkpoints, reports and eval outputs byte-identical across two runs");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: dasa_acceptance <dasa-cli> <work-dir>\n";
    return 2;
  }
  g_cli = argv[1];
  g_work = argv[2];
  fs::create_directories(g_work);
  const auto t0 = Clock::now();
  try {
    gradient_correctness();
    equation_oracles();
    permutation_equivariance();
    parser_exactness();
    reproducibility();
    learning_and_diagnostics();
  } catch (const std::exception& e) {
    std::cerr << "acceptance aborted: " << e.what() << "\n";
    ++g_failed;
  }
  for (int id = 1; id <= 10; ++id) {
    if (g_lines.count(id)) {
      std::cout << g_lines[id] << "\n";
    } else {
      std::cout << "criterion " << std::setw(2) << id << ": FAIL  not evaluated\n";
      ++g_failed;
    }
  }
  std::cout << "acceptance finished in " << fmt(seconds_since(t0)) << " s, " << g_failed
            << " failed" << std::endl;
  return g_failed == 0 ? 0 : 1;
}
