#include "commands.hpp"

#include <cstdlib>
#include <iomanip>
#include <iostream>

#include "dasa/corpus_io.hpp"
#include "dasa/diagnostics.hpp"
#include "dasa/errors.hpp"

namespace dasa::cli {

namespace {

struct LoadedModel {
  ParamStore params;
  ModelConfig cfg;
  objenc::EncoderRole role;
  std::string run_hash;
};

LoadedModel load_model(const std::filesystem::path& path) {
  LoadedModel m{ParamStore::load(path), {}, objenc::EncoderRole::teacher, ""};
  std::tie(m.cfg, m.role) = train::parse_checkpoint_metadata(m.params.metadata());
  m.run_hash = nlohmann::json::parse(m.params.metadata()).value("config_hash", "");
  return m;
}

void emit(const std::optional<std::filesystem::path>& out, const std::string& text) {
  if (out) {
    io::write_text_file(*out, text);
  } else {
    std::cout << text;
  }
}

}  // namespace

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("DASA_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "dasa_out";
}

int cmd_config(const std::optional<std::filesystem::path>& out) {
  emit(out, nlohmann::json(io::RunConfig::defaults()).dump(2) + "\n");
  return 0;
}

int cmd_gen_data(const GenDataOptions& o) {
  io::RunConfig run = o.config ? io::load_run_config(*o.config) : io::RunConfig::defaults();
  if (o.seed) run.data.seed = *o.seed;
  if (o.scenes) run.data.gen.num_scenes = *o.scenes;
  const io::LoadedCorpus c = io::write_corpus(run.data, o.out);
  std::cout << "wrote " << c.corpus.scenes.size() << " scenes, " << c.corpus.records.size()
            << " descriptions (" << c.train.size() << " train / " << c.test.size()
            << " test) to " << o.out.string() << "\nconfig_hash " << c.config_hash << "\n";
  return 0;
}

int cmd_train(const TrainOptions& o) {
  const io::LoadedCorpus corpus = io::read_corpus(o.corpus);
  io::RunConfig run = o.config ? io::load_run_config(*o.config) : io::RunConfig::defaults();
  run.data = corpus.config;
  net::InputSpace::from_config(run.data.gen).apply_to(run.schedule.model);
  if (o.no_gtas) run.schedule.use_gtas = false;
  if (o.fusion) run.schedule.model.fusion = fusion_mode_from_string(*o.fusion);
  if (o.mode == "teacher-only") {
    run.schedule.teacher_only = true;
  } else if (o.mode != "full") {
    throw ContractError("--mode must be full or teacher-only");
  }
  const std::string hash = run.hash();
  std::filesystem::create_directories(o.out);
  io::write_text_file(o.out / "run_config.json",
                      nlohmann::json{{"config_hash", hash}, {"config", run}}.dump(2) + "\n");

  const net::InputSpace space = net::InputSpace::from_config(run.data.gen);
  const bool points = !run.schedule.teacher_only;
  const auto train = train::build_examples(corpus.corpus, corpus.train, space, run.data.gen, points);
  const auto test = train::build_examples(corpus.corpus, corpus.test, space, run.data.gen, points);

  train::ProgressFn progress;
  if (!o.quiet) {
    progress = [](const std::string& stage, const train::EpochReport& e) {
      std::cerr << stage << " epoch " << e.epoch << " loss " << std::fixed << std::setprecision(4)
                << e.mean_loss.total << " (ref " << e.mean_loss.ref << ", fg " << e.mean_loss.fg
                << ", text " << e.mean_loss.text << ", distill " << e.mean_loss.distill
                << ") train_acc " << e.train_accuracy << "\n";
    };
  }
  const train::Augmenter augmenter(corpus.corpus, corpus.train, space, run.data.gen, points);
  const auto result =
      train::run_schedule(run.schedule, train, test, o.out, hash, progress, &augmenter);
  for (const auto& r : result.reports) {
    std::cout << r.name << " test overall " << std::fixed << std::setprecision(4)
              << r.test_metrics.overall << "\n";
  }
  std::cout << "config_hash " << hash << "\n";
  return 0;
}

int cmd_eval(const EvalOptions& o) {
  const io::LoadedCorpus corpus = io::read_corpus(o.corpus);
  const std::vector<scene::DescriptionRecord>* records = nullptr;
  if (o.split == "test") {
    records = &corpus.test;
  } else if (o.split == "train") {
    records = &corpus.train;
  } else {
    throw ContractError("--split must be train or test");
  }
  const net::InputSpace space = net::InputSpace::from_config(corpus.config.gen);
  nlohmann::json report{{"corpus_hash", corpus.config_hash},
                        {"seed", corpus.config.seed},
                        {"split", o.split}};
  if (o.oracle) {
    const auto ex = train::build_examples(corpus.corpus, *records, space, corpus.config.gen, false);
    report["mode"] = "oracle";
    report["metrics"] =
        train::to_json(diag::evaluate_oracle(corpus.corpus, *records, ex, corpus.config.gen.geometry));
  } else {
    if (!o.checkpoint) throw ContractError("eval needs --checkpoint unless --oracle is given");
    const LoadedModel m = load_model(*o.checkpoint);
    const auto ex = train::build_examples(corpus.corpus, *records, space, corpus.config.gen,
                                          m.role == objenc::EncoderRole::student);
    report["mode"] = objenc::to_string(m.role);
    report["config_hash"] = m.run_hash;
    report["metrics"] = train::to_json(train::evaluate(m.params, m.cfg, m.role, ex));
  }
  emit(o.out, report.dump(2) + "\n");
  return 0;
}

int cmd_inspect(const InspectOptions& o) {
  const io::LoadedCorpus corpus = io::read_corpus(o.corpus);
  const LoadedModel m = load_model(o.checkpoint);
  const scene::Scene& s = corpus.corpus.scene(o.scene);
  const scene::DescriptionRecord& r = corpus.record(o.description);
  if (r.scene_id != s.id) {
    throw ContractError("description " + std::to_string(r.id) + " belongs to scene " +
                        std::to_string(r.scene_id));
  }
  const net::InputSpace space = net::InputSpace::from_config(corpus.config.gen);
  const auto ex = train::build_examples(corpus.corpus, {r}, space, corpus.config.gen,
                                        m.role == objenc::EncoderRole::student);
  emit(o.out, diag::to_csv(diag::inspect(s, r, ex.front(), m.params, m.cfg, m.role)));
  return 0;
}

int cmd_gradcheck(const GradcheckOptions& o) {
  std::vector<objenc::EncoderRole> roles;
  if (o.role == "both" || o.role == "teacher") roles.push_back(objenc::EncoderRole::teacher);
  if (o.role == "both" || o.role == "student") roles.push_back(objenc::EncoderRole::student);
  if (roles.empty()) throw ContractError("--role must be teacher, student or both");

  GradientTamper tamper;
  if (o.corrupt) {
    tamper = [](ParamStore& ps) {
      auto& t = ps.entries().back().second;
      t.mutable_grad()[0] += 1e-2;
    };
  }
  double worst = 0.0;
  std::cout << std::scientific << std::setprecision(3);
  for (auto role : roles) {
    const GradCheckReport rep = diag::check_micro_model(role, o.seed, tamper);
    std::cout << "model " << objenc::to_string(role) << ": " << rep.entries_checked
              << " entries, max relative error " << rep.max_relative_error << " at "
              << rep.worst_parameter << "\n";
    for (const auto& [group, err] : rep.group_worst) {
      std::cout << "  " << std::left << std::setw(28) << group << " " << err << "\n";
    }
    worst = std::max(worst, rep.max_relative_error);
  }
  const bool pass = worst < o.threshold;
  std::cout << "max relative error " << worst << " threshold " << o.threshold << " -> "
            << (pass ? "PASS" : "FAIL") << "\n";
  if (!pass) throw NumericalError("gradient check failed");
  return 0;
}

}  // namespace dasa::cli
