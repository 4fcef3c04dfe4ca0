#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "dasa/errors.hpp"

int main(int argc, char** argv) {
  using namespace dasa::cli;
  CLI::App app{"dasa: dual attribute/spatial grounding on synthetic rooms"};
  app.require_subcommand(1);
  const auto out_dir = default_out_dir();

  std::optional<std::filesystem::path> config_out;
  auto* config = app.add_subcommand("config", "Print the default run configuration");
  config->add_option("--out", config_out, "Write to file instead of stdout");

  GenDataOptions gen{.out = out_dir / "corpus"};
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate scenes and descriptions");
  gen_cmd->add_option("--config", gen.config, "Run configuration JSON")->check(CLI::ExistingFile);
  gen_cmd->add_option("--seed", gen.seed, "Corpus seed");
  gen_cmd->add_option("--scenes", gen.scenes, "Number of scenes");
  gen_cmd->add_option("--out", gen.out, "Output directory")->capture_default_str();

  TrainOptions tr{.corpus = out_dir / "corpus", .out = out_dir / "run"};
  auto* train_cmd = app.add_subcommand("train", "Run the training schedule");
  train_cmd->add_option("--corpus", tr.corpus, "Corpus directory")->capture_default_str();
  train_cmd->add_option("--config", tr.config, "Run configuration JSON")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr.out, "Output directory")->capture_default_str();
  train_cmd->add_flag("--no-gtas", tr.no_gtas, "Replace GTAS stages by plain fine-tuning");
  train_cmd->add_option("--fusion", tr.fusion, "Global feature fusion")
      ->check(CLI::IsMember({"add", "concat"}));
  train_cmd->add_option("--mode", tr.mode, "full or teacher-only")
      ->check(CLI::IsMember({"full", "teacher-only"}))
      ->capture_default_str();
  train_cmd->add_flag("--quiet", tr.quiet, "No per-epoch progress");

  EvalOptions ev{.corpus = out_dir / "corpus"};
  auto* eval_cmd = app.add_subcommand("eval", "Stratified accuracy of a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->check(CLI::ExistingFile);
  eval_cmd->add_option("--corpus", ev.corpus, "Corpus directory")->capture_default_str();
  eval_cmd->add_option("--split", ev.split, "train or test")->capture_default_str();
  eval_cmd->add_flag("--oracle", ev.oracle, "Predict with the relation oracle");
  eval_cmd->add_option("--out", ev.out, "Write metrics JSON to file");

  InspectOptions in{.corpus = out_dir / "corpus"};
  auto* inspect_cmd = app.add_subcommand("inspect", "Per-object score table as CSV");
  inspect_cmd->add_option("--checkpoint", in.checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  inspect_cmd->add_option("--corpus", in.corpus, "Corpus directory")->capture_default_str();
  inspect_cmd->add_option("--scene", in.scene, "Scene id")->required();
  inspect_cmd->add_option("--description", in.description, "Description id")->required();
  inspect_cmd->add_option("--out", in.out, "Write CSV to file");

  GradcheckOptions gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the micro-model");
  grad_cmd->add_option("--seed", gc.seed, "Micro-model seed")->capture_default_str();
  grad_cmd->add_option("--role", gc.role, "teacher, student or both")
      ->check(CLI::IsMember({"teacher", "student", "both"}))
      ->capture_default_str();
  grad_cmd->add_flag("--corrupt", gc.corrupt, "Perturb one analytic gradient (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*config) return cmd_config(config_out);
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(tr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*inspect_cmd) return cmd_inspect(in);
    if (*grad_cmd) return cmd_gradcheck(gc);
  } catch (const dasa::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const dasa::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "malformed input: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
