#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace dasa::cli {

// $DASA_OUT_DIR, or ./dasa_out when unset.
std::filesystem::path default_out_dir();

struct GenDataOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<int> scenes;
  std::filesystem::path out;
};

struct TrainOptions {
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  bool no_gtas = false;
  std::optional<std::string> fusion;
  std::string mode = "full";
  bool quiet = false;
};

struct EvalOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::filesystem::path corpus;
  std::string split = "test";
  bool oracle = false;
  std::optional<std::filesystem::path> out;
};

struct InspectOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  int scene = 0;
  int description = 0;
  std::optional<std::filesystem::path> out;
};

struct GradcheckOptions {
  std::uint64_t seed = 3;
  std::string role = "both";
  bool corrupt = false;
  double threshold = 1e-4;
};

int cmd_config(const std::optional<std::filesystem::path>& out);
int cmd_gen_data(const GenDataOptions& o);
int cmd_train(const TrainOptions& o);
int cmd_eval(const EvalOptions& o);
int cmd_inspect(const InspectOptions& o);
int cmd_gradcheck(const GradcheckOptions& o);

}  // namespace dasa::cli
