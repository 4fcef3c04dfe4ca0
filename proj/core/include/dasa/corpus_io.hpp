#pragma once

// Line-delimited JSON corpus files, the vocabulary table, and the run
// configuration whose hash tags every artefact.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dasa/scene.hpp"
#include "dasa/train.hpp"

namespace dasa::scene {

void to_json(nlohmann::json& j, const GenConfig& c);
void from_json(const nlohmann::json& j, GenConfig& c);
void to_json(nlohmann::json& j, const Scene& s);
void from_json(const nlohmann::json& j, Scene& s);
void to_json(nlohmann::json& j, const DescriptionRecord& r);
void from_json(const nlohmann::json& j, DescriptionRecord& r);

}  // namespace dasa::scene

namespace dasa::io {

inline constexpr const char* kCorpusFormat = "dasa-corpus-1";

// 16 hex digits of FNV-1a over the compact JSON dump.
std::string hash_json(const nlohmann::json& j);

struct DataConfig {
  scene::GenConfig gen = scene::GenConfig::defaults();
  std::uint64_t seed = 7;
  double train_fraction = 0.8;

  std::string hash() const;
};

void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);

struct RunConfig {
  DataConfig data;
  train::ScheduleConfig schedule = train::ScheduleConfig::desk_scale();

  // Desk-scale defaults with vocabulary/label sizes filled in.
  static RunConfig defaults();
  std::string hash() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);

struct LoadedCorpus {
  DataConfig config;
  std::string config_hash;
  scene::Corpus corpus;
  std::vector<scene::DescriptionRecord> train;
  std::vector<scene::DescriptionRecord> test;
  text::Vocabulary vocab;

  const scene::DescriptionRecord& record(int id) const;
};

// Generates, splits and writes scenes.jsonl, descriptions.jsonl, vocab.txt and
// manifest.json. Returns the written corpus.
LoadedCorpus write_corpus(const DataConfig& config, const std::filesystem::path& dir);
LoadedCorpus read_corpus(const std::filesystem::path& dir);

// In-memory equivalent of write_corpus followed by read_corpus.
LoadedCorpus make_corpus(const DataConfig& config);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace dasa::io
