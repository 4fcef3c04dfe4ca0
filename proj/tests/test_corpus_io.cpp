#include <doctest.h>

#include <filesystem>
#include <set>

#include "dasa/corpus_io.hpp"
#include "dasa/errors.hpp"

using namespace dasa;
namespace fs = std::filesystem;

namespace {

io::DataConfig small_data(int scenes = 40) {
  io::DataConfig c;
  c.gen.num_scenes = scenes;
  c.seed = 3;
  return c;
}

fs::path fresh_dir(const char* name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("corpus files round trip") {
  const auto dir = fresh_dir("dasa_corpus_rt");
  const auto written = io::write_corpus(small_data(), dir);
  const auto read = io::read_corpus(dir);
  CHECK(read.config_hash == written.config_hash);
  CHECK(read.train.size() + read.test.size() == read.corpus.records.size());
  CHECK(read.corpus.scenes.size() == 40);
  nlohmann::json a = written.corpus.scenes, b = read.corpus.scenes;
  CHECK(a == b);
  nlohmann::json ra = written.corpus.records, rb = read.corpus.records;
  CHECK(ra == rb);
  CHECK(read.vocab.words() == written.vocab.words());
  fs::remove_all(dir);
}

TEST_CASE("regenerating a corpus gives identical bytes") {
  const auto a = fresh_dir("dasa_corpus_a"), b = fresh_dir("dasa_corpus_b");
  io::write_corpus(small_data(), a);
  io::write_corpus(small_data(), b);
  for (const char* f : {"scenes.jsonl", "descriptions.jsonl", "vocab.txt", "manifest.json"}) {
    CHECK_MESSAGE(io::read_text_file(a / f) == io::read_text_file(b / f), f);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("in-memory corpus equals the written one") {
  const auto dir = fresh_dir("dasa_corpus_mem");
  const auto written = io::write_corpus(small_data(), dir);
  const auto mem = io::make_corpus(small_data());
  CHECK(mem.config_hash == written.config_hash);
  nlohmann::json a = mem.train, b = written.train;
  CHECK(a == b);
  fs::remove_all(dir);
}

TEST_CASE("the split is disjoint and follows the fraction") {
  const auto c = io::make_corpus(small_data(200));
  CHECK(c.train.size() == 160);
  CHECK(c.test.size() == 40);
  std::set<int> ids;
  for (const auto& r : c.train) ids.insert(r.id);
  for (const auto& r : c.test) CHECK(ids.count(r.id) == 0);
}

TEST_CASE("hash mismatches are detected") {
  const auto dir = fresh_dir("dasa_corpus_bad");
  io::write_corpus(small_data(), dir);
  const auto other = fresh_dir("dasa_corpus_other");
  auto cfg = small_data();
  cfg.seed = 4;
  io::write_corpus(cfg, other);
  fs::copy_file(other / "scenes.jsonl", dir / "scenes.jsonl", fs::copy_options::overwrite_existing);
  CHECK_THROWS_AS(io::read_corpus(dir), IoError);
  fs::remove_all(dir);
  fs::remove_all(other);
  CHECK_THROWS_AS(io::read_corpus(fresh_dir("dasa_corpus_missing")), IoError);
}

TEST_CASE("config hashes change with the config") {
  auto a = small_data(), b = small_data();
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);
  b.gen.num_scenes += 1;
  CHECK(a.hash() != b.hash());
  auto r1 = io::RunConfig::defaults(), r2 = io::RunConfig::defaults();
  CHECK(r1.hash() == r2.hash());
  r2.schedule.teacher_gtas.epochs += 1;
  CHECK(r1.hash() != r2.hash());
  nlohmann::json j = r1;
  CHECK(j.get<io::RunConfig>().hash() == r1.hash());
}
