#include "dasa/corpus_io.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dasa/errors.hpp"
#include "dasa/param_store.hpp"

namespace dasa::scene {

void to_json(nlohmann::json& j, const GenConfig& c) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& k : c.categories) cats.push_back({{"name", k.name}, {"h", k.h}, {"w", k.w}, {"l", k.l}});
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& k : c.colors) cols.push_back({{"name", k.name}, {"rgb", k.rgb}});
  j = nlohmann::json{{"k_min", c.k_min},
                     {"k_max", c.k_max},
                     {"room_size", c.room_size},
                     {"categories", cats},
                     {"colors", cols},
                     {"points_per_object", c.points_per_object},
                     {"color_noise", c.color_noise},
                     {"dim_jitter", c.dim_jitter},
                     {"small_scale", c.small_scale},
                     {"large_scale", c.large_scale},
                     {"min_gap", c.min_gap},
                     {"max_group", c.max_group},
                     {"placement_retries", c.placement_retries},
                     {"scene_retries", c.scene_retries},
                     {"description_retries", c.description_retries},
                     {"corner_fraction", c.geometry.corner_fraction},
                     {"between_width", c.geometry.between_width},
                     {"clarity_margin", c.clarity_margin},
                     {"side_margin", c.side_margin},
                     {"group_target_prob", c.group_target_prob},
                     {"attribute_only_prob", c.attribute_only_prob},
                     {"conjunction_prob", c.conjunction_prob},
                     {"color_modifier_prob", c.color_modifier_prob},
                     {"size_modifier_prob", c.size_modifier_prob},
                     {"num_scenes", c.num_scenes},
                     {"descriptions_per_scene", c.descriptions_per_scene}};
}

void from_json(const nlohmann::json& j, GenConfig& c) {
  c = GenConfig::defaults();
  if (j.contains("categories")) {
    c.categories.clear();
    for (const auto& k : j.at("categories")) {
      c.categories.push_back({k.at("name").get<std::string>(), k.at("h").get<double>(),
                              k.at("w").get<double>(), k.at("l").get<double>()});
    }
  }
  if (j.contains("colors")) {
    c.colors.clear();
    for (const auto& k : j.at("colors")) {
      c.colors.push_back({k.at("name").get<std::string>(), k.at("rgb").get<std::array<double, 3>>()});
    }
  }
  c.k_min = j.value("k_min", c.k_min);
  c.k_max = j.value("k_max", c.k_max);
  c.room_size = j.value("room_size", c.room_size);
  c.points_per_object = j.value("points_per_object", c.points_per_object);
  c.color_noise = j.value("color_noise", c.color_noise);
  c.dim_jitter = j.value("dim_jitter", c.dim_jitter);
  c.small_scale = j.value("small_scale", c.small_scale);
  c.large_scale = j.value("large_scale", c.large_scale);
  c.min_gap = j.value("min_gap", c.min_gap);
  c.max_group = j.value("max_group", c.max_group);
  c.placement_retries = j.value("placement_retries", c.placement_retries);
  c.scene_retries = j.value("scene_retries", c.scene_retries);
  c.description_retries = j.value("description_retries", c.description_retries);
  c.geometry.corner_fraction = j.value("corner_fraction", c.geometry.corner_fraction);
  c.geometry.between_width = j.value("between_width", c.geometry.between_width);
  c.clarity_margin = j.value("clarity_margin", c.clarity_margin);
  c.side_margin = j.value("side_margin", c.side_margin);
  c.group_target_prob = j.value("group_target_prob", c.group_target_prob);
  c.attribute_only_prob = j.value("attribute_only_prob", c.attribute_only_prob);
  c.conjunction_prob = j.value("conjunction_prob", c.conjunction_prob);
  c.color_modifier_prob = j.value("color_modifier_prob", c.color_modifier_prob);
  c.size_modifier_prob = j.value("size_modifier_prob", c.size_modifier_prob);
  c.num_scenes = j.value("num_scenes", c.num_scenes);
  c.descriptions_per_scene = j.value("descriptions_per_scene", c.descriptions_per_scene);
}

void to_json(nlohmann::json& j, const Scene& s) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : s.objects) {
    objs.push_back({{"id", o.id},
                    {"category", o.category},
                    {"color", o.color},
                    {"size_class", to_string(o.size_class)},
                    {"bbox", o.bbox.as_array()},
                    {"point_seed", o.point_seed}});
  }
  j = nlohmann::json{{"scene_id", s.id},
                     {"room", {{"lo", s.room.lo}, {"hi", s.room.hi}}},
                     {"view_dir", s.view_dir},
                     {"objects", objs}};
}

void from_json(const nlohmann::json& j, Scene& s) {
  s = Scene{};
  s.id = j.at("scene_id").get<int>();
  s.room.lo = j.at("room").at("lo").get<std::array<double, 3>>();
  s.room.hi = j.at("room").at("hi").get<std::array<double, 3>>();
  s.view_dir = j.at("view_dir").get<std::array<double, 3>>();
  for (const auto& o : j.at("objects")) {
    ObjectInstance obj;
    obj.id = o.at("id").get<int>();
    obj.category = o.at("category").get<std::string>();
    obj.color = o.at("color").get<std::string>();
    obj.size_class = size_class_from_string(o.at("size_class").get<std::string>());
    const auto b = o.at("bbox").get<std::array<double, 6>>();
    obj.bbox = {b[0], b[1], b[2], b[3], b[4], b[5]};
    obj.point_seed = o.at("point_seed").get<std::uint64_t>();
    s.objects.push_back(std::move(obj));
  }
}

void to_json(nlohmann::json& j, const DescriptionRecord& r) {
  nlohmann::json rels = nlohmann::json::array();
  for (const auto& rel : r.relations) {
    rels.push_back({{"kind", to_string(rel.kind)}, {"anchor_ids", rel.anchor_ids}});
  }
  nlohmann::json filter{{"category", r.filter.category}};
  if (r.filter.color) filter["color"] = *r.filter.color;
  if (r.filter.size) filter["size"] = to_string(*r.filter.size);
  std::string text;
  for (const auto& w : r.surface_tokens) text += (text.empty() ? "" : " ") + w;
  j = nlohmann::json{{"id", r.id},
                     {"scene_id", r.scene_id},
                     {"target_id", r.target_id},
                     {"text", text},
                     {"relation_kind", to_string(r.relation_kind)},
                     {"anchor_ids", r.anchor_ids},
                     {"relations", rels},
                     {"filter", filter},
                     {"distractor_count", r.distractor_count},
                     {"view_dependent", r.view_dependent},
                     {"difficulty", to_string(classify_difficulty(r))}};
}

void from_json(const nlohmann::json& j, DescriptionRecord& r) {
  r = DescriptionRecord{};
  r.id = j.at("id").get<int>();
  r.scene_id = j.at("scene_id").get<int>();
  r.target_id = j.at("target_id").get<int>();
  std::istringstream words(j.at("text").get<std::string>());
  for (std::string w; words >> w;) r.surface_tokens.push_back(w);
  r.relation_kind = relation_kind_from_string(j.at("relation_kind").get<std::string>());
  r.anchor_ids = j.at("anchor_ids").get<std::vector<int>>();
  for (const auto& rel : j.at("relations")) {
    r.relations.push_back({relation_kind_from_string(rel.at("kind").get<std::string>()),
                           rel.at("anchor_ids").get<std::vector<int>>()});
  }
  const auto& f = j.at("filter");
  r.filter.category = f.at("category").get<std::string>();
  if (f.contains("color")) r.filter.color = f.at("color").get<std::string>();
  if (f.contains("size")) r.filter.size = size_class_from_string(f.at("size").get<std::string>());
  r.distractor_count = j.at("distractor_count").get<int>();
  r.view_dependent = j.at("view_dependent").get<bool>();
}

}  // namespace dasa::scene

namespace dasa::io {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::json header_line(const std::string& hash, std::uint64_t seed, const std::string& kind) {
  return {{"format", kCorpusFormat}, {"kind", kind}, {"config_hash", hash}, {"seed", seed}};
}

LoadedCorpus assemble(const DataConfig& config, scene::Corpus corpus) {
  LoadedCorpus out;
  out.config = config;
  out.config_hash = config.hash();
  const scene::Split split =
      scene::split_corpus(corpus.records, config.train_fraction, scene::mix_seed(config.seed, 0, 9));
  out.train = split.train;
  out.test = split.test;
  out.corpus = std::move(corpus);
  out.vocab = text::Vocabulary::from_words(scene::grammar_words(config.gen));
  return out;
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path,
                                       const std::string& expected_hash, const std::string& kind) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw IoError(path.string() + ": missing header line");
  std::vector<nlohmann::json> rows;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != kCorpusFormat || header.value("kind", "") != kind) {
      throw IoError(path.string() + ": unexpected header " + line);
    }
    if (header.value("config_hash", "") != expected_hash) {
      throw IoError(path.string() + ": config hash does not match manifest");
    }
    while (std::getline(is, line)) {
      if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return rows;
}

}  // namespace

std::string hash_json(const nlohmann::json& j) { return hex64(fnv1a64(j.dump())); }

std::string DataConfig::hash() const { return hash_json(nlohmann::json(*this)); }

void to_json(nlohmann::json& j, const DataConfig& c) {
  j = nlohmann::json{{"gen", c.gen}, {"seed", c.seed}, {"train_fraction", c.train_fraction}};
}

void from_json(const nlohmann::json& j, DataConfig& c) {
  c = DataConfig{};
  if (j.contains("gen")) c.gen = j.at("gen").get<scene::GenConfig>();
  c.seed = j.value("seed", c.seed);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
}

RunConfig RunConfig::defaults() {
  RunConfig c;
  net::InputSpace::from_config(c.data.gen).apply_to(c.schedule.model);
  return c;
}

std::string RunConfig::hash() const { return hash_json(nlohmann::json(*this)); }

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"data", c.data}, {"schedule", c.schedule}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  c = RunConfig::defaults();
  if (j.contains("data")) c.data = j.at("data").get<DataConfig>();
  if (j.contains("schedule")) c.schedule = j.at("schedule").get<train::ScheduleConfig>();
  net::InputSpace::from_config(c.data.gen).apply_to(c.schedule.model);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text_file(path)).get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
}

const scene::DescriptionRecord& LoadedCorpus::record(int id) const {
  for (const auto& r : corpus.records) {
    if (r.id == id) return r;
  }
  throw ContractError("unknown description id " + std::to_string(id));
}

LoadedCorpus make_corpus(const DataConfig& config) {
  return assemble(config, scene::generate_corpus(config.gen, config.seed));
}

LoadedCorpus write_corpus(const DataConfig& config, const std::filesystem::path& dir) {
  LoadedCorpus out = make_corpus(config);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::string scenes = header_line(out.config_hash, config.seed, "scenes").dump() + "\n";
  for (const auto& s : out.corpus.scenes) scenes += nlohmann::json(s).dump() + "\n";
  write_text_file(dir / "scenes.jsonl", scenes);

  std::map<int, std::string> split_of;
  for (const auto& r : out.train) split_of[r.id] = "train";
  for (const auto& r : out.test) split_of[r.id] = "test";
  std::string descs = header_line(out.config_hash, config.seed, "descriptions").dump() + "\n";
  for (const auto& r : out.corpus.records) {
    nlohmann::json j = r;
    j["split"] = split_of.at(r.id);
    descs += j.dump() + "\n";
  }
  write_text_file(dir / "descriptions.jsonl", descs);
  out.vocab.save(dir / "vocab.txt");

  std::size_t vd = 0;
  for (const auto& r : out.corpus.records) vd += r.view_dependent;
  const nlohmann::json manifest{
      {"format", kCorpusFormat},
      {"config_hash", out.config_hash},
      {"seed", config.seed},
      {"config", config},
      {"scene_count", out.corpus.scenes.size()},
      {"description_count", out.corpus.records.size()},
      {"train_count", out.train.size()},
      {"test_count", out.test.size()},
      {"view_dependent_count", vd},
      {"view_dependent_rule",
       "left_of, right_of, in_front_of, behind are view-dependent; every other relation, "
       "including conjunctions of in_corner with a distance superlative, is view-independent"},
      {"files", {"scenes.jsonl", "descriptions.jsonl", "vocab.txt"}}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return out;
}

LoadedCorpus read_corpus(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / "manifest.json").string() + ": " + e.what());
  }
  const DataConfig config = manifest.at("config").get<DataConfig>();
  const std::string hash = manifest.at("config_hash").get<std::string>();
  if (hash != config.hash()) throw IoError("manifest config hash does not match its config");

  LoadedCorpus out;
  out.config = config;
  out.config_hash = hash;
  for (const auto& j : read_jsonl(dir / "scenes.jsonl", hash, "scenes")) {
    out.corpus.scenes.push_back(j.get<scene::Scene>());
  }
  for (const auto& j : read_jsonl(dir / "descriptions.jsonl", hash, "descriptions")) {
    auto r = j.get<scene::DescriptionRecord>();
    const std::string split = j.value("split", "");
    if (split == "train") {
      out.train.push_back(r);
    } else if (split == "test") {
      out.test.push_back(r);
    } else {
      throw IoError("description " + std::to_string(r.id) + " has no split");
    }
    out.corpus.records.push_back(std::move(r));
  }
  if (out.corpus.scenes.size() != manifest.at("scene_count").get<std::size_t>()) {
    throw IoError("scene count differs from manifest");
  }
  out.vocab = text::Vocabulary::load(dir / "vocab.txt");
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  os.flush();
  if (!os) throw IoError("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace dasa::io
