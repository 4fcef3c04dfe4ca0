#pragma once

// Synthetic rooms of labelled boxes, template referring expressions, and the
// brute-force relation oracle that decides which objects satisfy them.

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace dasa::scene {

enum class SizeClass { small, large };

enum class RelationKind {
  closest_to,
  farthest_from,
  left_of,
  right_of,
  in_front_of,
  behind,
  between,
  in_corner,
  nearest_center,
  attribute_only,
};

std::string to_string(SizeClass s);
SizeClass size_class_from_string(const std::string& s);
std::string to_string(RelationKind k);
RelationKind relation_kind_from_string(const std::string& s);
bool is_view_dependent(RelationKind k);
std::size_t anchor_arity(RelationKind k);

// Axis-aligned box: centre plus extents. h runs along z (up), w along x,
// l along y.
struct BBox {
  double xc = 0, yc = 0, zc = 0;
  double h = 0, w = 0, l = 0;

  std::array<double, 3> center() const { return {xc, yc, zc}; }
  double volume() const { return h * w * l; }
  std::array<double, 6> as_array() const { return {xc, yc, zc, h, w, l}; }
};

// rgb in [0, 255].
struct Point {
  double x, y, z, r, g, b;
};

struct ObjectInstance {
  int id = 0;
  std::string category;
  std::string color;
  SizeClass size_class = SizeClass::small;
  BBox bbox;
  // Points are regenerated from this seed instead of being stored.
  std::uint64_t point_seed = 0;
  std::vector<Point> points;
};

struct RoomBounds {
  std::array<double, 3> lo{0, 0, 0};
  std::array<double, 3> hi{0, 0, 0};
};

struct Scene {
  int id = 0;
  RoomBounds room;
  std::vector<ObjectInstance> objects;
  // Observer looks along this direction; z is up.
  std::array<double, 3> view_dir{0.0, 1.0, 0.0};

  const ObjectInstance& object(int id) const;
  std::size_t index_of(int id) const;
};

struct CategorySpec {
  std::string name;
  double h, w, l;
};

struct ColorSpec {
  std::string name;
  std::array<double, 3> rgb;
};

// Thresholds that define the meaning of the relations. Shared by the oracle
// and the generator.
struct RelationGeometry {
  double corner_fraction = 0.15;  // of the floor diagonal
  double between_width = 0.6;     // metres from the anchor segment
};

struct GenConfig {
  int k_min = 8;
  int k_max = 8;
  std::array<double, 3> room_size{7.0, 6.0, 3.0};
  std::vector<CategorySpec> categories;
  std::vector<ColorSpec> colors;
  int points_per_object = 32;
  double color_noise = 12.0;
  double dim_jitter = 0.08;
  double small_scale = 0.85;
  double large_scale = 1.2;
  double min_gap = 0.1;
  int max_group = 5;
  int placement_retries = 400;
  int scene_retries = 50;
  int description_retries = 400;
  RelationGeometry geometry;
  // Generator clarity: superlative winners must beat the runner-up by this
  // much, and predicate decisions must sit this far from their boundary.
  double clarity_margin = 0.3;
  double side_margin = 0.2;
  double group_target_prob = 0.6;
  double attribute_only_prob = 0.15;
  double conjunction_prob = 0.1;
  double color_modifier_prob = 0.3;
  double size_modifier_prob = 0.1;
  int num_scenes = 2500;
  int descriptions_per_scene = 1;

  static GenConfig defaults();
  double nominal_volume(const std::string& category) const;
  const ColorSpec& color(const std::string& name) const;
  bool has_category(const std::string& name) const;
  bool has_color(const std::string& name) const;
};

struct AttributeFilter {
  std::string category;
  std::optional<std::string> color;
  std::optional<SizeClass> size;

  bool matches(const ObjectInstance& obj) const;
};

struct Relation {
  RelationKind kind = RelationKind::attribute_only;
  std::vector<int> anchor_ids;
};

struct DescriptionRecord {
  int id = 0;
  int scene_id = 0;
  int target_id = 0;
  std::vector<std::string> surface_tokens;
  RelationKind relation_kind = RelationKind::attribute_only;
  std::vector<int> anchor_ids;
  // Applied left to right; the first entry mirrors relation_kind.
  std::vector<Relation> relations;
  AttributeFilter filter;
  int distractor_count = 0;
  bool view_dependent = false;
};

enum class Difficulty { easy, hard };
std::string to_string(Difficulty d);

Scene generate_scene(const GenConfig& config, std::uint64_t seed, int scene_id = 0);

// n >= 8 points on the surface of the box, colours jittered around the
// nominal rgb by at most `noise` per channel.
std::vector<Point> sample_points(const ObjectInstance& obj, const std::array<double, 3>& rgb,
                                 int n, double noise, std::uint64_t seed);
// Fills obj.points for every object in the scene.
void attach_points(Scene& scene, const GenConfig& config);

// Objects passing the attribute filter and the relation chain. Anchors never
// satisfy their own relation. Superlatives (closest, farthest, nearest centre)
// keep the minimisers/maximisers of the current candidate set; predicates
// filter it.
std::set<int> oracle_satisfiers(const Scene& scene, const std::vector<Relation>& relations,
                                const AttributeFilter& filter,
                                const RelationGeometry& geometry = {});
std::set<int> oracle_satisfiers(const Scene& scene, RelationKind kind,
                                const std::vector<int>& anchor_ids,
                                const AttributeFilter& filter,
                                const RelationGeometry& geometry = {});

DescriptionRecord generate_description(const Scene& scene, const GenConfig& config,
                                       std::uint64_t seed, int record_id = 0);

std::vector<std::string> realize(const AttributeFilter& filter,
                                 const std::vector<Relation>& relations, const Scene& scene);

Difficulty classify_difficulty(const DescriptionRecord& record);
int count_distractors(const Scene& scene, int target_id);

struct Split {
  std::vector<DescriptionRecord> train;
  std::vector<DescriptionRecord> test;
};
Split split_corpus(const std::vector<DescriptionRecord>& records, double train_fraction,
                   std::uint64_t seed);

struct Corpus {
  std::vector<Scene> scenes;
  std::vector<DescriptionRecord> records;

  const Scene& scene(int id) const;
};

Corpus generate_corpus(const GenConfig& config, std::uint64_t seed);

// Words the template grammar can emit, in a fixed order.
std::vector<std::string> grammar_words(const GenConfig& config);

// Per-item seed derived from a corpus seed and an index.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream = 0);

}  // namespace dasa::scene
