#include "dasa/scene.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "dasa/errors.hpp"

namespace dasa::scene {

namespace {

using Vec3 = std::array<double, 3>;

double dist3(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double dist_xy(double ax, double ay, double bx, double by) {
  return std::hypot(ax - bx, ay - by);
}

Vec3 view_right(const Scene& s) {
  // right = view × up with up = +z.
  const Vec3& v = s.view_dir;
  return {v[1], -v[0], 0.0};
}

double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 minus(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

bool is_superlative(RelationKind k) {
  return k == RelationKind::closest_to || k == RelationKind::farthest_from ||
         k == RelationKind::nearest_center;
}

// Ranking key for superlatives; the satisfier minimises it.
double superlative_key(const Scene& s, const ObjectInstance& obj, const Relation& rel) {
  const Vec3 c = obj.bbox.center();
  switch (rel.kind) {
    case RelationKind::closest_to:
      return dist3(c, s.object(rel.anchor_ids.at(0)).bbox.center());
    case RelationKind::farthest_from:
      return -dist3(c, s.object(rel.anchor_ids.at(0)).bbox.center());
    case RelationKind::nearest_center: {
      const double cx = 0.5 * (s.room.lo[0] + s.room.hi[0]);
      const double cy = 0.5 * (s.room.lo[1] + s.room.hi[1]);
      return dist_xy(c[0], c[1], cx, cy);
    }
    default:
      throw ContractError("superlative_key: not a superlative relation");
  }
}

// Signed decision value for predicate relations; satisfied iff > 0.
double predicate_value(const Scene& s, const ObjectInstance& obj, const Relation& rel,
                       const RelationGeometry& geo) {
  const Vec3 c = obj.bbox.center();
  switch (rel.kind) {
    case RelationKind::left_of:
    case RelationKind::right_of: {
      const Vec3 off = minus(c, s.object(rel.anchor_ids.at(0)).bbox.center());
      const double lateral = dot3(off, view_right(s));
      return rel.kind == RelationKind::right_of ? lateral : -lateral;
    }
    case RelationKind::in_front_of:
    case RelationKind::behind: {
      const Vec3 off = minus(c, s.object(rel.anchor_ids.at(0)).bbox.center());
      const double depth = dot3(off, s.view_dir);
      return rel.kind == RelationKind::behind ? depth : -depth;
    }
    case RelationKind::between: {
      const Vec3 a = s.object(rel.anchor_ids.at(0)).bbox.center();
      const Vec3 b = s.object(rel.anchor_ids.at(1)).bbox.center();
      const double ex = b[0] - a[0], ey = b[1] - a[1];
      const double len = std::hypot(ex, ey);
      if (len == 0.0) return -1.0;
      const double px = c[0] - a[0], py = c[1] - a[1];
      const double along = (px * ex + py * ey) / len;
      const double perp = std::abs(px * ey - py * ex) / len;
      return std::min({along, len - along, geo.between_width - perp});
    }
    case RelationKind::in_corner: {
      const double diag = dist_xy(s.room.lo[0], s.room.lo[1], s.room.hi[0], s.room.hi[1]);
      double nearest = std::numeric_limits<double>::infinity();
      for (double x : {s.room.lo[0], s.room.hi[0]})
        for (double y : {s.room.lo[1], s.room.hi[1]})
          nearest = std::min(nearest, dist_xy(c[0], c[1], x, y));
      return geo.corner_fraction * diag - nearest;
    }
    default:
      throw ContractError("predicate_value: not a predicate relation");
  }
}

void check_anchors(const Scene& s, const Relation& rel) {
  if (rel.kind == RelationKind::attribute_only) return;
  if (rel.anchor_ids.size() != anchor_arity(rel.kind)) {
    throw ContractError("relation " + to_string(rel.kind) + " expects " +
                        std::to_string(anchor_arity(rel.kind)) + " anchors");
  }
  for (int a : rel.anchor_ids) (void)s.object(a);
}

std::vector<int> initial_candidates(const Scene& s, const std::vector<Relation>& relations,
                                    const AttributeFilter& filter) {
  std::set<int> anchors;
  for (const auto& r : relations) anchors.insert(r.anchor_ids.begin(), r.anchor_ids.end());
  std::vector<int> out;
  for (const auto& o : s.objects) {
    if (filter.matches(o) && !anchors.count(o.id)) out.push_back(o.id);
  }
  return out;
}

std::vector<int> apply_relation(const Scene& s, const std::vector<int>& cands, const Relation& rel,
                                const RelationGeometry& geo) {
  if (rel.kind == RelationKind::attribute_only) return cands;
  if (cands.empty()) return {};
  std::vector<int> out;
  if (is_superlative(rel.kind)) {
    double best = std::numeric_limits<double>::infinity();
    for (int id : cands) best = std::min(best, superlative_key(s, s.object(id), rel));
    for (int id : cands) {
      if (superlative_key(s, s.object(id), rel) == best) out.push_back(id);
    }
    return out;
  }
  for (int id : cands) {
    if (predicate_value(s, s.object(id), rel, geo) > 0.0) out.push_back(id);
  }
  return out;
}

// Generator-side check that the decision is not a near tie.
bool relation_is_clear(const Scene& s, const std::vector<int>& cands, const Relation& rel,
                       const GenConfig& cfg) {
  if (rel.kind == RelationKind::attribute_only || cands.empty()) return true;
  if (is_superlative(rel.kind)) {
    if (cands.size() < 2) return true;
    std::vector<double> keys;
    for (int id : cands) keys.push_back(superlative_key(s, s.object(id), rel));
    std::sort(keys.begin(), keys.end());
    return keys[1] - keys[0] >= cfg.clarity_margin;
  }
  for (int id : cands) {
    if (std::abs(predicate_value(s, s.object(id), rel, cfg.geometry)) < cfg.side_margin) {
      return false;
    }
  }
  return true;
}

double uniform01(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

bool footprints_clear(const BBox& a, const BBox& b, double gap) {
  const bool apart_x = std::abs(a.xc - b.xc) >= 0.5 * (a.w + b.w) + gap;
  const bool apart_y = std::abs(a.yc - b.yc) >= 0.5 * (a.l + b.l) + gap;
  return apart_x || apart_y;
}

std::vector<std::string> anchor_phrase(const Scene& s, int id) {
  return {"the", s.object(id).category};
}

void append(std::vector<std::string>& out, std::initializer_list<std::string> words) {
  out.insert(out.end(), words.begin(), words.end());
}

void append_relation(std::vector<std::string>& out, const Relation& rel, const Scene& s) {
  auto anchor = [&](std::size_t i) {
    auto w = anchor_phrase(s, rel.anchor_ids.at(i));
    out.insert(out.end(), w.begin(), w.end());
  };
  switch (rel.kind) {
    case RelationKind::closest_to:
      append(out, {"closest", "to"});
      anchor(0);
      break;
    case RelationKind::farthest_from:
      append(out, {"farthest", "from"});
      anchor(0);
      break;
    case RelationKind::left_of:
      append(out, {"to", "the", "left", "of"});
      anchor(0);
      break;
    case RelationKind::right_of:
      append(out, {"to", "the", "right", "of"});
      anchor(0);
      break;
    case RelationKind::in_front_of:
      append(out, {"in", "front", "of"});
      anchor(0);
      break;
    case RelationKind::behind:
      append(out, {"behind"});
      anchor(0);
      break;
    case RelationKind::between:
      append(out, {"between"});
      anchor(0);
      append(out, {"and"});
      anchor(1);
      break;
    case RelationKind::in_corner:
      append(out, {"in", "the", "corner"});
      break;
    case RelationKind::nearest_center:
      append(out, {"nearest", "the", "center", "of", "the", "room"});
      break;
    case RelationKind::attribute_only:
      break;
  }
}

}  // namespace

// ---- enums --------------------------------------------------------------------

std::string to_string(SizeClass s) { return s == SizeClass::small ? "small" : "large"; }

SizeClass size_class_from_string(const std::string& s) {
  if (s == "small") return SizeClass::small;
  if (s == "large") return SizeClass::large;
  throw ContractError("unknown size class: " + s);
}

namespace {
const std::map<RelationKind, std::string>& relation_names() {
  static const std::map<RelationKind, std::string> names = {
      {RelationKind::closest_to, "closest_to"},     {RelationKind::farthest_from, "farthest_from"},
      {RelationKind::left_of, "left_of"},           {RelationKind::right_of, "right_of"},
      {RelationKind::in_front_of, "in_front_of"},   {RelationKind::behind, "behind"},
      {RelationKind::between, "between"},           {RelationKind::in_corner, "in_corner"},
      {RelationKind::nearest_center, "nearest_center"},
      {RelationKind::attribute_only, "attribute_only"},
  };
  return names;
}
}  // namespace

std::string to_string(RelationKind k) { return relation_names().at(k); }

RelationKind relation_kind_from_string(const std::string& s) {
  for (const auto& [k, name] : relation_names()) {
    if (name == s) return k;
  }
  throw ContractError("unknown relation kind: " + s);
}

bool is_view_dependent(RelationKind k) {
  return k == RelationKind::left_of || k == RelationKind::right_of ||
         k == RelationKind::in_front_of || k == RelationKind::behind;
}

std::size_t anchor_arity(RelationKind k) {
  switch (k) {
    case RelationKind::between:
      return 2;
    case RelationKind::in_corner:
    case RelationKind::nearest_center:
    case RelationKind::attribute_only:
      return 0;
    default:
      return 1;
  }
}

std::string to_string(Difficulty d) { return d == Difficulty::easy ? "easy" : "hard"; }

// ---- Scene / config -------------------------------------------------------------

const ObjectInstance& Scene::object(int id) const { return objects[index_of(id)]; }

std::size_t Scene::index_of(int id) const {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].id == id) return i;
  }
  throw ContractError("scene " + std::to_string(this->id) + " has no object " +
                      std::to_string(id));
}

const Scene& Corpus::scene(int id) const {
  for (const auto& s : scenes) {
    if (s.id == id) return s;
  }
  throw ContractError("corpus has no scene " + std::to_string(id));
}

GenConfig GenConfig::defaults() {
  GenConfig c;
  // Nominal (h, w, l) in metres; aspect ratios differ so normalised point
  // clouds still identify the category.
  c.categories = {
      {"chair", 0.9, 0.5, 0.5},  {"table", 0.7, 1.6, 1.0}, {"bed", 0.5, 1.6, 2.1},
      {"lamp", 1.5, 0.3, 0.3},   {"couch", 0.8, 2.0, 0.9}, {"desk", 0.75, 1.0, 0.5},
      {"window", 1.2, 1.0, 0.1}, {"door", 2.0, 0.9, 0.1},  {"shelf", 1.8, 0.8, 0.35},
      {"box", 0.4, 0.4, 0.4},
  };
  c.colors = {
      {"red", {200, 30, 30}},    {"green", {30, 170, 50}}, {"blue", {30, 60, 200}},
      {"white", {235, 235, 235}}, {"black", {25, 25, 25}}, {"brown", {120, 75, 35}},
  };
  return c;
}

double GenConfig::nominal_volume(const std::string& category) const {
  for (const auto& c : categories) {
    if (c.name == category) return c.h * c.w * c.l;
  }
  throw ContractError("unknown category: " + category);
}

const ColorSpec& GenConfig::color(const std::string& name) const {
  for (const auto& c : colors) {
    if (c.name == name) return c;
  }
  throw ContractError("unknown color: " + name);
}

bool GenConfig::has_category(const std::string& name) const {
  return std::any_of(categories.begin(), categories.end(),
                     [&](const CategorySpec& c) { return c.name == name; });
}

bool GenConfig::has_color(const std::string& name) const {
  return std::any_of(colors.begin(), colors.end(),
                     [&](const ColorSpec& c) { return c.name == name; });
}

bool AttributeFilter::matches(const ObjectInstance& obj) const {
  if (obj.category != category) return false;
  if (color && obj.color != *color) return false;
  if (size && obj.size_class != *size) return false;
  return true;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
  // splitmix64 finaliser over the combined words.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1) + 0xbf58476d1ce4e5b9ULL * stream;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---- generation -----------------------------------------------------------------------

Scene generate_scene(const GenConfig& config, std::uint64_t seed, int scene_id) {
  if (config.k_min < 2 || config.k_max < config.k_min) {
    throw ContractError("generate_scene: need 2 <= k_min <= k_max");
  }
  if (config.categories.size() < 2 || config.colors.empty()) {
    throw ContractError("generate_scene: vocabulary too small");
  }
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < config.scene_retries; ++attempt) {
    Scene s;
    s.id = scene_id;
    s.room.hi = config.room_size;
    const int k = uniform_int(rng, config.k_min, config.k_max);
    const int n_cat = static_cast<int>(config.categories.size());

    // One category forms a group (the source of distractors); the rest are
    // drawn independently.
    const int group_cat = uniform_int(rng, 0, n_cat - 1);
    const int group_size = uniform_int(rng, 1, std::min(config.max_group, k));
    std::vector<int> cats(static_cast<std::size_t>(group_size), group_cat);
    while (static_cast<int>(cats.size()) < k) {
      int c = uniform_int(rng, 0, n_cat - 2);
      if (c >= group_cat) ++c;
      cats.push_back(c);
    }
    std::shuffle(cats.begin(), cats.end(), rng);

    bool ok = true;
    for (int i = 0; i < k && ok; ++i) {
      const CategorySpec& spec = config.categories[static_cast<std::size_t>(cats[i])];
      ObjectInstance obj;
      obj.id = i;
      obj.category = spec.name;
      obj.color = config.colors[static_cast<std::size_t>(
                                    uniform_int(rng, 0, static_cast<int>(config.colors.size()) - 1))]
                      .name;
      obj.size_class = uniform01(rng) < 0.5 ? SizeClass::small : SizeClass::large;
      const double sc = obj.size_class == SizeClass::small ? config.small_scale : config.large_scale;
      auto jitter = [&] { return 1.0 + config.dim_jitter * (2.0 * uniform01(rng) - 1.0); };
      obj.bbox.h = spec.h * sc * jitter();
      obj.bbox.w = spec.w * sc * jitter();
      obj.bbox.l = spec.l * sc * jitter();
      obj.bbox.zc = 0.5 * obj.bbox.h;
      if (obj.bbox.h > config.room_size[2] || obj.bbox.w >= config.room_size[0] ||
          obj.bbox.l >= config.room_size[1]) {
        throw GenerationError("object larger than the room");
      }
      bool placed = false;
      for (int t = 0; t < config.placement_retries && !placed; ++t) {
        std::uniform_real_distribution<double> ux(0.5 * obj.bbox.w,
                                                  config.room_size[0] - 0.5 * obj.bbox.w);
        std::uniform_real_distribution<double> uy(0.5 * obj.bbox.l,
                                                  config.room_size[1] - 0.5 * obj.bbox.l);
        obj.bbox.xc = ux(rng);
        obj.bbox.yc = uy(rng);
        placed = std::all_of(s.objects.begin(), s.objects.end(), [&](const ObjectInstance& o) {
          return footprints_clear(o.bbox, obj.bbox, config.min_gap);
        });
      }
      if (!placed) {
        ok = false;
        break;
      }
      obj.point_seed = mix_seed(seed, static_cast<std::uint64_t>(i), 7);
      s.objects.push_back(std::move(obj));
    }
    if (ok) return s;
  }
  throw GenerationError("generate_scene: placement failed after " +
                        std::to_string(config.scene_retries) + " attempts");
}

std::vector<Point> sample_points(const ObjectInstance& obj, const std::array<double, 3>& rgb,
                                 int n, double noise, std::uint64_t seed) {
  if (n < 8) throw ContractError("sample_points: need at least 8 points");
  std::mt19937_64 rng(seed);
  const BBox& b = obj.bbox;
  // Face areas: ±x faces are h×l, ±y faces h×w, ±z faces w×l.
  const std::array<double, 3> area{b.h * b.l, b.h * b.w, b.w * b.l};
  const double total = 2.0 * (area[0] + area[1] + area[2]);
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(n));
  const std::array<double, 3> half{0.5 * b.w, 0.5 * b.l, 0.5 * b.h};
  for (int i = 0; i < n; ++i) {
    double u = uniform01(rng) * total;
    int face = 0;
    while (face < 5 && u >= area[static_cast<std::size_t>(face / 2)]) {
      u -= area[static_cast<std::size_t>(face / 2)];
      ++face;
    }
    const std::size_t axis = static_cast<std::size_t>(face / 2);
    const double sign = (face % 2 == 0) ? 1.0 : -1.0;
    std::array<double, 3> local{};
    for (std::size_t a = 0; a < 3; ++a) {
      local[a] = a == axis ? sign * half[a] : (2.0 * uniform01(rng) - 1.0) * half[a];
    }
    Point p{};
    p.x = b.xc + local[0];
    p.y = b.yc + local[1];
    p.z = b.zc + local[2];
    std::array<double, 3> c = rgb;
    for (double& ch : c) {
      ch = std::clamp(ch + noise * (2.0 * uniform01(rng) - 1.0), 0.0, 255.0);
    }
    p.r = c[0];
    p.g = c[1];
    p.b = c[2];
    pts.push_back(p);
  }
  return pts;
}

void attach_points(Scene& scene, const GenConfig& config) {
  for (auto& obj : scene.objects) {
    obj.points = sample_points(obj, config.color(obj.color).rgb, config.points_per_object,
                               config.color_noise, obj.point_seed);
  }
}

// ---- oracle --------------------------------------------------------------------------

std::set<int> oracle_satisfiers(const Scene& scene, const std::vector<Relation>& relations,
                                const AttributeFilter& filter, const RelationGeometry& geometry) {
  for (const auto& r : relations) check_anchors(scene, r);
  std::vector<int> cands = initial_candidates(scene, relations, filter);
  for (const auto& r : relations) cands = apply_relation(scene, cands, r, geometry);
  return {cands.begin(), cands.end()};
}

std::set<int> oracle_satisfiers(const Scene& scene, RelationKind kind,
                                const std::vector<int>& anchor_ids,
                                const AttributeFilter& filter, const RelationGeometry& geometry) {
  return oracle_satisfiers(scene, {Relation{kind, anchor_ids}}, filter, geometry);
}

int count_distractors(const Scene& scene, int target_id) {
  const std::string& cat = scene.object(target_id).category;
  int n = 0;
  for (const auto& o : scene.objects) {
    if (o.id != target_id && o.category == cat) ++n;
  }
  return n;
}

Difficulty classify_difficulty(const DescriptionRecord& record) {
  return record.distractor_count > 2 ? Difficulty::hard : Difficulty::easy;
}

std::vector<std::string> realize(const AttributeFilter& filter,
                                 const std::vector<Relation>& relations, const Scene& scene) {
  std::vector<std::string> out{"the"};
  if (filter.size) out.push_back(to_string(*filter.size));
  if (filter.color) out.push_back(*filter.color);
  out.push_back(filter.category);
  bool first = true;
  for (const auto& r : relations) {
    if (r.kind == RelationKind::attribute_only) continue;
    if (!first) out.push_back("and");
    append_relation(out, r, scene);
    first = false;
  }
  return out;
}

DescriptionRecord generate_description(const Scene& scene, const GenConfig& config,
                                       std::uint64_t seed, int record_id) {
  std::mt19937_64 rng(seed);
  const int k = static_cast<int>(scene.objects.size());
  if (k < 1) throw ContractError("generate_description: empty scene");

  std::map<std::string, int> cat_count;
  for (const auto& o : scene.objects) ++cat_count[o.category];
  std::string group_cat;
  int group_n = 0;
  for (const auto& [c, n] : cat_count) {
    if (n > group_n) {
      group_cat = c;
      group_n = n;
    }
  }

  static const std::vector<RelationKind> kSingle = {
      RelationKind::closest_to,  RelationKind::farthest_from, RelationKind::left_of,
      RelationKind::right_of,    RelationKind::in_front_of,   RelationKind::behind,
      RelationKind::between,     RelationKind::in_corner,     RelationKind::nearest_center,
  };

  for (int attempt = 0; attempt < config.description_retries; ++attempt) {
    // Target.
    const ObjectInstance* target = nullptr;
    if (group_n > 1 && uniform01(rng) < config.group_target_prob) {
      std::vector<const ObjectInstance*> group;
      for (const auto& o : scene.objects) {
        if (o.category == group_cat) group.push_back(&o);
      }
      target = group[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(group.size()) - 1))];
    } else {
      target = &scene.objects[static_cast<std::size_t>(uniform_int(rng, 0, k - 1))];
    }

    // Template.
    std::vector<Relation> relations;
    const double pick = uniform01(rng);
    std::vector<int> anchor_pool;
    for (const auto& o : scene.objects) {
      if (o.category != target->category && cat_count[o.category] == 1) anchor_pool.push_back(o.id);
    }
    std::shuffle(anchor_pool.begin(), anchor_pool.end(), rng);
    auto take_anchors = [&](std::size_t n) -> std::optional<std::vector<int>> {
      if (anchor_pool.size() < n) return std::nullopt;
      return std::vector<int>(anchor_pool.begin(), anchor_pool.begin() + static_cast<long>(n));
    };

    if (pick < config.attribute_only_prob) {
      relations.push_back({RelationKind::attribute_only, {}});
    } else if (pick < config.attribute_only_prob + config.conjunction_prob) {
      const RelationKind second =
          uniform01(rng) < 0.5 ? RelationKind::closest_to : RelationKind::farthest_from;
      auto anchors = take_anchors(1);
      if (!anchors) continue;
      relations.push_back({RelationKind::in_corner, {}});
      relations.push_back({second, *anchors});
    } else {
      const RelationKind kind =
          kSingle[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(kSingle.size()) - 1))];
      auto anchors = take_anchors(anchor_arity(kind));
      if (!anchors) continue;
      relations.push_back({kind, *anchors});
    }

    // Attribute filter.
    AttributeFilter filter{target->category, std::nullopt, std::nullopt};
    if (relations.front().kind == RelationKind::attribute_only) {
      // Smallest modifier sets first, choose randomly among the unique ones
      // of minimal size.
      std::vector<AttributeFilter> options;
      int fewest = 3;
      for (unsigned mask = 0; mask < 4; ++mask) {
        const int n_mods = std::popcount(mask);
        if (n_mods > fewest) continue;
        AttributeFilter f{target->category, std::nullopt, std::nullopt};
        if (mask & 1U) f.color = target->color;
        if (mask & 2U) f.size = target->size_class;
        if (oracle_satisfiers(scene, relations, f, config.geometry) != std::set<int>{target->id}) {
          continue;
        }
        if (n_mods < fewest) options.clear();
        fewest = n_mods;
        options.push_back(f);
      }
      if (options.empty()) continue;
      filter = options[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(options.size()) - 1))];
    } else {
      if (uniform01(rng) < config.color_modifier_prob) filter.color = target->color;
      if (uniform01(rng) < config.size_modifier_prob) filter.size = target->size_class;
    }

    // Uniqueness and clarity under the oracle.
    std::vector<int> cands = initial_candidates(scene, relations, filter);
    bool clear = true;
    for (const auto& r : relations) {
      if (!relation_is_clear(scene, cands, r, config)) {
        clear = false;
        break;
      }
      cands = apply_relation(scene, cands, r, config.geometry);
    }
    if (!clear || cands != std::vector<int>{target->id}) continue;

    DescriptionRecord rec;
    rec.id = record_id;
    rec.scene_id = scene.id;
    rec.target_id = target->id;
    rec.relations = relations;
    rec.relation_kind = relations.front().kind;
    for (const auto& r : relations) {
      rec.anchor_ids.insert(rec.anchor_ids.end(), r.anchor_ids.begin(), r.anchor_ids.end());
    }
    rec.filter = filter;
    rec.surface_tokens = realize(filter, relations, scene);
    rec.distractor_count = count_distractors(scene, target->id);
    rec.view_dependent = is_view_dependent(rec.relation_kind);
    return rec;
  }
  throw GenerationError("generate_description: no unambiguous description for scene " +
                        std::to_string(scene.id));
}

Split split_corpus(const std::vector<DescriptionRecord>& records, double train_fraction,
                   std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ContractError("split_corpus: train_fraction must lie in (0, 1)");
  }
  std::set<int> ids;
  for (const auto& r : records) ids.insert(r.scene_id);
  std::vector<int> scenes(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(scenes.begin(), scenes.end(), rng);
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(scenes.size())));
  if (n_train == 0 || n_train >= scenes.size()) {
    throw ContractError("split_corpus: split leaves an empty partition");
  }
  const std::set<int> train_scenes(scenes.begin(), scenes.begin() + static_cast<long>(n_train));
  Split out;
  for (const auto& r : records) {
    (train_scenes.count(r.scene_id) ? out.train : out.test).push_back(r);
  }
  return out;
}

Corpus generate_corpus(const GenConfig& config, std::uint64_t seed) {
  Corpus corpus;
  for (int i = 0; i < config.num_scenes; ++i) {
    bool done = false;
    for (int attempt = 0; attempt < config.scene_retries && !done; ++attempt) {
      const auto scene_seed = mix_seed(seed, static_cast<std::uint64_t>(i),
                                       static_cast<std::uint64_t>(attempt) * 2 + 1);
      Scene s = generate_scene(config, scene_seed, i);
      std::vector<DescriptionRecord> recs;
      try {
        for (int j = 0; j < config.descriptions_per_scene; ++j) {
          const int rid = i * config.descriptions_per_scene + j;
          recs.push_back(generate_description(
              s, config, mix_seed(scene_seed, static_cast<std::uint64_t>(j), 2), rid));
        }
      } catch (const GenerationError&) {
        continue;
      }
      corpus.scenes.push_back(std::move(s));
      corpus.records.insert(corpus.records.end(), recs.begin(), recs.end());
      done = true;
    }
    if (!done) {
      throw GenerationError("generate_corpus: scene " + std::to_string(i) +
                            " admits no description");
    }
  }
  return corpus;
}

std::vector<std::string> grammar_words(const GenConfig& config) {
  std::vector<std::string> words = {"the",  "closest", "to",    "farthest", "from",
                                    "left", "of",      "right", "in",       "front",
                                    "behind", "between", "and", "corner",   "nearest",
                                    "center", "room",   "small", "large"};
  for (const auto& c : config.colors) words.push_back(c.name);
  for (const auto& c : config.categories) words.push_back(c.name);
  words.push_back("object");
  return words;
}

}  // namespace dasa::scene
