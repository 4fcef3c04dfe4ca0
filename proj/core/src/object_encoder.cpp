#include "dasa/object_encoder.hpp"

#include <cmath>

#include "dasa/errors.hpp"
#include "dasa/layers.hpp"

namespace dasa::objenc {

namespace {
constexpr double kCentroidTolerance = 1e-9;
}

std::string to_string(EncoderRole r) { return r == EncoderRole::teacher ? "teacher" : "student"; }

EncoderRole encoder_role_from_string(const std::string& s) {
  if (s == "teacher") return EncoderRole::teacher;
  if (s == "student") return EncoderRole::student;
  throw ContractError("unknown encoder role: " + s);
}

std::vector<scene::Point> normalize_points(std::span<const scene::Point> points) {
  if (points.empty()) throw ContractError("normalize_points: empty point list");
  double cx = 0, cy = 0, cz = 0;
  for (const auto& p : points) {
    cx += p.x;
    cy += p.y;
    cz += p.z;
  }
  const double n = static_cast<double>(points.size());
  cx /= n;
  cy /= n;
  cz /= n;
  double radius = 0.0;
  for (const auto& p : points) {
    radius = std::max(radius, std::sqrt((p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy) +
                                        (p.z - cz) * (p.z - cz)));
  }
  if (radius == 0.0) throw DegenerateInputError("normalize_points: zero radius");
  std::vector<scene::Point> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    out.push_back({(p.x - cx) / radius, (p.y - cy) / radius, (p.z - cz) / radius, p.r / 255.0,
                   p.g / 255.0, p.b / 255.0});
  }
  return out;
}

std::array<double, 6> normalize_bbox(const scene::BBox& box, const scene::RoomBounds& room) {
  if (!(box.h > 0.0 && box.w > 0.0 && box.l > 0.0)) {
    throw ContractError("encode_spatial: box extents must be positive");
  }
  const double ex = room.hi[0] - room.lo[0];
  const double ey = room.hi[1] - room.lo[1];
  const double ez = room.hi[2] - room.lo[2];
  return {(box.xc - room.lo[0]) / ex, (box.yc - room.lo[1]) / ey, (box.zc - room.lo[2]) / ez,
          box.h / ez, box.w / ex, box.l / ey};
}

void register_object_encoders(ParamStore& ps, const ModelConfig& cfg, EncoderRole role) {
  if (role == EncoderRole::teacher) {
    ps.add("obj.teacher.cat_emb", {cfg.num_categories, cfg.d}, InitKind::normal, 1.0);
    ps.add("obj.teacher.color_emb", {cfg.num_colors, cfg.d}, InitKind::normal, 1.0);
    nn::register_linear(ps, "obj.teacher.proj", cfg.d, cfg.d);
  } else {
    nn::register_linear(ps, "obj.student.fc1", 6, cfg.point_hidden);
    nn::register_linear(ps, "obj.student.fc2", cfg.point_hidden, cfg.point_hidden);
    nn::register_linear(ps, "obj.student.out", cfg.point_hidden, cfg.d);
  }
  nn::register_linear(ps, "obj.spatial", 6, cfg.d);
  if (cfg.fusion == FusionMode::concat_project) {
    nn::register_linear(ps, "obj.fuse", 2 * cfg.d, cfg.d);
  }
}

Tensor encode_attribute_student(const Tensor& points, std::span<const std::size_t> offsets,
                                const ParamStore& ps, const ModelConfig& cfg) {
  if (points.rank() != 2 || points.cols() != 6) {
    throw DimensionError("encode_attribute_student: expected N×6 points, got " +
                         shape_str(points.shape()));
  }
  const auto v = points.data();
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    if (offsets[s + 1] - offsets[s] < 8) {
      throw ContractError("encode_attribute_student: need at least 8 points per object");
    }
    double c[3] = {0, 0, 0};
    for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i)
      for (std::size_t a = 0; a < 3; ++a) c[a] += v[i * 6 + a];
    const double n = static_cast<double>(offsets[s + 1] - offsets[s]);
    if (std::hypot(c[0] / n, c[1] / n, c[2] / n) > kCentroidTolerance) {
      throw ContractError("encode_attribute_student: points are not normalised");
    }
  }
  Tensor h = apply_nonlinearity(nn::linear(points, ps, "obj.student.fc1"), cfg.nonlinearity);
  h = apply_nonlinearity(nn::linear(h, ps, "obj.student.fc2"), cfg.nonlinearity);
  return nn::linear(segment_max_rows(h, offsets), ps, "obj.student.out");
}

Tensor encode_attribute_teacher(std::span<const std::size_t> category_ids,
                                std::span<const std::size_t> color_ids, const ParamStore& ps,
                                const ModelConfig& cfg) {
  if (category_ids.size() != color_ids.size()) {
    throw DimensionError("encode_attribute_teacher: category/color lists differ in length");
  }
  for (std::size_t c : category_ids) {
    if (c >= cfg.num_categories) throw ContractError("unknown category id " + std::to_string(c));
  }
  for (std::size_t c : color_ids) {
    if (c >= cfg.num_colors) throw ContractError("unknown color id " + std::to_string(c));
  }
  Tensor e = add(gather_rows(ps.get("obj.teacher.cat_emb"), category_ids),
                 gather_rows(ps.get("obj.teacher.color_emb"), color_ids));
  return nn::linear(e, ps, "obj.teacher.proj");
}

Tensor encode_spatial(const Tensor& boxes, const ParamStore& ps) {
  if (boxes.rank() != 2 || boxes.cols() != 6) {
    throw DimensionError("encode_spatial: expected K×6 boxes, got " + shape_str(boxes.shape()));
  }
  return nn::linear(boxes, ps, "obj.spatial");
}

Tensor fuse_global(const Tensor& att, const Tensor& spa, FusionMode mode, const ParamStore& ps) {
  if (att.shape() != spa.shape()) {
    throw DimensionError("fuse_global: " + shape_str(att.shape()) + " vs " +
                         shape_str(spa.shape()));
  }
  if (mode == FusionMode::add) return add(att, spa);
  return nn::linear(concat(att, spa, 1), ps, "obj.fuse");
}

Tensor bbox_tensor(const scene::Scene& scene) {
  std::vector<double> data;
  data.reserve(scene.objects.size() * 6);
  for (const auto& o : scene.objects) {
    const auto b = normalize_bbox(o.bbox, scene.room);
    data.insert(data.end(), b.begin(), b.end());
  }
  return Tensor::matrix(scene.objects.size(), 6, std::move(data));
}

Tensor point_tensor(const scene::Scene& scene, std::vector<std::size_t>& offsets) {
  offsets.assign(1, 0);
  std::vector<double> data;
  for (const auto& o : scene.objects) {
    if (o.points.empty()) throw ContractError("point_tensor: object without points");
    for (const auto& p : normalize_points(o.points)) {
      data.insert(data.end(), {p.x, p.y, p.z, p.r, p.g, p.b});
    }
    offsets.push_back(offsets.back() + o.points.size());
  }
  const std::size_t n = offsets.back();
  return Tensor::matrix(n, 6, std::move(data));
}

}  // namespace dasa::objenc
