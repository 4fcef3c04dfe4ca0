#pragma once

// Per-object attribute and spatial embeddings. The teacher sees ground-truth
// category/colour ids, the student sees normalised surface points; both share
// the bounding-box encoder and the global fusion.

#include <span>
#include <vector>

#include "dasa/model_config.hpp"
#include "dasa/param_store.hpp"
#include "dasa/scene.hpp"

namespace dasa::objenc {

enum class EncoderRole { teacher, student };

std::string to_string(EncoderRole r);
EncoderRole encoder_role_from_string(const std::string& s);

struct BranchFeatures {
  Tensor att;     // K×d
  Tensor spa;     // K×d
  Tensor global;  // K×d
};

// Centroid at the origin, max radius 1, rgb scaled to [0, 1].
std::vector<scene::Point> normalize_points(std::span<const scene::Point> points);

// Room-relative box: centre mapped to [0,1]^3, extents divided by the room
// extent along the same axis.
std::array<double, 6> normalize_bbox(const scene::BBox& box, const scene::RoomBounds& room);

void register_object_encoders(ParamStore& ps, const ModelConfig& cfg, EncoderRole role);

// Points of all K objects stacked row-wise (Σ N_i × 6); object i owns rows
// [offsets[i], offsets[i+1]). Every object must already be normalised.
Tensor encode_attribute_student(const Tensor& points, std::span<const std::size_t> offsets,
                                const ParamStore& ps, const ModelConfig& cfg);
Tensor encode_attribute_teacher(std::span<const std::size_t> category_ids,
                                std::span<const std::size_t> color_ids, const ParamStore& ps,
                                const ModelConfig& cfg);
// K×6 room-normalised boxes -> K×d.
Tensor encode_spatial(const Tensor& boxes, const ParamStore& ps);
Tensor fuse_global(const Tensor& att, const Tensor& spa, FusionMode mode, const ParamStore& ps);

// Builds the K×6 box tensor, validating extents.
Tensor bbox_tensor(const scene::Scene& scene);
// Builds the stacked normalised point tensor and its offsets.
Tensor point_tensor(const scene::Scene& scene, std::vector<std::size_t>& offsets);

}  // namespace dasa::objenc
