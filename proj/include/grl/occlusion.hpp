#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <json.hpp>

#include "grl/scenegen.hpp"

namespace grl {

struct OcclusionRecord {
  Vec3 viewpoint = Vec3::Zero();
  std::vector<double> fractions;                 // per object, in [0, 0.5]
  std::vector<std::vector<std::size_t>> kept;    // per object, increasing canonical indices
};

inline constexpr double kMaxOcclusionFraction = 0.5;

/// Indices of the points that survive removing floor(fraction * n) points
/// furthest from `viewpoint`. Ties on distance drop the higher index first.
/// Returned in increasing order.
std::vector<std::size_t> occlusion_keep_indices(std::span<const Vec3> points, const Vec3& viewpoint,
                                                double fraction);

/// Uniform point in the scene's bounding box inflated by 20% about its center.
Vec3 sample_viewpoint(const SceneInstance& scene, Rng& rng);

/// Deterministic core: applies the given viewpoint and per-object fractions.
std::pair<SceneInstance, OcclusionRecord> occlude_scene(const SceneInstance& scene,
                                                        const Vec3& viewpoint,
                                                        std::span<const double> fractions);

/// Draws a viewpoint and one fraction per object from U[0, 0.5].
std::pair<SceneInstance, OcclusionRecord> occlude_scene(const SceneInstance& scene,
                                                        std::uint64_t seed);

nlohmann::json to_json(const OcclusionRecord& record);
OcclusionRecord occlusion_from_json(const nlohmann::json& doc);

}  // namespace grl
