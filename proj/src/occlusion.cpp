#include "grl/occlusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "grl/error.hpp"
#include "grl/rng.hpp"

namespace grl {

std::vector<std::size_t> occlusion_keep_indices(std::span<const Vec3> points, const Vec3& viewpoint,
                                                double fraction) {
  if (!(fraction >= 0.0) || fraction > kMaxOcclusionFraction) {
    throw Error(ErrorKind::InvalidArgument, "occlusion fraction must lie in [0, 0.5]");
  }
  const std::size_t n = points.size();
  const auto n_remove = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = (points[i] - viewpoint).squaredNorm();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // nearest first, lower index first among equals
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  std::vector<std::size_t> kept(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_remove));
  std::sort(kept.begin(), kept.end());
  return kept;
}

Vec3 sample_viewpoint(const SceneInstance& scene, Rng& rng) {
  const Aabb box = bounding_box(scene.points);
  if (box.empty()) throw Error(ErrorKind::DegenerateObject, "scene has no points");
  const Vec3 center = box.center();
  const Vec3 half = 0.5 * 1.2 * box.extent();
  return Vec3(rng.uniform(center.x() - half.x(), center.x() + half.x()),
              rng.uniform(center.y() - half.y(), center.y() + half.y()),
              rng.uniform(center.z() - half.z(), center.z() + half.z()));
}

std::pair<SceneInstance, OcclusionRecord> occlude_scene(const SceneInstance& scene,
                                                        const Vec3& viewpoint,
                                                        std::span<const double> fractions) {
  if (fractions.size() != scene.objects.size()) {
    throw Error(ErrorKind::DimensionMismatch, "one occlusion fraction per object required");
  }
  OcclusionRecord record;
  record.viewpoint = viewpoint;
  record.fractions.assign(fractions.begin(), fractions.end());
  SceneInstance out = scene;
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const ObjectInstance& obj = scene.objects[k];
    if (obj.canonical_points.size() < 2) {
      throw Error(ErrorKind::DegenerateObject,
                  "object " + std::to_string(k) + " has fewer than 2 points");
    }
    PointCloud world;
    world.reserve(obj.canonical_points.size());
    for (const Vec3& p : obj.canonical_points) world.push_back(obj.transform.apply(p));
    std::vector<std::size_t> kept = occlusion_keep_indices(world, viewpoint, fractions[k]);
    PointCloud survivors;
    survivors.reserve(kept.size());
    for (std::size_t i : kept) survivors.push_back(obj.canonical_points[i]);
    out.objects[k].canonical_points = std::move(survivors);
    record.kept.push_back(std::move(kept));
  }
  out.rebuild();
  return {std::move(out), std::move(record)};
}

std::pair<SceneInstance, OcclusionRecord> occlude_scene(const SceneInstance& scene,
                                                        std::uint64_t seed) {
  Rng rng(seed);
  const Vec3 viewpoint = sample_viewpoint(scene, rng);
  std::vector<double> fractions(scene.objects.size());
  for (double& f : fractions) f = rng.uniform(0.0, kMaxOcclusionFraction);
  return occlude_scene(scene, viewpoint, fractions);
}

nlohmann::json to_json(const OcclusionRecord& record) {
  return {{"viewpoint", {record.viewpoint.x(), record.viewpoint.y(), record.viewpoint.z()}},
          {"fractions", record.fractions},
          {"kept", record.kept}};
}

OcclusionRecord occlusion_from_json(const nlohmann::json& doc) {
  OcclusionRecord record;
  const auto v = doc.at("viewpoint").get<std::vector<double>>();
  if (v.size() != 3) throw Error(ErrorKind::InvalidArgument, "/viewpoint: expected 3 values");
  record.viewpoint = Vec3(v[0], v[1], v[2]);
  record.fractions = doc.at("fractions").get<std::vector<double>>();
  record.kept = doc.at("kept").get<std::vector<std::vector<std::size_t>>>();
  for (std::size_t k = 0; k < record.fractions.size(); ++k) {
    if (!(record.fractions[k] >= 0.0) || record.fractions[k] > kMaxOcclusionFraction) {
      throw Error(ErrorKind::InvalidArgument,
                  "/fractions/" + std::to_string(k) + ": outside [0, 0.5]");
    }
  }
  return record;
}

}  // namespace grl
