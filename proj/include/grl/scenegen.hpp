#pragma once

#include <cstdint>
#include <vector>

#include "grl/assets.hpp"
#include "grl/catalog.hpp"
#include "grl/geometry.hpp"
#include "grl/transform.hpp"

namespace grl {

/// Label carried by floor-slab points in SceneInstance::labels.
inline constexpr int kBackground = -1;

struct ObjectDraw {
  std::size_t category_id = 0;
  std::size_t instance_id = 0;
  bool operator==(const ObjectDraw&) const = default;
};

struct SceneSpec {
  std::size_t scene_type_id = 0;
  std::vector<ObjectDraw> objects;
  bool operator==(const SceneSpec&) const = default;
};

struct ObjectInstance {
  std::size_t category_id = 0;
  std::size_t instance_id = 0;
  PointCloud canonical_points;  // centered at the origin
  Transform transform;
};

/// A realized scene. `points` is the merged cloud: the transformed points of
/// object 0, then object 1, ..., then the optional floor slab. `labels[i]` is
/// the object index of point i, or kBackground.
struct SceneInstance {
  std::size_t scene_type_id = 0;
  std::vector<ObjectInstance> objects;
  PointCloud floor_points;
  PointCloud points;
  std::vector<int> labels;

  /// Rebuilds `points`/`labels` from the objects and the floor slab.
  void rebuild();
  std::size_t num_foreground_points() const;
};

struct ScenePair {
  SceneInstance scene_a;
  SceneInstance scene_b;
};

struct LayoutParams {
  double room_width = 6.0;  // x extent, meters
  double room_depth = 6.0;  // y extent, meters
  double scale_min = 0.9;
  double scale_max = 1.1;
  bool full_rotation = false;  // yaw only unless set
  int max_attempts = 1000;     // placement retries per object
  int layout_restarts = 8;     // fresh layouts tried before giving up
  bool floor_slab = false;
  double floor_spacing = 0.25;
};

/// Draws one category from (1 - eps) * row + eps * uniform via a per-draw
/// Bernoulli(eps) switch.
std::size_t sample_category(std::span<const double> row, double epsilon, Rng& rng);

SceneSpec sample_scene_spec(const SceneDistribution& dist, std::size_t n_objects,
                            std::uint64_t seed);

/// Random yaw (or full rotation), uniform scale and floor-plane translation
/// per object, placed by rejection sampling so that no two object boxes
/// overlap. Objects are placed largest footprint first. When one cannot be
/// placed within max_attempts the whole layout is redrawn, up to
/// layout_restarts times, then PlacementFailure is thrown.
SceneInstance realize_scene(const SceneSpec& spec, const AssetSource& assets,
                            const LayoutParams& layout, std::uint64_t seed);

/// One spec draw, two independent realizations.
ScenePair make_scene_pair(const SceneDistribution& dist, std::size_t n_objects,
                          const AssetSource& assets, const LayoutParams& layout,
                          std::uint64_t seed);

}  // namespace grl
