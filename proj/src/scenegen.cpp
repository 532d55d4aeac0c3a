#include "grl/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "grl/error.hpp"
#include "grl/rng.hpp"

namespace grl {

void SceneInstance::rebuild() {
  points.clear();
  labels.clear();
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const ObjectInstance& obj = objects[k];
    for (const Vec3& p : obj.canonical_points) {
      points.push_back(obj.transform.apply(p));
      labels.push_back(static_cast<int>(k));
    }
  }
  for (const Vec3& p : floor_points) {
    points.push_back(p);
    labels.push_back(kBackground);
  }
}

std::size_t SceneInstance::num_foreground_points() const {
  std::size_t n = 0;
  for (const ObjectInstance& obj : objects) n += obj.canonical_points.size();
  return n;
}

std::size_t sample_category(std::span<const double> row, double epsilon, Rng& rng) {
  if (row.empty()) throw Error(ErrorKind::EmptyDistribution, "no categories to sample");
  if (rng.bernoulli(epsilon)) return rng.below(row.size());
  return rng.categorical(row);
}

SceneSpec sample_scene_spec(const SceneDistribution& dist, std::size_t n_objects,
                            std::uint64_t seed) {
  if (n_objects == 0) throw Error(ErrorKind::InvalidArgument, "n_objects must be >= 1");
  if (dist.num_scene_types() == 0 || dist.num_categories() == 0) {
    throw Error(ErrorKind::EmptyDistribution, "distribution has no scene types or categories");
  }
  Rng rng(seed);
  SceneSpec spec;
  spec.scene_type_id = rng.categorical(dist.scene_prior());
  const auto& row = dist.category_given_scene()[spec.scene_type_id];
  spec.objects.reserve(n_objects);
  for (std::size_t i = 0; i < n_objects; ++i) {
    ObjectDraw draw;
    draw.category_id = sample_category(row, dist.epsilon(), rng);
    draw.instance_id = rng.categorical(dist.instance_given_category()[draw.category_id]);
    spec.objects.push_back(draw);
  }
  return spec;
}

SceneInstance realize_scene(const SceneSpec& spec, const AssetSource& assets,
                            const LayoutParams& layout, std::uint64_t seed) {
  if (!(layout.scale_min > 0.0) || layout.scale_max < layout.scale_min) {
    throw Error(ErrorKind::InvalidArgument, "scale range must satisfy 0 < min <= max");
  }
  if (!(layout.room_width > 0.0) || !(layout.room_depth > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "room extents must be positive");
  }
  Rng rng(seed);
  SceneInstance scene;
  scene.scene_type_id = spec.scene_type_id;
  std::vector<Aabb> placed;

  scene.objects.resize(spec.objects.size());
  std::vector<double> footprint(spec.objects.size());
  for (std::size_t k = 0; k < spec.objects.size(); ++k) {
    ObjectInstance& obj = scene.objects[k];
    obj.category_id = spec.objects[k].category_id;
    obj.instance_id = spec.objects[k].instance_id;
    obj.canonical_points = assets.load(obj.category_id, obj.instance_id);
    if (obj.canonical_points.empty()) {
      throw Error(ErrorKind::DegenerateObject, "asset has no points");
    }
    const Vec3 e = bounding_box(obj.canonical_points).extent();
    footprint[k] = e.x() * e.x() + e.y() * e.y();
  }
  // Largest footprints are placed first; object order in the scene is kept.
  std::vector<std::size_t> order(spec.objects.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return footprint[a] > footprint[b]; });

  // Places one object; false when the attempt budget runs out.
  auto place = [&](ObjectInstance& obj) {
    for (int attempt = 0; attempt < layout.max_attempts; ++attempt) {
      Transform t;
      t.rotation = layout.full_rotation
                       ? random_rotation(rng)
                       : Transform::from_yaw(rng.uniform(0.0, 2.0 * std::numbers::pi), Vec3::Zero())
                             .rotation;
      t.scale = rng.uniform(layout.scale_min, layout.scale_max);
      Aabb local;
      for (const Vec3& p : obj.canonical_points) local.extend(t.scale * (t.rotation * p));
      const double x_lo = -local.min.x();
      const double x_hi = layout.room_width - local.max.x();
      const double y_lo = -local.min.y();
      const double y_hi = layout.room_depth - local.max.y();
      if (x_hi < x_lo || y_hi < y_lo) continue;  // does not fit in this orientation
      t.translation = Vec3(rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi), -local.min.z());
      const Aabb box{local.min + t.translation, local.max + t.translation};
      bool clear = true;
      for (const Aabb& other : placed) {
        if (box.overlaps(other)) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      obj.transform = t;
      placed.push_back(box);
      return true;
    }
    return false;
  };

  std::size_t failed = 0;
  for (int round = 0; round < std::max(1, layout.layout_restarts); ++round) {
    placed.clear();
    bool complete = true;
    for (std::size_t k : order) {
      if (!place(scene.objects[k])) {
        failed = k;
        complete = false;
        break;
      }
    }
    if (complete) break;
    if (round + 1 >= std::max(1, layout.layout_restarts)) {
      throw Error(ErrorKind::PlacementFailure,
                  "could not place object " + std::to_string(failed) + " after " +
                      std::to_string(layout.max_attempts) + " attempts in each of " +
                      std::to_string(std::max(1, layout.layout_restarts)) + " layouts");
    }
  }

  if (layout.floor_slab) {
    const double step = layout.floor_spacing;
    for (double x = 0.5 * step; x < layout.room_width; x += step) {
      for (double y = 0.5 * step; y < layout.room_depth; y += step) {
        scene.floor_points.emplace_back(x, y, 0.0);
      }
    }
  }
  scene.rebuild();
  return scene;
}

ScenePair make_scene_pair(const SceneDistribution& dist, std::size_t n_objects,
                          const AssetSource& assets, const LayoutParams& layout,
                          std::uint64_t seed) {
  const SceneSpec spec = sample_scene_spec(dist, n_objects, derive_seed(seed, 0));
  return {realize_scene(spec, assets, layout, derive_seed(seed, 1)),
          realize_scene(spec, assets, layout, derive_seed(seed, 2))};
}

}  // namespace grl
