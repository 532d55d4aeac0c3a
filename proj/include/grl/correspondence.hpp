#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include <json.hpp>

#include "grl/scenegen.hpp"

namespace grl {

inline constexpr std::size_t kDefaultSeedCount = 100;
inline constexpr double kDefaultMatchThreshold = 0.1;

/// Seed points of one scene: indices into SceneInstance::points, their
/// coordinates and the object each belongs to.
struct SeedSet {
  std::vector<std::size_t> indices;
  PointCloud coords;
  std::vector<int> objects;

  std::size_t size() const { return indices.size(); }
};

struct Match {
  std::size_t a_seed = 0;   // position in the A seed set
  std::size_t b_seed = 0;   // position in the B candidate pool
  std::size_t a_index = 0;  // point index in scene A
  std::size_t b_index = 0;  // point index in scene B
  double distance = 0.0;
  int object = 0;
  bool operator==(const Match&) const = default;
};

struct MatchSet {
  std::vector<Match> pairs;
  double theta = kDefaultMatchThreshold;
  bool operator==(const MatchSet&) const = default;
};

/// Greedy FPS with a seeded random start point. Throws TooFewPoints when
/// m exceeds the number of points or the cloud is empty.
std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t m,
                                               std::uint64_t seed);

/// FPS restricted to foreground (object) points; background points are
/// never selected.
SeedSet sample_foreground_seeds(const SceneInstance& scene, std::size_t m, std::uint64_t seed);

/// Every foreground point as a seed, in index order. Used as the exact
/// counterpart pool in tests.
SeedSet all_foreground_seeds(const SceneInstance& scene);

/// T_b * T_a^{-1} * p
Vec3 translate_seed(const Vec3& p, const Transform& t_a, const Transform& t_b);

/// For each A seed on object y: translate it into B with object y's
/// transforms, take the nearest B candidate on the same object, keep the pair
/// when the distance is below theta. Seeds without candidates are dropped.
MatchSet match_points(const SceneInstance& scene_a, const SceneInstance& scene_b,
                      const SeedSet& seeds_a, const SeedSet& seeds_b_pool,
                      double theta = kDefaultMatchThreshold);

inline MatchSet match_points(const ScenePair& pair, const SeedSet& seeds_a,
                             const SeedSet& seeds_b_pool, double theta = kDefaultMatchThreshold) {
  return match_points(pair.scene_a, pair.scene_b, seeds_a, seeds_b_pool, theta);
}

/// Seed set rebuilt from stored indices.
SeedSet seeds_from_indices(const SceneInstance& scene, std::vector<std::size_t> indices);

nlohmann::json to_json(const MatchSet& matches);
MatchSet matches_from_json(const nlohmann::json& doc);

}  // namespace grl
