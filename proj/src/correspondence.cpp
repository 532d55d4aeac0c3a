#include "grl/correspondence.hpp"

#include <cmath>

#include "grl/error.hpp"
#include "grl/kernels.hpp"
#include "grl/rng.hpp"

namespace grl {

std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t m,
                                               std::uint64_t seed) {
  if (points.empty()) throw Error(ErrorKind::TooFewPoints, "cannot sample from an empty cloud");
  if (m > points.size()) {
    throw Error(ErrorKind::TooFewPoints, "requested " + std::to_string(m) + " samples from " +
                                             std::to_string(points.size()) + " points");
  }
  Rng rng(seed);
  const std::size_t start = rng.below(points.size());
  return kernels::farthest_point_sample(points, m, start);
}

SeedSet seeds_from_indices(const SceneInstance& scene, std::vector<std::size_t> indices) {
  SeedSet seeds;
  seeds.indices = std::move(indices);
  for (std::size_t i : seeds.indices) {
    if (i >= scene.points.size()) {
      throw Error(ErrorKind::InvalidArgument, "seed index " + std::to_string(i) + " out of range");
    }
    seeds.coords.push_back(scene.points[i]);
    seeds.objects.push_back(scene.labels[i]);
  }
  return seeds;
}

SeedSet sample_foreground_seeds(const SceneInstance& scene, std::size_t m, std::uint64_t seed) {
  std::vector<std::size_t> foreground;
  PointCloud coords;
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    if (scene.labels[i] == kBackground) continue;
    foreground.push_back(i);
    coords.push_back(scene.points[i]);
  }
  std::vector<std::size_t> picked = farthest_point_sample(coords, m, seed);
  for (std::size_t& p : picked) p = foreground[p];
  return seeds_from_indices(scene, std::move(picked));
}

SeedSet all_foreground_seeds(const SceneInstance& scene) {
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    if (scene.labels[i] != kBackground) indices.push_back(i);
  }
  return seeds_from_indices(scene, std::move(indices));
}

Vec3 translate_seed(const Vec3& p, const Transform& t_a, const Transform& t_b) {
  return t_b.apply(t_a.apply_inverse(p));
}

MatchSet match_points(const SceneInstance& scene_a, const SceneInstance& scene_b,
                      const SeedSet& seeds_a, const SeedSet& seeds_b_pool, double theta) {
  if (!(theta > 0.0)) throw Error(ErrorKind::InvalidArgument, "theta must be positive");
  if (scene_a.objects.size() != scene_b.objects.size()) {
    throw Error(ErrorKind::DimensionMismatch, "paired scenes have different object counts");
  }
  // candidate lists per object
  std::vector<std::vector<std::size_t>> candidates(scene_b.objects.size());
  for (std::size_t j = 0; j < seeds_b_pool.size(); ++j) {
    const int obj = seeds_b_pool.objects[j];
    if (obj >= 0) candidates[static_cast<std::size_t>(obj)].push_back(j);
  }

  MatchSet out;
  out.theta = theta;
  const auto n = static_cast<std::ptrdiff_t>(seeds_a.size());
  std::vector<Match> per_seed(seeds_a.size());
  std::vector<char> kept(seeds_a.size(), 0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < n; ++s) {
    const auto i = static_cast<std::size_t>(s);
    const int obj = seeds_a.objects[i];
    if (obj < 0) continue;
    const auto k = static_cast<std::size_t>(obj);
    const auto& cand = candidates[k];
    if (cand.empty()) continue;
    const Vec3 target = translate_seed(seeds_a.coords[i], scene_a.objects[k].transform,
                                       scene_b.objects[k].transform);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j : cand) {
      const double d = (seeds_b_pool.coords[j] - target).norm();
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    if (best < theta) {
      per_seed[i] = Match{i, best_j, seeds_a.indices[i], seeds_b_pool.indices[best_j], best, obj};
      kept[i] = 1;
    }
  }
  for (std::size_t i = 0; i < per_seed.size(); ++i) {
    if (kept[i]) out.pairs.push_back(per_seed[i]);
  }
  return out;
}

nlohmann::json to_json(const MatchSet& matches) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const Match& m : matches.pairs) {
    pairs.push_back({{"a_index", m.a_index},
                     {"b_index", m.b_index},
                     {"distance", m.distance},
                     {"object_id", m.object},
                     {"a_seed", m.a_seed},
                     {"b_seed", m.b_seed}});
  }
  return {{"theta", matches.theta}, {"pairs", pairs}};
}

MatchSet matches_from_json(const nlohmann::json& doc) {
  MatchSet out;
  out.theta = doc.at("theta").get<double>();
  for (const auto& p : doc.at("pairs")) {
    Match m;
    m.a_index = p.at("a_index").get<std::size_t>();
    m.b_index = p.at("b_index").get<std::size_t>();
    m.distance = p.at("distance").get<double>();
    m.object = p.at("object_id").get<int>();
    m.a_seed = p.at("a_seed").get<std::size_t>();
    m.b_seed = p.at("b_seed").get<std::size_t>();
    if (!(m.distance < out.theta)) {
      throw Error(ErrorKind::InvalidArgument, "stored match distance not below theta");
    }
    out.pairs.push_back(m);
  }
  return out;
}

}  // namespace grl
