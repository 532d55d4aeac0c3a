#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "grl/geometry.hpp"

namespace grl {

/// Resolves (category, instance) to a canonical point cloud centered at the
/// origin.
class AssetSource {
 public:
  virtual ~AssetSource() = default;
  virtual PointCloud load(std::size_t category_id, std::size_t instance_id) const = 0;
};

/// Number of categories the procedural generator knows (the 29 bundled
/// ScanNet object categories, in the same order).
std::size_t procedural_category_count();

/// Deterministic per (category, instance): points on a category-specific
/// composite of boxes, cylinders and ellipsoids, with instance-dependent
/// proportions, shifted so the centroid is at the origin.
PointCloud procedural_asset(std::size_t category_id, std::size_t instance_id,
                            std::size_t n_points);

class ProceduralAssets final : public AssetSource {
 public:
  explicit ProceduralAssets(std::size_t points_per_object) : n_points_(points_per_object) {}
  PointCloud load(std::size_t category_id, std::size_t instance_id) const override {
    return procedural_asset(category_id, instance_id, n_points_);
  }

 private:
  std::size_t n_points_;
};

/// Reads `<root>/<category label>/<instance id>.ply` (ascii) or `.bin`
/// (binary-f32). Clouds larger than `max_points` are thinned with a fixed
/// stride; every cloud is re-centered.
class DirectoryAssets final : public AssetSource {
 public:
  DirectoryAssets(std::filesystem::path root, std::vector<std::string> category_labels,
                  std::size_t max_points = 0);
  PointCloud load(std::size_t category_id, std::size_t instance_id) const override;

 private:
  std::filesystem::path root_;
  std::vector<std::string> labels_;
  std::size_t max_points_;
};

}  // namespace grl
