#include "grl/assets.hpp"

#include <cmath>
#include <numbers>

#include "grl/error.hpp"
#include "grl/pointcloud_io.hpp"
#include "grl/rng.hpp"

namespace grl {

namespace {

enum class Primitive { Box, Cylinder, Ellipsoid };

// One solid of a composite asset. `size` is the full extent along x/y/z,
// `offset` the center of the part relative to the asset's base center.
struct Part {
  Primitive shape;
  Vec3 size;
  Vec3 offset;
};

using Blueprint = std::vector<Part>;

Part box(double w, double d, double h, double x, double y, double z) {
  return {Primitive::Box, Vec3(w, d, h), Vec3(x, y, z)};
}
Part cyl(double diameter, double h, double x, double y, double z) {
  return {Primitive::Cylinder, Vec3(diameter, diameter, h), Vec3(x, y, z)};
}
Part ell(double w, double d, double h, double x, double y, double z) {
  return {Primitive::Ellipsoid, Vec3(w, d, h), Vec3(x, y, z)};
}

// Four legs under a rectangle of footprint w x d.
void add_legs(Blueprint& parts, double w, double d, double h, double thickness) {
  for (double sx : {-1.0, 1.0}) {
    for (double sy : {-1.0, 1.0}) {
      parts.push_back(cyl(thickness, h, sx * (w / 2 - thickness), sy * (d / 2 - thickness), h / 2));
    }
  }
}

// Blueprints in the order of the bundled object categories. `k` holds three
// instance-dependent proportion factors.
Blueprint blueprint(std::size_t category, const Vec3& k) {
  Blueprint p;
  const double w = k.x(), d = k.y(), h = k.z();
  switch (category) {
    case 0: {  // chair
      const double seat = 0.45 * h;
      add_legs(p, 0.45 * w, 0.45 * d, seat, 0.04);
      p.push_back(box(0.45 * w, 0.45 * d, 0.05, 0, 0, seat + 0.025));
      p.push_back(box(0.45 * w, 0.05, 0.45 * h, 0, -0.2 * d, seat + 0.225 * h));
      break;
    }
    case 1: p.push_back(box(0.8 * w, 0.45 * d, 0.9 * h, 0, 0, 0.45 * h)); break;  // cabinet
    case 2: p.push_back(cyl(0.3 * w, 0.35 * h, 0, 0, 0.175 * h)); break;         // trash can
    case 3: {  // table
      const double top = 0.72 * h;
      add_legs(p, 1.2 * w, 0.7 * d, top, 0.05);
      p.push_back(box(1.2 * w, 0.7 * d, 0.04, 0, 0, top + 0.02));
      break;
    }
    case 4: p.push_back(ell(0.5 * w, 0.35 * d, 0.12 * h, 0, 0, 0.06 * h)); break;  // pillow
    case 5: {  // sofa
      p.push_back(box(1.8 * w, 0.85 * d, 0.45 * h, 0, 0, 0.225 * h));
      p.push_back(box(1.8 * w, 0.2 * d, 0.4 * h, 0, -0.325 * d, 0.65 * h));
      p.push_back(box(0.2 * w, 0.85 * d, 0.2 * h, -0.8 * w, 0, 0.55 * h));
      p.push_back(box(0.2 * w, 0.85 * d, 0.2 * h, 0.8 * w, 0, 0.55 * h));
      break;
    }
    case 6: {  // lamp
      p.push_back(cyl(0.25 * w, 0.03, 0, 0, 0.015));
      p.push_back(cyl(0.03, 1.3 * h, 0, 0, 0.65 * h));
      p.push_back(cyl(0.4 * d, 0.25 * h, 0, 0, 1.3 * h));
      break;
    }
    case 7: {  // bed
      p.push_back(box(1.4 * w, 2.0 * d, 0.5 * h, 0, 0, 0.25 * h));
      p.push_back(box(1.4 * w, 0.06, 0.5 * h, 0, -1.0 * d, 0.75 * h));
      break;
    }
    case 8: p.push_back(ell(0.35 * w, 0.2 * d, 0.4 * h, 0, 0, 0.2 * h)); break;  // bag
    case 9: {  // bookshelf
      const double bw = 0.9 * w, bd = 0.3 * d, bh = 1.8 * h;
      p.push_back(box(bw, 0.02, bh, 0, -bd / 2, bh / 2));
      p.push_back(box(0.03, bd, bh, -bw / 2, 0, bh / 2));
      p.push_back(box(0.03, bd, bh, bw / 2, 0, bh / 2));
      for (int s = 0; s < 5; ++s) p.push_back(box(bw, bd, 0.02, 0, 0, s * bh / 4.0));
      break;
    }
    case 10: p.push_back(box(0.2 * w, 0.45 * d, 0.45 * h, 0, 0, 0.225 * h)); break;  // computer
    case 11: {  // video display
      p.push_back(box(0.25 * w, 0.2 * d, 0.02, 0, 0, 0.01));
      p.push_back(box(0.04, 0.04, 0.15 * h, 0, 0, 0.075 * h));
      p.push_back(box(0.6 * w, 0.05 * d, 0.38 * h, 0, 0, 0.15 * h + 0.19 * h));
      break;
    }
    case 12: p.push_back(cyl(0.09 * w, 0.1 * h, 0, 0, 0.05 * h)); break;           // mug
    case 13: p.push_back(box(0.2 * w, 0.2 * d, 0.08 * h, 0, 0, 0.04 * h)); break;  // telephone
    case 14: p.push_back(box(1.6 * w, 0.75 * d, 0.55 * h, 0, 0, 0.275 * h)); break;  // bathtub
    case 15: p.push_back(box(0.5 * w, 0.35 * d, 0.3 * h, 0, 0, 0.15 * h)); break;  // microwave
    case 16: {  // laptop
      p.push_back(box(0.33 * w, 0.23 * d, 0.02, 0, 0, 0.01));
      p.push_back(box(0.33 * w, 0.02, 0.22 * h, 0, -0.115 * d, 0.11 * h));
      break;
    }
    case 17: p.push_back(box(0.45 * w, 0.4 * d, 0.3 * h, 0, 0, 0.15 * h)); break;    // printer
    case 18: p.push_back(box(0.75 * w, 0.65 * d, 0.9 * h, 0, 0, 0.45 * h)); break;   // stove
    case 19: {  // bench
      add_legs(p, 1.2 * w, 0.35 * d, 0.42 * h, 0.05);
      p.push_back(box(1.2 * w, 0.35 * d, 0.05, 0, 0, 0.42 * h + 0.025));
      break;
    }
    case 20: p.push_back(cyl(0.3 * w, 0.05 * h, 0, 0, 0.025 * h)); break;          // clock
    case 21: p.push_back(cyl(0.4 * w, 0.25 * h, 0, 0, 0.125 * h)); break;          // basket
    case 22: p.push_back(box(0.6 * w, 0.6 * d, 0.85 * h, 0, 0, 0.425 * h)); break;  // dishwasher
    case 23: p.push_back(box(0.25 * w, 0.25 * d, 0.4 * h, 0, 0, 0.2 * h)); break;   // loudspeaker
    case 24: {  // washer
      p.push_back(box(0.65 * w, 0.6 * d, 0.9 * h, 0, 0, 0.45 * h));
      p.push_back(cyl(0.4 * w, 0.04, 0, 0, 0.9 * h + 0.02));
      break;
    }
    case 25: {  // piano
      p.push_back(box(1.5 * w, 0.35 * d, 1.2 * h, 0, -0.125 * d, 0.6 * h));
      p.push_back(box(1.5 * w, 0.25 * d, 0.1, 0, 0.175 * d, 0.7 * h));
      break;
    }
    case 26: {  // mailbox
      p.push_back(cyl(0.06, 1.0 * h, 0, 0, 0.5 * h));
      p.push_back(box(0.3 * w, 0.4 * d, 0.25 * h, 0, 0, 1.0 * h + 0.125 * h));
      break;
    }
    case 27: {  // guitar
      p.push_back(ell(0.38 * w, 0.1 * d, 0.45 * h, 0, 0, 0.225 * h));
      p.push_back(ell(0.3 * w, 0.1 * d, 0.3 * h, 0, 0, 0.55 * h));
      p.push_back(box(0.05, 0.03, 0.45 * h, 0, 0, 0.9 * h));
      break;
    }
    case 28: p.push_back(ell(0.2 * w, 0.2 * d, 0.12 * h, 0, 0, 0.0)); break;  // bowl
    default:
      throw Error(ErrorKind::UnknownCategory,
                  "no procedural blueprint for category " + std::to_string(category));
  }
  return p;
}

double surface_area(const Part& part) {
  const Vec3& s = part.size;
  switch (part.shape) {
    case Primitive::Box:
      return 2.0 * (s.x() * s.y() + s.y() * s.z() + s.x() * s.z());
    case Primitive::Cylinder: {
      const double r = 0.5 * s.x();
      return 2.0 * std::numbers::pi * r * (r + s.z());
    }
    case Primitive::Ellipsoid: {
      // Knud Thomsen approximation
      constexpr double p = 1.6075;
      const double a = 0.5 * s.x(), b = 0.5 * s.y(), c = 0.5 * s.z();
      const double m = (std::pow(a * b, p) + std::pow(a * c, p) + std::pow(b * c, p)) / 3.0;
      return 4.0 * std::numbers::pi * std::pow(m, 1.0 / p);
    }
  }
  return 0.0;
}

Vec3 sample_surface(const Part& part, Rng& rng) {
  const Vec3 half = 0.5 * part.size;
  switch (part.shape) {
    case Primitive::Box: {
      const double areas[3] = {part.size.y() * part.size.z(), part.size.x() * part.size.z(),
                               part.size.x() * part.size.y()};
      const std::size_t axis = rng.categorical(std::vector<double>{
          areas[0] / (areas[0] + areas[1] + areas[2]), areas[1] / (areas[0] + areas[1] + areas[2]),
          areas[2] / (areas[0] + areas[1] + areas[2])});
      Vec3 q(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      q[static_cast<Eigen::Index>(axis)] = rng.bernoulli(0.5) ? 1.0 : -1.0;
      return part.offset + q.cwiseProduct(half);
    }
    case Primitive::Cylinder: {
      const double r = half.x();
      const double side = 2.0 * std::numbers::pi * r * part.size.z();
      const double caps = 2.0 * std::numbers::pi * r * r;
      const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
      if (rng.uniform() * (side + caps) < side) {
        return part.offset +
               Vec3(r * std::cos(theta), r * std::sin(theta), rng.uniform(-half.z(), half.z()));
      }
      const double rr = r * std::sqrt(rng.uniform());
      const double z = rng.bernoulli(0.5) ? half.z() : -half.z();
      return part.offset + Vec3(rr * std::cos(theta), rr * std::sin(theta), z);
    }
    case Primitive::Ellipsoid: {
      Vec3 n(rng.normal(), rng.normal(), rng.normal());
      while (n.norm() < 1e-12) n = Vec3(rng.normal(), rng.normal(), rng.normal());
      return part.offset + n.normalized().cwiseProduct(half);
    }
  }
  return part.offset;
}

}  // namespace

std::size_t procedural_category_count() { return 29; }

PointCloud procedural_asset(std::size_t category_id, std::size_t instance_id,
                            std::size_t n_points) {
  if (n_points < 8) {
    throw Error(ErrorKind::InvalidArgument, "procedural assets need at least 8 points");
  }
  if (category_id >= procedural_category_count()) {
    throw Error(ErrorKind::UnknownCategory,
                "no procedural blueprint for category " + std::to_string(category_id));
  }
  Rng rng(derive_seed(0x5EED0A55E7ULL ^ category_id, instance_id));
  const Vec3 proportions(rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2));
  const Blueprint parts = blueprint(category_id, proportions);

  std::vector<double> weights;
  double total = 0.0;
  for (const Part& part : parts) {
    weights.push_back(surface_area(part));
    total += weights.back();
  }
  for (double& w : weights) w /= total;

  PointCloud points;
  points.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    points.push_back(sample_surface(parts[rng.categorical(weights)], rng));
  }
  const Vec3 c = centroid(points);
  for (Vec3& p : points) p -= c;
  return points;
}

DirectoryAssets::DirectoryAssets(std::filesystem::path root,
                                 std::vector<std::string> category_labels,
                                 std::size_t max_points)
    : root_(std::move(root)), labels_(std::move(category_labels)), max_points_(max_points) {
  if (!std::filesystem::is_directory(root_)) {
    throw Error(ErrorKind::InvalidArgument, "asset directory " + root_.string() + " not found");
  }
}

PointCloud DirectoryAssets::load(std::size_t category_id, std::size_t instance_id) const {
  if (category_id >= labels_.size()) {
    throw Error(ErrorKind::UnknownCategory, "category " + std::to_string(category_id));
  }
  const std::filesystem::path dir = root_ / labels_[category_id];
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorKind::UnknownCategory, "no asset directory " + dir.string());
  }
  PointCloud points;
  bool found = false;
  for (const char* ext : {".ply", ".bin"}) {
    const auto file = dir / (std::to_string(instance_id) + ext);
    if (std::filesystem::exists(file)) {
      points = load_point_cloud(file);
      found = true;
      break;
    }
  }
  if (!found) {
    throw Error(ErrorKind::UnknownCategory,
                "no asset file for instance " + std::to_string(instance_id) + " in " + dir.string());
  }
  if (points.size() < 8) {
    throw Error(ErrorKind::DegenerateObject, dir.string() + ": asset has fewer than 8 points");
  }
  if (max_points_ > 0 && points.size() > max_points_) {
    PointCloud thinned;
    thinned.reserve(max_points_);
    for (std::size_t i = 0; i < max_points_; ++i) {
      thinned.push_back(points[i * points.size() / max_points_]);
    }
    points = std::move(thinned);
  }
  const Vec3 c = centroid(points);
  for (Vec3& p : points) p -= c;
  return points;
}

}  // namespace grl
