#include "grl/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include "grl/assets.hpp"
#include "grl/error.hpp"
#include "grl/rng.hpp"

namespace grl {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestFormat = "grl-pair-v1";

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::InvalidArgument, "config: " + what);
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::InvalidArgument, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

std::string pair_dir_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%06zu", index);
  return buf;
}

nlohmann::json transform_to_json(const Transform& t) {
  std::vector<double> rotation;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rotation.push_back(t.rotation(r, c));
  }
  return {{"rotation", rotation},
          {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}},
          {"scale", t.scale}};
}

Transform transform_from_json(const nlohmann::json& doc) {
  Transform t;
  const auto rotation = doc.at("rotation").get<std::vector<double>>();
  const auto translation = doc.at("translation").get<std::vector<double>>();
  if (rotation.size() != 9 || translation.size() != 3) {
    throw Error(ErrorKind::DimensionMismatch, "transform needs 9 rotation and 3 translation values");
  }
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = rotation[static_cast<std::size_t>(3 * r + c)];
  }
  t.translation = Vec3(translation[0], translation[1], translation[2]);
  t.scale = doc.at("scale").get<double>();
  t.validate(1e-6);
  return t;
}

std::unique_ptr<AssetSource> make_assets(const PipelineConfig& config,
                                         const SceneDistribution& dist) {
  if (config.asset_source == "procedural") {
    return std::make_unique<ProceduralAssets>(config.points_per_object);
  }
  return std::make_unique<DirectoryAssets>(config.asset_source, dist.category_labels(),
                                           config.points_per_object);
}

std::size_t count_points(const SceneInstance& scene, int object) {
  return static_cast<std::size_t>(std::count(scene.labels.begin(), scene.labels.end(), object));
}

nlohmann::json scene_to_json(const SceneInstance& complete, const SceneInstance& occluded,
                             const OcclusionRecord& record, const SceneDistribution& dist,
                             const std::string& side, const std::string& ext) {
  nlohmann::json objects = nlohmann::json::array();
  for (std::size_t k = 0; k < complete.objects.size(); ++k) {
    const ObjectInstance& obj = complete.objects[k];
    objects.push_back({{"category", dist.category_labels()[obj.category_id]},
                       {"category_id", obj.category_id},
                       {"instance_id", obj.instance_id},
                       {"num_points", count_points(complete, static_cast<int>(k))},
                       {"num_occluded_points", count_points(occluded, static_cast<int>(k))},
                       {"transform", transform_to_json(obj.transform)}});
  }
  return {{"complete", side + "_complete" + ext},
          {"occluded", side + "_occluded" + ext},
          {"num_points", complete.points.size()},
          {"num_occluded_points", occluded.points.size()},
          {"floor_points", complete.floor_points.size()},
          {"objects", objects},
          {"occlusion", to_json(record)}};
}

struct PairOutcome {
  std::size_t scene_type = 0;
  std::vector<std::size_t> categories;
  double occlusion_sum = 0.0;
  std::size_t occlusion_count = 0;
  std::size_t matches = 0;
  std::size_t failures = 0;
  std::exception_ptr error;
};

PairOutcome generate_pair(const PipelineConfig& config, const SceneDistribution& dist,
                          const AssetSource& assets, const std::string& hash, std::size_t index,
                          const fs::path& dir) {
  PairOutcome outcome;
  const std::uint64_t ps = pair_seed(config.seed, index);
  const LayoutParams layout = config.layout();
  std::optional<ScenePair> pair;
  std::uint64_t scene_seed = 0;
  for (int attempt = 0; attempt < config.placement_retries && !pair; ++attempt) {
    scene_seed = derive_seed(ps, 16 + static_cast<std::uint64_t>(attempt));
    try {
      pair = make_scene_pair(dist, config.n_objects, assets, layout, scene_seed);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::PlacementFailure) throw;
      ++outcome.failures;
    }
  }
  if (!pair) {
    throw Error(ErrorKind::PlacementFailure,
                "pair " + std::to_string(index) + ": no layout after " +
                    std::to_string(config.placement_retries) + " attempts");
  }

  std::array<const SceneInstance*, 2> complete{&pair->scene_a, &pair->scene_b};
  std::array<SceneInstance, 2> occluded;
  std::array<OcclusionRecord, 2> records;
  for (std::size_t side = 0; side < 2; ++side) {
    const SceneInstance& scene = *complete[side];
    auto result = config.occlusion
                      ? occlude_scene(scene, derive_seed(ps, 3 + side))
                      : occlude_scene(scene, bounding_box(scene.points).center(),
                                      std::vector<double>(scene.objects.size(), 0.0));
    occluded[side] = std::move(result.first);
    records[side] = std::move(result.second);
    for (double f : records[side].fractions) outcome.occlusion_sum += f;
    outcome.occlusion_count += records[side].fractions.size();
    for (const ObjectInstance& obj : scene.objects) outcome.categories.push_back(obj.category_id);
  }
  std::array<SeedSet, 2> seeds;
  for (std::size_t side = 0; side < 2; ++side) {
    const std::size_t m = std::min(config.seed_count, occluded[side].num_foreground_points());
    seeds[side] = sample_foreground_seeds(occluded[side], m, derive_seed(ps, 5 + side));
  }
  const MatchSet matches =
      match_points(occluded[0], occluded[1], seeds[0], seeds[1], config.theta);
  outcome.scene_type = pair->scene_a.scene_type_id;
  outcome.matches = matches.pairs.size();

  fs::create_directories(dir);
  const std::string ext(file_extension(config.geometry_format));
  const std::array<std::string, 2> sides{"a", "b"};
  nlohmann::json scenes;
  for (std::size_t side = 0; side < 2; ++side) {
    export_point_cloud(complete[side]->points, dir / (sides[side] + "_complete" + ext),
                       config.geometry_format);
    export_point_cloud(occluded[side].points, dir / (sides[side] + "_occluded" + ext),
                       config.geometry_format);
    scenes[sides[side]] =
        scene_to_json(*complete[side], occluded[side], records[side], dist, sides[side], ext);
  }
  const nlohmann::json manifest{
      {"format", kManifestFormat},
      {"pair_id", index},
      {"pair_seed", ps},
      {"scene_seed", scene_seed},
      {"config_hash", hash},
      {"scene_type", dist.scene_labels()[outcome.scene_type]},
      {"scene_type_id", outcome.scene_type},
      {"scenes", scenes},
      {"seeds", {{"a", seeds[0].indices}, {"b", seeds[1].indices}}},
      {"matches", to_json(matches)}};
  write_json(dir / "manifest.json", manifest);
  return outcome;
}

}  // namespace

void PipelineConfig::validate() const {
  require(n_scenes >= 1, "n_scenes must be at least 1");
  require(n_objects >= 1, "n_objects must be at least 1");
  require(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must lie in [0, 1]");
  require(instances_per_category >= 1, "instances_per_category must be at least 1");
  require(seed_count >= 1, "seed_count must be at least 1");
  require(theta > 0.0, "theta must be positive");
  require(tau > 0.0 && std::isfinite(tau), "tau must be positive");
  require(lambda_pts >= 0.0 && std::isfinite(lambda_pts), "lambda_pts must be nonnegative");
  require(lambda_rec >= 0.0 && std::isfinite(lambda_rec), "lambda_rec must be nonnegative");
  require(grid_side >= 1, "grid_side must be at least 1");
  require(grid_extent >= 0.0 && std::isfinite(grid_extent), "grid_extent must be nonnegative");
  require(encoder_hidden >= 1 && feature_dim >= 1 && projection_dim >= 1 && decoder_hidden >= 1,
          "layer sizes must be positive");
  require(decoder_seeds >= 1, "decoder_seeds must be at least 1");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(points_per_object >= 8, "points_per_object must be at least 8");
  require(scale_min > 0.0 && scale_min <= scale_max && std::isfinite(scale_max),
          "scale range must satisfy 0 < scale_min <= scale_max");
  require(placement_retries >= 1, "placement_retries must be at least 1");
  require(!asset_source.empty(), "asset_source must not be empty");
}

LayoutParams PipelineConfig::layout() const {
  LayoutParams p;
  p.scale_min = scale_min;
  p.scale_max = scale_max;
  p.full_rotation = full_rotation;
  p.floor_slab = floor_slab;
  return p;
}

ModelConfig PipelineConfig::model() const {
  ModelConfig m;
  m.encoder.hidden = encoder_hidden;
  m.encoder.feature_dim = feature_dim;
  m.projection_dim = projection_dim;
  m.decoder.hidden = decoder_hidden;
  m.decoder.grid_side = grid_side;
  m.decoder.grid_extent = grid_extent;
  return m;
}

LossConfig PipelineConfig::loss() const {
  return {tau, lambda_pts, lambda_rec, decoder_seeds};
}

nlohmann::json to_json(const PipelineConfig& c) {
  return {{"seed", c.seed},
          {"n_scenes", c.n_scenes},
          {"n_objects", c.n_objects},
          {"epsilon", c.epsilon},
          {"instances_per_category", c.instances_per_category},
          {"seed_count", c.seed_count},
          {"theta", c.theta},
          {"tau", c.tau},
          {"lambda_pts", c.lambda_pts},
          {"lambda_rec", c.lambda_rec},
          {"grid_side", c.grid_side},
          {"grid_extent", c.grid_extent},
          {"encoder_hidden", c.encoder_hidden},
          {"feature_dim", c.feature_dim},
          {"projection_dim", c.projection_dim},
          {"decoder_hidden", c.decoder_hidden},
          {"decoder_seeds", c.decoder_seeds},
          {"batch_size", c.batch_size},
          {"points_per_object", c.points_per_object},
          {"occlusion", c.occlusion},
          {"floor_slab", c.floor_slab},
          {"full_rotation", c.full_rotation},
          {"scale_min", c.scale_min},
          {"scale_max", c.scale_max},
          {"placement_retries", c.placement_retries},
          {"asset_source", c.asset_source},
          {"geometry_format", std::string(to_string(c.geometry_format))}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::InvalidArgument, "config must be a JSON object");
  PipelineConfig c;
  const nlohmann::json defaults = to_json(c);
  for (const auto& [key, value] : doc.items()) {
    if (key == "config_hash") continue;
    if (!defaults.contains(key)) {
      throw Error(ErrorKind::InvalidArgument, "config: unknown key '" + key + "'");
    }
  }
  auto get = [&](const char* key, auto& field) {
    if (!doc.contains(key)) return;
    try {
      doc.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorKind::InvalidArgument, std::string("config: bad value for '") + key + "'");
    }
  };
  get("seed", c.seed);
  get("n_scenes", c.n_scenes);
  get("n_objects", c.n_objects);
  get("epsilon", c.epsilon);
  get("instances_per_category", c.instances_per_category);
  get("seed_count", c.seed_count);
  get("theta", c.theta);
  get("tau", c.tau);
  get("lambda_pts", c.lambda_pts);
  get("lambda_rec", c.lambda_rec);
  get("grid_side", c.grid_side);
  get("grid_extent", c.grid_extent);
  get("encoder_hidden", c.encoder_hidden);
  get("feature_dim", c.feature_dim);
  get("projection_dim", c.projection_dim);
  get("decoder_hidden", c.decoder_hidden);
  get("decoder_seeds", c.decoder_seeds);
  get("batch_size", c.batch_size);
  get("points_per_object", c.points_per_object);
  get("occlusion", c.occlusion);
  get("floor_slab", c.floor_slab);
  get("full_rotation", c.full_rotation);
  get("scale_min", c.scale_min);
  get("scale_max", c.scale_max);
  get("placement_retries", c.placement_retries);
  get("asset_source", c.asset_source);
  std::string format(to_string(c.geometry_format));
  get("geometry_format", format);
  c.geometry_format = parse_cloud_format(format);
  return c;
}

std::string config_hash(const PipelineConfig& config) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : to_json(config).dump()) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t pair_seed(std::uint64_t master, std::size_t pair_index) {
  return derive_seed(master, pair_index);
}

nlohmann::json to_json(const DatasetSummary& s, const SceneDistribution& dist) {
  nlohmann::json scenes, categories;
  for (std::size_t i = 0; i < s.scene_histogram.size(); ++i) {
    scenes[dist.scene_labels()[i]] = s.scene_histogram[i];
  }
  for (std::size_t i = 0; i < s.category_histogram.size(); ++i) {
    categories[dist.category_labels()[i]] = s.category_histogram[i];
  }
  return {{"pairs", s.pairs},
          {"placement_failures", s.placement_failures},
          {"scene_histogram", scenes},
          {"category_histogram", categories},
          {"mean_occlusion_fraction", s.mean_occlusion_fraction},
          {"mean_matches", s.mean_matches}};
}

DatasetSummary generate_dataset(const PipelineConfig& config, const SceneDistribution& base,
                                std::ostream* log) {
  config.validate();
  const fs::path& root = config.output_dir;
  if (root.empty()) throw Error(ErrorKind::InvalidArgument, "output directory not set");
  if (fs::exists(root) && (!fs::is_directory(root) || !fs::is_empty(root))) {
    throw Error(ErrorKind::InvalidArgument,
                "output directory " + root.string() + " exists and is not empty");
  }
  const SceneDistribution dist = base.with_epsilon(config.epsilon);
  const std::unique_ptr<AssetSource> assets = make_assets(config, dist);
  const std::string hash = config_hash(config);
  try {
    fs::create_directories(root / "pairs");
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorKind::Io, "cannot create " + root.string() + ": " + e.what());
  }

  std::vector<PairOutcome> outcomes(config.n_scenes);
  std::atomic<std::size_t> done{0};
  const auto n = static_cast<std::ptrdiff_t>(config.n_scenes);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto index = static_cast<std::size_t>(i);
    try {
      outcomes[index] = generate_pair(config, dist, *assets, hash, index,
                                      root / "pairs" / pair_dir_name(index));
    } catch (...) {
      outcomes[index].error = std::current_exception();
    }
    const std::size_t finished = ++done;
    if (log && (finished == config.n_scenes || finished % 10 == 0)) {
#pragma omp critical(grl_generate_log)
      *log << "generated " << finished << "/" << config.n_scenes << " pairs\n";
    }
  }
  for (const PairOutcome& o : outcomes) {
    if (o.error) std::rethrow_exception(o.error);
  }

  DatasetSummary summary;
  summary.pairs = config.n_scenes;
  summary.scene_histogram.assign(dist.num_scene_types(), 0);
  summary.category_histogram.assign(dist.num_categories(), 0);
  double occlusion_sum = 0.0;
  std::size_t occlusion_count = 0;
  std::size_t matches = 0;
  for (const PairOutcome& o : outcomes) {
    summary.placement_failures += o.failures;
    ++summary.scene_histogram[o.scene_type];
    for (std::size_t c : o.categories) ++summary.category_histogram[c];
    occlusion_sum += o.occlusion_sum;
    occlusion_count += o.occlusion_count;
    matches += o.matches;
  }
  summary.mean_occlusion_fraction =
      occlusion_count ? occlusion_sum / static_cast<double>(occlusion_count) : 0.0;
  summary.mean_matches = static_cast<double>(matches) / static_cast<double>(summary.pairs);

  nlohmann::json config_doc = to_json(config);
  config_doc["config_hash"] = hash;
  write_json(root / "config.json", config_doc);
  write_json(root / "distribution.json", to_json(dist));
  write_json(root / "summary.json", to_json(summary, dist));
  if (log) {
    *log << "pairs: " << summary.pairs << ", placement failures: " << summary.placement_failures
         << ", mean occlusion fraction: " << summary.mean_occlusion_fraction
         << ", mean matches: " << summary.mean_matches << "\n";
  }
  return summary;
}

std::string validate_manifest(const nlohmann::json& m) {
  auto has = [&](const nlohmann::json& obj, const char* key, auto check) {
    return obj.is_object() && obj.contains(key) && check(obj.at(key));
  };
  auto is_uint = [](const nlohmann::json& v) { return v.is_number_unsigned(); };
  auto is_str = [](const nlohmann::json& v) { return v.is_string(); };
  auto is_obj = [](const nlohmann::json& v) { return v.is_object(); };
  auto is_arr = [](const nlohmann::json& v) { return v.is_array(); };
  auto numbers = [](std::size_t n) {
    return [n](const nlohmann::json& v) {
      return v.is_array() && v.size() == n &&
             std::all_of(v.begin(), v.end(), [](const nlohmann::json& x) { return x.is_number(); });
    };
  };
  if (!m.is_object()) return "manifest is not an object";
  if (m.value("format", "") != kManifestFormat) return "format must be " + std::string(kManifestFormat);
  for (const char* key : {"pair_id", "pair_seed", "scene_seed", "scene_type_id"}) {
    if (!has(m, key, is_uint)) return std::string("missing or non-integer '") + key + "'";
  }
  for (const char* key : {"config_hash", "scene_type"}) {
    if (!has(m, key, is_str)) return std::string("missing string '") + key + "'";
  }
  if (!has(m, "scenes", is_obj)) return "missing 'scenes'";
  for (const char* side : {"a", "b"}) {
    if (!has(m.at("scenes"), side, is_obj)) return std::string("missing scene '") + side + "'";
    const nlohmann::json& s = m.at("scenes").at(side);
    for (const char* key : {"complete", "occluded"}) {
      if (!has(s, key, is_str)) return std::string("scene ") + side + ": missing '" + key + "'";
    }
    for (const char* key : {"num_points", "num_occluded_points", "floor_points"}) {
      if (!has(s, key, is_uint)) return std::string("scene ") + side + ": missing '" + key + "'";
    }
    if (!has(s, "objects", is_arr)) return std::string("scene ") + side + ": missing 'objects'";
    if (!has(s, "occlusion", is_obj)) return std::string("scene ") + side + ": missing 'occlusion'";
    for (const auto& obj : s.at("objects")) {
      for (const char* key : {"category_id", "instance_id", "num_points", "num_occluded_points"}) {
        if (!has(obj, key, is_uint)) return std::string("scene ") + side + ": object missing '" + key + "'";
      }
      if (!has(obj, "category", is_str)) return std::string("scene ") + side + ": object missing 'category'";
      if (!has(obj, "transform", is_obj)) return std::string("scene ") + side + ": object missing 'transform'";
      const nlohmann::json& t = obj.at("transform");
      if (!has(t, "rotation", numbers(9)) || !has(t, "translation", numbers(3)) ||
          !has(t, "scale", [](const nlohmann::json& v) { return v.is_number() && v.get<double>() > 0.0; })) {
        return std::string("scene ") + side + ": object transform needs rotation[9], translation[3], scale > 0";
      }
    }
  }
  if (!has(m, "seeds", is_obj) || !has(m.at("seeds"), "a", is_arr) || !has(m.at("seeds"), "b", is_arr)) {
    return "missing 'seeds'";
  }
  if (!has(m, "matches", is_obj) || !has(m.at("matches"), "theta", [](const nlohmann::json& v) {
        return v.is_number();
      }) || !has(m.at("matches"), "pairs", is_arr)) {
    return "missing 'matches' {theta, pairs}";
  }
  return {};
}

Dataset open_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw Error(ErrorKind::InvalidArgument, root.string() + " is not a directory");
  }
  if (!fs::exists(root / "config.json")) {
    throw Error(ErrorKind::InvalidArgument, root.string() + " has no config.json");
  }
  const nlohmann::json config_doc = read_json(root / "config.json");
  Dataset ds{root, pipeline_config_from_json(config_doc), {},
             load_distribution(root / "distribution.json"), {}};
  ds.config.output_dir = root;
  ds.hash = config_hash(ds.config);
  if (config_doc.value("config_hash", "") != ds.hash) {
    throw Error(ErrorKind::CorruptManifest, root.string() + "/config.json: config hash mismatch");
  }
  if (fs::is_directory(root / "pairs")) {
    for (const auto& entry : fs::directory_iterator(root / "pairs")) {
      if (entry.is_directory() && entry.path().filename().string().starts_with("pair_")) {
        ds.pair_dirs.push_back(entry.path());
      }
    }
  }
  std::sort(ds.pair_dirs.begin(), ds.pair_dirs.end());
  if (ds.pair_dirs.empty()) {
    throw Error(ErrorKind::InvalidArgument, root.string() + " contains no pair manifests");
  }
  return ds;
}

namespace {

SceneInstance scene_from_cloud(PointCloud points, const nlohmann::json& scene_doc,
                               std::size_t scene_type, bool occluded) {
  SceneInstance scene;
  scene.scene_type_id = scene_type;
  const char* count_key = occluded ? "num_occluded_points" : "num_points";
  if (points.size() != scene_doc.at(count_key).get<std::size_t>()) {
    throw Error(ErrorKind::DimensionMismatch, "point count does not match the manifest");
  }
  std::size_t offset = 0;
  int k = 0;
  for (const auto& obj_doc : scene_doc.at("objects")) {
    ObjectInstance obj;
    obj.category_id = obj_doc.at("category_id").get<std::size_t>();
    obj.instance_id = obj_doc.at("instance_id").get<std::size_t>();
    obj.transform = transform_from_json(obj_doc.at("transform"));
    const auto n = obj_doc.at(count_key).get<std::size_t>();
    if (offset + n > points.size()) {
      throw Error(ErrorKind::DimensionMismatch, "object point counts exceed the cloud");
    }
    for (std::size_t i = offset; i < offset + n; ++i) {
      obj.canonical_points.push_back(obj.transform.apply_inverse(points[i]));
      scene.labels.push_back(k);
    }
    offset += n;
    scene.objects.push_back(std::move(obj));
    ++k;
  }
  const auto floor = scene_doc.at("floor_points").get<std::size_t>();
  if (offset + floor != points.size()) {
    throw Error(ErrorKind::DimensionMismatch, "object and floor counts do not add up");
  }
  scene.floor_points.assign(points.begin() + static_cast<std::ptrdiff_t>(offset), points.end());
  scene.labels.insert(scene.labels.end(), floor, kBackground);
  scene.points = std::move(points);
  return scene;
}

void check_matches(const MatchSet& matches, const SceneInstance& a, const SceneInstance& b) {
  for (const Match& m : matches.pairs) {
    if (m.a_index >= a.points.size() || m.b_index >= b.points.size() ||
        a.labels[m.a_index] != m.object || b.labels[m.b_index] != m.object ||
        !(m.distance < matches.theta)) {
      throw Error(ErrorKind::InvalidArgument, "match entry inconsistent with the scenes");
    }
  }
}

}  // namespace

PairData Dataset::load_pair(std::size_t index) const {
  const fs::path dir = pair_dirs.at(index);
  const std::string id = dir.filename().string();
  try {
    const nlohmann::json m = read_json(dir / "manifest.json");
    if (const std::string problem = validate_manifest(m); !problem.empty()) {
      throw Error(ErrorKind::InvalidArgument, problem);
    }
    if (m.at("config_hash").get<std::string>() != hash) {
      throw Error(ErrorKind::InvalidArgument, "config hash does not match the dataset config");
    }
    PairData pair;
    pair.pair_id = m.at("pair_id").get<std::size_t>();
    pair.pair_seed = m.at("pair_seed").get<std::uint64_t>();
    const auto scene_type = m.at("scene_type_id").get<std::size_t>();
    if (scene_type >= distribution.num_scene_types()) {
      throw Error(ErrorKind::InvalidArgument, "scene_type_id out of range");
    }
    std::array<SceneInstance*, 2> complete{&pair.complete.scene_a, &pair.complete.scene_b};
    std::array<SceneInstance*, 2> occluded{&pair.occluded.scene_a, &pair.occluded.scene_b};
    const std::array<std::string, 2> sides{"a", "b"};
    for (std::size_t side = 0; side < 2; ++side) {
      const nlohmann::json& s = m.at("scenes").at(sides[side]);
      const fs::path complete_path = dir / s.at("complete").get<std::string>();
      const fs::path occluded_path = dir / s.at("occluded").get<std::string>();
      for (const fs::path& p : {complete_path, occluded_path}) {
        if (!fs::exists(p)) throw Error(ErrorKind::InvalidArgument, "missing file " + p.string());
      }
      *complete[side] = scene_from_cloud(load_point_cloud(complete_path), s, scene_type, false);
      *occluded[side] = scene_from_cloud(load_point_cloud(occluded_path), s, scene_type, true);
      pair.occlusion[side] = occlusion_from_json(s.at("occlusion"));
    }
    pair.seeds_a = seeds_from_indices(pair.occluded.scene_a,
                                      m.at("seeds").at("a").get<std::vector<std::size_t>>());
    pair.seeds_b = seeds_from_indices(pair.occluded.scene_b,
                                      m.at("seeds").at("b").get<std::vector<std::size_t>>());
    pair.matches = matches_from_json(m.at("matches"));
    check_matches(pair.matches, pair.occluded.scene_a, pair.occluded.scene_b);
    return pair;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::CorruptManifest) throw;
    throw Error(ErrorKind::CorruptManifest, id + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptManifest, id + ": " + e.what());
  }
}

LossEvaluation evaluate_losses(const Dataset& dataset, const Model& model, const LossConfig& loss,
                               std::size_t batch_size, std::ostream* jsonl) {
  if (batch_size == 0) throw Error(ErrorKind::InvalidArgument, "batch size must be positive");
  const std::size_t n_pairs = dataset.pair_dirs.size();
  const std::size_t n_batches = (n_pairs + batch_size - 1) / batch_size;
  const int u = model.config().decoder.grid_side;
  LossEvaluation out;
  out.reports.resize(n_batches);
  std::vector<std::vector<std::size_t>> ids(n_batches);
  std::vector<std::exception_ptr> errors(n_batches);
  const auto nb = static_cast<std::ptrdiff_t>(n_batches);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    const auto bi = static_cast<std::size_t>(b);
    try {
      std::vector<TrainingSample> batch;
      for (std::size_t i = bi * batch_size; i < std::min(n_pairs, (bi + 1) * batch_size); ++i) {
        PairData pair = dataset.load_pair(i);
        ids[bi].push_back(pair.pair_id);
        batch.push_back(prepare_sample(pair.complete, pair.occluded, std::move(pair.matches),
                                       loss.decoder_seeds, u, derive_seed(pair.pair_seed, 10)));
      }
      out.reports[bi] = evaluate(batch, model, loss, false).report;
    } catch (...) {
      errors[bi] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  LossReport& mean = out.mean;
  for (std::size_t b = 0; b < n_batches; ++b) {
    const LossReport& r = out.reports[b];
    if (jsonl) {
      nlohmann::json line = to_json(r);
      line["batch"] = b;
      line["pair_ids"] = ids[b];
      *jsonl << line.dump() << '\n';
    }
    const double w = 1.0 / static_cast<double>(n_batches);
    mean.l_obj += w * r.l_obj;
    mean.l_pts += w * r.l_pts;
    mean.l_rec_coarse += w * r.l_rec_coarse;
    mean.l_rec_detail += w * r.l_rec_detail;
    mean.num_instances += r.num_instances;
    mean.num_matches += r.num_matches;
    mean.num_object_negatives += r.num_object_negatives;
    mean.num_point_negatives += r.num_point_negatives;
  }
  mean.l_overall = overall_loss(mean.l_obj, mean.l_pts, mean.l_rec_coarse + mean.l_rec_detail,
                                loss.lambda_pts, loss.lambda_rec);
  return out;
}

}  // namespace grl
