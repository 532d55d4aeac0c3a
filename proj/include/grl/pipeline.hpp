#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grl/catalog.hpp"
#include "grl/correspondence.hpp"
#include "grl/model.hpp"
#include "grl/occlusion.hpp"
#include "grl/pointcloud_io.hpp"

namespace grl {

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::size_t n_scenes = 10;
  std::size_t n_objects = 12;
  double epsilon = 0.1;
  std::size_t instances_per_category = 10;
  std::size_t seed_count = kDefaultSeedCount;  // M
  double theta = kDefaultMatchThreshold;
  double tau = kDefaultTemperature;
  double lambda_pts = kDefaultLambdaPts;
  double lambda_rec = kDefaultLambdaRec;
  int grid_side = kDefaultGridSide;  // u
  double grid_extent = kDefaultGridExtent;
  Eigen::Index encoder_hidden = 64;
  Eigen::Index feature_dim = 32;     // s
  Eigen::Index projection_dim = 128; // d
  Eigen::Index decoder_hidden = 64;
  std::size_t decoder_seeds = 256;
  std::size_t batch_size = 2;
  std::size_t points_per_object = 256;
  bool occlusion = true;
  bool floor_slab = false;
  bool full_rotation = false;
  double scale_min = 0.9;
  double scale_max = 1.1;
  int placement_retries = 16;
  std::string asset_source = "procedural";  // or a directory of per-instance clouds
  CloudFormat geometry_format = CloudFormat::BinaryF32;
  std::filesystem::path output_dir;  // not part of the hash

  /// Throws InvalidArgument naming the first field out of range.
  void validate() const;

  LayoutParams layout() const;
  ModelConfig model() const;
  LossConfig loss() const;
};

/// Every field except output_dir; keys sorted, so the dump is canonical.
nlohmann::json to_json(const PipelineConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig pipeline_config_from_json(const nlohmann::json& doc);
/// FNV-1a 64 of the canonical JSON dump, as 16 lowercase hex digits.
std::string config_hash(const PipelineConfig& config);

/// Seed of pair i: derive_seed(master, i). Within a pair, stream r of
/// derive_seed(pair_seed, r) feeds: 3/4 occlusion of A/B, 5/6 FPS seeds of
/// A/B, 10.. decoder seeds and targets, 16 + attempt scene realization.
std::uint64_t pair_seed(std::uint64_t master, std::size_t pair_index);

struct DatasetSummary {
  std::size_t pairs = 0;
  std::size_t placement_failures = 0;  // failed realization attempts, all retried
  std::vector<std::size_t> scene_histogram;
  std::vector<std::size_t> category_histogram;  // over both scenes of every pair
  double mean_occlusion_fraction = 0.0;
  double mean_matches = 0.0;
};

nlohmann::json to_json(const DatasetSummary& summary, const SceneDistribution& dist);

/// Writes config.json, distribution.json, summary.json and
/// pairs/pair_NNNNNN/{manifest.json, a_complete, a_occluded, b_complete,
/// b_occluded}. The output directory must be absent or empty. Progress
/// lines go to `log` when given.
DatasetSummary generate_dataset(const PipelineConfig& config, const SceneDistribution& dist,
                                std::ostream* log = nullptr);

/// One pair rebuilt from its manifest and geometry files.
struct PairData {
  std::size_t pair_id = 0;
  std::uint64_t pair_seed = 0;
  ScenePair complete;
  ScenePair occluded;
  std::array<OcclusionRecord, 2> occlusion;
  SeedSet seeds_a;
  SeedSet seeds_b;
  MatchSet matches;
};

struct Dataset {
  std::filesystem::path root;
  PipelineConfig config;
  std::string hash;
  SceneDistribution distribution;
  std::vector<std::filesystem::path> pair_dirs;

  /// Throws CorruptManifest (with the pair id) on any schema, file or hash
  /// violation.
  PairData load_pair(std::size_t index) const;
};

/// Reads config.json and distribution.json and lists the pair directories.
/// A directory without pairs is InvalidArgument.
Dataset open_dataset(const std::filesystem::path& root);

/// Checks one manifest against the schema; returns the error message, empty
/// when valid.
std::string validate_manifest(const nlohmann::json& manifest);

struct LossEvaluation {
  std::vector<LossReport> reports;  // one per batch
  LossReport mean;                  // scalar fields averaged over batches
};

/// Batches consecutive pairs (config.batch_size) and evaluates every loss.
/// Each report is written to `jsonl` as one JSON line when given.
LossEvaluation evaluate_losses(const Dataset& dataset, const Model& model, const LossConfig& loss,
                               std::size_t batch_size, std::ostream* jsonl = nullptr);

}  // namespace grl
