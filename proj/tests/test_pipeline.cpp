#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <fstream>
#include <iterator>
#include <sstream>

#include "grl/decoder.hpp"
#include "grl/error.hpp"
#include "grl/pipeline.hpp"
#include "grl/rng.hpp"
#include "test_util.hpp"

using namespace grl;
namespace fs = std::filesystem;

namespace {

PipelineConfig small_config(const fs::path& out) {
  PipelineConfig c;
  c.seed = 11;
  c.n_scenes = 4;
  c.n_objects = 4;
  c.points_per_object = 48;
  c.seed_count = 24;
  c.decoder_seeds = 12;
  c.encoder_hidden = 8;
  c.feature_dim = 6;
  c.projection_dim = 8;
  c.decoder_hidden = 8;
  c.output_dir = out;
  return c;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_bytes(p)); }

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(1); }

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

}  // namespace

TEST(Seeds, SplitMixConstants) {
  // First output of splitmix64 seeded with 0.
  EXPECT_EQ(mix64(0), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(derive_seed(5, 2), mix64(5 ^ mix64(2)));
  EXPECT_EQ(pair_seed(7, 3), derive_seed(7, 3));
  EXPECT_NE(pair_seed(7, 3), pair_seed(7, 4));
}

TEST(PipelineConfig, JsonRoundTripAndHash) {
  PipelineConfig c = small_config("/tmp/a");
  c.geometry_format = CloudFormat::AsciiPly;
  c.full_rotation = true;
  const nlohmann::json j = to_json(c);
  EXPECT_FALSE(j.contains("output_dir"));
  const PipelineConfig back = pipeline_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);

  PipelineConfig moved = c;
  moved.output_dir = "/elsewhere";
  EXPECT_EQ(config_hash(moved), config_hash(c));
  PipelineConfig changed = c;
  changed.theta = 0.2;
  EXPECT_NE(config_hash(changed), config_hash(c));

  nlohmann::json with_hash = j;
  with_hash["config_hash"] = "ignored";
  EXPECT_NO_THROW(pipeline_config_from_json(with_hash));
  nlohmann::json unknown = j;
  unknown["bogus"] = 1;
  EXPECT_THROW(pipeline_config_from_json(unknown), Error);
  nlohmann::json bad = j;
  bad["n_scenes"] = "many";
  EXPECT_THROW(pipeline_config_from_json(bad), Error);
  EXPECT_EQ(pipeline_config_from_json(nlohmann::json::object()).n_scenes, PipelineConfig{}.n_scenes);
}

TEST(PipelineConfig, Validation) {
  const auto bad = [](auto mutate) {
    PipelineConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), Error);
  };
  bad([](PipelineConfig& c) { c.n_scenes = 0; });
  bad([](PipelineConfig& c) { c.epsilon = 1.5; });
  bad([](PipelineConfig& c) { c.theta = 0.0; });
  bad([](PipelineConfig& c) { c.tau = -1.0; });
  bad([](PipelineConfig& c) { c.grid_side = 0; });
  bad([](PipelineConfig& c) { c.points_per_object = 4; });
  bad([](PipelineConfig& c) { c.scale_min = 2.0; });
  bad([](PipelineConfig& c) { c.batch_size = 0; });
  EXPECT_NO_THROW(PipelineConfig{}.validate());
}

TEST(Generate, DeterministicByteIdentical) {
  const auto root = test::temp_dir("gen_det");
  generate_dataset(small_config(root / "one"), load_default_scannet_parameters());
  generate_dataset(small_config(root / "two"), load_default_scannet_parameters());
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "one")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root / "one");
    EXPECT_EQ(read_bytes(e.path()), read_bytes(root / "two" / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 3u + 4u * 5u);

  PipelineConfig other = small_config(root / "three");
  other.seed = 12;
  generate_dataset(other, load_default_scannet_parameters());
  EXPECT_NE(read_bytes(root / "one/pairs/pair_000000/a_complete.bin"),
            read_bytes(root / "three/pairs/pair_000000/a_complete.bin"));
}

TEST(Generate, ManifestsValidateAndReload) {
  const auto root = test::temp_dir("gen_reload");
  PipelineConfig c = small_config(root / "ds");
  const DatasetSummary summary = generate_dataset(c, load_default_scannet_parameters());
  EXPECT_EQ(summary.pairs, 4u);
  const Dataset ds = open_dataset(root / "ds");
  EXPECT_EQ(ds.hash, config_hash(c));
  ASSERT_EQ(ds.pair_dirs.size(), 4u);
  double matches = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const nlohmann::json m = read_json(ds.pair_dirs[i] / "manifest.json");
    EXPECT_EQ(validate_manifest(m), "");
    EXPECT_EQ(m["config_hash"], ds.hash);
    const PairData p = ds.load_pair(i);
    EXPECT_EQ(p.pair_id, i);
    EXPECT_EQ(p.pair_seed, pair_seed(c.seed, i));
    EXPECT_EQ(p.complete.scene_a.objects.size(), 4u);
    EXPECT_EQ(p.complete.scene_a.points.size(), 4u * 48u);
    EXPECT_LE(p.occluded.scene_a.points.size(), p.complete.scene_a.points.size());
    EXPECT_EQ(p.complete.scene_a.scene_type_id, p.complete.scene_b.scene_type_id);
    for (const auto& pr : p.matches.pairs) {
      const int la = p.occluded.scene_a.labels[pr.a_index];
      EXPECT_EQ(la, p.occluded.scene_b.labels[pr.b_index]);
      EXPECT_EQ(la, pr.object);
    }
    matches += static_cast<double>(p.matches.pairs.size());
  }
  EXPECT_DOUBLE_EQ(summary.mean_matches, matches / 4.0);
  const nlohmann::json s = read_json(root / "ds/summary.json");
  EXPECT_EQ(s["pairs"], 4);
  EXPECT_EQ(read_json(root / "ds/config.json")["config_hash"], ds.hash);
}

TEST(Generate, RejectsNonEmptyOutput) {
  const auto root = test::temp_dir("gen_nonempty");
  std::ofstream(root / "keep.txt") << "x";
  EXPECT_EQ(kind_of([&] { generate_dataset(small_config(root), load_default_scannet_parameters()); }),
            ErrorKind::InvalidArgument);
  PipelineConfig no_dir = small_config("");
  EXPECT_THROW(generate_dataset(no_dir, load_default_scannet_parameters()), Error);
}

TEST(Dataset, OpenErrors) {
  const auto root = test::temp_dir("open_errors");
  EXPECT_EQ(kind_of([&] { open_dataset(root); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([&] { open_dataset(root / "missing"); }), ErrorKind::InvalidArgument);
}

TEST(Dataset, TamperingIsDetected) {
  const auto root = test::temp_dir("tamper");
  generate_dataset(small_config(root / "ds"), load_default_scannet_parameters());

  nlohmann::json config = read_json(root / "ds/config.json");
  config["theta"] = 0.5;
  write_json(root / "ds/config.json", config);
  EXPECT_EQ(kind_of([&] { open_dataset(root / "ds"); }), ErrorKind::CorruptManifest);
  config["theta"] = kDefaultMatchThreshold;
  write_json(root / "ds/config.json", config);
  const Dataset ds = open_dataset(root / "ds");

  const fs::path m0 = ds.pair_dirs[0] / "manifest.json";
  nlohmann::json manifest = read_json(m0);
  manifest["scenes"]["a"]["num_points"] = 3;
  write_json(m0, manifest);
  try {
    ds.load_pair(0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CorruptManifest);
    EXPECT_NE(std::string(e.what()).find("pair_000000"), std::string::npos) << e.what();
  }

  manifest = read_json(ds.pair_dirs[1] / "manifest.json");
  manifest["matches"]["pairs"][0]["object_id"] = 99;
  write_json(ds.pair_dirs[1] / "manifest.json", manifest);
  EXPECT_EQ(kind_of([&] { ds.load_pair(1); }), ErrorKind::CorruptManifest);

  fs::remove(ds.pair_dirs[2] / "b_occluded.bin");
  EXPECT_EQ(kind_of([&] { ds.load_pair(2); }), ErrorKind::CorruptManifest);

  std::ofstream(ds.pair_dirs[3] / "manifest.json") << "{";
  EXPECT_EQ(kind_of([&] { ds.load_pair(3); }), ErrorKind::CorruptManifest);
}

TEST(Schema, ManifestValidator) {
  const auto root = test::temp_dir("schema");
  generate_dataset(small_config(root / "ds"), load_default_scannet_parameters());
  const nlohmann::json good = read_json(root / "ds/pairs/pair_000000/manifest.json");
  ASSERT_EQ(validate_manifest(good), "");
  for (const char* key : {"format", "pair_id", "pair_seed", "scenes", "matches", "seeds"}) {
    nlohmann::json m = good;
    m.erase(key);
    EXPECT_NE(validate_manifest(m), "") << key;
  }
  nlohmann::json m = good;
  m["format"] = "other";
  EXPECT_NE(validate_manifest(m), "");
  m = good;
  m["scenes"]["b"]["objects"][0]["transform"]["rotation"] = {1, 0, 0};
  EXPECT_NE(validate_manifest(m), "");
  EXPECT_NE(validate_manifest(nlohmann::json::array()), "");
}

TEST(Generate, SceneTypeFrequencies) {
  const auto root = test::temp_dir("scene_freq");
  PipelineConfig c = small_config(root / "ds");
  c.n_scenes = 1000;
  c.n_objects = 1;
  c.points_per_object = 8;
  c.seed_count = 4;
  c.occlusion = false;
  const SceneDistribution dist = load_default_scannet_parameters();
  const DatasetSummary s = generate_dataset(c, dist);
  for (std::size_t t = 0; t < dist.num_scene_types(); ++t) {
    const double freq = static_cast<double>(s.scene_histogram[t]) / 1000.0;
    EXPECT_NEAR(freq, dist.scene_prior()[t], 0.025) << dist.scene_labels()[t];
  }
}

TEST(Generate, FullExplorationIsUniformOverCategories) {
  const auto root = test::temp_dir("eps_one");
  PipelineConfig c = small_config(root / "ds");
  c.n_scenes = 300;
  c.n_objects = 10;
  c.points_per_object = 8;
  c.seed_count = 4;
  c.epsilon = 1.0;
  c.occlusion = false;
  const SceneDistribution dist = load_default_scannet_parameters();
  const DatasetSummary s = generate_dataset(c, dist);
  // Both scenes of a pair share the draws, so every draw is counted twice.
  const double draws = 3000.0;
  const double k = static_cast<double>(dist.num_categories());
  const double mean = draws / k;
  const double sigma = std::sqrt(draws * (1.0 / k) * (1.0 - 1.0 / k));
  for (std::size_t j = 0; j < dist.num_categories(); ++j) {
    ASSERT_EQ(s.category_histogram[j] % 2, 0u);
    EXPECT_NEAR(static_cast<double>(s.category_histogram[j] / 2), mean, 3.0 * sigma)
        << dist.category_labels()[j];
  }
}

TEST(EvaluateLosses, ZeroModelReconstructionMatchesChamferOracle) {
  const auto root = test::temp_dir("zero_rec");
  PipelineConfig c = small_config(root / "ds");
  c.grid_side = 2;
  generate_dataset(c, load_default_scannet_parameters());
  const Dataset ds = open_dataset(root / "ds");
  const Model zero(c.model());
  const LossConfig loss = c.loss();
  const LossEvaluation ev = evaluate_losses(ds, zero, loss, 4);
  ASSERT_EQ(ev.reports.size(), 1u);

  // With every weight zero the coarse points are the decoder seeds and each
  // fine patch collapses onto its seed.
  double coarse = 0.0, detail = 0.0;
  for (std::size_t i = 0; i < ds.pair_dirs.size(); ++i) {
    const PairData p = ds.load_pair(i);
    const std::uint64_t s = derive_seed(p.pair_seed, 10);
    const std::array<const SceneInstance*, 2> occ{&p.occluded.scene_a, &p.occluded.scene_b};
    const std::array<const SceneInstance*, 2> full{&p.complete.scene_a, &p.complete.scene_b};
    for (std::size_t side = 0; side < 2; ++side) {
      const std::size_t n =
          std::min({c.decoder_seeds, occ[side]->points.size(), full[side]->points.size() / 4});
      const auto idx = farthest_point_sample(occ[side]->points, n, derive_seed(s, 10 + side));
      PointCloud seeds;
      for (std::size_t k : idx) seeds.push_back(occ[side]->points[k]);
      const ReconstructionTargets t = build_targets(*full[side], n, 2, derive_seed(s, 20 + side));
      PointCloud repeated;
      for (const Vec3& q : seeds) repeated.insert(repeated.end(), 4, q);
      coarse += test::brute_chamfer(seeds, t.gt_coarse);
      detail += test::brute_chamfer(repeated, t.gt_detail);
    }
  }
  const double scenes = 2.0 * static_cast<double>(ds.pair_dirs.size());
  EXPECT_NEAR(ev.reports[0].l_rec_coarse, coarse / scenes, 1e-12);
  EXPECT_NEAR(ev.reports[0].l_rec_detail, detail / scenes, 1e-12);
}

TEST(EvaluateLosses, ReportsRecomposeAndStream) {
  const auto root = test::temp_dir("eval_stream");
  PipelineConfig c = small_config(root / "ds");
  c.n_scenes = 5;
  generate_dataset(c, load_default_scannet_parameters());
  const Dataset ds = open_dataset(root / "ds");
  const Model model = Model::random(c.model(), 3);
  std::ostringstream jsonl;
  const LossEvaluation ev = evaluate_losses(ds, model, c.loss(), 2, &jsonl);
  ASSERT_EQ(ev.reports.size(), 3u);
  std::istringstream lines(jsonl.str());
  std::string line;
  std::size_t count = 0;
  for (const LossReport& r : ev.reports) {
    EXPECT_NEAR(r.l_overall, r.l_obj + 0.1 * r.l_pts + 100.0 * (r.l_rec_coarse + r.l_rec_detail),
                1e-12);
    ASSERT_TRUE(std::getline(lines, line));
    const nlohmann::json j = nlohmann::json::parse(line);
    EXPECT_EQ(j["batch"], count);
    EXPECT_DOUBLE_EQ(j["l_overall"].get<double>(), r.l_overall);
    ++count;
  }
  EXPECT_EQ(nlohmann::json::parse(jsonl.str().substr(jsonl.str().rfind('{')))["pair_ids"],
            nlohmann::json({4}));
  const LossEvaluation again = evaluate_losses(ds, model, c.loss(), 2);
  for (std::size_t b = 0; b < 3; ++b) EXPECT_TRUE(again.reports[b] == ev.reports[b]);
  EXPECT_THROW(evaluate_losses(ds, model, c.loss(), 0), Error);
}
