#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "grl/catalog.hpp"
#include "grl/error.hpp"
#include "grl/gradcheck.hpp"
#include "grl/pipeline.hpp"
#include "grl/rng.hpp"

namespace {

using grl::Error;
using grl::ErrorKind;

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::InvalidArgument, path + ": " + e.what());
  }
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path);
}

grl::CategoryTable table_from_json(const nlohmann::json& doc, const std::string& where) {
  try {
    grl::CategoryTable t{doc.at("labels").get<std::vector<std::string>>(),
                         doc.at("counts").get<std::vector<std::uint64_t>>()};
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, where + ": " + e.what());
  }
}

// Options that mirror PipelineConfig fields. Each binds into `flags`; only
// the ones given on the command line override the --config file.
struct ConfigFlags {
  grl::PipelineConfig flags;
  std::string format = "binary-f32";
  std::vector<std::pair<CLI::Option*, std::string>> bound;

  template <typename T>
  void add(CLI::App& app, const std::string& key, T& field, const std::string& help) {
    std::string name = "--" + key;
    std::replace(name.begin(), name.end(), '_', '-');
    bound.emplace_back(app.add_option(name, field, help), key);
  }

  void add_flag(CLI::App& app, const std::string& key, bool& field, const std::string& help) {
    std::string name = "--" + key;
    std::replace(name.begin(), name.end(), '_', '-');
    bound.emplace_back(app.add_flag(name + ",!--no-" + name.substr(2), field, help), key);
  }

  void add_all(CLI::App& app) {
    auto& f = flags;
    add(app, "n_scenes", f.n_scenes, "Number of scene pairs");
    add(app, "n_objects", f.n_objects, "Objects per scene");
    add(app, "epsilon", f.epsilon, "Epsilon-greedy mixing weight");
    add(app, "instances_per_category", f.instances_per_category, "Instances per category");
    add(app, "seed_count", f.seed_count, "FPS seed points per scene (M)");
    add(app, "theta", f.theta, "Match distance threshold");
    add(app, "tau", f.tau, "InfoNCE temperature");
    add(app, "lambda_pts", f.lambda_pts, "Weight of the point-level loss");
    add(app, "lambda_rec", f.lambda_rec, "Weight of the reconstruction loss");
    add(app, "grid_side", f.grid_side, "Folding grid side u");
    add(app, "grid_extent", f.grid_extent, "Folding grid half extent");
    add(app, "encoder_hidden", f.encoder_hidden, "Encoder hidden width");
    add(app, "feature_dim", f.feature_dim, "Encoder feature dimension s");
    add(app, "projection_dim", f.projection_dim, "Projection dimension d");
    add(app, "decoder_hidden", f.decoder_hidden, "Decoder hidden width");
    add(app, "decoder_seeds", f.decoder_seeds, "Decoder seeds per scene (upper bound)");
    add(app, "batch_size", f.batch_size, "Scene pairs per loss batch");
    add(app, "points_per_object", f.points_per_object, "Points per object cloud");
    add_flag(app, "occlusion", f.occlusion, "Simulate occlusion");
    add_flag(app, "floor_slab", f.floor_slab, "Add a floor slab");
    add_flag(app, "full_rotation", f.full_rotation, "Sample full 3D rotations");
    add(app, "scale_min", f.scale_min, "Minimum object scale");
    add(app, "scale_max", f.scale_max, "Maximum object scale");
    add(app, "placement_retries", f.placement_retries, "Layout attempts per pair");
    add(app, "asset_source", f.asset_source, "'procedural' or an asset directory");
    bound.emplace_back(app.add_option("--geometry-format", format, "ascii-ply or binary-f32"),
                       "geometry_format");
  }

  grl::PipelineConfig resolve(nlohmann::json base) {
    const grl::PipelineConfig defaults;
    nlohmann::json given = grl::to_json(flags);
    given["geometry_format"] = format;
    if (base.is_null()) base = grl::to_json(defaults);
    for (const auto& [opt, key] : bound) {
      if (opt->count() > 0) base[key] = given[key];
    }
    return grl::pipeline_config_from_json(base);
  }
};

int run_fit(const std::string& counts_path, bool scannet, std::uint64_t instances, double epsilon,
            const std::string& output) {
  grl::SceneDistribution dist = [&] {
    if (scannet) return grl::load_default_scannet_parameters(instances, epsilon);
    if (counts_path.empty()) {
      throw Error(ErrorKind::InvalidArgument, "either --counts or --scannet is required");
    }
    const nlohmann::json doc = read_json_file(counts_path);
    if (!doc.contains("scenes") || !doc.contains("objects") || !doc.at("objects").is_array()) {
      throw Error(ErrorKind::InvalidArgument,
                  counts_path + ": expected {\"scenes\": {...}, \"objects\": [...]}");
    }
    const grl::CategoryTable scenes = table_from_json(doc.at("scenes"), "/scenes");
    std::vector<grl::CategoryTable> objects;
    for (std::size_t i = 0; i < doc.at("objects").size(); ++i) {
      objects.push_back(table_from_json(doc.at("objects")[i], "/objects/" + std::to_string(i)));
    }
    const std::size_t n_categories = objects.empty() ? 0 : objects.front().labels.size();
    std::vector<std::uint64_t> per_category(n_categories, instances);
    if (doc.contains("instances_per_category")) {
      per_category = doc.at("instances_per_category").get<std::vector<std::uint64_t>>();
    }
    return grl::fit_scene_distribution(scenes, objects, per_category, epsilon);
  }();
  emit(output, grl::to_json(dist).dump(2) + "\n");
  return 0;
}

int run_generate(const grl::PipelineConfig& config, const std::string& distribution_path) {
  const grl::SceneDistribution dist =
      distribution_path.empty()
          ? grl::load_default_scannet_parameters(config.instances_per_category, config.epsilon)
          : grl::load_distribution(distribution_path);
  const grl::DatasetSummary summary = grl::generate_dataset(config, dist, &std::cerr);
  std::cout << grl::to_json(summary, dist.with_epsilon(config.epsilon)).dump(2) << "\n";
  return 0;
}

int run_match(const std::string& dataset_dir, std::size_t pair_index, bool has_theta, double theta,
              bool exact, const std::string& output) {
  const grl::Dataset ds = grl::open_dataset(dataset_dir);
  if (pair_index >= ds.pair_dirs.size()) {
    throw Error(ErrorKind::InvalidArgument, "pair index " + std::to_string(pair_index) +
                                                " out of range (dataset has " +
                                                std::to_string(ds.pair_dirs.size()) + " pairs)");
  }
  const grl::PairData pair = ds.load_pair(pair_index);
  const grl::SeedSet pool = exact ? grl::all_foreground_seeds(pair.occluded.scene_b) : pair.seeds_b;
  const grl::MatchSet matches =
      grl::match_points(pair.occluded, pair.seeds_a, pool, has_theta ? theta : ds.config.theta);
  emit(output, grl::to_json(matches).dump(2) + "\n");
  return 0;
}

int run_losses(const std::string& dataset_dir, const std::string& checkpoint,
               const std::string& report_path, ConfigFlags& overrides,
               std::uint64_t init_seed) {
  const grl::Dataset ds = grl::open_dataset(dataset_dir);
  nlohmann::json base = grl::to_json(ds.config);
  const grl::PipelineConfig config = overrides.resolve(base);
  config.validate();
  const grl::Model model = checkpoint.empty()
                               ? grl::Model::random(config.model(), init_seed)
                               : grl::load_checkpoint(checkpoint);
  std::ostringstream lines;
  const grl::LossEvaluation eval =
      grl::evaluate_losses(ds, model, config.loss(), config.batch_size, &lines);
  if (!report_path.empty()) {
    emit(report_path, lines.str());
  } else {
    std::cout << lines.str();
  }
  const grl::LossReport& m = eval.mean;
  std::cerr << "batches: " << eval.reports.size() << "\n"
            << "mean l_obj: " << m.l_obj << "\n"
            << "mean l_pts: " << m.l_pts << "\n"
            << "mean l_rec_coarse: " << m.l_rec_coarse << "\n"
            << "mean l_rec_detail: " << m.l_rec_detail << "\n"
            << "mean l_overall: " << m.l_overall << "\n";
  return 0;
}

int run_gradcheck(const grl::GradCheckConfig& config, const std::string& report_path) {
  const grl::GradCheckReport report = grl::run_gradcheck(config);
  if (!report_path.empty()) emit(report_path, grl::to_json(report).dump(2) + "\n");
  for (const grl::GradCheckTensor& t : report.tensors) {
    std::cout << t.name << " [" << t.size << "]";
    for (std::size_t l = 0; l < 4; ++l) {
      std::cout << ' ' << grl::kLossNames[l] << '=' << t.max_rel[l];
    }
    std::cout << '\n';
  }
  std::cout << "max relative error:";
  for (std::size_t l = 0; l < 4; ++l) {
    std::cout << ' ' << grl::kLossNames[l] << '=' << report.max_rel[l];
  }
  std::cout << "\ncoordinates: " << report.central << " central, " << report.one_sided
            << " one-sided, " << report.unresolved << " unresolved\n"
            << "time: " << report.seconds << " s\n"
            << (report.passed() ? "PASS" : "FAIL") << '\n';
  return report.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic scene pairs, correspondences and pre-training losses"};
  app.require_subcommand(1);

  auto* fit = app.add_subcommand("fit", "Fit a scene distribution from count tables");
  std::string counts_path, fit_output;
  bool scannet = false;
  std::uint64_t fit_instances = 10;
  double fit_epsilon = 0.1;
  fit->add_option("--counts", counts_path, "JSON with scene and per-scene object counts");
  fit->add_flag("--scannet", scannet, "Use the bundled ScanNet statistics");
  fit->add_option("--instances-per-category", fit_instances, "Instances per category");
  fit->add_option("--epsilon", fit_epsilon, "Epsilon-greedy mixing weight");
  fit->add_option("-o,--output", fit_output, "Output path (default stdout)");

  auto* generate = app.add_subcommand("generate", "Generate a dataset of scene pairs");
  ConfigFlags gen_flags;
  std::uint64_t gen_seed = 0;
  std::string gen_output, gen_config, gen_distribution;
  generate->add_option("--seed", gen_seed, "Master seed")->required();
  generate->add_option("-o,--output", gen_output, "Output directory")->required();
  generate->add_option("--config", gen_config, "PipelineConfig JSON; flags override it");
  generate->add_option("--distribution", gen_distribution,
                       "SceneDistribution JSON (default: bundled ScanNet fit)");
  gen_flags.add_all(*generate);

  auto* match = app.add_subcommand("match", "Recompute the matches of one stored pair");
  std::string match_dataset, match_output;
  std::size_t match_pair = 0;
  double match_theta = 0.0;
  bool match_exact = false;
  match->add_option("--dataset", match_dataset, "Dataset directory")->required();
  match->add_option("--pair", match_pair, "Pair index");
  auto* theta_opt = match->add_option("--theta", match_theta, "Override the match threshold");
  match->add_flag("--exact", match_exact, "Match against every foreground point of B");
  match->add_option("-o,--output", match_output, "Output path (default stdout)");

  auto* losses = app.add_subcommand("losses", "Evaluate all losses over a dataset");
  ConfigFlags loss_flags;
  std::string loss_dataset, loss_checkpoint, loss_report;
  std::uint64_t loss_init_seed = 0;
  losses->add_option("--dataset", loss_dataset, "Dataset directory")->required();
  losses->add_option("--checkpoint", loss_checkpoint, "Model checkpoint (default: random init)");
  losses->add_option("--report", loss_report, "JSON-lines report path (default stdout)");
  losses->add_option("--init-seed", loss_init_seed, "Seed of the random initialization");
  auto& lf = loss_flags.flags;
  loss_flags.add(*losses, "tau", lf.tau, "InfoNCE temperature");
  loss_flags.add(*losses, "lambda_pts", lf.lambda_pts, "Weight of the point-level loss");
  loss_flags.add(*losses, "lambda_rec", lf.lambda_rec, "Weight of the reconstruction loss");
  loss_flags.add(*losses, "decoder_seeds", lf.decoder_seeds, "Decoder seeds per scene");
  loss_flags.add(*losses, "batch_size", lf.batch_size, "Scene pairs per batch");
  loss_flags.add(*losses, "encoder_hidden", lf.encoder_hidden, "Encoder hidden width");
  loss_flags.add(*losses, "feature_dim", lf.feature_dim, "Encoder feature dimension s");
  loss_flags.add(*losses, "projection_dim", lf.projection_dim, "Projection dimension d");
  loss_flags.add(*losses, "decoder_hidden", lf.decoder_hidden, "Decoder hidden width");
  loss_flags.add(*losses, "grid_side", lf.grid_side, "Folding grid side u");
  loss_flags.add(*losses, "grid_extent", lf.grid_extent, "Folding grid half extent");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  grl::GradCheckConfig gc;
  std::string gc_report;
  gradcheck->add_option("--seed", gc.seed, "Seed of the batch and the model");
  gradcheck->add_option("--step", gc.step, "Finite-difference step");
  gradcheck->add_option("--tolerance", gc.tolerance, "Maximum relative error");
  gradcheck->add_option("--floor", gc.floor, "Denominator floor of the relative error");
  gradcheck->add_option("--report", gc_report, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*fit) return run_fit(counts_path, scannet, fit_instances, fit_epsilon, fit_output);
    if (*generate) {
      nlohmann::json base;
      if (!gen_config.empty()) base = read_json_file(gen_config);
      grl::PipelineConfig config = gen_flags.resolve(base);
      config.seed = gen_seed;
      config.output_dir = gen_output;
      return run_generate(config, gen_distribution);
    }
    if (*match) {
      return run_match(match_dataset, match_pair, theta_opt->count() > 0, match_theta, match_exact,
                       match_output);
    }
    if (*losses) return run_losses(loss_dataset, loss_checkpoint, loss_report, loss_flags, loss_init_seed);
    if (*gradcheck) return run_gradcheck(gc, gc_report);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return grl::is_input_error(e.kind()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
