#include "grl/model.hpp"

#include <fstream>
#include <map>

#include "grl/error.hpp"
#include "grl/rng.hpp"

namespace grl {

Model::Model(const ModelConfig& config)
    : encoder(config.encoder),
      projection(config.encoder.feature_dim, config.projection_dim),
      heads(config.encoder.feature_dim, config.decoder),
      config_(config) {
  if (config.encoder.hidden < 1 || config.encoder.feature_dim < 1 || config.projection_dim < 1 ||
      config.decoder.hidden < 1) {
    throw Error(ErrorKind::InvalidArgument, "layer sizes must be positive");
  }
}

Model Model::random(const ModelConfig& config, std::uint64_t seed) {
  Model model(config);
  Rng rng(seed);
  model.encoder.init_uniform(rng);
  model.projection.init_uniform(rng);
  model.heads.init_uniform(rng);
  return model;
}

std::vector<ParamView> Model::parameters() {
  std::vector<ParamView> out;
  encoder.append_params(out, "encoder");
  append_params(out, "projection", projection);
  heads.append_params(out, "decoder");
  return out;
}

Eigen::Index Model::num_parameters() const {
  Eigen::Index n = 0;
  for (const ParamView& p : const_cast<Model*>(this)->parameters()) n += p.size();
  return n;
}

Eigen::VectorXd Model::flatten() const {
  Eigen::VectorXd out(num_parameters());
  Eigen::Index offset = 0;
  for (const ParamView& p : const_cast<Model*>(this)->parameters()) {
    out.segment(offset, p.size()) = Eigen::Map<const Eigen::VectorXd>(p.data, p.size());
    offset += p.size();
  }
  return out;
}

void Model::unflatten(const Eigen::VectorXd& values) {
  if (values.size() != num_parameters()) {
    throw Error(ErrorKind::DimensionMismatch, "parameter vector has the wrong length");
  }
  Eigen::Index offset = 0;
  for (ParamView& p : parameters()) {
    Eigen::Map<Eigen::VectorXd>(p.data, p.size()) = values.segment(offset, p.size());
    offset += p.size();
  }
}

Model Model::zeros_like() const {
  Model out(config_);
  return out;
}

TrainingSample prepare_sample(const ScenePair& complete, const ScenePair& occluded,
                              MatchSet matches, std::size_t decoder_seeds, int u,
                              std::uint64_t seed) {
  TrainingSample sample;
  sample.occluded = {occluded.scene_a, occluded.scene_b};
  sample.matches = std::move(matches);
  const std::array<const SceneInstance*, 2> full{&complete.scene_a, &complete.scene_b};
  const std::size_t reps = static_cast<std::size_t>(u) * static_cast<std::size_t>(u);
  for (std::size_t side = 0; side < 2; ++side) {
    const SceneInstance& occ = sample.occluded[side];
    const std::size_t n =
        std::min({decoder_seeds, occ.points.size(), full[side]->points.size() / reps});
    if (n == 0) throw Error(ErrorKind::TooFewPoints, "scene too small for the decoder");
    sample.decoder_seeds[side] = farthest_point_sample(occ.points, n, derive_seed(seed, 10 + side));
    sample.targets[side] = build_targets(*full[side], n, u, derive_seed(seed, 20 + side));
  }
  return sample;
}

namespace {

struct SceneState {
  Eigen::MatrixXd points;
  ToyEncoder::Cache encoder;
  Eigen::MatrixXd z;
  Eigen::MatrixXd v;  // projection before normalization
  DecodeCache decoder;
  std::vector<std::size_t> seeds;
  ChamferGrad coarse;
  ChamferGrad detail;
};

}  // namespace

Evaluation evaluate(std::span<const TrainingSample> batch, const Model& model,
                    const LossConfig& config, bool gradients) {
  if (batch.empty()) throw Error(ErrorKind::EmptyBatch, "batch has no scene pairs");
  if (config.lambda_pts < 0.0 || config.lambda_rec < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "loss weights must be nonnegative");
  }
  BranchTrace trace;
  FeatureBatch features;
  std::vector<std::array<SceneState, 2>> states(batch.size());
  std::vector<MatchSet> matches;
  double rec_coarse = 0.0;
  double rec_detail = 0.0;
  const double scene_weight = 1.0 / (2.0 * static_cast<double>(batch.size()));

  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::array<SceneFeatures, 2> pair_features;
    for (std::size_t side = 0; side < 2; ++side) {
      const SceneInstance& scene = batch[b].occluded[side];
      SceneState& st = states[b][side];
      st.points = to_matrix(scene.points);
      st.z = model.encoder.forward(st.points, scene.labels, &st.encoder, &trace);
      st.v = model.projection.forward(st.z);

      SceneFeatures& f = pair_features[side];
      f.h = normalize_rows(st.v);
      f.labels = scene.labels;
      for (const ObjectInstance& obj : scene.objects) f.categories.push_back(obj.category_id);

      st.seeds = batch[b].decoder_seeds[side];
      Eigen::MatrixXd seed_coords(static_cast<Eigen::Index>(st.seeds.size()), 3);
      Eigen::MatrixXd seed_features(static_cast<Eigen::Index>(st.seeds.size()), st.z.cols());
      for (std::size_t i = 0; i < st.seeds.size(); ++i) {
        seed_coords.row(static_cast<Eigen::Index>(i)) =
            st.points.row(static_cast<Eigen::Index>(st.seeds[i]));
        seed_features.row(static_cast<Eigen::Index>(i)) =
            st.z.row(static_cast<Eigen::Index>(st.seeds[i]));
      }
      const ReconstructionOutput rec =
          decode(seed_coords, seed_features, model.heads, &st.decoder, &trace);
      st.coarse = chamfer_distance_grad(to_points(rec.y_coarse), batch[b].targets[side].gt_coarse);
      st.detail = chamfer_distance_grad(to_points(rec.y_detail), batch[b].targets[side].gt_detail);
      for (std::size_t i : st.coarse.nearest_in_y) trace.add(i);
      for (std::size_t i : st.coarse.nearest_in_x) trace.add(i);
      for (std::size_t i : st.detail.nearest_in_y) trace.add(i);
      for (std::size_t i : st.detail.nearest_in_x) trace.add(i);
      rec_coarse += scene_weight * st.coarse.value;
      rec_detail += scene_weight * st.detail.value;
    }
    features.pairs.push_back(std::move(pair_features));
    matches.push_back(batch[b].matches);
  }

  const ContrastiveLoss obj = object_level_loss(features, config.tau);
  const ContrastiveLoss pts = point_level_loss(features, matches, config.tau);

  Evaluation out;
  LossReport& r = out.report;
  r.l_obj = obj.loss;
  r.l_pts = pts.loss;
  r.l_rec_coarse = rec_coarse;
  r.l_rec_detail = rec_detail;
  r.l_overall = overall_loss(r.l_obj, r.l_pts, r.l_rec_coarse + r.l_rec_detail, config.lambda_pts,
                             config.lambda_rec);
  r.num_instances = obj.terms;
  r.num_matches = pts.terms;
  r.num_object_negatives = obj.negatives;
  r.num_point_negatives = pts.negatives;
  out.trace = trace.value();
  if (!gradients) return out;

  enum class Term { Obj, Pts, Rec };
  auto backprop = [&](Term term) {
    Model grad = model.zeros_like();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      for (std::size_t side = 0; side < 2; ++side) {
        const SceneState& st = states[b][side];
        Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(st.z.rows(), st.z.cols());
        if (term != Term::Rec) {
          const Eigen::MatrixXd& dh = term == Term::Obj ? obj.grad[b][side] : pts.grad[b][side];
          const Eigen::MatrixXd dv = normalize_rows_backward(st.v, dh);
          dz += model.projection.backward(st.z, dv, grad.projection);
        } else {
          const Eigen::MatrixXd d_coarse = scene_weight * to_matrix(st.coarse.d_x);
          const Eigen::MatrixXd d_detail = scene_weight * to_matrix(st.detail.d_x);
          const Eigen::MatrixXd d_seed =
              decode_backward(st.decoder, model.heads, d_coarse, d_detail, grad.heads);
          for (std::size_t i = 0; i < st.seeds.size(); ++i) {
            dz.row(static_cast<Eigen::Index>(st.seeds[i])) += d_seed.row(static_cast<Eigen::Index>(i));
          }
        }
        model.encoder.backward(st.encoder, dz, grad.encoder);
      }
    }
    return grad.flatten();
  };
  r.grad_obj = backprop(Term::Obj);
  r.grad_pts = backprop(Term::Pts);
  r.grad_rec = backprop(Term::Rec);
  r.grad_overall = r.grad_obj + config.lambda_pts * r.grad_pts + config.lambda_rec * r.grad_rec;
  return out;
}

nlohmann::json to_json(const ModelConfig& config) {
  return {{"encoder_hidden", config.encoder.hidden},
          {"feature_dim", config.encoder.feature_dim},
          {"projection_dim", config.projection_dim},
          {"decoder_hidden", config.decoder.hidden},
          {"grid_side", config.decoder.grid_side},
          {"grid_extent", config.decoder.grid_extent}};
}

ModelConfig model_config_from_json(const nlohmann::json& doc) {
  ModelConfig c;
  try {
    c.encoder.hidden = doc.at("encoder_hidden").get<Eigen::Index>();
    c.encoder.feature_dim = doc.at("feature_dim").get<Eigen::Index>();
    c.projection_dim = doc.at("projection_dim").get<Eigen::Index>();
    c.decoder.hidden = doc.at("decoder_hidden").get<Eigen::Index>();
    c.decoder.grid_side = doc.at("grid_side").get<int>();
    c.decoder.grid_extent = doc.at("grid_extent").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("model config: ") + e.what());
  }
  return c;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const ParamView& p : const_cast<Model&>(model).parameters()) {
    tensors.push_back({{"name", p.name},
                       {"shape", {p.rows, p.cols}},
                       {"data", std::vector<double>(p.data, p.data + p.size())}});
  }
  nlohmann::json doc{{"format", "grl-checkpoint-v1"},
                     {"config", to_json(model.config())},
                     {"tensors", tensors}};
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << doc.dump() << '\n';
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

namespace {

Model checkpoint_from_json(const nlohmann::json& doc, const std::filesystem::path& path) {
  if (!doc.is_object() || !doc.contains("format") || doc.at("format") != "grl-checkpoint-v1") {
    throw Error(ErrorKind::InvalidArgument, path.string() + ": not a grl checkpoint");
  }
  Model model(model_config_from_json(doc.at("config")));
  std::map<std::string, const nlohmann::json*> by_name;
  for (const auto& t : doc.at("tensors")) by_name[t.at("name").get<std::string>()] = &t;
  for (ParamView& p : model.parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      throw Error(ErrorKind::InvalidArgument, path.string() + ": missing tensor " + p.name);
    }
    const auto shape = it->second->at("shape").get<std::vector<Eigen::Index>>();
    const auto data = it->second->at("data").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] != p.rows || shape[1] != p.cols ||
        static_cast<Eigen::Index>(data.size()) != p.size()) {
      throw Error(ErrorKind::DimensionMismatch,
                  path.string() + ": tensor " + p.name + " expected shape [" +
                      std::to_string(p.rows) + ", " + std::to_string(p.cols) + "]");
    }
    std::copy(data.begin(), data.end(), p.data);
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    throw Error(ErrorKind::InvalidArgument,
                path.string() + ": unexpected tensor " + by_name.begin()->first);
  }
  return model;
}

}  // namespace

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open checkpoint " + path.string());
  try {
    return checkpoint_from_json(nlohmann::json::parse(in), path);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, path.string() + ": " + e.what());
  }
}

}  // namespace grl
