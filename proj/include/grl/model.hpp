#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "grl/correspondence.hpp"
#include "grl/decoder.hpp"
#include "grl/losses.hpp"

namespace grl {

struct ModelConfig {
  EncoderConfig encoder;
  Eigen::Index projection_dim = 128;  // d
  DecoderConfig decoder;
};

/// Toy encoder, projection head (linear s -> d, rows L2-normalized) and the
/// reconstruction heads.
class Model {
 public:
  explicit Model(const ModelConfig& config);

  /// Uniform fan-in initialization from `seed`.
  static Model random(const ModelConfig& config, std::uint64_t seed);

  ToyEncoder encoder;
  Linear projection;
  DecoderHeads heads;

  const ModelConfig& config() const { return config_; }

  /// Named views of every parameter tensor, in a fixed order.
  std::vector<ParamView> parameters();
  Eigen::Index num_parameters() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& values);
  Model zeros_like() const;

 private:
  ModelConfig config_;
};

struct LossConfig {
  double tau = kDefaultTemperature;
  double lambda_pts = kDefaultLambdaPts;
  double lambda_rec = kDefaultLambdaRec;
  std::size_t decoder_seeds = 256;  // upper bound on n per scene
};

/// Everything one scene pair contributes to a loss evaluation.
struct TrainingSample {
  std::array<SceneInstance, 2> occluded;
  std::array<std::vector<std::size_t>, 2> decoder_seeds;  // indices into occluded points
  std::array<ReconstructionTargets, 2> targets;
  MatchSet matches;  // indices into the occluded clouds
};

/// Picks n = min(decoder_seeds, |occluded|, |complete| / u^2) decoder seeds by
/// FPS over each occluded scene and builds the nested FPS targets from the
/// complete scenes.
TrainingSample prepare_sample(const ScenePair& complete, const ScenePair& occluded,
                              MatchSet matches, std::size_t decoder_seeds, int u,
                              std::uint64_t seed);

struct Evaluation {
  LossReport report;
  std::uint64_t trace = 0;  // branch signature of the forward pass
};

/// Forward pass over the batch; with `gradients` also the analytic gradient
/// of each loss term with respect to every model parameter.
Evaluation evaluate(std::span<const TrainingSample> batch, const Model& model,
                    const LossConfig& config, bool gradients);

inline LossReport forward_backward(std::span<const TrainingSample> batch, const Model& model,
                                   const LossConfig& config) {
  return evaluate(batch, model, config, true).report;
}

/// JSON checkpoint: {"format", "config", "tensors": [{name, shape, data}]}.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
/// Rebuilds the model from the stored config; every tensor must be present
/// with the shape that config implies.
Model load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& doc);

}  // namespace grl
