#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "grl/model.hpp"

namespace grl {

inline constexpr std::array<const char*, 4> kLossNames{"obj", "pts", "rec", "overall"};

struct GradCheckConfig {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error, so gradients that vanish to
  // within rounding noise are not compared digit by digit.
  double floor = 1e-5;
  std::uint64_t seed = 7;
  std::size_t pairs = 2;
  std::size_t objects = 4;
  std::size_t points_per_object = 64;
  std::size_t decoder_seeds = 16;
  ModelConfig model{{16, 8}, 8, {16, kDefaultGridSide, kDefaultGridExtent}};
};

struct GradCheckTensor {
  std::string name;
  Eigen::Index size = 0;
  std::array<double, 4> max_rel{};
};

struct GradCheckReport {
  std::vector<GradCheckTensor> tensors;
  std::array<double, 4> max_rel{};
  std::size_t central = 0;     // coordinates checked with the central difference
  std::size_t one_sided = 0;   // a kink on one side: second-order one-sided difference
  std::size_t unresolved = 0;  // kinks on both sides; not comparable
  double tolerance = 0.0;
  double seconds = 0.0;

  bool passed() const;
};

/// Scene pairs for the check: default distribution, procedural assets,
/// no occlusion, FPS seeds and matches with the default M and theta.
std::vector<TrainingSample> make_gradcheck_batch(const GradCheckConfig& config);

/// Compares the analytic gradient of every loss term with finite
/// differences, one parameter coordinate at a time.
GradCheckReport run_gradcheck(std::span<const TrainingSample> batch, const Model& model,
                              const LossConfig& loss, const GradCheckConfig& config);

GradCheckReport run_gradcheck(const GradCheckConfig& config);

nlohmann::json to_json(const GradCheckReport& report);

}  // namespace grl
