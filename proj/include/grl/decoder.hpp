#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "grl/nn.hpp"
#include "grl/scenegen.hpp"

namespace grl {

inline constexpr int kDefaultGridSide = 3;
inline constexpr double kDefaultGridExtent = 0.05;

struct EncoderConfig {
  Eigen::Index hidden = 64;
  Eigen::Index feature_dim = 32;  // s
};

/// Stand-in backbone: a shared per-point MLP 3 -> hidden -> s (ReLU), the
/// per-object max-pool of those features broadcast back to each point, and
/// a linear mixing layer [local, pooled] -> s.
class ToyEncoder {
 public:
  ToyEncoder() = default;
  explicit ToyEncoder(const EncoderConfig& config);

  struct Cache {
    Mlp::Cache local;
    Eigen::MatrixXd local_out;          // N x s
    Eigen::MatrixXd concat;             // N x 2s
    std::vector<int> group;             // pooling group per point
    std::vector<Eigen::Index> argmax;   // groups x s winners, row-major
    Eigen::Index groups = 0;
  };

  /// points: N x 3. labels: object index per point or kBackground (pooled
  /// as its own group).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& points, const std::vector<int>& labels,
                          Cache* cache = nullptr, BranchTrace* trace = nullptr) const;
  /// Accumulates parameter gradients; the input points are constants.
  void backward(const Cache& cache, const Eigen::MatrixXd& dz, ToyEncoder& grad) const;

  void init_uniform(Rng& rng);
  ToyEncoder zeros_like() const;
  void append_params(std::vector<ParamView>& out, const std::string& prefix);

  Eigen::Index feature_dim() const { return mix_.out_dim(); }
  const Mlp& local() const { return local_; }
  const Linear& mix() const { return mix_; }

 private:
  Mlp local_;
  Linear mix_;
};

struct DecoderConfig {
  Eigen::Index hidden = 64;
  int grid_side = kDefaultGridSide;  // u
  double grid_extent = kDefaultGridExtent;
};

/// Offset head (3+s) -> hidden -> (3+s) and folding head (2+3+s) -> hidden -> 3.
class DecoderHeads {
 public:
  DecoderHeads() = default;
  DecoderHeads(Eigen::Index feature_dim, const DecoderConfig& config);

  /// u^2 x 2 grid over [-g, g]^2, row a*u + b holds (x_a, y_b).
  Eigen::MatrixXd grid() const;

  void init_uniform(Rng& rng);
  DecoderHeads zeros_like() const;
  void append_params(std::vector<ParamView>& out, const std::string& prefix);

  Mlp& offset() { return offset_; }
  const Mlp& offset() const { return offset_; }
  Mlp& folding() { return folding_; }
  const Mlp& folding() const { return folding_; }
  int grid_side() const { return grid_side_; }
  double grid_extent() const { return grid_extent_; }
  Eigen::Index feature_dim() const { return offset_.in_dim() - 3; }

 private:
  Mlp offset_;
  Mlp folding_;
  int grid_side_ = kDefaultGridSide;
  double grid_extent_ = kDefaultGridExtent;
};

struct ReconstructionOutput {
  Eigen::MatrixXd y_coarse;  // n x 3
  Eigen::MatrixXd h_coarse;  // n x (3+s), first three columns equal y_coarse
  Eigen::MatrixXd y_detail;  // u^2 n x 3, block i holds the patch of coarse point i
};

struct DecodeCache {
  Eigen::MatrixXd offset_input;  // n x (3+s)
  Mlp::Cache offset;
  Eigen::MatrixXd folding_input;  // u^2 n x (2+3+s)
  Mlp::Cache folding;
};

ReconstructionOutput decode(const Eigen::MatrixXd& seed_coords, const Eigen::MatrixXd& seed_features,
                            const DecoderHeads& heads, DecodeCache* cache = nullptr,
                            BranchTrace* trace = nullptr);

/// Returns dL/d(seed_features); accumulates head gradients into `grad`.
Eigen::MatrixXd decode_backward(const DecodeCache& cache, const DecoderHeads& heads,
                                const Eigen::MatrixXd& d_coarse, const Eigen::MatrixXd& d_detail,
                                DecoderHeads& grad);

struct ReconstructionTargets {
  PointCloud gt_coarse;  // n points
  PointCloud gt_detail;  // u^2 n points
};

/// gt_detail = FPS(complete, u^2 n); gt_coarse = FPS(gt_detail, n).
/// Throws TooFewPoints when the scene has fewer than u^2 n points.
ReconstructionTargets build_targets(const SceneInstance& complete_scene, std::size_t n, int u,
                                    std::uint64_t seed);

Eigen::MatrixXd to_matrix(std::span<const Vec3> points);
PointCloud to_points(const Eigen::MatrixXd& m);

}  // namespace grl
