#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "grl/correspondence.hpp"
#include "grl/geometry.hpp"

namespace grl {

inline constexpr double kDefaultTemperature = 0.03;
inline constexpr double kDefaultLambdaPts = 0.1;
inline constexpr double kDefaultLambdaRec = 100.0;

/// Row-wise v / max(|v|, 1e-12).
Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& v);
/// Gradient of normalize_rows at `v` given the upstream gradient `dy`.
Eigen::MatrixXd normalize_rows_backward(const Eigen::MatrixXd& v, const Eigen::MatrixXd& dy);

struct InfoNce {
  double loss = 0.0;
  Eigen::VectorXd d_anchor;
  Eigen::VectorXd d_positive;
  std::vector<Eigen::VectorXd> d_negatives;
};

/// -log( exp(a.p/tau) / (exp(a.p/tau) + sum_n exp(a.n/tau)) ), evaluated with
/// a shifted log-sum-exp. Inputs are used as given (no normalization).
InfoNce info_nce_pairwise(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                          std::span<const Eigen::VectorXd> negatives, double tau);

/// Projected features of one scene. Rows of `h` follow the scene's points.
struct SceneFeatures {
  Eigen::MatrixXd h;
  std::vector<int> labels;               // object index per row, or kBackground
  std::vector<std::size_t> categories;   // category id per object
};

/// Scene pairs in a batch: pairs[b][0] is scene A, pairs[b][1] scene B.
struct FeatureBatch {
  std::vector<std::array<SceneFeatures, 2>> pairs;
};

/// Per-instance average of the rows of h (K x d).
Eigen::MatrixXd pool_instances(const SceneFeatures& scene);

/// Loss value plus its gradient with respect to every h in the batch.
struct ContrastiveLoss {
  double loss = 0.0;
  std::vector<std::array<Eigen::MatrixXd, 2>> grad;
  std::size_t terms = 0;      // anchors (instances or matches)
  std::size_t negatives = 0;  // total negatives over all anchors and directions
};

/// Category-aware object-level loss. Pooled features are L2-normalized;
/// negatives of instance k are the pooled features of both scenes of every
/// pair whose category differs from k's. Both directional terms are summed
/// and averaged over all instances in the batch.
ContrastiveLoss object_level_loss(const FeatureBatch& batch, double tau = kDefaultTemperature);

/// Object-aware point-level loss over matched seed pairs. `matches[b]`
/// indexes rows of pairs[b]. Negatives of a match on object y are the
/// distinct matched endpoints (both scenes, all pairs) that do not lie on
/// object y of the same pair. No matches gives loss 0 with zero gradients.
ContrastiveLoss point_level_loss(const FeatureBatch& batch, std::span<const MatchSet> matches,
                                 double tau = kDefaultTemperature);

/// mean over x of min squared distance to y, plus the same from y to x.
/// Throws EmptySet.
double chamfer_distance(std::span<const Vec3> x, std::span<const Vec3> y);

struct ChamferGrad {
  double value = 0.0;
  PointCloud d_x;  // gradient with respect to x, y held fixed
  std::vector<std::size_t> nearest_in_y;  // per x point
  std::vector<std::size_t> nearest_in_x;  // per y point
};
ChamferGrad chamfer_distance_grad(std::span<const Vec3> x, std::span<const Vec3> y);

struct Reconstruction {
  double coarse = 0.0;
  double detail = 0.0;
  double sum = 0.0;
};
Reconstruction reconstruction_loss(std::span<const Vec3> y_coarse, std::span<const Vec3> y_detail,
                                   std::span<const Vec3> gt_coarse,
                                   std::span<const Vec3> gt_detail);

double overall_loss(double l_obj, double l_pts, double l_rec,
                    double lambda_pts = kDefaultLambdaPts, double lambda_rec = kDefaultLambdaRec);

struct LossReport {
  double l_obj = 0.0;
  double l_pts = 0.0;
  double l_rec_coarse = 0.0;
  double l_rec_detail = 0.0;
  double l_overall = 0.0;
  std::size_t num_instances = 0;
  std::size_t num_matches = 0;
  std::size_t num_object_negatives = 0;
  std::size_t num_point_negatives = 0;
  // Flattened gradients over the model parameters (see Model::parameters()).
  Eigen::VectorXd grad_obj;
  Eigen::VectorXd grad_pts;
  Eigen::VectorXd grad_rec;
  Eigen::VectorXd grad_overall;

  bool operator==(const LossReport& o) const;
};

/// Scalar fields and counts only.
nlohmann::json to_json(const LossReport& report);

}  // namespace grl
