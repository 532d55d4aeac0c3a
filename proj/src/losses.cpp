#include "grl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include "grl/error.hpp"
#include "grl/kernels.hpp"

namespace grl {

namespace {

constexpr double kNormEps = 1e-12;

// InfoNCE on rows of a feature matrix. Accumulates weight * dL/dU into dU
// and returns the loss.
double info_nce_rows(const Eigen::MatrixXd& u, Eigen::Index anchor, Eigen::Index positive,
                     std::span<const Eigen::Index> negatives, double tau, double weight,
                     Eigen::MatrixXd& du) {
  const auto a = u.row(anchor);
  std::vector<double> logits;
  logits.reserve(negatives.size() + 1);
  logits.push_back(a.dot(u.row(positive)) / tau);
  for (Eigen::Index n : negatives) logits.push_back(a.dot(u.row(n)) / tau);
  const double peak = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double s : logits) z += std::exp(s - peak);
  const double loss = peak + std::log(z) - logits[0];

  // dL/ds_j = softmax_j - [j == 0]
  auto coeff = [&](std::size_t j) {
    return (std::exp(logits[j] - peak) / z - (j == 0 ? 1.0 : 0.0)) * weight / tau;
  };
  const double c0 = coeff(0);
  Eigen::RowVectorXd d_anchor = c0 * u.row(positive);
  du.row(positive) += c0 * a;
  for (std::size_t j = 0; j < negatives.size(); ++j) {
    const double cj = coeff(j + 1);
    d_anchor += cj * u.row(negatives[j]);
    du.row(negatives[j]) += cj * a;
  }
  du.row(anchor) += d_anchor;
  return loss;
}

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorKind::NonFiniteInput, std::string(what) + " is not finite");
}

}  // namespace

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& v) {
  Eigen::MatrixXd out(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    out.row(i) = v.row(i) / std::max(v.row(i).norm(), kNormEps);
  }
  return out;
}

Eigen::MatrixXd normalize_rows_backward(const Eigen::MatrixXd& v, const Eigen::MatrixXd& dy) {
  Eigen::MatrixXd dv(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double n = v.row(i).norm();
    if (n > kNormEps) {
      const Eigen::RowVectorXd y = v.row(i) / n;
      dv.row(i) = (dy.row(i) - y * y.dot(dy.row(i))) / n;
    } else {
      dv.row(i) = dy.row(i) / kNormEps;
    }
  }
  return dv;
}

InfoNce info_nce_pairwise(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                          std::span<const Eigen::VectorXd> negatives, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::InvalidArgument, "temperature must be positive");
  const Eigen::Index d = anchor.size();
  if (positive.size() != d) throw Error(ErrorKind::DimensionMismatch, "positive dimension");
  Eigen::MatrixXd u(static_cast<Eigen::Index>(negatives.size()) + 2, d);
  u.row(0) = anchor.transpose();
  u.row(1) = positive.transpose();
  std::vector<Eigen::Index> neg_rows;
  for (std::size_t j = 0; j < negatives.size(); ++j) {
    if (negatives[j].size() != d) throw Error(ErrorKind::DimensionMismatch, "negative dimension");
    u.row(static_cast<Eigen::Index>(j) + 2) = negatives[j].transpose();
    neg_rows.push_back(static_cast<Eigen::Index>(j) + 2);
  }
  require_finite(u, "InfoNCE input");
  Eigen::MatrixXd du = Eigen::MatrixXd::Zero(u.rows(), u.cols());
  InfoNce out;
  out.loss = info_nce_rows(u, 0, 1, neg_rows, tau, 1.0, du);
  if (!std::isfinite(out.loss)) throw Error(ErrorKind::NonFiniteInput, "InfoNCE overflowed");
  out.d_anchor = du.row(0).transpose();
  out.d_positive = du.row(1).transpose();
  for (Eigen::Index r : neg_rows) out.d_negatives.emplace_back(du.row(r).transpose());
  return out;
}

Eigen::MatrixXd pool_instances(const SceneFeatures& scene) {
  const auto k_count = static_cast<Eigen::Index>(scene.categories.size());
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(k_count, scene.h.cols());
  std::vector<double> counts(scene.categories.size(), 0.0);
  for (Eigen::Index i = 0; i < scene.h.rows(); ++i) {
    const int k = scene.labels[static_cast<std::size_t>(i)];
    if (k < 0) continue;
    pooled.row(k) += scene.h.row(i);
    counts[static_cast<std::size_t>(k)] += 1.0;
  }
  for (Eigen::Index k = 0; k < k_count; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0.0) {
      throw Error(ErrorKind::EmptySet, "instance " + std::to_string(k) + " has no points");
    }
    pooled.row(k) /= counts[static_cast<std::size_t>(k)];
  }
  return pooled;
}

namespace {

void check_batch(const FeatureBatch& batch) {
  if (batch.pairs.empty()) throw Error(ErrorKind::EmptyBatch, "batch has no scene pairs");
  const Eigen::Index d = batch.pairs.front()[0].h.cols();
  for (const auto& pair : batch.pairs) {
    for (const SceneFeatures& s : pair) {
      if (s.h.cols() != d) throw Error(ErrorKind::DimensionMismatch, "feature width differs");
      if (static_cast<std::size_t>(s.h.rows()) != s.labels.size()) {
        throw Error(ErrorKind::DimensionMismatch, "one label per feature row required");
      }
      require_finite(s.h, "features");
    }
    if (pair[0].categories != pair[1].categories) {
      throw Error(ErrorKind::DimensionMismatch, "paired scenes must share the object draw");
    }
  }
}

std::vector<std::array<Eigen::MatrixXd, 2>> zero_grads(const FeatureBatch& batch) {
  std::vector<std::array<Eigen::MatrixXd, 2>> grads;
  for (const auto& pair : batch.pairs) {
    grads.push_back({Eigen::MatrixXd::Zero(pair[0].h.rows(), pair[0].h.cols()),
                     Eigen::MatrixXd::Zero(pair[1].h.rows(), pair[1].h.cols())});
  }
  return grads;
}

}  // namespace

ContrastiveLoss object_level_loss(const FeatureBatch& batch, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::InvalidArgument, "temperature must be positive");
  check_batch(batch);

  // Stack pooled features of every (pair, side, instance).
  struct Slot {
    std::size_t pair, side, instance, category;
  };
  std::vector<Slot> slots;
  std::vector<Eigen::MatrixXd> pooled_blocks;
  Eigen::Index total = 0;
  for (std::size_t b = 0; b < batch.pairs.size(); ++b) {
    for (std::size_t s = 0; s < 2; ++s) {
      pooled_blocks.push_back(pool_instances(batch.pairs[b][s]));
      for (std::size_t k = 0; k < batch.pairs[b][s].categories.size(); ++k) {
        slots.push_back({b, s, k, batch.pairs[b][s].categories[k]});
      }
      total += pooled_blocks.back().rows();
    }
  }
  const Eigen::Index d = batch.pairs.front()[0].h.cols();
  Eigen::MatrixXd pooled(total, d);
  for (Eigen::Index r = 0, blk = 0; blk < static_cast<Eigen::Index>(pooled_blocks.size()); ++blk) {
    pooled.middleRows(r, pooled_blocks[blk].rows()) = pooled_blocks[blk];
    r += pooled_blocks[blk].rows();
  }
  const Eigen::MatrixXd unit = normalize_rows(pooled);
  Eigen::MatrixXd d_unit = Eigen::MatrixXd::Zero(total, d);

  // row of (pair, side, instance)
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, Eigen::Index> row_of;
  for (Eigen::Index r = 0; r < total; ++r) {
    const Slot& s = slots[static_cast<std::size_t>(r)];
    row_of[{s.pair, s.side, s.instance}] = r;
  }

  ContrastiveLoss out;
  out.grad = zero_grads(batch);
  std::size_t anchors = 0;
  for (const auto& pair : batch.pairs) anchors += pair[0].categories.size();
  if (anchors == 0) return out;
  const double weight = 1.0 / static_cast<double>(anchors);

  double sum = 0.0;
  for (std::size_t b = 0; b < batch.pairs.size(); ++b) {
    for (std::size_t k = 0; k < batch.pairs[b][0].categories.size(); ++k) {
      const std::size_t category = batch.pairs[b][0].categories[k];
      std::vector<Eigen::Index> negatives;
      for (Eigen::Index r = 0; r < total; ++r) {
        if (slots[static_cast<std::size_t>(r)].category != category) negatives.push_back(r);
      }
      const Eigen::Index ra = row_of.at({b, 0, k});
      const Eigen::Index rb = row_of.at({b, 1, k});
      sum += info_nce_rows(unit, ra, rb, negatives, tau, weight, d_unit);
      sum += info_nce_rows(unit, rb, ra, negatives, tau, weight, d_unit);
      out.negatives += 2 * negatives.size();
    }
  }
  out.terms = anchors;
  out.loss = sum * weight;

  // back through normalization and mean pooling
  const Eigen::MatrixXd d_pooled = normalize_rows_backward(pooled, d_unit);
  Eigen::Index r = 0;
  for (std::size_t b = 0; b < batch.pairs.size(); ++b) {
    for (std::size_t s = 0; s < 2; ++s) {
      const SceneFeatures& scene = batch.pairs[b][s];
      std::vector<double> counts(scene.categories.size(), 0.0);
      for (int label : scene.labels) {
        if (label >= 0) counts[static_cast<std::size_t>(label)] += 1.0;
      }
      for (Eigen::Index i = 0; i < scene.h.rows(); ++i) {
        const int k = scene.labels[static_cast<std::size_t>(i)];
        if (k < 0) continue;
        out.grad[b][s].row(i) = d_pooled.row(r + k) / counts[static_cast<std::size_t>(k)];
      }
      r += static_cast<Eigen::Index>(scene.categories.size());
    }
  }
  return out;
}

ContrastiveLoss point_level_loss(const FeatureBatch& batch, std::span<const MatchSet> matches,
                                 double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::InvalidArgument, "temperature must be positive");
  check_batch(batch);
  if (matches.size() != batch.pairs.size()) {
    throw Error(ErrorKind::DimensionMismatch, "one match set per scene pair required");
  }
  ContrastiveLoss out;
  out.grad = zero_grads(batch);

  // Distinct matched endpoints, each tagged with the (pair, object) it lies on.
  struct Endpoint {
    std::size_t pair, side, index;
    int object;
  };
  std::vector<Endpoint> endpoints;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, Eigen::Index> row_of;
  auto endpoint_row = [&](std::size_t b, std::size_t side, std::size_t index, int object) {
    const auto key = std::make_tuple(b, side, index);
    auto it = row_of.find(key);
    if (it != row_of.end()) return it->second;
    const auto r = static_cast<Eigen::Index>(endpoints.size());
    endpoints.push_back({b, side, index, object});
    row_of.emplace(key, r);
    return r;
  };
  struct Anchor {
    Eigen::Index a, b;
    std::size_t pair;
    int object;
  };
  std::vector<Anchor> anchors;
  for (std::size_t b = 0; b < matches.size(); ++b) {
    for (const Match& m : matches[b].pairs) {
      const SceneFeatures& sa = batch.pairs[b][0];
      const SceneFeatures& sb = batch.pairs[b][1];
      if (m.a_index >= static_cast<std::size_t>(sa.h.rows()) ||
          m.b_index >= static_cast<std::size_t>(sb.h.rows())) {
        throw Error(ErrorKind::DimensionMismatch, "match index outside the feature rows");
      }
      const Eigen::Index ra = endpoint_row(b, 0, m.a_index, m.object);
      const Eigen::Index rb = endpoint_row(b, 1, m.b_index, m.object);
      anchors.push_back({ra, rb, b, m.object});
    }
  }
  if (anchors.empty()) return out;

  const Eigen::Index d = batch.pairs.front()[0].h.cols();
  const auto n_end = static_cast<Eigen::Index>(endpoints.size());
  Eigen::MatrixXd raw(n_end, d);
  for (Eigen::Index r = 0; r < n_end; ++r) {
    const Endpoint& e = endpoints[static_cast<std::size_t>(r)];
    raw.row(r) = batch.pairs[e.pair][e.side].h.row(static_cast<Eigen::Index>(e.index));
  }
  const Eigen::MatrixXd unit = normalize_rows(raw);
  Eigen::MatrixXd d_unit = Eigen::MatrixXd::Zero(n_end, d);
  const double weight = 1.0 / static_cast<double>(anchors.size());
  double sum = 0.0;
  std::vector<Eigen::Index> negatives;
  for (const Anchor& anchor : anchors) {
    negatives.clear();
    for (Eigen::Index r = 0; r < n_end; ++r) {
      const Endpoint& e = endpoints[static_cast<std::size_t>(r)];
      if (e.pair != anchor.pair || e.object != anchor.object) negatives.push_back(r);
    }
    sum += info_nce_rows(unit, anchor.a, anchor.b, negatives, tau, weight, d_unit);
    sum += info_nce_rows(unit, anchor.b, anchor.a, negatives, tau, weight, d_unit);
    out.negatives += 2 * negatives.size();
  }
  out.terms = anchors.size();
  out.loss = sum * weight;

  const Eigen::MatrixXd d_raw = normalize_rows_backward(raw, d_unit);
  for (Eigen::Index r = 0; r < n_end; ++r) {
    const Endpoint& e = endpoints[static_cast<std::size_t>(r)];
    out.grad[e.pair][e.side].row(static_cast<Eigen::Index>(e.index)) += d_raw.row(r);
  }
  return out;
}

double chamfer_distance(std::span<const Vec3> x, std::span<const Vec3> y) {
  if (x.empty() || y.empty()) throw Error(ErrorKind::EmptySet, "chamfer of an empty point set");
  return kernels::chamfer(x, y);
}

ChamferGrad chamfer_distance_grad(std::span<const Vec3> x, std::span<const Vec3> y) {
  if (x.empty() || y.empty()) throw Error(ErrorKind::EmptySet, "chamfer of an empty point set");
  const kernels::NearestNeighbors xy = kernels::nearest_neighbors(x, y);
  const kernels::NearestNeighbors yx = kernels::nearest_neighbors(y, x);
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  ChamferGrad out;
  double sx = 0.0, sy = 0.0;
  for (double v : xy.sq_distance) sx += v;
  for (double v : yx.sq_distance) sy += v;
  out.value = sx / nx + sy / ny;
  out.d_x.assign(x.size(), Vec3::Zero());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.d_x[i] += 2.0 * (x[i] - y[xy.index[i]]) / nx;
  }
  for (std::size_t j = 0; j < y.size(); ++j) {
    const std::size_t i = yx.index[j];
    out.d_x[i] += 2.0 * (x[i] - y[j]) / ny;
  }
  out.nearest_in_y = xy.index;
  out.nearest_in_x = yx.index;
  return out;
}

Reconstruction reconstruction_loss(std::span<const Vec3> y_coarse, std::span<const Vec3> y_detail,
                                   std::span<const Vec3> gt_coarse,
                                   std::span<const Vec3> gt_detail) {
  Reconstruction r;
  r.coarse = chamfer_distance(y_coarse, gt_coarse);
  r.detail = chamfer_distance(y_detail, gt_detail);
  r.sum = r.coarse + r.detail;
  return r;
}

double overall_loss(double l_obj, double l_pts, double l_rec, double lambda_pts,
                    double lambda_rec) {
  if (lambda_pts < 0.0 || lambda_rec < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "loss weights must be nonnegative");
  }
  return l_obj + lambda_pts * l_pts + lambda_rec * l_rec;
}

bool LossReport::operator==(const LossReport& o) const {
  return l_obj == o.l_obj && l_pts == o.l_pts && l_rec_coarse == o.l_rec_coarse &&
         l_rec_detail == o.l_rec_detail && l_overall == o.l_overall &&
         num_instances == o.num_instances && num_matches == o.num_matches &&
         num_object_negatives == o.num_object_negatives &&
         num_point_negatives == o.num_point_negatives && grad_obj == o.grad_obj &&
         grad_pts == o.grad_pts && grad_rec == o.grad_rec && grad_overall == o.grad_overall;
}

nlohmann::json to_json(const LossReport& report) {
  return {{"l_obj", report.l_obj},
          {"l_pts", report.l_pts},
          {"l_rec_coarse", report.l_rec_coarse},
          {"l_rec_detail", report.l_rec_detail},
          {"l_overall", report.l_overall},
          {"num_instances", report.num_instances},
          {"num_matches", report.num_matches},
          {"num_object_negatives", report.num_object_negatives},
          {"num_point_negatives", report.num_point_negatives}};
}

}  // namespace grl
