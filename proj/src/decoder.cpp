#include "grl/decoder.hpp"

#include <algorithm>

#include "grl/correspondence.hpp"
#include "grl/error.hpp"
#include "grl/rng.hpp"

namespace grl {

Eigen::MatrixXd to_matrix(std::span<const Vec3> points) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  }
  return m;
}

PointCloud to_points(const Eigen::MatrixXd& m) {
  PointCloud points(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    points[static_cast<std::size_t>(i)] = m.row(i).transpose();
  }
  return points;
}

ToyEncoder::ToyEncoder(const EncoderConfig& config)
    : local_({3, config.hidden, config.feature_dim}, /*relu_output=*/true),
      mix_(2 * config.feature_dim, config.feature_dim) {}

Eigen::MatrixXd ToyEncoder::forward(const Eigen::MatrixXd& points, const std::vector<int>& labels,
                                    Cache* cache, BranchTrace* trace) const {
  if (points.cols() != 3 || static_cast<std::size_t>(points.rows()) != labels.size()) {
    throw Error(ErrorKind::DimensionMismatch, "encoder expects N x 3 points with N labels");
  }
  Cache local_cache;
  Cache& c = cache ? *cache : local_cache;
  c.local_out = local_.forward(points, &c.local, trace);
  const Eigen::Index s = c.local_out.cols();

  int max_label = -1;
  bool has_background = false;
  for (int label : labels) {
    max_label = std::max(max_label, label);
    has_background = has_background || label < 0;
  }
  const int background_group = max_label + 1;
  c.groups = background_group + (has_background ? 1 : 0);
  c.group.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    c.group[i] = labels[i] < 0 ? background_group : labels[i];
  }

  Eigen::MatrixXd pooled =
      Eigen::MatrixXd::Constant(c.groups, s, -std::numeric_limits<double>::infinity());
  c.argmax.assign(static_cast<std::size_t>(c.groups * s), 0);
  for (Eigen::Index i = 0; i < c.local_out.rows(); ++i) {
    const int g = c.group[static_cast<std::size_t>(i)];
    for (Eigen::Index col = 0; col < s; ++col) {
      if (c.local_out(i, col) > pooled(g, col)) {
        pooled(g, col) = c.local_out(i, col);
        c.argmax[static_cast<std::size_t>(g * s + col)] = i;
      }
    }
  }
  if (trace) {
    for (Eigen::Index w : c.argmax) trace->add(static_cast<std::uint64_t>(w));
  }

  c.concat.resize(points.rows(), 2 * s);
  c.concat.leftCols(s) = c.local_out;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    c.concat.row(i).tail(s) = pooled.row(c.group[static_cast<std::size_t>(i)]);
  }
  return mix_.forward(c.concat);
}

void ToyEncoder::backward(const Cache& cache, const Eigen::MatrixXd& dz, ToyEncoder& grad) const {
  const Eigen::MatrixXd d_concat = mix_.backward(cache.concat, dz, grad.mix_);
  const Eigen::Index s = cache.local_out.cols();
  Eigen::MatrixXd d_local = d_concat.leftCols(s);
  for (Eigen::Index i = 0; i < d_concat.rows(); ++i) {
    const int g = cache.group[static_cast<std::size_t>(i)];
    for (Eigen::Index col = 0; col < s; ++col) {
      d_local(cache.argmax[static_cast<std::size_t>(g * s + col)], col) += d_concat(i, s + col);
    }
  }
  local_.backward(cache.local, d_local, grad.local_);
}

void ToyEncoder::init_uniform(Rng& rng) {
  local_.init_uniform(rng);
  mix_.init_uniform(rng);
}

ToyEncoder ToyEncoder::zeros_like() const {
  ToyEncoder out;
  out.local_ = local_.zeros_like();
  out.mix_ = Linear(mix_.in_dim(), mix_.out_dim());
  return out;
}

void ToyEncoder::append_params(std::vector<ParamView>& out, const std::string& prefix) {
  grl::append_params(out, prefix + ".local", local_);
  grl::append_params(out, prefix + ".mix", mix_);
}

DecoderHeads::DecoderHeads(Eigen::Index feature_dim, const DecoderConfig& config)
    : offset_({3 + feature_dim, config.hidden, 3 + feature_dim}, false),
      folding_({2 + 3 + feature_dim, config.hidden, 3}, false),
      grid_side_(config.grid_side),
      grid_extent_(config.grid_extent) {
  if (config.grid_side < 1) throw Error(ErrorKind::InvalidArgument, "grid side u must be >= 1");
}

Eigen::MatrixXd DecoderHeads::grid() const {
  const int u = grid_side_;
  Eigen::MatrixXd g(u * u, 2);
  auto coord = [&](int a) {
    return u == 1 ? 0.0 : -grid_extent_ + 2.0 * grid_extent_ * a / static_cast<double>(u - 1);
  };
  for (int a = 0; a < u; ++a) {
    for (int b = 0; b < u; ++b) g.row(a * u + b) << coord(a), coord(b);
  }
  return g;
}

void DecoderHeads::init_uniform(Rng& rng) {
  offset_.init_uniform(rng);
  folding_.init_uniform(rng);
}

DecoderHeads DecoderHeads::zeros_like() const {
  DecoderHeads out = *this;
  out.offset_ = offset_.zeros_like();
  out.folding_ = folding_.zeros_like();
  return out;
}

void DecoderHeads::append_params(std::vector<ParamView>& out, const std::string& prefix) {
  grl::append_params(out, prefix + ".offset", offset_);
  grl::append_params(out, prefix + ".folding", folding_);
}

ReconstructionOutput decode(const Eigen::MatrixXd& seed_coords, const Eigen::MatrixXd& seed_features,
                            const DecoderHeads& heads, DecodeCache* cache, BranchTrace* trace) {
  const Eigen::Index n = seed_coords.rows();
  const Eigen::Index s = heads.feature_dim();
  if (n < 1) throw Error(ErrorKind::DimensionMismatch, "decoder needs at least one seed");
  if (seed_coords.cols() != 3 || seed_features.rows() != n || seed_features.cols() != s) {
    throw Error(ErrorKind::DimensionMismatch,
                "decoder expects n x 3 coordinates and n x " + std::to_string(s) + " features");
  }
  DecodeCache local_cache;
  DecodeCache& c = cache ? *cache : local_cache;

  c.offset_input.resize(n, 3 + s);
  c.offset_input << seed_coords, seed_features;
  const Eigen::MatrixXd delta = heads.offset().forward(c.offset_input, &c.offset, trace);

  ReconstructionOutput out;
  out.y_coarse = seed_coords + delta.leftCols(3);
  out.h_coarse.resize(n, 3 + s);
  out.h_coarse << out.y_coarse, seed_features + delta.rightCols(s);

  const Eigen::MatrixXd grid = heads.grid();
  const Eigen::Index reps = grid.rows();
  c.folding_input.resize(n * reps, 2 + 3 + s);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < reps; ++j) {
      c.folding_input.row(i * reps + j) << grid.row(j), out.h_coarse.row(i);
    }
  }
  const Eigen::MatrixXd fold = heads.folding().forward(c.folding_input, &c.folding, trace);
  out.y_detail.resize(n * reps, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < reps; ++j) {
      out.y_detail.row(i * reps + j) = out.y_coarse.row(i) + fold.row(i * reps + j);
    }
  }
  return out;
}

Eigen::MatrixXd decode_backward(const DecodeCache& cache, const DecoderHeads& heads,
                                const Eigen::MatrixXd& d_coarse, const Eigen::MatrixXd& d_detail,
                                DecoderHeads& grad) {
  const Eigen::Index n = cache.offset_input.rows();
  const Eigen::Index s = heads.feature_dim();
  const Eigen::Index reps = d_detail.rows() / n;

  const Eigen::MatrixXd d_fold_in = heads.folding().backward(cache.folding, d_detail, grad.folding());
  Eigen::MatrixXd d_y_coarse = d_coarse;
  Eigen::MatrixXd d_h_coarse = Eigen::MatrixXd::Zero(n, 3 + s);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < reps; ++j) {
      d_y_coarse.row(i) += d_detail.row(i * reps + j);
      d_h_coarse.row(i) += d_fold_in.row(i * reps + j).tail(3 + s);
    }
  }
  d_y_coarse += d_h_coarse.leftCols(3);

  Eigen::MatrixXd d_delta(n, 3 + s);
  d_delta << d_y_coarse, d_h_coarse.rightCols(s);
  const Eigen::MatrixXd d_offset_in = heads.offset().backward(cache.offset, d_delta, grad.offset());
  return d_h_coarse.rightCols(s) + d_offset_in.rightCols(s);
}

ReconstructionTargets build_targets(const SceneInstance& complete_scene, std::size_t n, int u,
                                    std::uint64_t seed) {
  if (u < 1) throw Error(ErrorKind::InvalidArgument, "grid side u must be >= 1");
  const std::size_t detail = static_cast<std::size_t>(u) * static_cast<std::size_t>(u) * n;
  if (n == 0 || complete_scene.points.size() < detail) {
    throw Error(ErrorKind::TooFewPoints, "complete scene has " +
                                             std::to_string(complete_scene.points.size()) +
                                             " points, need " + std::to_string(detail));
  }
  ReconstructionTargets t;
  for (std::size_t i : farthest_point_sample(complete_scene.points, detail, derive_seed(seed, 0))) {
    t.gt_detail.push_back(complete_scene.points[i]);
  }
  for (std::size_t i : farthest_point_sample(t.gt_detail, n, derive_seed(seed, 1))) {
    t.gt_coarse.push_back(t.gt_detail[i]);
  }
  return t;
}

}  // namespace grl
