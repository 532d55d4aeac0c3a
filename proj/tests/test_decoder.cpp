#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <numeric>
#include <set>

#include "grl/decoder.hpp"
#include "grl/error.hpp"
#include "grl/losses.hpp"
#include "grl/rng.hpp"
#include "test_util.hpp"

using namespace grl;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

DecoderHeads random_heads(Eigen::Index s, int u, std::uint64_t seed, Eigen::Index hidden = 16) {
  DecoderHeads heads(s, {hidden, u, kDefaultGridExtent});
  Rng rng(seed);
  heads.init_uniform(rng);
  return heads;
}

// Plain loop evaluation of a ReLU MLP on one input vector.
Eigen::VectorXd mlp_oracle(const Mlp& mlp, Eigen::VectorXd x, bool relu_output) {
  const auto& layers = mlp.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::VectorXd y(layers[l].out_dim());
    for (Eigen::Index o = 0; o < y.size(); ++o) {
      double acc = layers[l].bias[o];
      for (Eigen::Index i = 0; i < x.size(); ++i) acc += layers[l].weight(o, i) * x[i];
      y[o] = (l + 1 < layers.size() || relu_output) ? std::max(acc, 0.0) : acc;
    }
    x = y;
  }
  return x;
}

double max_rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& n, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = std::abs(a.data()[i] - n.data()[i]);
    worst = std::max(worst, d / std::max({std::abs(a.data()[i]), std::abs(n.data()[i]), floor}));
  }
  return worst;
}

Eigen::MatrixXd numeric_grad(double* data, Eigen::Index rows, Eigen::Index cols,
                             const std::function<double()>& f) {
  Eigen::MatrixXd g(rows, cols);
  Eigen::Map<Eigen::MatrixXd> x(data, rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double x0 = x.data()[i];
    x.data()[i] = x0 + 1e-5;
    const double up = f();
    x.data()[i] = x0 - 1e-5;
    const double down = f();
    x.data()[i] = x0;
    g.data()[i] = (up - down) / 2e-5;
  }
  return g;
}

SceneInstance scene_from(PointCloud pts) {
  SceneInstance s;
  s.points = std::move(pts);
  s.labels.assign(s.points.size(), 0);
  return s;
}

}  // namespace

TEST(Decoder, ZeroHeadsReproduceSeeds) {
  const Eigen::Index s = 8;
  const DecoderHeads heads(s, {16, 3, 0.05});  // zero weights and biases
  const Eigen::MatrixXd coords = random_matrix(10, 3, 1);
  const ReconstructionOutput out = decode(coords, random_matrix(10, s, 2), heads);
  EXPECT_EQ(out.y_coarse, coords);
  ASSERT_EQ(out.y_detail.rows(), 90);
  for (Eigen::Index i = 0; i < 10; ++i) {
    for (Eigen::Index j = 0; j < 9; ++j) EXPECT_EQ(out.y_detail.row(i * 9 + j), coords.row(i));
  }
}

TEST(Decoder, SingleCellGridWithZeroFoldingEqualsCoarse) {
  const Eigen::Index s = 6;
  DecoderHeads heads = random_heads(s, 1, 3);
  heads.folding() = heads.folding().zeros_like();
  const ReconstructionOutput out = decode(random_matrix(7, 3, 4), random_matrix(7, s, 5), heads);
  EXPECT_EQ(out.y_detail, out.y_coarse);
}

TEST(Decoder, RowwiseOracle) {
  const Eigen::Index s = 8;
  const DecoderHeads heads = random_heads(s, 3, 6);
  const Eigen::MatrixXd coords = random_matrix(16, 3, 7);
  const Eigen::MatrixXd feats = random_matrix(16, s, 8);
  const ReconstructionOutput out = decode(coords, feats, heads);
  ASSERT_EQ(out.y_detail.rows(), 144);
  const Eigen::MatrixXd grid = heads.grid();
  for (Eigen::Index i = 0; i < 16; ++i) {
    Eigen::VectorXd in(3 + s);
    in << coords.row(i).transpose(), feats.row(i).transpose();
    const Eigen::VectorXd delta = mlp_oracle(heads.offset(), in, false);
    const Eigen::VectorXd yc = coords.row(i).transpose() + delta.head(3);
    EXPECT_LE((out.y_coarse.row(i).transpose() - yc).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::VectorXd hc(3 + s);
    hc << yc, feats.row(i).transpose() + delta.tail(s);
    EXPECT_LE((out.h_coarse.row(i).transpose() - hc).cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index j = 0; j < 9; ++j) {
      Eigen::VectorXd fin(5 + s);
      fin << grid.row(j).transpose(), hc;
      const Eigen::VectorXd fold = mlp_oracle(heads.folding(), fin, false);
      const Eigen::VectorXd got = (out.y_detail.row(i * 9 + j) - out.y_coarse.row(i)).transpose();
      EXPECT_LE((got - fold).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Decoder, CoarseFeaturesStartWithCoarseCoordinates) {
  const DecoderHeads heads = random_heads(5, 3, 9);
  const ReconstructionOutput out = decode(random_matrix(12, 3, 10), random_matrix(12, 5, 11), heads);
  EXPECT_EQ(out.h_coarse.leftCols(3), out.y_coarse);
}

TEST(Decoder, CardinalityLaw) {
  for (int u : {1, 2, 3, 4}) {
    for (Eigen::Index n : {1, 5, 33}) {
      const DecoderHeads heads = random_heads(4, u, 12, 8);
      const ReconstructionOutput out = decode(random_matrix(n, 3, 13), random_matrix(n, 4, 14), heads);
      EXPECT_EQ(out.y_coarse.rows(), n);
      EXPECT_EQ(out.y_detail.rows(), u * u * n);
    }
  }
}

TEST(Decoder, PermutationEquivariance) {
  const DecoderHeads heads = random_heads(6, 3, 15);
  const Eigen::MatrixXd coords = random_matrix(9, 3, 16);
  const Eigen::MatrixXd feats = random_matrix(9, 6, 17);
  std::vector<Eigen::Index> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[2], perm[6]);
  Eigen::MatrixXd pc(9, 3), pf(9, 6);
  for (Eigen::Index i = 0; i < 9; ++i) {
    pc.row(i) = coords.row(perm[static_cast<std::size_t>(i)]);
    pf.row(i) = feats.row(perm[static_cast<std::size_t>(i)]);
  }
  const ReconstructionOutput a = decode(coords, feats, heads);
  const ReconstructionOutput b = decode(pc, pf, heads);
  for (Eigen::Index i = 0; i < 9; ++i) {
    const Eigen::Index src = perm[static_cast<std::size_t>(i)];
    EXPECT_EQ(b.y_coarse.row(i), a.y_coarse.row(src));
    EXPECT_EQ(b.y_detail.middleRows(i * 9, 9), a.y_detail.middleRows(src * 9, 9));
  }
}

TEST(Decoder, GridLayout) {
  const DecoderHeads heads(4, {8, 3, 0.05});
  const Eigen::MatrixXd g = heads.grid();
  ASSERT_EQ(g.rows(), 9);
  EXPECT_DOUBLE_EQ(g(0, 0), -0.05);
  EXPECT_DOUBLE_EQ(g(8, 1), 0.05);
  EXPECT_DOUBLE_EQ(g(1 * 3 + 2, 0), 0.0);
  EXPECT_DOUBLE_EQ(g(1 * 3 + 2, 1), 0.05);
  EXPECT_THROW(DecoderHeads(4, {8, 0, 0.05}), Error);
}

TEST(Decoder, DimensionErrors) {
  const DecoderHeads heads = random_heads(4, 3, 18);
  EXPECT_THROW(decode(random_matrix(3, 3, 1), random_matrix(3, 5, 1), heads), Error);
  EXPECT_THROW(decode(random_matrix(3, 2, 1), random_matrix(3, 4, 1), heads), Error);
  EXPECT_THROW(decode(random_matrix(0, 3, 1), random_matrix(0, 4, 1), heads), Error);
}

TEST(Decoder, BackwardMatchesFiniteDifferences) {
  const Eigen::Index s = 4;
  DecoderHeads heads = random_heads(s, 2, 19, 6);
  const Eigen::MatrixXd coords = random_matrix(5, 3, 20);
  Eigen::MatrixXd feats = random_matrix(5, s, 21);
  const Eigen::MatrixXd wc = random_matrix(5, 3, 22);
  const Eigen::MatrixXd wd = random_matrix(20, 3, 23);
  auto objective = [&] {
    const ReconstructionOutput out = decode(coords, feats, heads);
    return (out.y_coarse.array() * wc.array()).sum() + (out.y_detail.array() * wd.array()).sum();
  };
  DecodeCache cache;
  decode(coords, feats, heads, &cache);
  DecoderHeads grad = heads.zeros_like();
  const Eigen::MatrixXd d_feats = decode_backward(cache, heads, wc, wd, grad);
  EXPECT_LE(max_rel(d_feats, numeric_grad(feats.data(), feats.rows(), feats.cols(), objective)), 1e-4);
  std::vector<ParamView> params, grads;
  heads.append_params(params, "h");
  grad.append_params(grads, "h");
  ASSERT_EQ(params.size(), grads.size());
  for (std::size_t t = 0; t < params.size(); ++t) {
    const Eigen::MatrixXd numeric = numeric_grad(params[t].data, params[t].rows, params[t].cols, objective);
    const Eigen::Map<const Eigen::MatrixXd> analytic(grads[t].data, grads[t].rows, grads[t].cols);
    EXPECT_LE(max_rel(analytic, numeric), 1e-4) << params[t].name;
  }
}

TEST(ToyEncoder, ShapesAndPooling) {
  ToyEncoder enc({16, 8});
  Rng rng(24);
  enc.init_uniform(rng);
  const Eigen::MatrixXd pts = random_matrix(10, 3, 25);
  const std::vector<int> labels{0, 0, 0, 1, 1, 1, 1, kBackground, kBackground, 0};
  ToyEncoder::Cache cache;
  const Eigen::MatrixXd z = enc.forward(pts, labels, &cache);
  EXPECT_EQ(z.rows(), 10);
  EXPECT_EQ(z.cols(), 8);
  EXPECT_EQ(cache.groups, 3);
  // Pooled half of the concatenation is shared within a group.
  EXPECT_EQ(cache.concat.row(0).tail(8), cache.concat.row(9).tail(8));
  EXPECT_EQ(cache.concat.row(7).tail(8), cache.concat.row(8).tail(8));
  // Moving a point of object 1 leaves object 0's features unchanged.
  Eigen::MatrixXd moved = pts;
  moved.row(4) += Eigen::RowVector3d(0.5, -0.3, 0.2);
  const Eigen::MatrixXd z2 = enc.forward(moved, labels);
  EXPECT_EQ(z2.row(0), z.row(0));
  EXPECT_THROW(enc.forward(pts, std::vector<int>(9, 0)), Error);
}

TEST(ToyEncoder, BackwardMatchesFiniteDifferences) {
  ToyEncoder enc({12, 6});
  Rng rng(26);
  enc.init_uniform(rng);
  const Eigen::MatrixXd pts = random_matrix(14, 3, 27);
  std::vector<int> labels(14);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3) - 1;
  const Eigen::MatrixXd w = random_matrix(14, 6, 28);
  auto objective = [&] { return (enc.forward(pts, labels).array() * w.array()).sum(); };
  ToyEncoder::Cache cache;
  enc.forward(pts, labels, &cache);
  ToyEncoder grad = enc.zeros_like();
  enc.backward(cache, w, grad);
  std::vector<ParamView> params, grads;
  enc.append_params(params, "e");
  grad.append_params(grads, "e");
  for (std::size_t t = 0; t < params.size(); ++t) {
    const Eigen::MatrixXd numeric = numeric_grad(params[t].data, params[t].rows, params[t].cols, objective);
    const Eigen::Map<const Eigen::MatrixXd> analytic(grads[t].data, grads[t].rows, grads[t].cols);
    EXPECT_LE(max_rel(analytic, numeric), 1e-4) << params[t].name;
  }
}

TEST(BuildTargets, ExhaustionNestingAndErrors) {
  const PointCloud pts = test::random_cloud(36, 29);
  const ReconstructionTargets t = build_targets(scene_from(pts), 4, 3, 1);
  ASSERT_EQ(t.gt_detail.size(), 36u);
  ASSERT_EQ(t.gt_coarse.size(), 4u);
  auto key = [](const Vec3& p) { return std::make_tuple(p.x(), p.y(), p.z()); };
  std::set<std::tuple<double, double, double>> all, detail;
  for (const Vec3& p : pts) all.insert(key(p));
  for (const Vec3& p : t.gt_detail) detail.insert(key(p));
  EXPECT_EQ(all, detail);
  for (const Vec3& p : t.gt_coarse) EXPECT_TRUE(detail.count(key(p)));
  try {
    build_targets(scene_from(pts), 5, 3, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooFewPoints);
  }
}

TEST(BuildTargets, FpsCoarseCoversBetterThanRandomSubsets) {
  const PointCloud pts = test::random_cloud(2000, 30);
  const ReconstructionTargets t = build_targets(scene_from(pts), 32, 3, 2);
  const double fps = chamfer_distance(t.gt_coarse, t.gt_detail);
  Rng rng(31);
  double random_mean = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> perm(t.gt_detail.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    PointCloud subset;
    for (std::size_t i = 0; i < 32; ++i) subset.push_back(t.gt_detail[perm[i]]);
    random_mean += chamfer_distance(subset, t.gt_detail) / 50.0;
  }
  EXPECT_LE(fps, random_mean);
}
