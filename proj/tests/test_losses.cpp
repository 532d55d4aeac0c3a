#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>

#include "grl/error.hpp"
#include "grl/losses.hpp"
#include "grl/rng.hpp"
#include "test_util.hpp"

using namespace grl;

namespace {

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-4;
constexpr double kFloor = 1e-6;

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kFloor});
}

// Central differences of `f` with respect to every entry of `x`.
Eigen::MatrixXd numeric_grad(Eigen::MatrixXd& x, const std::function<double()>& f) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double x0 = x.data()[i];
    x.data()[i] = x0 + kStep;
    const double up = f();
    x.data()[i] = x0 - kStep;
    const double down = f();
    x.data()[i] = x0;
    g.data()[i] = (up - down) / (2.0 * kStep);
  }
  return g;
}

double max_rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& n) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a.data()[i], n.data()[i]));
  return worst;
}

Eigen::VectorXd random_vec(Rng& rng, Eigen::Index d) {
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = rng.normal();
  return v;
}

// Random batch: `pairs` pairs of `objects` objects, 2-4 rows per object,
// one background row per scene, categories drawn from {0, 1, 2}.
FeatureBatch random_batch(std::uint64_t seed, std::size_t pairs, std::size_t objects, Eigen::Index d) {
  Rng rng(seed);
  FeatureBatch batch;
  for (std::size_t b = 0; b < pairs; ++b) {
    std::vector<std::size_t> categories;
    for (std::size_t k = 0; k < objects; ++k) categories.push_back(rng.below(3));
    std::array<SceneFeatures, 2> pair;
    for (SceneFeatures& s : pair) {
      s.categories = categories;
      for (std::size_t k = 0; k < objects; ++k) {
        const std::size_t rows = 2 + rng.below(3);
        for (std::size_t r = 0; r < rows; ++r) s.labels.push_back(static_cast<int>(k));
      }
      s.labels.push_back(kBackground);
      s.h.resize(static_cast<Eigen::Index>(s.labels.size()), d);
      for (Eigen::Index i = 0; i < s.h.size(); ++i) s.h.data()[i] = 0.3 * rng.normal();
    }
    batch.pairs.push_back(std::move(pair));
  }
  return batch;
}

std::vector<MatchSet> random_matches(const FeatureBatch& batch, std::uint64_t seed, std::size_t per_pair) {
  Rng rng(seed);
  std::vector<MatchSet> out;
  for (const auto& pair : batch.pairs) {
    MatchSet m;
    for (std::size_t i = 0; i < per_pair; ++i) {
      const auto a = static_cast<std::size_t>(rng.below(pair[0].labels.size() - 1));
      const int y = pair[0].labels[a];
      std::vector<std::size_t> candidates;
      for (std::size_t j = 0; j < pair[1].labels.size(); ++j) {
        if (pair[1].labels[j] == y) candidates.push_back(j);
      }
      const std::size_t b = candidates[rng.below(candidates.size())];
      m.pairs.push_back({i, 0, a, b, 0.01, y});
    }
    out.push_back(std::move(m));
  }
  return out;
}

double scalar_info_nce(const Eigen::VectorXd& a, const Eigen::VectorXd& p,
                       const std::vector<Eigen::VectorXd>& negs, double tau) {
  double denom = std::exp(a.dot(p) / tau);
  const double num = denom;
  for (const auto& n : negs) denom += std::exp(a.dot(n) / tau);
  return -std::log(num / denom);
}

}  // namespace

TEST(NormalizeRows, UnitRowsAndGradient) {
  Rng rng(1);
  Eigen::MatrixXd v(5, 4);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.normal();
  const Eigen::MatrixXd u = normalize_rows(v);
  for (Eigen::Index i = 0; i < u.rows(); ++i) EXPECT_NEAR(u.row(i).norm(), 1.0, 1e-12);
  EXPECT_LE((normalize_rows(u) - u).cwiseAbs().maxCoeff(), 1e-15);
  Eigen::MatrixXd w(5, 4);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  const Eigen::MatrixXd numeric =
      numeric_grad(v, [&] { return (normalize_rows(v).array() * w.array()).sum(); });
  EXPECT_LE(max_rel(normalize_rows_backward(v, w), numeric), kTol);
}

TEST(InfoNce, HandComputedValue) {
  Eigen::VectorXd a(2), p(2), n(2);
  a << 1.0, 0.0;
  p << 0.6, 0.8;
  n << 0.0, 1.0;
  const double tau = 0.5;
  const std::vector<Eigen::VectorXd> negs{n};
  // -log(e^{1.2} / (e^{1.2} + e^{0}))
  const double expected = -std::log(std::exp(1.2) / (std::exp(1.2) + 1.0));
  EXPECT_NEAR(info_nce_pairwise(a, p, negs, tau).loss, expected, 1e-14);
}

TEST(InfoNce, LargeTemperatureLimit) {
  Rng rng(2);
  for (std::size_t n_neg : {1u, 5u, 30u}) {
    std::vector<Eigen::VectorXd> negs;
    for (std::size_t i = 0; i < n_neg; ++i) negs.push_back(random_vec(rng, 8).normalized());
    const auto r = info_nce_pairwise(random_vec(rng, 8).normalized(), random_vec(rng, 8).normalized(),
                                     negs, 1e6);
    EXPECT_NEAR(r.loss, std::log(1.0 + static_cast<double>(n_neg)), 1e-3);
  }
}

TEST(InfoNce, NoNegativesIsZeroAndStable) {
  Rng rng(3);
  const auto r = info_nce_pairwise(random_vec(rng, 4), random_vec(rng, 4), {}, 0.03);
  EXPECT_EQ(r.loss, 0.0);
  // Large logits do not overflow the log-sum-exp.
  Eigen::VectorXd a = Eigen::VectorXd::Constant(4, 10.0);
  const std::vector<Eigen::VectorXd> negs{-a};
  const auto big = info_nce_pairwise(a, a, negs, 0.03);
  EXPECT_TRUE(std::isfinite(big.loss));
  EXPECT_GE(big.loss, 0.0);
}

TEST(InfoNce, Errors) {
  Eigen::VectorXd a = Eigen::VectorXd::Ones(3);
  Eigen::VectorXd bad = a;
  bad[1] = std::nan("");
  try {
    info_nce_pairwise(a, bad, {}, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteInput);
  }
  EXPECT_THROW(info_nce_pairwise(a, Eigen::VectorXd::Ones(2), {}, 0.1), Error);
  EXPECT_THROW(info_nce_pairwise(a, a, {}, 0.0), Error);
}

TEST(InfoNce, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const Eigen::Index d = 6;
    Eigen::MatrixXd x(5, d);  // anchor, positive, 3 negatives
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 0.4 * rng.normal();
    auto eval = [&] {
      std::vector<Eigen::VectorXd> negs;
      for (int r = 2; r < 5; ++r) negs.push_back(x.row(r).transpose());
      return info_nce_pairwise(x.row(0).transpose(), x.row(1).transpose(), negs, 0.3);
    };
    const InfoNce r = eval();
    Eigen::MatrixXd analytic(5, d);
    analytic.row(0) = r.d_anchor.transpose();
    analytic.row(1) = r.d_positive.transpose();
    for (int j = 0; j < 3; ++j) analytic.row(2 + j) = r.d_negatives[static_cast<std::size_t>(j)].transpose();
    EXPECT_LE(max_rel(analytic, numeric_grad(x, [&] { return eval().loss; })), kTol);
  }
}

TEST(ObjectLoss, TwoInstancesScalarOracle) {
  // One pair, two objects of different categories, one row each.
  FeatureBatch batch;
  std::array<SceneFeatures, 2> pair;
  Eigen::MatrixXd ha(2, 3), hb(2, 3);
  ha << 1, 0, 0, 0, 1, 0;
  hb << 0.8, 0.6, 0, 0, 0.6, 0.8;
  pair[0] = {ha, {0, 1}, {4, 9}};
  pair[1] = {hb, {0, 1}, {4, 9}};
  batch.pairs.push_back(pair);
  const double tau = 0.2;
  const Eigen::VectorXd a0 = ha.row(0).transpose(), a1 = ha.row(1).transpose();
  const Eigen::VectorXd b0 = hb.row(0).transpose(), b1 = hb.row(1).transpose();
  const double expected =
      0.5 * (scalar_info_nce(a0, b0, {a1, b1}, tau) + scalar_info_nce(b0, a0, {a1, b1}, tau) +
             scalar_info_nce(a1, b1, {a0, b0}, tau) + scalar_info_nce(b1, a1, {a0, b0}, tau));
  const ContrastiveLoss got = object_level_loss(batch, tau);
  EXPECT_NEAR(got.loss, expected, 1e-10);
  EXPECT_EQ(got.terms, 2u);
  EXPECT_EQ(got.negatives, 8u);
}

TEST(ObjectLoss, SameCategoryInstancesAreNotNegatives) {
  FeatureBatch batch = random_batch(4, 2, 3, 5);
  for (auto& pair : batch.pairs) {
    for (auto& s : pair) s.categories.assign(3, 7);
  }
  const ContrastiveLoss r = object_level_loss(batch);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.negatives, 0u);
}

TEST(ObjectLoss, ConstantFeaturesGiveLogOnePlusNegatives) {
  FeatureBatch batch = random_batch(5, 2, 4, 6);
  for (auto& pair : batch.pairs) {
    for (auto& s : pair) s.h.setZero();
  }
  // Every similarity is 0, so each directional term is log(1 + |negatives|).
  double expected = 0.0;
  std::size_t anchors = 0, total_instances = 0;
  std::map<std::size_t, std::size_t> per_category;
  for (const auto& pair : batch.pairs) {
    for (std::size_t c : pair[0].categories) per_category[c] += 2;
    total_instances += 2 * pair[0].categories.size();
  }
  for (const auto& pair : batch.pairs) {
    for (std::size_t c : pair[0].categories) {
      expected += 2.0 * std::log(1.0 + static_cast<double>(total_instances - per_category[c]));
      ++anchors;
    }
  }
  expected /= static_cast<double>(anchors);
  EXPECT_NEAR(object_level_loss(batch, 0.03).loss, expected, 1e-12);
}

TEST(ObjectLoss, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    FeatureBatch batch = random_batch(200 + seed, 2, 3, 5);
    const ContrastiveLoss r = object_level_loss(batch, 0.1);
    for (std::size_t b = 0; b < batch.pairs.size(); ++b) {
      for (std::size_t s = 0; s < 2; ++s) {
        const Eigen::MatrixXd numeric = numeric_grad(
            batch.pairs[b][s].h, [&] { return object_level_loss(batch, 0.1).loss; });
        EXPECT_LE(max_rel(r.grad[b][s], numeric), kTol) << "seed " << seed;
      }
    }
  }
}

TEST(PointLoss, ScalarOracle) {
  // One pair, two objects, one match on each.
  FeatureBatch batch;
  std::array<SceneFeatures, 2> pair;
  Eigen::MatrixXd ha(3, 2), hb(3, 2);
  ha << 1, 0, 0, 1, 0.6, 0.8;
  hb << 0.8, 0.6, 0.6, -0.8, -1, 0;
  pair[0] = {ha, {0, 0, 1}, {0, 1}};
  pair[1] = {hb, {0, 1, 1}, {0, 1}};
  batch.pairs.push_back(pair);
  MatchSet m;
  m.pairs.push_back({0, 0, 0, 0, 0.0, 0});  // A row 0 <-> B row 0 on object 0
  m.pairs.push_back({1, 1, 2, 2, 0.0, 1});  // A row 2 <-> B row 2 on object 1
  const std::vector<MatchSet> matches{m};
  const double tau = 0.25;
  const Eigen::VectorXd a0 = ha.row(0).transpose(), b0 = hb.row(0).transpose();
  const Eigen::VectorXd a2 = ha.row(2).transpose(), b2 = hb.row(2).transpose();
  const double expected =
      0.5 * (scalar_info_nce(a0, b0, {a2, b2}, tau) + scalar_info_nce(b0, a0, {a2, b2}, tau) +
             scalar_info_nce(a2, b2, {a0, b0}, tau) + scalar_info_nce(b2, a2, {a0, b0}, tau));
  EXPECT_NEAR(point_level_loss(batch, matches, tau).loss, expected, 1e-10);
}

TEST(PointLoss, MatchOrderDoesNotMatter) {
  FeatureBatch batch = random_batch(6, 2, 4, 6);
  std::vector<MatchSet> matches = random_matches(batch, 7, 12);
  const double before = point_level_loss(batch, matches).loss;
  for (MatchSet& m : matches) std::reverse(m.pairs.begin(), m.pairs.end());
  std::swap(matches[0].pairs[0], matches[0].pairs[5]);
  EXPECT_NEAR(point_level_loss(batch, matches).loss, before, 1e-12);
}

TEST(PointLoss, NoMatchesIsZero) {
  FeatureBatch batch = random_batch(8, 2, 3, 4);
  const std::vector<MatchSet> empty(2);
  const ContrastiveLoss r = point_level_loss(batch, empty);
  EXPECT_EQ(r.loss, 0.0);
  for (const auto& g : r.grad) {
    EXPECT_EQ(g[0].cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(g[1].cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_THROW(point_level_loss(batch, std::vector<MatchSet>(1)), Error);
}

TEST(PointLoss, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    FeatureBatch batch = random_batch(300 + seed, 2, 3, 5);
    const std::vector<MatchSet> matches = random_matches(batch, seed, 6);
    const ContrastiveLoss r = point_level_loss(batch, matches, 0.1);
    for (std::size_t b = 0; b < batch.pairs.size(); ++b) {
      for (std::size_t s = 0; s < 2; ++s) {
        const Eigen::MatrixXd numeric = numeric_grad(
            batch.pairs[b][s].h, [&] { return point_level_loss(batch, matches, 0.1).loss; });
        EXPECT_LE(max_rel(r.grad[b][s], numeric), kTol) << "seed " << seed;
      }
    }
  }
}

TEST(Losses, BatchPermutationInvariance) {
  FeatureBatch batch = random_batch(9, 3, 3, 5);
  std::vector<MatchSet> matches = random_matches(batch, 10, 5);
  const double obj = object_level_loss(batch).loss;
  const double pts = point_level_loss(batch, matches).loss;
  std::swap(batch.pairs[0], batch.pairs[2]);
  std::swap(matches[0], matches[2]);
  EXPECT_NEAR(object_level_loss(batch).loss, obj, 1e-12);
  EXPECT_NEAR(point_level_loss(batch, matches).loss, pts, 1e-12);
}

TEST(Losses, NonnegativeAndFinite) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    FeatureBatch batch = random_batch(400 + seed, 2, 4, 8);
    const double obj = object_level_loss(batch).loss;
    const double pts = point_level_loss(batch, random_matches(batch, seed, 8)).loss;
    EXPECT_TRUE(std::isfinite(obj));
    EXPECT_TRUE(std::isfinite(pts));
    EXPECT_GE(obj, 0.0);
    EXPECT_GE(pts, 0.0);
  }
}

TEST(Losses, BatchErrors) {
  EXPECT_THROW(object_level_loss(FeatureBatch{}), Error);
  FeatureBatch batch = random_batch(11, 1, 2, 4);
  batch.pairs[0][1].categories.push_back(0);
  EXPECT_THROW(object_level_loss(batch), Error);
}

TEST(Chamfer, AgainstBruteForceAndZeroOnSelf) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const PointCloud x = test::random_cloud(64, 1000 + s);
    const PointCloud y = test::random_cloud(64, 2000 + s);
    EXPECT_NEAR(chamfer_distance(x, y), test::brute_chamfer(x, y), 1e-12);
    EXPECT_NEAR(chamfer_distance(x, y), chamfer_distance(y, x), 1e-12);
    EXPECT_EQ(chamfer_distance(x, x), 0.0);
  }
  try {
    chamfer_distance(PointCloud{}, test::random_cloud(3, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptySet);
  }
}

TEST(Chamfer, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const PointCloud x = test::random_cloud(20, 3000 + s);
    const PointCloud y = test::random_cloud(25, 4000 + s);
    const ChamferGrad g = chamfer_distance_grad(x, y);
    EXPECT_EQ(g.value, chamfer_distance(x, y));
    Eigen::MatrixXd xm(20, 3);
    for (Eigen::Index i = 0; i < 20; ++i) xm.row(i) = x[static_cast<std::size_t>(i)].transpose();
    const Eigen::MatrixXd numeric = numeric_grad(xm, [&] {
      PointCloud moved(20);
      for (Eigen::Index i = 0; i < 20; ++i) moved[static_cast<std::size_t>(i)] = xm.row(i).transpose();
      return chamfer_distance(moved, y);
    });
    Eigen::MatrixXd analytic(20, 3);
    for (Eigen::Index i = 0; i < 20; ++i) analytic.row(i) = g.d_x[static_cast<std::size_t>(i)].transpose();
    EXPECT_LE(max_rel(analytic, numeric), kTol);
  }
}

TEST(OverallLoss, WeightedSumAndAffineInLambda) {
  EXPECT_EQ(overall_loss(1.5, 2.0, 0.25), 1.5 + 0.1 * 2.0 + 100.0 * 0.25);
  const double base = overall_loss(1.0, 3.0, 0.5, 0.0, 7.0);
  const double step = overall_loss(1.0, 3.0, 0.5, 1.0, 7.0) - base;
  for (double lp : {0.5, 2.0, 10.0}) {
    EXPECT_NEAR(overall_loss(1.0, 3.0, 0.5, lp, 7.0), base + lp * step, 1e-12);
  }
  EXPECT_THROW(overall_loss(1.0, 1.0, 1.0, -0.1, 1.0), Error);
}
