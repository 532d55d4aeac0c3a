#include <gtest/gtest.h>

#include <omp.h>

#include <algorithm>
#include <numeric>

#include "grl/kernels.hpp"
#include "test_util.hpp"

using namespace grl;

namespace {

class ThreadCounts : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    saved_ = omp_get_max_threads();
    omp_set_num_threads(GetParam());
  }
  void TearDown() override { omp_set_num_threads(saved_); }

 private:
  int saved_ = 1;
};

}  // namespace

TEST_P(ThreadCounts, FarthestPointSampleMatchesSerial) {
  for (std::size_t n : {1u, 2u, 17u, 500u, 3000u}) {
    const PointCloud pts = test::random_cloud(n, n);
    for (std::size_t m : {std::size_t{1}, n / 2 + 1, n}) {
      EXPECT_EQ(kernels::farthest_point_sample(pts, m, n / 3),
                kernels::serial::farthest_point_sample(pts, m, n / 3))
          << "n=" << n << " m=" << m;
    }
  }
}

TEST_P(ThreadCounts, NearestNeighborsMatchSerial) {
  const PointCloud q = test::random_cloud(1000, 1);
  const PointCloud r = test::random_cloud(777, 2);
  const auto par = kernels::nearest_neighbors(q, r);
  const auto ser = kernels::serial::nearest_neighbors(q, r);
  EXPECT_EQ(par.index, ser.index);
  EXPECT_EQ(par.sq_distance, ser.sq_distance);
}

TEST_P(ThreadCounts, ChamferMatchesSerialBitForBit) {
  const PointCloud x = test::random_cloud(1234, 3);
  const PointCloud y = test::random_cloud(999, 4);
  EXPECT_EQ(kernels::chamfer(x, y), kernels::serial::chamfer(x, y));
}

INSTANTIATE_TEST_SUITE_P(Threads, ThreadCounts, ::testing::Values(1, 2, 4));

TEST(Kernels, FpsCollinearPicksEnds) {
  const PointCloud pts{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(10, 0, 0)};
  EXPECT_EQ(kernels::farthest_point_sample(pts, 2, 0), (std::vector<std::size_t>{0, 2}));
}

TEST(Kernels, FpsExhaustionIsAPermutation) {
  const PointCloud pts = test::random_cloud(64, 9);
  auto idx = kernels::farthest_point_sample(pts, 64, 5);
  EXPECT_EQ(idx.front(), 5u);
  std::sort(idx.begin(), idx.end());
  std::vector<std::size_t> all(64);
  std::iota(all.begin(), all.end(), std::size_t{0});
  EXPECT_EQ(idx, all);
}

TEST(Kernels, FpsTiesGoToLowestIndex) {
  // Points 1 and 2 are equally far from point 0.
  const PointCloud pts{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 0.5, 0)};
  EXPECT_EQ(kernels::farthest_point_sample(pts, 2, 0), (std::vector<std::size_t>{0, 1}));
}

TEST(Kernels, NearestNeighborTieGoesToLowestIndex) {
  const PointCloud q{Vec3(0, 0, 0)};
  const PointCloud r{Vec3(2, 0, 0), Vec3(1, 0, 0), Vec3(-1, 0, 0)};
  const auto nn = kernels::nearest_neighbors(q, r);
  EXPECT_EQ(nn.index[0], 1u);
  EXPECT_EQ(nn.sq_distance[0], 1.0);
}

TEST(Kernels, ChamferAgainstBruteForce) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const PointCloud x = test::random_cloud(64, 2 * s);
    const PointCloud y = test::random_cloud(48, 2 * s + 1);
    EXPECT_NEAR(kernels::chamfer(x, y), test::brute_chamfer(x, y), 1e-12);
    EXPECT_EQ(kernels::chamfer(x, x), 0.0);
  }
}
