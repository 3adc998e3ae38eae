#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Geometry>

#include "doctest.h"
#include "pcbd/error.hpp"
#include "pcbd/metrics.hpp"
#include "pcbd/rng.hpp"

using namespace pcbd;

namespace {

PointCloud random_cloud(Index n, SeededRng& rng) {
  Points p(n, 3);
  for (Index i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) p(i, c) = rng.uniform(-1.0, 1.0);
  return PointCloud(std::move(p));
}

PointCloud cloud(std::vector<std::array<double, 3>> pts) { return PointCloud(pts); }

double brute_chamfer(const PointCloud& x, const PointCloud& y) {
  auto side = [](const PointCloud& a, const PointCloud& b) {
    double total = 0.0;
    for (Index i = 0; i < a.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < b.size(); ++j) best = std::min(best, (a.xyz.row(i) - b.xyz.row(j)).squaredNorm());
      total += best;
    }
    return total / double(a.size());
  };
  return side(x, y) + side(y, x);
}

double brute_hausdorff(const PointCloud& x, const PointCloud& y) {
  auto side = [](const PointCloud& a, const PointCloud& b) {
    double worst = 0.0;
    for (Index i = 0; i < a.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < b.size(); ++j) best = std::min(best, (a.xyz.row(i) - b.xyz.row(j)).squaredNorm());
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::sqrt(std::max(side(x, y), side(y, x)));
}

double brute_wasserstein(const PointCloud& x, const PointCloud& y) {
  std::vector<Index> perm(std::size_t(x.size()));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (Index i = 0; i < x.size(); ++i) c += (x.xyz.row(i) - y.xyz.row(perm[std::size_t(i)])).squaredNorm();
    best = std::min(best, c / double(x.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("chamfer") {
  CHECK(chamfer(cloud({{0, 0, 0}}), cloud({{1, 0, 0}})) == 2.0);
  SeededRng rng(1);
  for (Index n : {1, 3, 16, 40, 64}) {
    const PointCloud x = random_cloud(n, rng), y = random_cloud(n + 3, rng);
    CHECK(chamfer(x, x) == 0.0);
    CHECK(chamfer(x, y) == brute_chamfer(x, y));
    CHECK(chamfer(x, y) == chamfer(y, x));
  }
  CHECK_THROWS_AS(chamfer(PointCloud(), cloud({{0, 0, 0}})), Error);
}

TEST_CASE("hausdorff") {
  CHECK(hausdorff(cloud({{0, 0, 0}}), cloud({{1, 0, 0}, {0, 0, 0}})) == 1.0);
  SeededRng rng(2);
  for (Index n : {1, 5, 33, 64}) {
    const PointCloud x = random_cloud(n, rng), y = random_cloud(n, rng);
    CHECK(hausdorff(x, x) == 0.0);
    CHECK(hausdorff(x, y) == brute_hausdorff(x, y));
    CHECK(hausdorff(x, y) == hausdorff(y, x));
  }
}

TEST_CASE("wasserstein_exact") {
  const PointCloud a = cloud({{0, 1, 2}}), b = cloud({{3, -1, 2}});
  CHECK(wasserstein_exact(a, b) == 13.0);
  SeededRng rng(3);
  for (Index n = 1; n <= 8; ++n) {
    const PointCloud x = random_cloud(n, rng), y = random_cloud(n, rng);
    CHECK(wasserstein_exact(x, x) == 0.0);
    CHECK(wasserstein_exact(x, y) == doctest::Approx(brute_wasserstein(x, y)).epsilon(1e-12));
    CHECK(wasserstein_exact(x, y) == doctest::Approx(wasserstein_exact(y, x)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(wasserstein_exact(random_cloud(3, rng), random_cloud(4, rng)), Error);
  try {
    const PointCloud big(Points::Zero(kMaxExactWassersteinPoints + 1, 3));
    wasserstein_exact(big, big);
    FAIL("expected SizeLimit");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SizeLimit);
  }
}

TEST_CASE("solve_assignment on a hand-made cost matrix") {
  Eigen::MatrixXd c(3, 3);
  c << 4, 1, 3, 2, 0, 5, 3, 2, 2;
  const auto m = solve_assignment(c);
  // Optimum 1 + 2 + 2 = 5 via 0->1, 1->0, 2->2.
  CHECK(m == std::vector<Index>{1, 0, 2});
}

TEST_CASE("sliced_wasserstein") {
  SeededRng rng(4);
  const PointCloud x = random_cloud(64, rng);
  CHECK(sliced_wasserstein(x, x, 32, rng) == 0.0);

  SUBCASE("translation gives d^2/3") {
    PointCloud y = x;
    y.xyz.col(0).array() += 0.5;
    SeededRng dirs(9);
    CHECK(sliced_wasserstein(x, y, 4096, dirs) == doctest::Approx(0.25 / 3.0).epsilon(0.05));
  }
  SUBCASE("single axis direction matches sorted 1D matching") {
    const PointCloud a = cloud({{0.3, 0, 0}, {-1, 5, 0}, {2, 0, 1}});
    const PointCloud b = cloud({{1, 0, 0}, {0, 0, 0}, {-2, 0, 0}});
    Directions u(1, 3);
    u << 1, 0, 0;
    // Sorted x: a = {-1, 0.3, 2}, b = {-2, 0, 1}.
    const double want = (1.0 + 0.09 + 1.0) / 3.0;
    CHECK(sliced_wasserstein(a, b, u) == doctest::Approx(want).epsilon(1e-14));
  }
  SUBCASE("never exceeds the exact transport cost beyond Monte-Carlo noise") {
    for (int rep = 0; rep < 5; ++rep) {
      const PointCloud a = random_cloud(32, rng), b = random_cloud(32, rng);
      const Directions dirs = random_directions(512, rng);
      std::vector<double> slices;
      for (Index k = 0; k < dirs.rows(); ++k) slices.push_back(sliced_wasserstein(a, b, Directions(dirs.row(k))));
      const double mean = std::accumulate(slices.begin(), slices.end(), 0.0) / double(slices.size());
      double var = 0.0;
      for (double s : slices) var += (s - mean) * (s - mean);
      const double se = std::sqrt(var / double(slices.size() - 1) / double(slices.size()));
      CHECK(mean <= wasserstein_exact(a, b) + 3.0 * se);
    }
  }
  CHECK_THROWS_AS(sliced_wasserstein(x, random_cloud(5, rng), 4, rng), Error);
}

TEST_CASE("random directions are unit length and deterministic") {
  SeededRng a(5), b(5);
  const auto d = random_directions(100, a);
  CHECK(d == random_directions(100, b));
  for (Index k = 0; k < d.rows(); ++k) CHECK(d.row(k).norm() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("metrics are invariant under a joint rotation") {
  SeededRng rng(6);
  const PointCloud x = random_cloud(24, rng), y = random_cloud(24, rng);
  Eigen::Matrix3d r = Eigen::Quaterniond(0.3, -0.5, 0.7, 0.2).normalized().toRotationMatrix();
  const PointCloud rx(Points(x.xyz * r.transpose())), ry(Points(y.xyz * r.transpose()));
  CHECK(std::abs(chamfer(rx, ry) - chamfer(x, y)) < 1e-9);
  CHECK(std::abs(hausdorff(rx, ry) - hausdorff(x, y)) < 1e-9);
  CHECK(std::abs(wasserstein_exact(rx, ry) - wasserstein_exact(x, y)) < 1e-9);
  // Rotating the directions with the clouds leaves every slice unchanged.
  const Directions dirs = random_directions(64, rng);
  const Directions rdirs = dirs * r.transpose();
  CHECK(std::abs(sliced_wasserstein(rx, ry, rdirs) - sliced_wasserstein(x, y, dirs)) < 1e-9);
}

TEST_CASE("loss gradients match central differences") {
  SeededRng rng(7);
  for (int seed = 0; seed < 10; ++seed) {
    const PointCloud target = random_cloud(15, rng);
    PointCloud recon = random_cloud(15, rng);
    const Directions dirs = random_directions(8, rng);
    const auto cd = chamfer_with_grad(target, recon);
    const auto sw = sliced_wasserstein_with_grad(target, recon, dirs);
    CHECK(cd.value == doctest::Approx(chamfer(target, recon)).epsilon(1e-14));
    CHECK(sw.value == doctest::Approx(sliced_wasserstein(target, recon, dirs)).epsilon(1e-14));
    const double h = 1e-7;
    for (Index i = 0; i < recon.size(); ++i) {
      for (int c = 0; c < 3; ++c) {
        PointCloud up = recon, down = recon;
        up.xyz(i, c) += h;
        down.xyz(i, c) -= h;
        const double fd_cd = (chamfer(target, up) - chamfer(target, down)) / (2 * h);
        const double fd_sw = (sliced_wasserstein(target, up, dirs) - sliced_wasserstein(target, down, dirs)) / (2 * h);
        CHECK(cd.grad(i, c) == doctest::Approx(fd_cd).epsilon(1e-5).scale(1.0));
        CHECK(sw.grad(i, c) == doctest::Approx(fd_sw).epsilon(1e-5).scale(1.0));
      }
    }
  }
}
