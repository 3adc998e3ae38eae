#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "pcbd/error.hpp"
#include "pcbd/pointcloud.hpp"
#include "pcbd/rng.hpp"
#include "pcbd/synth.hpp"

using namespace pcbd;
namespace fs = std::filesystem;

namespace {

PointCloud random_cloud(Index n, std::uint64_t seed, double scale = 1.0) {
  SeededRng rng(seed);
  Points p(n, 3);
  for (Index i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) p(i, c) = rng.uniform(-scale, scale);
  return PointCloud(std::move(p));
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("pcbd-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

NeighborTable brute_knn(const PointCloud& x, Index k) {
  NeighborTable t(x.size(), k);
  for (Index i = 0; i < x.size(); ++i) {
    std::vector<std::pair<double, Index>> d;
    for (Index j = 0; j < x.size(); ++j)
      if (j != i) d.push_back({(x.point(i) - x.point(j)).squaredNorm(), j});
    std::sort(d.begin(), d.end());
    for (Index c = 0; c < k; ++c) t(i, c) = d[std::size_t(c)].second;
  }
  return t;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("rng streams reproduce std::mt19937_64 seeded by the same words") {
  const std::uint64_t seed = 0x0123456789abcdefULL, stream = 42;
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream),
                    std::uint32_t(stream >> 32)};
  std::mt19937_64 ref(seq);
  SeededRng rng(seed, stream);
  for (int i = 0; i < 100; ++i) CHECK(rng.next_u64() == ref());
}

TEST_CASE("mix64 is the splitmix64 finaliser") {
  // First splitmix64 output for state 0.
  CHECK(mix64(0) == 0xE220A8397B1DCDAFULL);
}

TEST_CASE("rng draws are deterministic and derive does not advance the parent") {
  SeededRng a(7, 3), b(7, 3);
  SeededRng child = a.derive(5);
  for (int i = 0; i < 10; ++i) CHECK(a.uniform() == b.uniform());
  SeededRng again = SeededRng(7, 3).derive(5);
  CHECK(child.next_u64() == again.next_u64());
  CHECK(SeededRng(7, 3).derive(5).next_u64() != SeededRng(7, 3).derive(6).next_u64());
}

TEST_CASE("uniform, below and normal stay in range with plausible moments") {
  SeededRng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.below(7) < 7u);
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(double(n)));
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.05));
  CHECK_THROWS_AS(rng.below(0), Error);
}

TEST_CASE("sample_without_replacement returns distinct indices") {
  SeededRng rng(3);
  const auto s = rng.sample_without_replacement(50, 20);
  CHECK(s.size() == 20);
  CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 20);
  for (auto v : s) CHECK(v < 50);
}

TEST_CASE("normalize_unit_cube") {
  SUBCASE("two-point example") {
    const PointCloud x(std::vector<std::array<double, 3>>{{0, 0, 0}, {2, 0, 0}});
    const PointCloud y = normalize_unit_cube(x);
    CHECK(y.xyz(0, 0) == -1.0);
    CHECK(y.xyz(1, 0) == 1.0);
    CHECK(y.xyz.col(1).isZero());
    CHECK(y.xyz.col(2).isZero());
  }
  SUBCASE("coincident points are degenerate") {
    const PointCloud x(std::vector<std::array<double, 3>>{{5, 5, 5}, {5, 5, 5}});
    CHECK(kind_of([&] { normalize_unit_cube(x); }) == ErrorKind::DegenerateCloud);
  }
  SUBCASE("invariants and idempotence") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      PointCloud x = random_cloud(50, seed, 3.0);
      x.xyz.col(0).array() += 4.0;
      const PointCloud y = normalize_unit_cube(x);
      CHECK(is_normalized(y));
      CHECK(y.xyz.colwise().mean().norm() < 1e-9);
      CHECK(std::abs(y.xyz.cwiseAbs().maxCoeff() - 1.0) < 1e-9);
      const PointCloud z = normalize_unit_cube(y);
      CHECK((z.xyz - y.xyz).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
  SUBCASE("aspect ratio is kept") {
    const PointCloud x(std::vector<std::array<double, 3>>{{-2, -1, 0}, {2, 1, 0}});
    const PointCloud y = normalize_unit_cube(x);
    CHECK(y.xyz(1, 0) == 1.0);
    CHECK(y.xyz(1, 1) == 0.5);
  }
}

TEST_CASE("resample_to_n") {
  const PointCloud x = random_cloud(3, 5);
  SUBCASE("upsampling draws members of the input") {
    SeededRng rng(1);
    const PointCloud y = resample_to_n(x, 6, rng);
    CHECK(y.size() == 6);
    for (Index i = 0; i < y.size(); ++i) {
      bool member = false;
      for (Index j = 0; j < x.size(); ++j) member = member || y.xyz.row(i) == x.xyz.row(j);
      CHECK(member);
    }
  }
  SUBCASE("same size returns the input") {
    SeededRng rng(1);
    CHECK(resample_to_n(x, 3, rng) == x);
  }
  SUBCASE("subsample is distinct rows in original order") {
    const PointCloud big = random_cloud(40, 9);
    SeededRng rng(4);
    const PointCloud y = resample_to_n(big, 10, rng);
    Index last = -1;
    for (Index i = 0; i < y.size(); ++i) {
      Index at = -1;
      for (Index j = 0; j < big.size(); ++j)
        if (big.xyz.row(j) == y.xyz.row(i)) at = j;
      CHECK(at > last);
      last = at;
    }
  }
  SUBCASE("deterministic") {
    SeededRng a(8), b(8);
    CHECK(resample_to_n(x, 11, a) == resample_to_n(x, 11, b));
  }
}

TEST_CASE("knn") {
  SUBCASE("collinear tie goes to the lower index") {
    const PointCloud x(std::vector<std::array<double, 3>>{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}});
    CHECK(knn(x, 1)(1, 0) == 0);
  }
  SUBCASE("k = n - 1 lists every other point") {
    const PointCloud x = random_cloud(6, 2);
    const auto t = knn(x, 5);
    for (Index i = 0; i < 6; ++i) {
      std::set<Index> s(t.row(i).data(), t.row(i).data() + 5);
      CHECK(s.size() == 5);
      CHECK(s.count(i) == 0);
    }
  }
  SUBCASE("duplicates are each other's first neighbour") {
    Points p = random_cloud(5, 3).xyz;
    Points d(10, 3);
    d << p, p;
    const auto t = knn(PointCloud(d), 3);
    for (Index i = 0; i < 5; ++i) {
      CHECK(t(i, 0) == i + 5);
      CHECK(t(i + 5, 0) == i);
    }
  }
  SUBCASE("matches brute force up to n = 64") {
    for (Index n : {2, 9, 33, 64}) {
      const PointCloud x = random_cloud(n, std::uint64_t(n));
      for (Index k : {Index(1), std::min<Index>(n - 1, 10)}) CHECK(knn(x, k) == brute_knn(x, k));
    }
  }
  SUBCASE("k >= n") { CHECK(kind_of([] { knn(random_cloud(4, 1), 4); }) == ErrorKind::KTooLarge); }
}

TEST_CASE("rotate_euler") {
  const PointCloud e(std::vector<std::array<double, 3>>{{1, 0, 0}});
  const PointCloud r = rotate_euler(e, {0, 0, 90});
  CHECK(std::abs(r.xyz(0, 0)) < 1e-12);
  CHECK(std::abs(r.xyz(0, 1) - 1.0) < 1e-12);
  CHECK(std::abs(r.xyz(0, 2)) < 1e-12);
  const PointCloud x = random_cloud(30, 4);
  CHECK(rotate_euler(x, {0, 0, 0}) == x);
  const PointCloud y = rotate_euler(x, {12.5, -40, 77});
  for (Index i = 0; i < x.size(); ++i) {
    CHECK(std::abs(y.xyz.row(i).norm() - x.xyz.row(i).norm()) < 1e-12);
    for (Index j = 0; j < x.size(); ++j)
      CHECK(std::abs((y.point(i) - y.point(j)).norm() - (x.point(i) - x.point(j)).norm()) < 1e-10);
  }
  // R_z R_y R_x: the x rotation acts first.
  const Eigen::Matrix3d m = euler_matrix({90, 90, 0});
  const Vec3 v = m * Vec3(0, 1, 0);
  CHECK((v - Vec3(1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("synth_dataset") {
  SeededRng rng(5);
  const auto data = synth_dataset(all_shape_families(), 3, 128, rng);
  CHECK(data.size() == 24);
  CHECK(data.num_classes == 8);
  std::set<int> labels;
  for (const auto& e : data.entries) {
    labels.insert(e.label);
    CHECK(e.cloud.size() == 128);
    CHECK(is_normalized(e.cloud));
  }
  CHECK(labels == std::set<int>{0, 1, 2, 3, 4, 5, 6, 7});
  SeededRng again(5);
  const auto twin = synth_dataset(all_shape_families(), 3, 128, again);
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(twin.entries[i].cloud == data.entries[i].cloud);
  for (auto f : all_shape_families()) CHECK(shape_family_from_string(to_string(f)) == f);
}

TEST_CASE("xyz round trip and parse errors") {
  const fs::path dir = scratch_dir("xyz");
  const PointCloud x = random_cloud(20, 6);
  save_xyz(x, dir / "a.xyz");
  const PointCloud y = load_xyz(dir / "a.xyz");
  CHECK((x.xyz - y.xyz).cwiseAbs().maxCoeff() <= 1e-8);

  {
    std::ofstream(dir / "bad.xyz") << "0 0 0\n1 2\n";
  }
  try {
    load_xyz(dir / "bad.xyz");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ParseError);
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  {
    std::ofstream(dir / "empty.xyz") << "";
  }
  CHECK(kind_of([&] { load_xyz(dir / "empty.xyz"); }) == ErrorKind::ParseError);
}

TEST_CASE("dataset directory round trip") {
  const fs::path dir = scratch_dir("dataset");
  SeededRng rng(2);
  const auto data = synth_dataset({ShapeFamily::Box, ShapeFamily::Torus}, 2, 32, rng);
  save_dataset(data, dir);
  const auto back = load_dataset(dir);
  REQUIRE(back.size() == data.size());
  CHECK(back.num_classes == data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back.entries[i].label == data.entries[i].label);
    CHECK((back.entries[i].cloud.xyz - data.entries[i].cloud.xyz).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("dataset validation") {
  LabeledDataset d;
  d.num_classes = 2;
  d.entries.push_back({random_cloud(4, 1), 0});
  d.entries.push_back({random_cloud(5, 2), 1});
  CHECK_THROWS_AS(d.cloud_size(), Error);
  d.entries[1] = {random_cloud(4, 2), 2};
  CHECK(kind_of([&] { d.validate(); }) == ErrorKind::LabelOutOfRange);
}
