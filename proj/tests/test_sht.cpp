#include <cmath>
#include <numbers>

#include "doctest.h"
#include "pcbd/error.hpp"
#include "pcbd/metrics.hpp"
#include "pcbd/sht.hpp"
#include "pcbd/synth.hpp"

using namespace pcbd;
using std::numbers::pi;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no pcbd::Error thrown");
  return ErrorKind::IoError;
}

SphericalField full_field(const SphericalGrid& grid, const std::function<double(double, double)>& f) {
  SphericalField out{grid, GridValues(grid.rows, grid.cols), Mask::Constant(grid.rows, grid.cols, true)};
  for (Index i = 0; i < grid.rows; ++i)
    for (Index j = 0; j < grid.cols; ++j) out.values(i, j) = f(grid.theta(i), grid.phi(j));
  return out;
}

PointCloud smooth_shape(ShapeFamily family, std::uint64_t seed, Index n = 256) {
  SeededRng rng(seed);
  return normalize_unit_cube(sample_shape(family, n, rng));
}

bool conjugate_symmetric(const HarmonicSpectrum& s) {
  for (int l = 0; l <= s.max_order(); ++l)
    for (int m = 1; m <= l; ++m) {
      const double sign = (m % 2) ? -1.0 : 1.0;
      if (s.at(l, -m) != sign * std::conj(s.at(l, m))) return false;
    }
  return true;
}

}  // namespace

TEST_CASE("spherical harmonics match closed forms") {
  for (double theta : {0.0, 0.3, 1.2, pi / 2, 2.9, pi}) {
    for (double phi : {0.1, 2.0, 5.5}) {
      const double c = std::cos(theta), s = std::sin(theta);
      const std::complex<double> e1 = std::polar(1.0, phi), e2 = std::polar(1.0, 2 * phi);
      CHECK(std::abs(spherical_harmonic(0, 0, theta, phi) - 1.0 / std::sqrt(4 * pi)) < 1e-14);
      CHECK(std::abs(spherical_harmonic(1, 0, theta, phi) - std::sqrt(3 / (4 * pi)) * c) < 1e-14);
      CHECK(std::abs(spherical_harmonic(1, 1, theta, phi) + std::sqrt(3 / (8 * pi)) * s * e1) < 1e-14);
      CHECK(std::abs(spherical_harmonic(2, 0, theta, phi) - std::sqrt(5 / (16 * pi)) * (3 * c * c - 1)) < 1e-14);
      CHECK(std::abs(spherical_harmonic(2, 2, theta, phi) - 0.25 * std::sqrt(15 / (2 * pi)) * s * s * e2) < 1e-14);
      CHECK(std::abs(spherical_harmonic(1, -1, theta, phi) - std::sqrt(3 / (8 * pi)) * s * std::conj(e1)) < 1e-14);
    }
  }
  // Unit-sum rule: sum_m |Y_l^m|^2 = (2l + 1) / 4pi at any point.
  const auto p = legendre_table(60, std::cos(0.7));
  for (int l : {10, 35, 60}) {
    double sum = p[legendre_index(l, 0)] * p[legendre_index(l, 0)];
    for (int m = 1; m <= l; ++m) sum += 2 * p[legendre_index(l, m)] * p[legendre_index(l, m)];
    CHECK(sum == doctest::Approx((2 * l + 1) / (4 * pi)).epsilon(1e-12));
  }
}

TEST_CASE("to_spherical_field") {
  const SphericalGrid grid;
  SUBCASE("points on the sphere give zero offsets") {
    const PointCloud x = smooth_shape(ShapeFamily::Sphere, 1);
    PointCloud u = x;
    for (Index i = 0; i < u.size(); ++i) u.xyz.row(i).normalize();
    const auto f = to_spherical_field(u, grid);
    CHECK(f.occupied() <= u.size());
    CHECK(f.occupied() > 0);
    CHECK(f.values.cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("single point on the pole") {
    const auto f = to_spherical_field(PointCloud(std::vector<std::array<double, 3>>{{0, 0, 0.5}}), grid);
    CHECK(f.occupied() == 1);
    CHECK(f.mask.row(0).count() == 1);
    CHECK(f.values.row(0).sum() == -0.5);
  }
  SUBCASE("collisions keep the point nearest the sphere unless told otherwise") {
    const PointCloud x(std::vector<std::array<double, 3>>{{0.3, 0, 0}, {0.9, 0, 0}, {1.4, 0, 0}});
    const auto near = to_spherical_field(x, grid);
    const auto small = to_spherical_field(x, grid, CollisionRule::SmallestRadius);
    CHECK(near.occupied() == 1);
    CHECK(near.values.sum() == doctest::Approx(-0.1).epsilon(1e-12));
    CHECK(small.values.sum() == doctest::Approx(-0.7).epsilon(1e-12));
  }
  SUBCASE("unoccupied cells hold zero") {
    const PointCloud x = smooth_shape(ShapeFamily::Box, 2);
    const auto f = to_spherical_field(x, grid);
    for (Index i = 0; i < grid.rows; ++i)
      for (Index j = 0; j < grid.cols; ++j)
        if (!f.mask(i, j)) CHECK(f.values(i, j) == 0.0);
  }
  CHECK(kind_of([&] {
          to_spherical_field(PointCloud(std::vector<std::array<double, 3>>{{1, 0, 0}, {0, 0, 0}}), grid);
        }) == ErrorKind::PointAtOrigin);
}

TEST_CASE("dsht") {
  const SphericalGrid grid;
  SUBCASE("constant field on the full grid") {
    const auto s = dsht(full_field(grid, [](double, double) { return 1.0; }), 100);
    CHECK(s.count() == 101u * 101u);
    CHECK(std::abs(s.at(0, 0) - std::sqrt(4 * pi)) < 1e-3);
    double worst = 0.0;
    for (int l = 1; l <= 100; ++l)
      for (int m = -l; m <= l; ++m) worst = std::max(worst, std::abs(s.at(l, m)));
    CHECK(worst <= 1e-3);
    CHECK(conjugate_symmetric(s));
  }
  SUBCASE("zero field") {
    const auto s = dsht(full_field(grid, [](double, double) { return 0.0; }), 12);
    for (const auto& c : s.coeffs()) CHECK(c == std::complex<double>(0.0));
  }
  SUBCASE("linear on a shared mask") {
    const auto f = to_spherical_field(smooth_shape(ShapeFamily::Torus, 3), grid);
    SphericalField g = f;
    SeededRng rng(4);
    for (Index i = 0; i < g.values.size(); ++i)
      if (g.mask.data()[i]) g.values.data()[i] = rng.normal();
    SphericalField h = f;
    h.values = 0.7 * f.values - 2.5 * g.values;
    const auto sf = dsht(f, 30), sg = dsht(g, 30), sh = dsht(h, 30);
    CHECK(conjugate_symmetric(sg));
    double worst = 0.0;
    for (std::size_t k = 0; k < sh.count(); ++k)
      worst = std::max(worst, std::abs(sh.coeffs()[k] - (0.7 * sf.coeffs()[k] - 2.5 * sg.coeffs()[k])));
    CHECK(worst <= 1e-10);
  }
  CHECK(kind_of([] { dsht(full_field(SphericalGrid{20, 40}, [](double, double) { return 1.0; }), 20); }) ==
        ErrorKind::OrderTooHigh);
}

TEST_CASE("isht") {
  const SphericalGrid grid;
  SUBCASE("zero spectrum") {
    const auto s = isht(HarmonicSpectrum(8), grid);
    CHECK(s.values.cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.mask.all());
  }
  SUBCASE("the constant basis function") {
    HarmonicSpectrum c(5);
    c.at(0, 0) = std::sqrt(4 * pi);
    const auto s = isht(c, grid);
    CHECK((s.values.array() - 1.0).abs().maxCoeff() <= 1e-9);
  }
  SUBCASE("round trip error shrinks with the order on a smooth field") {
    // |cos theta|^3 is C^2 but not band-limited, so the error decays algebraically.
    const auto f = full_field(grid, [](double th, double ph) {
      return 0.1 * std::pow(std::abs(std::cos(th)), 3) + 0.05 * std::sin(th) * std::cos(ph);
    });
    double prev = std::numeric_limits<double>::infinity();
    for (int order : {4, 16, 64, 100}) {
      const double err = (isht(dsht(f, order), grid).values - f.values).cwiseAbs().maxCoeff();
      CAPTURE(order);
      CHECK(err <= prev);
      prev = err;
    }
    CHECK(prev < 1e-4);
  }
  SUBCASE("non-symmetric spectra are rejected") {
    HarmonicSpectrum c(2);
    c.at(1, 1) = {0.0, 1.0};
    CHECK(kind_of([&] { isht(c, grid); }) == ErrorKind::InvalidArgument);
  }
}

TEST_CASE("reproduce") {
  SmoothingConfig cfg;
  for (ShapeFamily family : {ShapeFamily::Sphere, ShapeFamily::Ellipsoid}) {
    const PointCloud x = smooth_shape(family, 5);
    const auto field = to_spherical_field(x, cfg.grid);
    const PointCloud y = reproduce(x, cfg);
    CHECK(to_spherical_field(y, cfg.grid).mask == field.mask);
    CHECK(chamfer(y, x) <= 1e-2);
    double prev = std::numeric_limits<double>::infinity();
    for (int order : {4, 16, 64, 100}) {
      SmoothingConfig c = cfg;
      c.max_order = order;
      const double err = chamfer(reproduce(x, c), x);
      // Once the fit interpolates, the residual is the cell quantisation and
      // further orders move it only by the nugget's residue (~1e-10).
      CHECK(err <= prev + 1e-9);
      prev = err;
    }
  }
  SmoothingConfig bad;
  bad.max_order = 200;
  CHECK(kind_of([&] { reproduce(smooth_shape(ShapeFamily::Sphere, 6), bad); }) == ErrorKind::OrderTooHigh);
}

TEST_CASE("mix_masks") {
  const SphericalGrid grid{31, 60};
  const Mask mx = to_spherical_field(smooth_shape(ShapeFamily::Cone, 7, 400), grid).mask;
  const Mask mg = to_spherical_field(smooth_shape(ShapeFamily::Cross, 8, 400), grid).mask;
  SeededRng rng(9);
  CHECK(mix_masks(mx, mg, 0.0, rng) == mx);
  CHECK(mix_masks(mx, mg, 1.0, rng) == mg);

  // Fixed-size subsamples: k_x and k_g cells, overlap cells kept with
  // probability 1 - (1 - k_x/|M_X|)(1 - k_g/|M_G|).
  const double t = 0.35;
  const double nx = double(mx.count()), ng = double(mg.count()), both = double((mx.array() && mg.array()).count());
  const double kx = std::round((1 - t) * nx), kg = std::round(t * ng);
  const double expected = kx + kg - both * (kx / nx) * (kg / ng);
  const int reps = 2000;
  double sum = 0.0, sq = 0.0;
  for (int r = 0; r < reps; ++r) {
    const Mask m = mix_masks(mx, mg, t, rng);
    CHECK((m.array() && !(mx.array() || mg.array())).count() == 0);
    const double c = double(m.count());
    sum += c;
    sq += c * c;
  }
  const double mean = sum / reps, se = std::sqrt((sq / reps - mean * mean) / reps);
  CHECK(std::abs(mean - expected) <= 4 * se + 1e-9);

  SeededRng a(10), b(10);
  CHECK(mix_masks(mx, mg, t, a) == mix_masks(mx, mg, t, b));
  CHECK(kind_of([&] { mix_masks(mx, mg, 1.5, rng); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([&] { mix_masks(mx, Mask::Constant(3, 3, true), t, rng); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("spectrum interpolation") {
  SeededRng rng(11);
  HarmonicSpectrum a(6), b(6);
  for (int l = 0; l <= 6; ++l)
    for (int m = -l; m <= l; ++m) {
      a.at(l, m) = {rng.normal(), rng.normal()};
      b.at(l, m) = {rng.normal(), rng.normal()};
    }
  const auto mid = interpolate_spectra(a, b, 0.5);
  for (std::size_t k = 0; k < a.count(); ++k)
    CHECK(std::abs(mid.coeffs()[k] - 0.5 * (a.coeffs()[k] + b.coeffs()[k])) <= 1e-12);
  CHECK(interpolate_spectra(a, b, 0.0).coeffs() == a.coeffs());
  CHECK(interpolate_spectra(a, b, 1.0).coeffs() == b.coeffs());
  CHECK(kind_of([&] { interpolate_spectra(a, HarmonicSpectrum(5), 0.5); }) == ErrorKind::ShapeMismatch);
  CHECK(a.truncated(2).at(3, -1) == std::complex<double>(0.0));
  CHECK(a.truncated(2).at(2, -1) == a.at(2, -1));
}

TEST_CASE("homotopy between clouds") {
  SmoothingConfig cfg;
  cfg.max_order = 24;
  const PointCloud x = smooth_shape(ShapeFamily::Sphere, 12);
  const PointCloud g = smooth_shape(ShapeFamily::Box, 13);
  CHECK(homotopy_clouds(x, g, 0.0, cfg) == x);
  CHECK(homotopy_clouds(x, g, 1.0, cfg) == g);
  const PointCloud mid = homotopy_clouds(x, g, 0.5, cfg, 3);
  CHECK(mid.size() == x.size());
  CHECK(homotopy_clouds(x, g, 0.5, cfg, 3) == mid);
  CHECK(chamfer(homotopy_clouds(x, g, 0.2, cfg), x) < chamfer(homotopy_clouds(x, g, 0.8, cfg), x));
  CHECK(kind_of([&] { homotopy_clouds(x, g, -0.1, cfg); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("low-pass filter") {
  const PointCloud x = smooth_shape(ShapeFamily::Ellipsoid, 14);
  SmoothingConfig small;
  small.max_order = 32;
  CHECK(lowpass_filter(x, 32, small) == reproduce(x, small));

  const PointCloud flat = lowpass_filter(x, 0, small);
  const double r0 = flat.xyz.row(0).norm();
  for (Index i = 0; i < flat.size(); ++i) CHECK(std::abs(flat.xyz.row(i).norm() - r0) < 1e-9);

  const SmoothingConfig cfg;
  for (double sigma : {0.02, 0.05}) {
    PointCloud noisy = x;
    SeededRng rng(15);
    for (Index i = 0; i < noisy.size(); ++i)
      for (int c = 0; c < 3; ++c) noisy.xyz(i, c) += sigma * rng.normal();
    CHECK(chamfer(lowpass_filter(noisy, 8, cfg), x) < chamfer(noisy, x));
  }
  CHECK(kind_of([&] { lowpass_filter(x, 33, small); }) == ErrorKind::OrderTooHigh);
}

TEST_CASE("spectrum csv") {
  HarmonicSpectrum s(1);
  s.at(0, 0) = {1.5, 0.0};
  s.at(1, -1) = {0.25, -0.5};
  const std::string csv = s.to_csv();
  CHECK(csv.rfind("l,m,re,im\n", 0) == 0);
  CHECK(csv.find("1,-1,0.25,-0.5") != std::string::npos);
}
