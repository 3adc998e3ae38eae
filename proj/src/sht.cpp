#include "pcbd/sht.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <numbers>
#include <sstream>

#include "pcbd/error.hpp"

namespace pcbd {

namespace {

constexpr double kPi = std::numbers::pi;

void check_grid(const SphericalGrid& grid) {
  if (grid.rows < 2 || grid.cols < 1) throw Error(ErrorKind::InvalidArgument, "spherical grid too small");
}

void check_order(const SphericalGrid& grid, int max_order) {
  check_grid(grid);
  if (max_order < 0) throw Error(ErrorKind::InvalidArgument, "negative harmonic order");
  if (grid.rows < max_order + 1) {
    throw Error(ErrorKind::OrderTooHigh, "grid has " + std::to_string(grid.rows) + " rows, order " +
                                             std::to_string(max_order) + " needs at least " +
                                             std::to_string(max_order + 1));
  }
}

// Per-order penalty of the interpolating fit.
double roughness(int l) {
  double s = 1.0 + double(l) * double(l + 1);
  return s * s;
}

// Sum_l (2l+1) / (4 pi d_l) P_l(x): the reproducing kernel of the penalised space.
double fit_kernel(int max_order, double x) {
  double p_prev = 1.0, p = x, sum = 1.0 / (4.0 * kPi * roughness(0));
  if (max_order >= 1) sum += 3.0 / (4.0 * kPi * roughness(1)) * x;
  for (int l = 1; l < max_order; ++l) {
    double p_next = ((2.0 * l + 1.0) * x * p - double(l) * p_prev) / double(l + 1);
    p_prev = p;
    p = p_next;
    sum += (2.0 * (l + 1) + 1.0) / (4.0 * kPi * roughness(l + 1)) * p;
  }
  return sum;
}

struct Cell {
  Index i, j;
};

std::vector<Cell> occupied_cells(const Mask& mask) {
  std::vector<Cell> cells;
  for (Index i = 0; i < mask.rows(); ++i)
    for (Index j = 0; j < mask.cols(); ++j)
      if (mask(i, j)) cells.push_back({i, j});
  return cells;
}

}  // namespace

double SphericalGrid::d_theta() const { return kPi / double(rows - 1); }
double SphericalGrid::d_phi() const { return 2.0 * kPi / double(cols); }
double SphericalGrid::weight(Index i) const {
  // Clenshaw-Curtis weight for the integral of g(cos theta) d(cos theta) on
  // the equiangular rows, times d_phi. Exact for polynomials of degree rows-1,
  // where the plain sin(theta) d_theta rule leaves O(d_theta^2 sqrt(l)) error.
  const Index n = rows - 1;
  double sum = 0.0;
  for (Index j = 1; 2 * j <= n; ++j) {
    const double b = 2 * j == n ? 1.0 : 2.0;
    sum += b / double(4 * j * j - 1) * std::cos(2.0 * kPi * double(j * i) / double(n));
  }
  const double c = (i == 0 || i == n) ? 1.0 : 2.0;
  return c / double(n) * (1.0 - sum) * d_phi();
}

Vec3 SphericalGrid::direction(Index i, Index j) const {
  double th = theta(i), ph = phi(j);
  return {std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)};
}

std::pair<Index, Index> SphericalGrid::cell_of(const Vec3& p) const {
  double r = p.norm();
  double th = std::acos(std::clamp(p.z() / r, -1.0, 1.0));
  double ph = std::atan2(p.y(), p.x());
  if (ph <= 0.0) ph += 2.0 * kPi;
  auto i = Index(std::llround(th / d_theta()));
  auto j = Index(std::llround(ph / d_phi())) - 1;
  i = std::clamp<Index>(i, 0, rows - 1);
  j = ((j % cols) + cols) % cols;
  return {i, j};
}

HarmonicSpectrum::HarmonicSpectrum(int max_order)
    : max_order_(max_order), coeffs_(std::size_t(max_order + 1) * std::size_t(max_order + 1)) {
  if (max_order < 0) throw Error(ErrorKind::InvalidArgument, "negative harmonic order");
}

HarmonicSpectrum HarmonicSpectrum::truncated(int l_cut) const {
  HarmonicSpectrum out = *this;
  for (int l = std::max(l_cut + 1, 0); l <= max_order_; ++l)
    for (int m = -l; m <= l; ++m) out.at(l, m) = 0.0;
  return out;
}

std::string HarmonicSpectrum::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "l,m,re,im\n";
  for (int l = 0; l <= max_order_; ++l)
    for (int m = -l; m <= l; ++m) os << l << ',' << m << ',' << at(l, m).real() << ',' << at(l, m).imag() << '\n';
  return os.str();
}

std::vector<double> legendre_table(int max_order, double x) {
  std::vector<double> p(legendre_index(max_order, max_order) + 1, 0.0);
  double s = std::sqrt(std::max(0.0, 1.0 - x * x));
  double pmm = std::sqrt(1.0 / (4.0 * kPi));
  for (int m = 0; m <= max_order; ++m) {
    if (m > 0) pmm *= -std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s;
    p[legendre_index(m, m)] = pmm;
    if (m == max_order) break;
    double p1 = std::sqrt(2.0 * m + 3.0) * x * pmm;
    p[legendre_index(m + 1, m)] = p1;
    double p0 = pmm;
    for (int l = m + 2; l <= max_order; ++l) {
      double ll = double(l) * l, mm = double(m) * m;
      double a = std::sqrt((4.0 * ll - 1.0) / (ll - mm));
      double b = std::sqrt((double(l - 1) * (l - 1) - mm) / (4.0 * double(l - 1) * (l - 1) - 1.0));
      double pl = a * (x * p1 - b * p0);
      p[legendre_index(l, m)] = pl;
      p0 = p1;
      p1 = pl;
    }
  }
  return p;
}

std::complex<double> spherical_harmonic(int l, int m, double theta, double phi) {
  int am = std::abs(m);
  if (am > l) return 0.0;
  double p = legendre_table(l, std::cos(theta))[legendre_index(l, am)];
  std::complex<double> y = p * std::polar(1.0, double(am) * phi);
  if (m < 0) {
    y = std::conj(y);
    if (am % 2) y = -y;
  }
  return y;
}

SphericalField to_spherical_field(const PointCloud& x, const SphericalGrid& grid, CollisionRule rule) {
  check_grid(grid);
  SphericalField f{grid, GridValues::Zero(grid.rows, grid.cols), Mask::Constant(grid.rows, grid.cols, false)};
  GridValues best(grid.rows, grid.cols);
  for (Index k = 0; k < x.size(); ++k) {
    Vec3 p = x.point(k);
    double r = p.norm();
    if (r == 0.0) throw Error(ErrorKind::PointAtOrigin, "point " + std::to_string(k) + " lies at the origin");
    auto [i, j] = grid.cell_of(p);
    double key = rule == CollisionRule::NearestSphere ? std::abs(r - 1.0) : r;
    if (!f.mask(i, j) || key < best(i, j)) {
      f.mask(i, j) = true;
      best(i, j) = key;
      f.values(i, j) = r - 1.0;
    }
  }
  return f;
}

HarmonicSpectrum dsht(const SphericalField& field, int max_order) {
  const SphericalGrid& g = field.grid;
  check_order(g, max_order);
  HarmonicSpectrum out(max_order);
  const Index cols = g.cols;
  // e^{-i m phi_j}
  std::vector<std::complex<double>> phase(std::size_t(max_order + 1) * std::size_t(cols));
  for (int m = 0; m <= max_order; ++m)
    for (Index j = 0; j < cols; ++j) phase[std::size_t(m) * cols + j] = std::polar(1.0, -double(m) * g.phi(j));

  std::vector<std::complex<double>> fm(std::size_t(max_order + 1));
  for (Index i = 0; i < g.rows; ++i) {
    bool any = false;
    for (int m = 0; m <= max_order; ++m) fm[m] = 0.0;
    for (Index j = 0; j < cols; ++j) {
      if (!field.mask(i, j)) continue;
      double v = field.values(i, j);
      if (v == 0.0) continue;
      any = true;
      for (int m = 0; m <= max_order; ++m) fm[m] += v * phase[std::size_t(m) * cols + j];
    }
    if (!any) continue;
    double w = g.weight(i);
    auto p = legendre_table(max_order, std::cos(g.theta(i)));
    for (int l = 0; l <= max_order; ++l)
      for (int m = 0; m <= l; ++m) out.at(l, m) += w * p[legendre_index(l, m)] * fm[m];
  }
  for (int l = 1; l <= max_order; ++l)
    for (int m = 1; m <= l; ++m) out.at(l, -m) = (m % 2 ? -1.0 : 1.0) * std::conj(out.at(l, m));
  return out;
}

HarmonicSpectrum fit_spectrum(const SphericalField& field, int max_order, double nugget) {
  const SphericalGrid& g = field.grid;
  check_order(g, max_order);
  HarmonicSpectrum out(max_order);
  auto cells = occupied_cells(field.mask);
  const auto n = Index(cells.size());
  if (n == 0) return out;

  std::vector<Vec3> dirs;
  dirs.reserve(cells.size());
  Eigen::VectorXd f(n);
  for (Index a = 0; a < n; ++a) {
    dirs.push_back(g.direction(cells[a].i, cells[a].j));
    f(a) = field.values(cells[a].i, cells[a].j);
  }
  Eigen::MatrixXd k(n, n);
  for (Index a = 0; a < n; ++a) {
    k(a, a) = fit_kernel(max_order, 1.0) + nugget;
    for (Index b = 0; b < a; ++b) {
      double v = fit_kernel(max_order, std::clamp(dirs[a].dot(dirs[b]), -1.0, 1.0));
      k(a, b) = v;
      k(b, a) = v;
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::EigenFailure, "spherical fit is not positive definite");
  Eigen::VectorXd alpha = llt.solve(f);

  // Accumulate row by row so each Legendre table is built once.
  Index a = 0;
  while (a < n) {
    Index i = cells[a].i;
    auto p = legendre_table(max_order, std::cos(g.theta(i)));
    std::vector<std::complex<double>> fm(std::size_t(max_order + 1), 0.0);
    for (; a < n && cells[a].i == i; ++a) {
      double ph = g.phi(cells[a].j);
      for (int m = 0; m <= max_order; ++m) fm[m] += alpha(a) * std::polar(1.0, -double(m) * ph);
    }
    for (int l = 0; l <= max_order; ++l) {
      double inv = 1.0 / roughness(l);
      for (int m = 0; m <= l; ++m) out.at(l, m) += inv * p[legendre_index(l, m)] * fm[m];
    }
  }
  for (int l = 1; l <= max_order; ++l)
    for (int m = 1; m <= l; ++m) out.at(l, -m) = (m % 2 ? -1.0 : 1.0) * std::conj(out.at(l, m));
  return out;
}

SphericalField isht(const HarmonicSpectrum& spectrum, const SphericalGrid& grid) {
  check_grid(grid);
  const int nl = spectrum.max_order();
  SphericalField out{grid, GridValues::Zero(grid.rows, grid.cols), Mask::Constant(grid.rows, grid.cols, true)};
  if (nl < 0) return out;
  const Index cols = grid.cols;
  const int nm = 2 * nl + 1;
  std::vector<std::complex<double>> phase(std::size_t(nm) * std::size_t(cols));
  for (int m = -nl; m <= nl; ++m)
    for (Index j = 0; j < cols; ++j) phase[std::size_t(m + nl) * cols + j] = std::polar(1.0, double(m) * grid.phi(j));

  double scale = 0.0;
  for (const auto& c : spectrum.coeffs()) scale = std::max(scale, std::abs(c));
  double worst = 0.0;
  std::vector<std::complex<double>> hm(static_cast<std::size_t>(nm));
  for (Index i = 0; i < grid.rows; ++i) {
    auto p = legendre_table(nl, std::cos(grid.theta(i)));
    for (int m = -nl; m <= nl; ++m) {
      int am = std::abs(m);
      double sign = (m < 0 && am % 2) ? -1.0 : 1.0;
      std::complex<double> s = 0.0;
      for (int l = am; l <= nl; ++l) s += spectrum.at(l, m) * p[legendre_index(l, am)];
      hm[m + nl] = sign * s;
    }
    for (Index j = 0; j < cols; ++j) {
      std::complex<double> v = 0.0;
      for (int k = 0; k < nm; ++k) v += hm[k] * phase[std::size_t(k) * cols + j];
      out.values(i, j) = v.real();
      worst = std::max(worst, std::abs(v.imag()));
    }
  }
  if (worst > 1e-9 * std::max(1.0, scale)) {
    throw Error(ErrorKind::InvalidArgument, "spectrum is not conjugate-symmetric (imaginary residue " +
                                                std::to_string(worst) + ")");
  }
  return out;
}

PointCloud field_to_cloud(const SphericalField& surface, const Mask& mask) {
  auto cells = occupied_cells(mask);
  Points pts(Index(cells.size()), 3);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    Vec3 d = surface.grid.direction(cells[k].i, cells[k].j);
    pts.row(Index(k)) = (d * (1.0 + surface.values(cells[k].i, cells[k].j))).transpose();
  }
  return PointCloud(std::move(pts));
}

void SmoothingConfig::validate() const { check_order(grid, max_order); }

PointCloud reproduce(const PointCloud& x, const SmoothingConfig& config) {
  config.validate();
  auto field = to_spherical_field(x, config.grid, config.collision);
  auto surface = isht(fit_spectrum(field, config.max_order), config.grid);
  return field_to_cloud(surface, field.mask);
}

Mask mix_masks(const Mask& mx, const Mask& mg, double t, SeededRng& rng) {
  if (mx.rows() != mg.rows() || mx.cols() != mg.cols())
    throw Error(ErrorKind::ShapeMismatch, "masks are on different grids");
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorKind::InvalidArgument, "t must lie in [0, 1]");
  if (t == 0.0) return mx;
  if (t == 1.0) return mg;
  Mask out = Mask::Constant(mx.rows(), mx.cols(), false);
  auto take = [&](const Mask& src, double share) {
    auto cells = occupied_cells(src);
    auto k = std::size_t(std::llround(share * double(cells.size())));
    for (auto idx : rng.sample_without_replacement(cells.size(), k)) out(cells[idx].i, cells[idx].j) = true;
  };
  take(mx, 1.0 - t);
  take(mg, t);
  return out;
}

HarmonicSpectrum interpolate_spectra(const HarmonicSpectrum& a, const HarmonicSpectrum& b, double t) {
  if (a.max_order() != b.max_order()) throw Error(ErrorKind::ShapeMismatch, "spectra have different orders");
  HarmonicSpectrum out(a.max_order());
  for (int l = 0; l <= a.max_order(); ++l)
    for (int m = -l; m <= l; ++m) out.at(l, m) = (1.0 - t) * a.at(l, m) + t * b.at(l, m);
  return out;
}

PointCloud homotopy_clouds(const PointCloud& x, const PointCloud& gx, double t, const SmoothingConfig& config,
                           std::uint64_t stream) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorKind::InvalidArgument, "t must lie in [0, 1]");
  if (t == 0.0) return x;
  if (t == 1.0) return gx;
  config.validate();
  auto fx = to_spherical_field(x, config.grid, config.collision);
  auto fg = to_spherical_field(gx, config.grid, config.collision);
  auto spec = interpolate_spectra(fit_spectrum(fx, config.max_order), fit_spectrum(fg, config.max_order), t);
  SeededRng rng(config.seed, stream);
  Mask mt = mix_masks(fx.mask, fg.mask, t, rng);
  auto cloud = field_to_cloud(isht(spec, config.grid), mt);
  if (cloud.empty()) throw Error(ErrorKind::EmptyCloud, "mixed mask is empty");
  return resample_to_n(cloud, x.size(), rng);
}

PointCloud lowpass_filter(const PointCloud& x, int l_cut, const SmoothingConfig& config) {
  config.validate();
  if (l_cut > config.max_order)
    throw Error(ErrorKind::OrderTooHigh, "cut-off order exceeds the transform order");
  auto field = to_spherical_field(x, config.grid, config.collision);
  auto spec = fit_spectrum(field, config.max_order).truncated(l_cut);
  return field_to_cloud(isht(spec, config.grid), field.mask);
}

}  // namespace pcbd
