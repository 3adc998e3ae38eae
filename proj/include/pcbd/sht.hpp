#pragma once

#include <complex>
#include <string>
#include <vector>

#include "pcbd/pointcloud.hpp"

namespace pcbd {

/// Equiangular grid: rows theta_i = i * pi / (rows - 1) over [0, pi],
/// columns phi_j = (j + 1) * 2 pi / cols over (0, 2 pi].
struct SphericalGrid {
  Index rows = 181;
  Index cols = 360;

  double d_theta() const;
  double d_phi() const;
  double theta(Index i) const { return double(i) * d_theta(); }
  double phi(Index j) const { return double(j + 1) * d_phi(); }
  /// Quadrature weight of a cell in row i (Clenshaw-Curtis in theta).
  double weight(Index i) const;
  Vec3 direction(Index i, Index j) const;
  /// Cell containing the direction of p (p != 0).
  std::pair<Index, Index> cell_of(const Vec3& p) const;

  friend bool operator==(const SphericalGrid&, const SphericalGrid&) = default;
};

using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using GridValues = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Signed radial offset r - 1 on occupied cells, zero elsewhere.
struct SphericalField {
  SphericalGrid grid;
  GridValues values;
  Mask mask;

  Index occupied() const { return mask.count(); }
};

/// Complex coefficients c_l^m for 0 <= l <= max_order, -l <= m <= l.
class HarmonicSpectrum {
 public:
  HarmonicSpectrum() = default;
  explicit HarmonicSpectrum(int max_order);

  int max_order() const { return max_order_; }
  std::size_t count() const { return coeffs_.size(); }
  static std::size_t index(int l, int m) { return std::size_t(l * l + l + m); }
  std::complex<double>& at(int l, int m) { return coeffs_[index(l, m)]; }
  const std::complex<double>& at(int l, int m) const { return coeffs_[index(l, m)]; }
  const std::vector<std::complex<double>>& coeffs() const { return coeffs_; }

  /// Zeroes every order above l_cut.
  HarmonicSpectrum truncated(int l_cut) const;
  /// Rows "l,m,re,im" with a header line.
  std::string to_csv() const;

 private:
  int max_order_ = -1;
  std::vector<std::complex<double>> coeffs_;
};

/// Orthonormal (Condon-Shortley) normalised associated Legendre values
/// P_l^m(x) for 0 <= m <= l <= max_order via the three-term recurrence,
/// laid out as index l * (l + 1) / 2 + m.
std::vector<double> legendre_table(int max_order, double x);
inline std::size_t legendre_index(int l, int m) { return std::size_t(l * (l + 1) / 2 + m); }
/// Y_l^m(theta, phi) with the same normalisation.
std::complex<double> spherical_harmonic(int l, int m, double theta, double phi);

enum class CollisionRule {
  NearestSphere,  // keep the point with the smallest |r - 1|
  SmallestRadius  // keep the point with the smallest r
};

SphericalField to_spherical_field(const PointCloud& x, const SphericalGrid& grid,
                                  CollisionRule rule = CollisionRule::NearestSphere);

/// Quadrature projection: c_l^m = sum over masked cells of
/// f * conj(Y_l^m) * weight. Negative orders are filled from
/// the conjugate symmetry of real fields.
HarmonicSpectrum dsht(const SphericalField& field, int max_order);

/// Mask-aware spectrum: the minimum-roughness expansion (penalty
/// (1 + l(l+1))^2 per order) that interpolates the field on its occupied
/// cells up to a small nugget. On sparse masks the plain projection above
/// attenuates each sample by roughly w (N+1)^2 / 4pi; this one reproduces
/// the samples.
HarmonicSpectrum fit_spectrum(const SphericalField& field, int max_order, double nugget = 1e-8);

/// Truncated expansion on every grid cell (full mask). Throws if the
/// imaginary residue exceeds 1e-9 times the field scale.
SphericalField isht(const HarmonicSpectrum& spectrum, const SphericalGrid& grid);

/// Masked cells back to points: direction(cell) * (1 + value).
PointCloud field_to_cloud(const SphericalField& surface, const Mask& mask);

struct SmoothingConfig {
  int max_order = 100;
  SphericalGrid grid;
  CollisionRule collision = CollisionRule::NearestSphere;
  std::uint64_t seed = 0;

  void validate() const;
};

PointCloud reproduce(const PointCloud& x, const SmoothingConfig& config);

/// Union of a uniform (1 - t) share of the true cells of mx and a t share of
/// the true cells of mg.
Mask mix_masks(const Mask& mx, const Mask& mg, double t, SeededRng& rng);

/// (1 - t) a + t b, coefficient-wise.
HarmonicSpectrum interpolate_spectra(const HarmonicSpectrum& a, const HarmonicSpectrum& b, double t);

/// Homotopy between a benign cloud and its triggered counterpart. t = 0 and
/// t = 1 return the inputs verbatim; otherwise spectra are interpolated,
/// masks mixed and the result resampled to |x| points.
PointCloud homotopy_clouds(const PointCloud& x, const PointCloud& gx, double t, const SmoothingConfig& config,
                           std::uint64_t stream = 0);

/// Spherical-harmonic low-pass: orders above l_cut are zeroed before the
/// surface is resampled on the original mask.
PointCloud lowpass_filter(const PointCloud& x, int l_cut, const SmoothingConfig& config);

}  // namespace pcbd
