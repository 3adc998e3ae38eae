#include "pcbd/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "pcbd/error.hpp"

namespace pcbd {

Eigen::MatrixXd graph_laplacian(const PointCloud& x, Index k) {
  const Index n = x.size();
  const NeighborTable nb = knn(x, k);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index r = 0; r < k; ++r) {
      a(i, nb(i, r)) = 1.0;
      a(nb(i, r), i) = 1.0;
    }
  Eigen::MatrixXd l = -a;
  for (Index i = 0; i < n; ++i) l(i, i) = a.row(i).sum();
  return l;
}

GraphSpectrum gft(const PointCloud& x, Index k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(graph_laplacian(x, k));
  if (solver.info() != Eigen::Success) throw Error(ErrorKind::EigenFailure, "Laplacian eigendecomposition failed");
  GraphSpectrum s;
  s.eigenvalues = solver.eigenvalues();
  s.eigenvectors = solver.eigenvectors();
  for (Index c = 0; c < s.eigenvectors.cols(); ++c) {
    Index arg = 0;
    s.eigenvectors.col(c).cwiseAbs().maxCoeff(&arg);
    if (s.eigenvectors(arg, c) < 0.0) s.eigenvectors.col(c) = -s.eigenvectors.col(c);
  }
  const Eigen::MatrixXd coeff = s.eigenvectors.transpose() * x.xyz;
  s.signal = coeff.rowwise().mean();
  return s;
}

Eigen::VectorXd residual_spectrum(const PointCloud& x, const PointCloud& gx, Index k, ResidualMode mode) {
  if (x.size() != gx.size())
    throw Error(ErrorKind::SizeMismatch, "clean and triggered clouds have " + std::to_string(x.size()) + " and " +
                                             std::to_string(gx.size()) + " points");
  if (x == gx) return Eigen::VectorXd::Zero(x.size());
  const Eigen::VectorXd a = gft(x, k).signal;
  const Eigen::VectorXd b = gft(gx, k).signal;
  if (mode == ResidualMode::Raw) return a - b;
  return a.cwiseAbs() - b.cwiseAbs();
}

Eigen::VectorXd residual_spectrum(const PointCloud& x, const TriggerSpec& trigger, Index k, ResidualMode mode,
                                  std::uint64_t stream) {
  return residual_spectrum(x, apply_trigger(trigger, x, stream), k, mode);
}

double BandProfile::sum() const {
  double s = 0.0;
  for (double f : fractions) s += f;
  return s;
}

std::array<Index, 7> band_endpoints(Index n) {
  constexpr std::array<Index, 7> base{1, 8, 32, 128, 256, 512, 1024};
  std::array<Index, 7> e{};
  for (std::size_t b = 0; b < base.size(); ++b) e[b] = std::max<Index>(1, base[b] * n / 1024);
  return e;
}

BandProfile band_profile(const Eigen::VectorXd& residual) {
  const Index n = residual.size();
  const double total = residual.cwiseAbs().sum();
  if (!(total > 0.0)) throw Error(ErrorKind::ZeroResidual, "residual spectrum is identically zero");
  const auto e = band_endpoints(n);
  BandProfile p;
  for (std::size_t b = 0; b < 6; ++b) {
    const Index lo = e[b] - 1;
    const Index hi = b == 5 ? n : e[b + 1] - 1;
    double s = 0.0;
    for (Index i = lo; i < hi; ++i) s += std::abs(residual(i));
    p.fractions[b] = s / total;
  }
  return p;
}

}  // namespace pcbd
