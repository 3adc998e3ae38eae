#pragma once

#include <array>
#include <string>

#include <Eigen/Core>

#include "pcbd/triggers.hpp"

namespace pcbd {

/// Combinatorial Laplacian D - A of the union-symmetrised, unweighted
/// k-nearest-neighbour graph.
Eigen::MatrixXd graph_laplacian(const PointCloud& x, Index k = 10);

struct GraphSpectrum {
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXd eigenvectors;  // columns; largest-magnitude entry positive
  Eigen::VectorXd signal;        // mean over xyz of U^T X
};

GraphSpectrum gft(const PointCloud& x, Index k = 10);

enum class ResidualMode {
  Magnitude,  // |signal(X)| - |signal(G(X))|
  Raw         // signal(X) - signal(G(X))
};

/// Each spectrum is taken on its own cloud's graph.
Eigen::VectorXd residual_spectrum(const PointCloud& x, const PointCloud& gx, Index k = 10,
                                  ResidualMode mode = ResidualMode::Magnitude);
Eigen::VectorXd residual_spectrum(const PointCloud& x, const TriggerSpec& trigger, Index k = 10,
                                  ResidualMode mode = ResidualMode::Magnitude, std::uint64_t stream = 0);

inline constexpr std::array<const char*, 6> kBandNames{"UL", "L", "LM", "HM", "H", "UH"};

struct BandProfile {
  std::array<double, 6> fractions{};

  double operator[](std::size_t i) const { return fractions[i]; }
  double sum() const;
};

/// Band b spans eigen-indices [e_b, e_{b+1}) (1-based) for endpoints
/// 1, 8, 32, 128, 256, 512, 1024 scaled by n / 1024; the last band is closed.
std::array<Index, 7> band_endpoints(Index n);

BandProfile band_profile(const Eigen::VectorXd& residual);

}  // namespace pcbd
