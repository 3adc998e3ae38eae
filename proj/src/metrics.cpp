#include "pcbd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "pcbd/error.hpp"

namespace pcbd {

namespace {

inline double sq_dist(const Points& a, Index i, const Points& b, Index j) {
  const double dx = a(i, 0) - b(j, 0);
  const double dy = a(i, 1) - b(j, 1);
  const double dz = a(i, 2) - b(j, 2);
  return dx * dx + dy * dy + dz * dz;
}

void require_nonempty(const PointCloud& x, const PointCloud& y) {
  if (x.empty() || y.empty()) throw Error(ErrorKind::EmptyCloud, "metric on empty cloud");
}

void require_same_size(const PointCloud& x, const PointCloud& y) {
  if (x.size() != y.size()) {
    throw Error(ErrorKind::SizeMismatch,
                std::to_string(x.size()) + " vs " + std::to_string(y.size()) + " points");
  }
}

// For each point of a: index of and squared distance to its nearest point in b.
void nearest(const Points& a, const Points& b, std::vector<Index>& idx, std::vector<double>& d2) {
  idx.assign(std::size_t(a.rows()), 0);
  d2.assign(std::size_t(a.rows()), 0.0);
  for (Index i = 0; i < a.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    Index arg = 0;
    for (Index j = 0; j < b.rows(); ++j) {
      const double d = sq_dist(a, i, b, j);
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    idx[std::size_t(i)] = arg;
    d2[std::size_t(i)] = best;
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

std::vector<Index> argsort(const Eigen::VectorXd& v) {
  // Sorting (value, index) pairs keeps ties in index order, like a stable sort.
  std::vector<std::pair<double, Index>> keyed(std::size_t(v.size()));
  for (Index i = 0; i < v.size(); ++i) keyed[std::size_t(i)] = {v(i), i};
  std::sort(keyed.begin(), keyed.end());
  std::vector<Index> order(keyed.size());
  for (std::size_t i = 0; i < keyed.size(); ++i) order[i] = keyed[i].second;
  return order;
}

}  // namespace

double chamfer(const PointCloud& x, const PointCloud& y) {
  require_nonempty(x, y);
  std::vector<Index> idx;
  std::vector<double> dxy, dyx;
  nearest(x.xyz, y.xyz, idx, dxy);
  nearest(y.xyz, x.xyz, idx, dyx);
  return mean_of(dxy) + mean_of(dyx);
}

double hausdorff(const PointCloud& x, const PointCloud& y) {
  require_nonempty(x, y);
  std::vector<Index> idx;
  std::vector<double> dxy, dyx;
  nearest(x.xyz, y.xyz, idx, dxy);
  nearest(y.xyz, x.xyz, idx, dyx);
  const double worst = std::max(*std::max_element(dxy.begin(), dxy.end()),
                                *std::max_element(dyx.begin(), dyx.end()));
  return std::sqrt(worst);
}

std::vector<Index> solve_assignment(const Eigen::MatrixXd& cost) {
  // Shortest augmenting path with row/column potentials (Hungarian method),
  // 1-based internally with column 0 as the virtual source.
  const Index n = cost.rows();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(std::size_t(n + 1), 0.0), v(std::size_t(n + 1), 0.0);
  std::vector<Index> match(std::size_t(n + 1), 0), way(std::size_t(n + 1), 0);
  std::vector<double> minv(std::size_t(n + 1));
  std::vector<char> used(std::size_t(n + 1));
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[std::size_t(j0)] = 1;
      const Index i0 = match[std::size_t(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[std::size_t(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[std::size_t(i0)] - v[std::size_t(j)];
        if (cur < minv[std::size_t(j)]) {
          minv[std::size_t(j)] = cur;
          way[std::size_t(j)] = j0;
        }
        if (minv[std::size_t(j)] < delta) {
          delta = minv[std::size_t(j)];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[std::size_t(j)]) {
          u[std::size_t(match[std::size_t(j)])] += delta;
          v[std::size_t(j)] -= delta;
        } else {
          minv[std::size_t(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[std::size_t(j0)] != 0);
    do {
      const Index j1 = way[std::size_t(j0)];
      match[std::size_t(j0)] = match[std::size_t(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> row_to_col(std::size_t(n), 0);
  for (Index j = 1; j <= n; ++j) row_to_col[std::size_t(match[std::size_t(j)] - 1)] = j - 1;
  return row_to_col;
}

double wasserstein_exact(const PointCloud& x, const PointCloud& y) {
  require_nonempty(x, y);
  require_same_size(x, y);
  if (x.size() > kMaxExactWassersteinPoints) {
    throw Error(ErrorKind::SizeLimit, "exact Wasserstein limited to " +
                                          std::to_string(kMaxExactWassersteinPoints) + " points");
  }
  const Index n = x.size();
  Eigen::MatrixXd cost(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) cost(i, j) = sq_dist(x.xyz, i, y.xyz, j);
  const auto match = solve_assignment(cost);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total += cost(i, match[std::size_t(i)]);
  return total / double(n);
}

Directions random_directions(Index count, SeededRng& rng) {
  Directions dirs(count, 3);
  for (Index k = 0; k < count; ++k) {
    Vec3 v;
    do {
      v = Vec3(rng.normal(), rng.normal(), rng.normal());
    } while (v.squaredNorm() < 1e-24);
    dirs.row(k) = v.normalized().transpose();
  }
  return dirs;
}

double sliced_wasserstein(const PointCloud& x, const PointCloud& y, Index n_proj, SeededRng& rng) {
  if (n_proj < 1) throw Error(ErrorKind::InvalidArgument, "n_proj must be >= 1");
  return sliced_wasserstein(x, y, random_directions(n_proj, rng));
}

double sliced_wasserstein(const PointCloud& x, const PointCloud& y, const Directions& dirs) {
  require_nonempty(x, y);
  require_same_size(x, y);
  const Index n = x.size();
  double total = 0.0;
  for (Index k = 0; k < dirs.rows(); ++k) {
    Eigen::VectorXd px = x.xyz * dirs.row(k).transpose();
    Eigen::VectorXd py = y.xyz * dirs.row(k).transpose();
    std::sort(px.data(), px.data() + n);
    std::sort(py.data(), py.data() + n);
    total += (px - py).squaredNorm() / double(n);
  }
  return total / double(dirs.rows());
}

LossAndGrad chamfer_with_grad(const PointCloud& target, const PointCloud& recon) {
  require_nonempty(target, recon);
  std::vector<Index> t_to_r, r_to_t;
  std::vector<double> d_tr, d_rt;
  nearest(target.xyz, recon.xyz, t_to_r, d_tr);
  nearest(recon.xyz, target.xyz, r_to_t, d_rt);
  LossAndGrad out;
  out.value = mean_of(d_tr) + mean_of(d_rt);
  out.grad = Points::Zero(recon.size(), 3);
  const double wt = 2.0 / double(target.size());
  const double wr = 2.0 / double(recon.size());
  for (Index i = 0; i < target.size(); ++i) {
    const Index j = t_to_r[std::size_t(i)];
    out.grad.row(j) += wt * (recon.xyz.row(j) - target.xyz.row(i));
  }
  for (Index j = 0; j < recon.size(); ++j) {
    out.grad.row(j) += wr * (recon.xyz.row(j) - target.xyz.row(r_to_t[std::size_t(j)]));
  }
  return out;
}

LossAndGrad sliced_wasserstein_with_grad(const PointCloud& target, const PointCloud& recon,
                                         const Directions& dirs) {
  require_nonempty(target, recon);
  require_same_size(target, recon);
  const Index n = target.size();
  const double nd = double(n);
  const double kd = double(dirs.rows());
  LossAndGrad out;
  out.grad = Points::Zero(n, 3);
  for (Index k = 0; k < dirs.rows(); ++k) {
    const Eigen::RowVector3d u = dirs.row(k);
    const Eigen::VectorXd pt = target.xyz * u.transpose();
    const Eigen::VectorXd pr = recon.xyz * u.transpose();
    const auto ot = argsort(pt);
    const auto orr = argsort(pr);
    double slice = 0.0;
    for (Index m = 0; m < n; ++m) {
      const Index it = ot[std::size_t(m)];
      const Index ir = orr[std::size_t(m)];
      const double diff = pr(ir) - pt(it);
      slice += diff * diff;
      out.grad.row(ir) += (2.0 * diff / (nd * kd)) * u;
    }
    out.value += slice / nd;
  }
  out.value /= kd;
  return out;
}

}  // namespace pcbd
