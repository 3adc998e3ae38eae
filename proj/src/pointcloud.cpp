#include "pcbd/pointcloud.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "pcbd/error.hpp"

namespace pcbd {

PointCloud::PointCloud(const std::vector<std::array<double, 3>>& pts) : xyz(Index(pts.size()), 3) {
  for (std::size_t i = 0; i < pts.size(); ++i) {
    xyz.row(Index(i)) << pts[i][0], pts[i][1], pts[i][2];
  }
}

Index LabeledDataset::cloud_size() const {
  if (entries.empty()) return 0;
  const Index n = entries.front().cloud.size();
  for (const auto& e : entries) {
    if (e.cloud.size() != n) throw Error(ErrorKind::ShapeMismatch, "dataset clouds differ in size");
  }
  return n;
}

void LabeledDataset::validate() const {
  cloud_size();
  for (const auto& e : entries) {
    if (e.label < 0 || e.label >= num_classes) {
      throw Error(ErrorKind::LabelOutOfRange,
                  "label " + std::to_string(e.label) + " outside 0.." + std::to_string(num_classes - 1));
    }
  }
}

PointCloud normalize_unit_cube(const PointCloud& cloud) {
  if (cloud.empty()) throw Error(ErrorKind::EmptyCloud, "normalize_unit_cube on empty cloud");
  if (!cloud.all_finite()) throw Error(ErrorKind::InvalidArgument, "non-finite coordinate");
  const Eigen::RowVector3d centroid = cloud.xyz.colwise().mean();
  Points centered = cloud.xyz.rowwise() - centroid;
  const double max_abs = centered.cwiseAbs().maxCoeff();
  if (max_abs < 1e-12) throw Error(ErrorKind::DegenerateCloud, "all points coincide");
  centered /= max_abs;
  return PointCloud(std::move(centered));
}

bool is_normalized(const PointCloud& cloud, double tol) {
  if (cloud.empty()) return false;
  const double max_abs = cloud.xyz.cwiseAbs().maxCoeff();
  const Eigen::RowVector3d centroid = cloud.xyz.colwise().mean();
  return std::abs(max_abs - 1.0) <= tol && centroid.cwiseAbs().maxCoeff() <= tol;
}

PointCloud resample_to_n(const PointCloud& cloud, Index n_target, SeededRng& rng) {
  if (cloud.empty()) throw Error(ErrorKind::EmptyCloud, "resample_to_n on empty cloud");
  if (n_target < 1) throw Error(ErrorKind::InvalidArgument, "n_target must be positive");
  Points out(n_target, 3);
  const auto n = static_cast<std::size_t>(cloud.size());
  if (n >= static_cast<std::size_t>(n_target)) {
    auto picks = rng.sample_without_replacement(n, static_cast<std::size_t>(n_target));
    // Keep the original relative order of the retained points.
    std::sort(picks.begin(), picks.end());
    for (Index i = 0; i < n_target; ++i) out.row(i) = cloud.xyz.row(Index(picks[std::size_t(i)]));
  } else {
    for (Index i = 0; i < n_target; ++i) out.row(i) = cloud.xyz.row(Index(rng.below(n)));
  }
  return PointCloud(std::move(out));
}

NeighborTable knn(const PointCloud& cloud, Index k) {
  const Index n = cloud.size();
  if (k >= n) {
    throw Error(ErrorKind::KTooLarge, "k=" + std::to_string(k) + " >= n=" + std::to_string(n));
  }
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be positive");
  NeighborTable table(n, k);
  std::vector<std::pair<double, Index>> row(static_cast<std::size_t>(n - 1));
  for (Index i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      row[m++] = {(cloud.xyz.row(i) - cloud.xyz.row(j)).squaredNorm(), j};
    }
    // pair ordering compares distance then index: ties go to the lower index.
    std::partial_sort(row.begin(), row.begin() + k, row.end());
    for (Index c = 0; c < k; ++c) table(i, c) = row[std::size_t(c)].second;
  }
  return table;
}

Eigen::Matrix3d euler_matrix(const Vec3& degrees) {
  const Vec3 rad = degrees * (std::numbers::pi / 180.0);
  const Eigen::Matrix3d rx = Eigen::AngleAxisd(rad.x(), Vec3::UnitX()).toRotationMatrix();
  const Eigen::Matrix3d ry = Eigen::AngleAxisd(rad.y(), Vec3::UnitY()).toRotationMatrix();
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(rad.z(), Vec3::UnitZ()).toRotationMatrix();
  return rz * ry * rx;
}

PointCloud rotate_euler(const PointCloud& cloud, const Vec3& degrees) {
  if (!degrees.allFinite()) throw Error(ErrorKind::InvalidArgument, "non-finite rotation angle");
  const Eigen::Matrix3d r = euler_matrix(degrees);
  return PointCloud(Points(cloud.xyz * r.transpose()));
}

void save_xyz(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << std::setprecision(17);
  for (Index i = 0; i < cloud.size(); ++i) {
    out << cloud.xyz(i, 0) << ' ' << cloud.xyz(i, 1) << ' ' << cloud.xyz(i, 2) << '\n';
  }
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

PointCloud load_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::vector<std::array<double, 3>> pts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::array<double, 3> p{};
    std::string extra;
    if (!(ss >> p[0] >> p[1] >> p[2]) || (ss >> extra)) {
      throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(line_no) +
                                             ": expected three numbers");
    }
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
      throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(line_no) +
                                             ": non-finite coordinate");
    }
    pts.push_back(p);
  }
  if (pts.empty()) throw Error(ErrorKind::ParseError, path.string() + ": no points");
  return PointCloud(pts);
}

void save_dataset(const LabeledDataset& data, const std::filesystem::path& dir,
                  const nlohmann::json& meta) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["schema"] = "pcbd-dataset/1";
  manifest["num_classes"] = data.num_classes;
  manifest["split"] = data.split == Split::Train ? "train" : "test";
  manifest["meta"] = meta;
  auto& entries = manifest["entries"] = nlohmann::json::array();
  for (std::size_t i = 0; i < data.entries.size(); ++i) {
    std::ostringstream name;
    name << "cloud_" << std::setw(5) << std::setfill('0') << i << ".xyz";
    save_xyz(data.entries[i].cloud, dir / name.str());
    entries.push_back({{"file", name.str()}, {"label", data.entries[i].label}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error(ErrorKind::IoError, "cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

LabeledDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error(ErrorKind::IoError, "missing manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, "manifest.json: " + std::string(e.what()));
  }
  LabeledDataset data;
  try {
    data.num_classes = manifest.at("num_classes").get<int>();
    data.split = manifest.at("split").get<std::string>() == "test" ? Split::Test : Split::Train;
    for (const auto& e : manifest.at("entries")) {
      data.entries.push_back({load_xyz(dir / e.at("file").get<std::string>()), e.at("label").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, "manifest.json: " + std::string(e.what()));
  }
  data.validate();
  return data;
}

}  // namespace pcbd
