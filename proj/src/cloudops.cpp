#include "herdid/cloudops.hpp"

#include <cmath>
#include <limits>

#include "herdid/error.hpp"

namespace herdid {

PointCloud unproject(const DepthFrame& crop, const BoundingBox& box,
                     const CameraIntrinsics& k) {
  if (!k.valid()) fail(Err::RangeError, "invalid intrinsics");

  const int h = crop.height(), w = crop.width();
  PointCloud cloud;
  cloud.sequence_id = crop.sequence_id;
  cloud.frame_index = crop.frame_index;

  std::vector<Eigen::Vector3d> pts;
  pts.reserve(static_cast<std::size_t>(h) * w);
  for (int row = 0; row < h; ++row) {
    const int v = box.v_min + row;
    for (int col = 0; col < w; ++col) {
      const std::uint16_t d = crop.data(row, col);
      if (d == 0) continue;
      const int u = box.u_min + col;
      const double z = d / kMillimetersPerMeter;
      pts.emplace_back((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
      cloud.pixels.push_back({u, v});
    }
  }
  if (pts.empty()) fail(Err::EmptyCloud, "no valid pixels to unproject");

  cloud.points.resize(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i)
    cloud.points.col(static_cast<Eigen::Index>(i)) = pts[i];
  return cloud;
}

std::vector<Eigen::Index> farthest_point_indices(const Eigen::Matrix3Xd& points,
                                                 Eigen::Index k) {
  const Eigen::Index n = points.cols();
  if (k < 1 || k > n) fail(Err::RangeError, "fps: k must satisfy 1 <= k <= point count");

  // Deterministic start: lexicographically smallest (x, y, z).
  Eigen::Index start = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    const auto a = points.col(i), b = points.col(start);
    if (a.x() != b.x() ? a.x() < b.x()
                       : (a.y() != b.y() ? a.y() < b.y() : a.z() < b.z()))
      start = i;
  }

  std::vector<Eigen::Index> selected;
  selected.reserve(static_cast<std::size_t>(k));
  selected.push_back(start);
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  taken[static_cast<std::size_t>(start)] = 1;

  // min squared distance from each point to the selected set
  Eigen::VectorXd dist2 =
      (points.colwise() - points.col(start)).colwise().squaredNorm().transpose();

  for (Eigen::Index round = 1; round < k; ++round) {
    Eigen::Index best = -1;
    double best_d2 = -1.0;
    const double* d = dist2.data();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      if (d[i] > best_d2) {  // strict: ties keep the lowest index
        best_d2 = d[i];
        best = i;
      }
    }
    selected.push_back(best);
    taken[static_cast<std::size_t>(best)] = 1;
    dist2 = dist2.cwiseMin(
        (points.colwise() - points.col(best)).colwise().squaredNorm().transpose());
  }
  return selected;
}

PointCloud farthest_point_sample(const PointCloud& cloud, Eigen::Index k) {
  const auto idx = farthest_point_indices(cloud.points, k);
  PointCloud out;
  out.label = cloud.label;
  out.sequence_id = cloud.sequence_id;
  out.frame_index = cloud.frame_index;
  out.points.resize(3, k);
  const bool carry_pixels = !cloud.pixels.empty();
  if (carry_pixels) out.pixels.reserve(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) {
    out.points.col(i) = cloud.points.col(idx[static_cast<std::size_t>(i)]);
    if (carry_pixels)
      out.pixels.push_back(cloud.pixels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
  }
  return out;
}

PointCloud normalize_cloud(const PointCloud& cloud) {
  if (cloud.size() < 1) fail(Err::EmptyCloud, "cannot normalize an empty cloud");
  PointCloud out = cloud;
  const Eigen::Vector3d c = cloud.centroid();
  out.points.colwise() -= c;
  const double max_norm = out.points.colwise().norm().maxCoeff();
  if (max_norm > 0.0) out.points /= max_norm;
  return out;
}

SphericalCloud to_spherical(const PointCloud& cloud) {
  if (cloud.size() < 2) fail(Err::RangeError, "spherical conversion needs >= 2 points");
  SphericalCloud s;
  s.center = cloud.centroid();
  const Eigen::Index n = cloud.size();
  s.r.resize(n);
  s.psi.resize(n);
  s.phi.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d d = cloud.points.col(i) - s.center;
    const double r = d.norm();
    s.r[i] = r;
    if (r == 0.0) {
      s.psi[i] = 0.0;
      s.phi[i] = 0.0;
    } else {
      s.psi[i] = std::acos(std::clamp(d.z() / r, -1.0, 1.0));
      s.phi[i] = std::atan2(d.y(), d.x());
    }
  }
  return s;
}

PointCloud from_spherical(const SphericalCloud& s) {
  PointCloud out;
  const Eigen::Index n = s.size();
  out.points.resize(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = s.r[i], psi = s.psi[i], phi = s.phi[i];
    out.points.col(i) = s.center + r * Eigen::Vector3d(std::sin(psi) * std::cos(phi),
                                                       std::sin(psi) * std::sin(phi),
                                                       std::cos(psi));
  }
  return out;
}

PointCloud rotate_z(const PointCloud& cloud, double angle_rad) {
  PointCloud out = cloud;
  const double c = std::cos(angle_rad), s = std::sin(angle_rad);
  Eigen::Matrix3d rot;
  rot << c, -s, 0, s, c, 0, 0, 0, 1;
  out.points = rot * cloud.points;
  return out;
}

PointCloud jitter(const PointCloud& cloud, Rng& rng, double sigma_m) {
  if (sigma_m < 0.0) fail(Err::RangeError, "jitter sigma must be >= 0");
  PointCloud out = cloud;
  if (sigma_m == 0.0) return out;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    for (int j = 0; j < 3; ++j) out.points(j, i) += rng.gaussian(0.0, sigma_m);
  return out;
}

PointCloud augment_cloud(const PointCloud& cloud, Rng& rng, double sigma_m) {
  const double angle = rng.uniform(0.0, 2.0 * 3.141592653589793238462643383280);
  PointCloud out = rotate_z(cloud, angle);
  return jitter(out, rng, sigma_m);
}

}  // namespace herdid
