#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace herdid {

/// Ordered list of 3D points in meters, one point per column.
struct PointCloud {
  Eigen::Matrix3Xd points;
  int label = -1;  // identity id, -1 = unlabeled
  std::string sequence_id;
  std::int64_t frame_index = 0;
  std::vector<std::array<int, 2>> pixels;  // optional per-point source (u, v)

  Eigen::Index size() const { return points.cols(); }
  Eigen::Vector3d centroid() const { return points.rowwise().mean(); }
};

/// Centroid-centered spherical view of a cloud: radius, polar angle from
/// +z, azimuth. Kept alongside its center so Cartesian reconstruction is
/// exact to double precision.
struct SphericalCloud {
  Eigen::Vector3d center;
  Eigen::VectorXd r;
  Eigen::VectorXd psi;  // polar, [0, pi]
  Eigen::VectorXd phi;  // azimuth, (-pi, pi]

  Eigen::Index size() const { return r.size(); }
};

enum class SplitTag { Train, Validation, Test };

/// One training/evaluation unit: a cloud with its identity.
struct Sample {
  PointCloud cloud;
  int identity = -1;
  SplitTag split_tag = SplitTag::Train;
};

}  // namespace herdid
