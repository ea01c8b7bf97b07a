#pragma once

#include "herdid/cloud.hpp"
#include "herdid/frame.hpp"
#include "herdid/rng.hpp"

namespace herdid {

/// Reprojects nonzero crop pixels through the pinhole model. Crop pixels
/// are mapped to full-frame coordinates via the box offset; points are
/// appended in row-major pixel order. Fails with EmptyCloud when no pixel
/// carries a measurement.
PointCloud unproject(const DepthFrame& crop, const BoundingBox& box,
                     const CameraIntrinsics& intrinsics);

/// Inverse of unproject for a single point: (u, v) in pixels, z in meters.
inline Eigen::Vector3d project(const Eigen::Vector3d& p, const CameraIntrinsics& k) {
  return {k.cx + p.x() * k.fx / p.z(), k.cy + p.y() * k.fy / p.z(), p.z()};
}

/// Greedy farthest point sampling. Starts from the lexicographically
/// smallest (x, y, z) point, repeatedly adds the point farthest from the
/// selected set, ties broken by lowest original index. Output preserves
/// selection order.
PointCloud farthest_point_sample(const PointCloud& cloud, Eigen::Index k);

/// Selection indices only; the entry point for both the sampler and its
/// brute-force oracle comparisons.
std::vector<Eigen::Index> farthest_point_indices(const Eigen::Matrix3Xd& points,
                                                 Eigen::Index k);

/// Centroid to the origin, max point norm to 1. A degenerate cloud (all
/// points coincident) maps to the origin with scale 1. Idempotent.
PointCloud normalize_cloud(const PointCloud& cloud);

/// Centroid-centered spherical conversion; exact inverse reconstruction.
SphericalCloud to_spherical(const PointCloud& cloud);
PointCloud from_spherical(const SphericalCloud& spherical);

PointCloud rotate_z(const PointCloud& cloud, double angle_rad);
PointCloud jitter(const PointCloud& cloud, Rng& rng, double sigma_m);

/// Training augmentation: uniform random rotation about z, then iid
/// Gaussian jitter with std sigma_m per coordinate.
PointCloud augment_cloud(const PointCloud& cloud, Rng& rng, double sigma_m);

}  // namespace herdid
