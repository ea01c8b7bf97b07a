#pragma once

#include <Eigen/Dense>
#include <string>

#include "herdid/cloud.hpp"

namespace herdid {

/// ASCII PLY, one double-precision vertex per line. Provenance
/// (sequence_id, frame_index, identity) rides in header comments.
void write_ply(const PointCloud& cloud, const std::string& path);

/// Same geometry plus per-vertex uchar red/green/blue. `intensity` must
/// hold one value in [0, 1] per point.
void write_ply_colored(const PointCloud& cloud, const Eigen::VectorXd& intensity,
                       const std::string& path);

PointCloud read_ply(const std::string& path);

}  // namespace herdid
