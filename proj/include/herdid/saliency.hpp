#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "herdid/cloud.hpp"
#include "herdid/embednet.hpp"
#include "herdid/rng.hpp"

namespace herdid {

/// Per-point saliency: s_i = -(dL_softmax/dr_i) * r_i, the radial gradient
/// contribution in centroid-centered spherical coordinates. Points closer
/// than eps_r to the centroid score 0. Expects the same normalized cloud
/// the network consumes.
Eigen::VectorXd pcsm_scores(const NetworkParams& params, const PointCloud& cloud,
                            int true_class, double eps_r = 1e-9);

enum class DropMode { Saliency, Random };

struct DropResult {
  std::vector<Eigen::Index> drop_order;        // indices into the input cloud
  std::optional<int> misclassified_at;         // iteration index, 0-based
  bool exhausted = false;
};

/// Iteratively classifies the surviving cloud (renormalized each round),
/// then removes drop_count points: the highest-saliency ones, or uniformly
/// random ones for the baseline. Records the first iteration whose argmax
/// logit disagrees with true_class.
DropResult pcsm_drop(const NetworkParams& params, const PointCloud& cloud,
                     int true_class, int drop_count, int max_iters,
                     DropMode mode = DropMode::Saliency, Rng* rng = nullptr,
                     double eps_r = 1e-9);

}  // namespace herdid
