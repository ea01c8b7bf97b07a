#include "herdid/saliency.hpp"

#include <algorithm>
#include <numeric>

#include "herdid/cloudops.hpp"
#include "herdid/error.hpp"
#include "herdid/losses.hpp"

namespace herdid {

Eigen::VectorXd pcsm_scores(const NetworkParams& params, const PointCloud& cloud,
                            int true_class, double eps_r) {
  if (cloud.size() < 2) fail(Err::RangeError, "pcsm needs at least two points");
  if (params.spec.class_count < 1 || true_class < 0 ||
      true_class >= params.spec.class_count)
    fail(Err::ShapeMismatch, "pcsm: classifier head does not cover true_class");

  ForwardTrace trace;
  forward(params, cloud, trace);
  SoftmaxResult sm = softmax_cross_entropy(trace.logits, true_class);

  Gradients grads = zero_gradients(params.spec);
  backward(params, trace, Eigen::VectorXd::Zero(params.spec.embedding_dim), sm.grad,
           grads, /*want_input_gradient=*/true);

  const Eigen::Vector3d center = cloud.centroid();
  const Eigen::Index n = cloud.size();
  Eigen::VectorXd scores(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d offset = cloud.points.col(i) - center;
    const double r = offset.norm();
    if (r < eps_r) {
      scores[i] = 0.0;
      continue;
    }
    // dL/dr_i = sum_j dL/dx_ij (x_ij - c_j) / r_i ; s_i = -(dL/dr_i) r_i
    const double dl_dr = grads.input.col(i).dot(offset) / r;
    scores[i] = -dl_dr * r;
  }
  return scores;
}

namespace {

int classify(const NetworkParams& params, const PointCloud& cloud) {
  ForwardTrace trace;
  forward(params, cloud, trace);
  Eigen::Index best = 0;
  trace.logits.maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace

DropResult pcsm_drop(const NetworkParams& params, const PointCloud& cloud,
                     int true_class, int drop_count, int max_iters, DropMode mode,
                     Rng* rng, double eps_r) {
  if (drop_count < 1) fail(Err::RangeError, "drop_count must be >= 1");
  if (max_iters < 0) fail(Err::RangeError, "max_iters must be >= 0");
  if (mode == DropMode::Random && rng == nullptr)
    fail(Err::RangeError, "random drop mode needs an rng");

  DropResult result;
  std::vector<Eigen::Index> alive(static_cast<std::size_t>(cloud.size()));
  std::iota(alive.begin(), alive.end(), Eigen::Index{0});

  for (int iter = 0; iter < max_iters; ++iter) {
    // the network consumes the renormalized survivors
    PointCloud surviving;
    surviving.points.resize(3, static_cast<Eigen::Index>(alive.size()));
    for (std::size_t i = 0; i < alive.size(); ++i)
      surviving.points.col(static_cast<Eigen::Index>(i)) = cloud.points.col(alive[i]);
    const PointCloud prepared = normalize_cloud(surviving);

    if (classify(params, prepared) != true_class) {
      result.misclassified_at = iter;
      return result;
    }
    if (alive.size() < static_cast<std::size_t>(drop_count) + 2) {
      result.exhausted = true;  // too few points left for another round
      return result;
    }

    std::vector<std::size_t> victims;
    if (mode == DropMode::Saliency) {
      const Eigen::VectorXd scores = pcsm_scores(params, prepared, true_class, eps_r);
      std::vector<std::size_t> order(alive.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::partial_sort(order.begin(), order.begin() + drop_count, order.end(),
                        [&](std::size_t a, std::size_t b) {
                          const double sa = scores[static_cast<Eigen::Index>(a)];
                          const double sb = scores[static_cast<Eigen::Index>(b)];
                          if (sa != sb) return sa > sb;
                          return a < b;
                        });
      victims.assign(order.begin(), order.begin() + drop_count);
    } else {
      std::vector<std::size_t> pool(alive.size());
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      for (int d = 0; d < drop_count; ++d) {
        const std::size_t pick = rng->index(pool.size());
        victims.push_back(pool[pick]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
      }
    }

    for (std::size_t v : victims) result.drop_order.push_back(alive[v]);
    std::sort(victims.begin(), victims.end(), std::greater<>());
    for (std::size_t v : victims)
      alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(v));
  }
  return result;
}

}  // namespace herdid
