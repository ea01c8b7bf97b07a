#include "herdid/losses.hpp"

#include <cmath>

#include "herdid/error.hpp"

namespace herdid {

double euclidean_distance(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2) {
  if (x1.size() != x2.size())
    fail(Err::DimensionMismatch, "euclidean_distance: dimensions differ");
  return (x1 - x2).norm();
}

double contrastive_loss(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2, int y,
                        double margin) {
  if (y != 0 && y != 1) fail(Err::RangeError, "contrastive Y must be 0 or 1");
  if (margin < 0.0) fail(Err::RangeError, "margin must be >= 0");
  const double d = euclidean_distance(x1, x2);
  return (1 - y) * 0.5 * d + y * 0.5 * std::max(0.0, margin - d);
}

double triplet_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                    const Eigen::VectorXd& negative, double margin) {
  if (margin < 0.0) fail(Err::RangeError, "margin must be >= 0");
  return std::max(0.0, euclidean_distance(anchor, positive) -
                           euclidean_distance(anchor, negative) + margin);
}

double reciprocal_triplet_loss(const Eigen::VectorXd& anchor,
                               const Eigen::VectorXd& positive,
                               const Eigen::VectorXd& negative, double eps_div) {
  const double d_an = euclidean_distance(anchor, negative);
  if (d_an < eps_div)
    fail(Err::DegenerateNegative,
         "reciprocal triplet loss: anchor-negative distance below division guard");
  return euclidean_distance(anchor, positive) + 1.0 / d_an;
}

SoftmaxResult softmax_cross_entropy(const Eigen::VectorXd& logits, int true_class) {
  if (true_class < 0 || true_class >= logits.size())
    fail(Err::RangeError, "softmax: true_class out of range");
  SoftmaxResult r;
  const double shift = logits.maxCoeff();
  Eigen::VectorXd exps = (logits.array() - shift).exp();
  const double total = exps.sum();
  r.loss = std::log(total) - (logits[true_class] - shift);
  r.grad = exps / total;
  r.grad[true_class] -= 1.0;
  return r;
}

namespace {

// d |a - b| / da, with subgradient 0 when the points coincide
Eigen::VectorXd distance_grad(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double d = (a - b).norm();
  if (d == 0.0) return Eigen::VectorXd::Zero(a.size());
  return (a - b) / d;
}

}  // namespace

double combined_loss(const LossConfig& cfg, const Eigen::VectorXd& anchor,
                     const Eigen::VectorXd& positive, const Eigen::VectorXd& negative,
                     const Eigen::VectorXd& logits_a, const Eigen::VectorXd& logits_p,
                     const Eigen::VectorXd& logits_n, int label_ap, int label_n) {
  if (cfg.lambda < 0.0) fail(Err::RangeError, "lambda must be >= 0");

  double softmax_term;
  if (cfg.softmax_members == SoftmaxMembers::All) {
    softmax_term = (softmax_cross_entropy(logits_a, label_ap).loss +
                    softmax_cross_entropy(logits_p, label_ap).loss +
                    softmax_cross_entropy(logits_n, label_n).loss) /
                   3.0;
  } else {
    softmax_term = softmax_cross_entropy(logits_a, label_ap).loss;
  }

  const double triplet_term =
      cfg.mode == LossMode::SoftmaxTriplet
          ? triplet_loss(anchor, positive, negative, cfg.margin)
          : reciprocal_triplet_loss(anchor, positive, negative, cfg.eps_div);
  return softmax_term + cfg.lambda * triplet_term;
}

CombinedLossGrad combined_loss_grad(const LossConfig& cfg, const Eigen::VectorXd& anchor,
                                    const Eigen::VectorXd& positive,
                                    const Eigen::VectorXd& negative,
                                    const Eigen::VectorXd& logits_a,
                                    const Eigen::VectorXd& logits_p,
                                    const Eigen::VectorXd& logits_n, int label_ap,
                                    int label_n) {
  if (cfg.lambda < 0.0) fail(Err::RangeError, "lambda must be >= 0");

  CombinedLossGrad out;
  const Eigen::Index dim = anchor.size();
  out.d_anchor = Eigen::VectorXd::Zero(dim);
  out.d_positive = Eigen::VectorXd::Zero(dim);
  out.d_negative = Eigen::VectorXd::Zero(dim);
  out.d_logits_p = Eigen::VectorXd::Zero(logits_p.size());
  out.d_logits_n = Eigen::VectorXd::Zero(logits_n.size());

  SoftmaxResult sm_a = softmax_cross_entropy(logits_a, label_ap);
  if (cfg.softmax_members == SoftmaxMembers::All) {
    SoftmaxResult sm_p = softmax_cross_entropy(logits_p, label_ap);
    SoftmaxResult sm_n = softmax_cross_entropy(logits_n, label_n);
    out.loss = (sm_a.loss + sm_p.loss + sm_n.loss) / 3.0;
    out.d_logits_a = sm_a.grad / 3.0;
    out.d_logits_p = sm_p.grad / 3.0;
    out.d_logits_n = sm_n.grad / 3.0;
  } else {
    out.loss = sm_a.loss;
    out.d_logits_a = sm_a.grad;
  }

  if (cfg.mode == LossMode::SoftmaxTriplet) {
    const double d_ap = euclidean_distance(anchor, positive);
    const double d_an = euclidean_distance(anchor, negative);
    const double pre_clamp = d_ap - d_an + cfg.margin;
    if (pre_clamp > 0.0) {
      out.loss += cfg.lambda * pre_clamp;
      const Eigen::VectorXd g_ap = distance_grad(anchor, positive);
      const Eigen::VectorXd g_an = distance_grad(anchor, negative);
      out.d_anchor += cfg.lambda * (g_ap - g_an);
      out.d_positive += cfg.lambda * -g_ap;
      out.d_negative += cfg.lambda * g_an;
    }
  } else {
    const double d_an = euclidean_distance(anchor, negative);
    if (d_an < cfg.eps_div)
      fail(Err::DegenerateNegative,
           "reciprocal triplet loss: anchor-negative distance below division guard");
    const double d_ap = euclidean_distance(anchor, positive);
    out.loss += cfg.lambda * (d_ap + 1.0 / d_an);
    const Eigen::VectorXd g_ap = distance_grad(anchor, positive);
    const Eigen::VectorXd g_an = distance_grad(anchor, negative);
    const double inv2 = -1.0 / (d_an * d_an);
    out.d_anchor += cfg.lambda * (g_ap + inv2 * g_an);
    out.d_positive += cfg.lambda * -g_ap;
    out.d_negative += cfg.lambda * -inv2 * g_an;
  }
  return out;
}

TripletBatch batch_hard_mine(const std::vector<Eigen::VectorXd>& embeddings,
                             const std::vector<int>& labels) {
  const std::size_t n = embeddings.size();
  if (labels.size() != n)
    fail(Err::DimensionMismatch, "mining: one label per embedding required");

  TripletBatch batch;
  for (std::size_t a = 0; a < n; ++a) {
    Eigen::Index best_p = -1, best_n = -1;
    double worst_pos = -1.0, best_neg = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double d = (embeddings[a] - embeddings[j]).norm();
      if (labels[j] == labels[a]) {
        if (d > worst_pos) {  // strict: ties keep the lowest index
          worst_pos = d;
          best_p = static_cast<Eigen::Index>(j);
        }
      } else {
        if (best_n < 0 || d < best_neg) {
          best_neg = d;
          best_n = static_cast<Eigen::Index>(j);
        }
      }
    }
    if (best_p < 0) continue;  // identity with a single member: skip anchor
    if (best_n < 0) continue;  // no different-label member in the batch
    batch.mined.push_back({static_cast<Eigen::Index>(a), best_p, best_n});
  }
  if (batch.mined.empty())
    fail(Err::NoValidAnchors, "mining produced no valid triplets");
  return batch;
}

}  // namespace herdid
