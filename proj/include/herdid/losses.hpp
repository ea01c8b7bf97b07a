#pragma once

#include <Eigen/Dense>
#include <vector>

namespace herdid {

double euclidean_distance(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2);

/// ((1-Y)/2) d + (Y/2) max(0, margin - d); Y = 0 similar, 1 dissimilar.
double contrastive_loss(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2, int y,
                        double margin);

/// max(0, d(a,p) - d(a,n) + margin)
double triplet_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                    const Eigen::VectorXd& negative, double margin);

/// d(a,p) + 1/d(a,n); fails with DegenerateNegative when d(a,n) < eps_div.
double reciprocal_triplet_loss(const Eigen::VectorXd& anchor,
                               const Eigen::VectorXd& positive,
                               const Eigen::VectorXd& negative,
                               double eps_div = 1e-12);

/// Max-shifted cross-entropy; gradient = softmax(logits) - one_hot(true_class).
struct SoftmaxResult {
  double loss = 0.0;
  Eigen::VectorXd grad;
};
SoftmaxResult softmax_cross_entropy(const Eigen::VectorXd& logits, int true_class);

enum class LossMode { SoftmaxTriplet, SoftmaxReciprocalTriplet };
enum class SoftmaxMembers { All, AnchorOnly };

struct LossConfig {
  LossMode mode = LossMode::SoftmaxReciprocalTriplet;
  double lambda = 0.01;
  double margin = 0.5;
  SoftmaxMembers softmax_members = SoftmaxMembers::All;
  double eps_div = 1e-12;
};

/// Softmax term (averaged over the triplet members that carry supervision)
/// plus lambda times the triplet term.
double combined_loss(const LossConfig& cfg, const Eigen::VectorXd& anchor,
                     const Eigen::VectorXd& positive, const Eigen::VectorXd& negative,
                     const Eigen::VectorXd& logits_a, const Eigen::VectorXd& logits_p,
                     const Eigen::VectorXd& logits_n, int label_ap, int label_n);

/// Value plus gradients with respect to the three embeddings and the three
/// logit vectors, for the trainer.
struct CombinedLossGrad {
  double loss = 0.0;
  Eigen::VectorXd d_anchor, d_positive, d_negative;
  Eigen::VectorXd d_logits_a, d_logits_p, d_logits_n;
};
CombinedLossGrad combined_loss_grad(const LossConfig& cfg, const Eigen::VectorXd& anchor,
                                    const Eigen::VectorXd& positive,
                                    const Eigen::VectorXd& negative,
                                    const Eigen::VectorXd& logits_a,
                                    const Eigen::VectorXd& logits_p,
                                    const Eigen::VectorXd& logits_n, int label_ap,
                                    int label_n);

struct Triplet {
  Eigen::Index anchor, positive, negative;
};

struct TripletBatch {
  std::vector<Triplet> mined;
};

/// Batch-hard mining: per anchor, the farthest same-label positive and the
/// nearest different-label negative, ties by lowest index. Anchors whose
/// identity has a single member are skipped; zero valid anchors is an
/// error.
TripletBatch batch_hard_mine(const std::vector<Eigen::VectorXd>& embeddings,
                             const std::vector<int>& labels);

}  // namespace herdid
