#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "herdid/cloud.hpp"
#include "herdid/rng.hpp"

namespace herdid {

/// Architecture of the point embedding network: a shared per-point MLP
/// stack, channel-wise max pooling into a global feature, a dense head,
/// a linear embedding layer (optionally L2-normalized) and a linear
/// classifier on the embedding.
struct NetworkSpec {
  std::vector<int> point_mlp_channels{64, 64, 128, 1024};
  std::vector<int> head_widths{512, 256};
  int embedding_dim = 128;
  int class_count = 0;  // 0 = embedding-only network
  bool normalize_embeddings = true;
  double init_gain = 1.0;  // uniform bound = init_gain / sqrt(fan_in)
  std::uint64_t init_seed = 0;

  void validate() const;
  int global_feature_dim() const { return point_mlp_channels.back(); }
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // in x out
  Eigen::VectorXd bias;    // out
};

struct NetworkParams {
  NetworkSpec spec;
  std::vector<DenseLayer> point_mlp;
  std::vector<DenseLayer> head;
  DenseLayer embed;
  DenseLayer classifier;

  std::size_t parameter_count() const;
};

/// Canonical layer order (point_mlp..., head..., embed, classifier) shared
/// by initialization, checkpoints, the optimizer and the gradient checks.
std::vector<DenseLayer*> layer_list(NetworkParams& params);
std::vector<const DenseLayer*> layer_list(const NetworkParams& params);
std::vector<std::string> layer_names(const NetworkSpec& spec);

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero; the draw
/// order is fixed so a seed fully determines the parameters.
NetworkParams init_network(const NetworkSpec& spec, Rng& rng);

/// Everything the backward pass and PC-SM need from one forward pass.
struct ForwardTrace {
  Eigen::MatrixXd input;                   // N x 3 point matrix
  std::vector<Eigen::MatrixXd> point_pre;  // per layer, N x width pre-activations
  std::vector<Eigen::Index> pool_argmax;   // winning point per pooled channel
  Eigen::VectorXd global_feature;
  std::vector<Eigen::VectorXd> head_pre;
  Eigen::VectorXd embedding_pre;  // before normalization
  double embedding_norm = 1.0;
  Eigen::VectorXd embedding;  // what the loss and kNN consume
  Eigen::VectorXd logits;
};

/// Shared-MLP forward pass. Expects a normalized cloud. Exactly
/// permutation invariant; fails with NonFinite naming the first bad layer.
void forward(const NetworkParams& params, const PointCloud& cloud, ForwardTrace& trace);

struct Gradients {
  std::vector<DenseLayer> point_mlp, head;
  DenseLayer embed, classifier;
  Eigen::Matrix3Xd input;  // dL/dpoints, only filled when requested

  void add_scaled(const Gradients& other, double scale);
};

Gradients zero_gradients(const NetworkSpec& spec);

/// Exact gradients of the traced computation with upstream signals on the
/// (normalized) embedding and the logits. Max pooling routes to the argmax
/// point only; the normalization Jacobian is included. Accumulates into
/// `out`.
void backward(const NetworkParams& params, const ForwardTrace& trace,
              const Eigen::VectorXd& d_embedding, const Eigen::VectorXd& d_logits,
              Gradients& out, bool want_input_gradient = false);

/// forward mapped over a list; order preserved, bit-identical for any job
/// count.
std::vector<Eigen::VectorXd> embed_batch(const NetworkParams& params,
                                         const std::vector<PointCloud>& clouds,
                                         int jobs);

void save_checkpoint(const NetworkParams& params, int epoch, const std::string& path);

struct Checkpoint {
  NetworkParams params;
  int epoch = 0;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace herdid
