#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "herdid/cloud.hpp"
#include "herdid/embednet.hpp"
#include "herdid/losses.hpp"
#include "herdid/rng.hpp"

namespace herdid {

struct TrainConfig {
  enum class Optimizer { Adam, SgdMomentum };
  Optimizer optimizer = Optimizer::Adam;
  double learning_rate = 1e-3;
  int batch_size = 24;
  int epochs = 30;
  double weight_decay = 1e-4;
  double momentum = 0.9;  // sgd only
  LossConfig loss;
  int eval_every = 2;
  std::uint64_t seed = 1;
  double augment_sigma_m = 0.02;
  double augment_max_rotation_rad = 3.141592653589793;  // pi = any heading
  int resample_points = 0;  // > 0: random per-step subset of each cloud
  int samples_per_identity = 4;  // K in identity-balanced batching
  int knn_k = 5;
  int jobs = 1;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> epoch_loss;
  struct Eval {
    int epoch;
    double accuracy;
  };
  std::vector<Eval> evals;
  int best_epoch = -1;
  double best_accuracy = 0.0;
};

/// Adam moments (or the SGD velocity, stored in `m`).
struct OptimizerState {
  Gradients m, v;
  long step = 0;
};

OptimizerState make_optimizer_state(const NetworkSpec& spec);

/// One optimization step: augment + normalize the batch, forward, batch-hard
/// mine, combined loss mean-reduced over mined triplets, backward, one
/// decoupled-weight-decay update. Sample identities are used as class labels
/// and must lie in [0, class_count). Deterministic given the rng state.
double train_step(NetworkParams& params, OptimizerState& state,
                  const std::vector<const Sample*>& batch, const TrainConfig& cfg,
                  Rng& rng);

struct FitResult {
  NetworkParams params;  // parameters achieving the best validation accuracy
  TrainHistory history;
};

using BestCallback =
    std::function<void(const NetworkParams& params, int epoch, double accuracy)>;

/// Full training loop with identity-balanced batches and kNN validation
/// every eval_every epochs against a gallery of train embeddings.
/// Identities are remapped internally to dense class labels; validation
/// identities must be a subset of train identities.
FitResult fit(const std::vector<Sample>& train, const std::vector<Sample>& validation,
              const NetworkSpec& spec, const TrainConfig& cfg,
              const BestCallback& on_best = {});

/// Sorted distinct identities; index in the result is the class label used
/// for the classifier head.
std::vector<int> class_mapping(const std::vector<Sample>& samples);

void write_history_csv(const TrainHistory& history, const std::string& path);

}  // namespace herdid
