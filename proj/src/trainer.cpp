#include "herdid/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <unordered_map>

#include "herdid/cloudops.hpp"
#include "herdid/error.hpp"
#include "herdid/openset.hpp"
#include "herdid/parallel.hpp"

namespace herdid {

void TrainConfig::validate() const {
  if (learning_rate < 0.0) fail(Err::RangeError, "learning_rate must be >= 0");
  if (batch_size < 2) fail(Err::RangeError, "batch_size must be >= 2");
  if (epochs < 0) fail(Err::RangeError, "epochs must be >= 0");
  if (weight_decay < 0.0) fail(Err::RangeError, "weight_decay must be >= 0");
  if (eval_every < 1) fail(Err::RangeError, "eval_every must be >= 1");
  if (samples_per_identity < 2)
    fail(Err::RangeError, "samples_per_identity must be >= 2");
  if (augment_sigma_m < 0.0) fail(Err::RangeError, "augment sigma must be >= 0");
  if (knn_k < 1) fail(Err::RangeError, "knn_k must be >= 1");
}

OptimizerState make_optimizer_state(const NetworkSpec& spec) {
  OptimizerState s;
  s.m = zero_gradients(spec);
  s.v = zero_gradients(spec);
  s.step = 0;
  return s;
}

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

std::vector<DenseLayer*> gradient_layers(Gradients& g) {
  std::vector<DenseLayer*> out;
  for (auto& l : g.point_mlp) out.push_back(&l);
  for (auto& l : g.head) out.push_back(&l);
  out.push_back(&g.embed);
  out.push_back(&g.classifier);
  return out;
}

void apply_update(NetworkParams& params, Gradients& grads, OptimizerState& state,
                  const TrainConfig& cfg) {
  ++state.step;
  auto param_layers = layer_list(params);
  auto grad_layers = gradient_layers(grads);
  auto m_layers = gradient_layers(state.m);
  auto v_layers = gradient_layers(state.v);

  const double lr = cfg.learning_rate;
  const double decay = 1.0 - lr * cfg.weight_decay;  // decoupled

  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  auto step_array = [&](auto& w, const auto& g, auto& m, auto& v) {
    if (cfg.optimizer == TrainConfig::Optimizer::Adam) {
      m.array() = kAdamBeta1 * m.array() + (1.0 - kAdamBeta1) * g.array();
      v.array() = kAdamBeta2 * v.array() + (1.0 - kAdamBeta2) * g.array().square();
      w.array() = decay * w.array() -
                  lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kAdamEps);
    } else {
      m = cfg.momentum * m + g;  // velocity lives in state.m
      w = decay * w - lr * m;
    }
  };
  for (std::size_t l = 0; l < param_layers.size(); ++l) {
    step_array(param_layers[l]->weight, grad_layers[l]->weight, m_layers[l]->weight,
               v_layers[l]->weight);
    step_array(param_layers[l]->bias, grad_layers[l]->bias, m_layers[l]->bias,
               v_layers[l]->bias);
  }
}

}  // namespace

double train_step(NetworkParams& params, OptimizerState& state,
                  const std::vector<const Sample*>& batch, const TrainConfig& cfg,
                  Rng& rng) {
  cfg.validate();
  const std::size_t n = batch.size();
  if (n < 2) fail(Err::EmptyInput, "train_step: batch too small");

  // per-member augmentation streams, drawn up front so worker count cannot
  // change the draws
  std::vector<std::uint64_t> member_seeds(n);
  for (auto& s : member_seeds) s = rng.next_u64();

  std::vector<PointCloud> prepared(n);
  std::vector<int> labels(n);
  parallel_for(n, cfg.jobs, [&](std::size_t i) {
    Rng member_rng(member_seeds[i]);
    PointCloud c = batch[i]->cloud;
    if (cfg.resample_points > 0 && cfg.resample_points < c.size()) {
      // fresh uniform point subset every step
      std::vector<Eigen::Index> pool(static_cast<std::size_t>(c.size()));
      std::iota(pool.begin(), pool.end(), Eigen::Index{0});
      PointCloud sub;
      sub.points.resize(3, cfg.resample_points);
      for (Eigen::Index j = 0; j < cfg.resample_points; ++j) {
        const std::size_t pick = member_rng.index(pool.size() - static_cast<std::size_t>(j));
        sub.points.col(j) = c.points.col(pool[pick]);
        std::swap(pool[pick], pool[pool.size() - 1 - static_cast<std::size_t>(j)]);
      }
      c = std::move(sub);
    }
    const double angle =
        member_rng.uniform(-cfg.augment_max_rotation_rad, cfg.augment_max_rotation_rad);
    c = rotate_z(c, angle);
    c = jitter(c, member_rng, cfg.augment_sigma_m);
    prepared[i] = normalize_cloud(c);
    labels[i] = batch[i]->identity;
  });
  for (int label : labels)
    if (label < 0 || label >= params.spec.class_count)
      fail(Err::RangeError, "train_step: identity outside classifier range");

  // phase 1: embeddings and logits only
  std::vector<Eigen::VectorXd> embeddings(n), logits(n);
  parallel_for(n, cfg.jobs, [&](std::size_t i) {
    ForwardTrace trace;
    forward(params, prepared[i], trace);
    embeddings[i] = std::move(trace.embedding);
    logits[i] = std::move(trace.logits);
  });

  // phase 2: mine and reduce the loss to per-member upstream gradients
  TripletBatch mined = batch_hard_mine(embeddings, labels);
  const double inv_t = 1.0 / static_cast<double>(mined.mined.size());

  std::vector<Eigen::VectorXd> d_emb(n), d_log(n);
  for (std::size_t i = 0; i < n; ++i) {
    d_emb[i] = Eigen::VectorXd::Zero(embeddings[i].size());
    d_log[i] = Eigen::VectorXd::Zero(logits[i].size());
  }
  double loss = 0.0;
  for (const Triplet& t : mined.mined) {
    const auto a = static_cast<std::size_t>(t.anchor);
    const auto p = static_cast<std::size_t>(t.positive);
    const auto g = static_cast<std::size_t>(t.negative);
    CombinedLossGrad clg =
        combined_loss_grad(cfg.loss, embeddings[a], embeddings[p], embeddings[g],
                           logits[a], logits[p], logits[g], labels[a], labels[g]);
    loss += inv_t * clg.loss;
    d_emb[a] += inv_t * clg.d_anchor;
    d_emb[p] += inv_t * clg.d_positive;
    d_emb[g] += inv_t * clg.d_negative;
    d_log[a] += inv_t * clg.d_logits_a;
    d_log[p] += inv_t * clg.d_logits_p;
    d_log[g] += inv_t * clg.d_logits_n;
  }
  if (!std::isfinite(loss))
    fail(Err::NonFinite, "train_step: non-finite batch loss at optimizer step " +
                             std::to_string(state.step + 1));

  // phase 3: re-forward with traces and accumulate parameter gradients.
  // Fixed per-worker partitions plus an ordered reduce keep the result
  // bit-identical for any job count.
  const int workers = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(n)));
  std::vector<Gradients> partial;
  partial.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) partial.push_back(zero_gradients(params.spec));

  parallel_for(static_cast<std::size_t>(workers), workers, [&](std::size_t w) {
    const std::size_t lo = n * w / static_cast<std::size_t>(workers);
    const std::size_t hi = n * (w + 1) / static_cast<std::size_t>(workers);
    ForwardTrace trace;
    for (std::size_t i = lo; i < hi; ++i) {
      if (d_emb[i].isZero(0.0) && d_log[i].isZero(0.0)) continue;
      forward(params, prepared[i], trace);
      backward(params, trace, d_emb[i], d_log[i], partial[w]);
    }
  });
  Gradients& total = partial.front();
  for (int w = 1; w < workers; ++w) total.add_scaled(partial[static_cast<std::size_t>(w)], 1.0);

  apply_update(params, total, state, cfg);
  return loss;
}

std::vector<int> class_mapping(const std::vector<Sample>& samples) {
  std::set<int> ids;
  for (const auto& s : samples) ids.insert(s.identity);
  return {ids.begin(), ids.end()};
}

namespace {

// identity-balanced batches: chunks of K same-identity samples, shuffled,
// packed batch_size/K chunks per batch
std::vector<std::vector<std::size_t>> plan_batches(const std::vector<Sample>& train,
                                                   const TrainConfig& cfg, Rng& rng,
                                                   bool* warned_small) {
  std::map<int, std::vector<std::size_t>> by_identity;
  for (std::size_t i = 0; i < train.size(); ++i)
    by_identity[train[i].identity].push_back(i);

  const int k = cfg.samples_per_identity;
  std::vector<std::vector<std::size_t>> chunks;
  for (auto& [identity, members] : by_identity) {
    if (members.size() < 2) {
      if (!*warned_small) {
        std::cerr << "warning: identity " << identity
                  << " has fewer than 2 samples and is dropped from batching\n";
        *warned_small = true;
      }
      continue;
    }
    rng.shuffle(members);
    for (std::size_t at = 0; at < members.size(); at += static_cast<std::size_t>(k)) {
      std::size_t end = std::min(members.size(), at + static_cast<std::size_t>(k));
      if (end - at < 2) break;  // a lone trailing sample cannot anchor
      chunks.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(at),
                          members.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  if (chunks.size() < 2)
    fail(Err::EmptyInput, "fit: need at least two identity chunks per epoch");
  rng.shuffle(chunks);

  const std::size_t chunks_per_batch =
      std::max<std::size_t>(2, static_cast<std::size_t>(cfg.batch_size / k));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < chunks.size(); at += chunks_per_batch) {
    std::vector<std::size_t> batch;
    std::set<int> identities;
    for (std::size_t c = at; c < std::min(chunks.size(), at + chunks_per_batch); ++c) {
      for (std::size_t idx : chunks[c]) batch.push_back(idx);
      identities.insert(train[chunks[c].front()].identity);
    }
    if (identities.size() >= 2) batches.push_back(std::move(batch));
  }
  return batches;
}

double knn_validation_accuracy(const NetworkParams& params,
                               const std::vector<PointCloud>& train_prepared,
                               const std::vector<int>& train_labels,
                               const std::vector<PointCloud>& val_prepared,
                               const std::vector<int>& val_labels,
                               const TrainConfig& cfg) {
  std::vector<Eigen::VectorXd> gallery_emb =
      embed_batch(params, train_prepared, cfg.jobs);
  Gallery gallery = make_gallery(gallery_emb, train_labels, cfg.knn_k);

  std::vector<Eigen::VectorXd> val_emb = embed_batch(params, val_prepared, cfg.jobs);
  long correct = 0;
  for (std::size_t i = 0; i < val_emb.size(); ++i)
    if (knn_predict(gallery, val_emb[i]).first == val_labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(val_emb.size());
}

}  // namespace

FitResult fit(const std::vector<Sample>& train, const std::vector<Sample>& validation,
              const NetworkSpec& spec, const TrainConfig& cfg,
              const BestCallback& on_best) {
  cfg.validate();
  if (train.empty()) fail(Err::EmptyInput, "fit: empty train set");

  const std::vector<int> classes = class_mapping(train);
  std::unordered_map<int, int> class_of;
  for (std::size_t i = 0; i < classes.size(); ++i)
    class_of[classes[i]] = static_cast<int>(i);
  for (const auto& s : validation)
    if (!class_of.count(s.identity))
      fail(Err::RangeError,
           "fit: validation identity " + std::to_string(s.identity) +
               " missing from the train set");

  NetworkSpec net_spec = spec;
  net_spec.class_count = static_cast<int>(classes.size());
  net_spec.init_seed = cfg.seed;

  // remap identities to dense class labels for the classifier head
  std::vector<Sample> train_c = train;
  for (auto& s : train_c) s.identity = class_of[s.identity];
  std::vector<Sample> val_c = validation;
  for (auto& s : val_c) s.identity = class_of[s.identity];

  Rng root(cfg.seed);
  Rng init_rng = root.fork(0x494e4954ull);  // init stream
  FitResult result;
  result.params = init_network(net_spec, init_rng);
  OptimizerState state = make_optimizer_state(net_spec);

  // evaluation views are fixed: normalized, never augmented
  std::vector<PointCloud> train_prepared(train_c.size());
  std::vector<int> train_labels(train_c.size());
  parallel_for(train_c.size(), cfg.jobs, [&](std::size_t i) {
    train_prepared[i] = normalize_cloud(train_c[i].cloud);
    train_labels[i] = train_c[i].identity;
  });
  std::vector<PointCloud> val_prepared(val_c.size());
  std::vector<int> val_labels(val_c.size());
  parallel_for(val_c.size(), cfg.jobs, [&](std::size_t i) {
    val_prepared[i] = normalize_cloud(val_c[i].cloud);
    val_labels[i] = val_c[i].identity;
  });
  if (val_c.empty())
    std::cerr << "warning: empty validation set, best-checkpoint retention "
                 "falls back to the final parameters\n";

  NetworkParams best = result.params;
  bool warned_small = false;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng epoch_rng = root.fork(0xe70c0000ull + static_cast<std::uint64_t>(epoch));
    auto batches = plan_batches(train_c, cfg, epoch_rng, &warned_small);

    double loss_sum = 0.0;
    for (const auto& batch_indices : batches) {
      std::vector<const Sample*> batch;
      batch.reserve(batch_indices.size());
      for (std::size_t idx : batch_indices) batch.push_back(&train_c[idx]);
      try {
        loss_sum += train_step(result.params, state, batch, cfg, epoch_rng);
      } catch (const Error& e) {
        if (e.code() == Err::NonFinite)
          fail(Err::NonFinite, "epoch " + std::to_string(epoch) + ": " + e.what());
        throw;
      }
    }
    result.history.epoch_loss.push_back(loss_sum / static_cast<double>(batches.size()));

    if (!val_c.empty() && epoch % cfg.eval_every == 0) {
      const double acc = knn_validation_accuracy(result.params, train_prepared,
                                                 train_labels, val_prepared,
                                                 val_labels, cfg);
      result.history.evals.push_back({epoch, acc});
      const bool improved = acc > result.history.best_accuracy ||
                            result.history.best_epoch < 0;
      if (improved || acc == result.history.best_accuracy) {
        // ties keep the most recent parameters; checkpoints are only
        // written on strict improvement so their accuracies increase
        result.history.best_accuracy = acc;
        result.history.best_epoch = epoch;
        best = result.params;
        if (improved && on_best) on_best(best, epoch, acc);
      }
    }
  }

  if (result.history.best_epoch >= 0)
    result.params = std::move(best);
  // else: no eval ever ran, keep the final parameters
  return result;
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(Err::UnwritablePath, "cannot write history: " + path);
  out << "epoch,loss,val_accuracy\n";
  std::map<int, double> eval_at;
  for (const auto& e : history.evals) eval_at[e.epoch] = e.accuracy;
  char buf[40];
  for (std::size_t i = 0; i < history.epoch_loss.size(); ++i) {
    const int epoch = static_cast<int>(i) + 1;
    std::snprintf(buf, sizeof buf, "%.9g", history.epoch_loss[i]);
    out << epoch << ',' << buf << ',';
    auto it = eval_at.find(epoch);
    if (it != eval_at.end()) {
      std::snprintf(buf, sizeof buf, "%.9g", it->second);
      out << buf;
    }
    out << '\n';
  }
  if (!out) fail(Err::UnwritablePath, "short write: " + path);
}

}  // namespace herdid
