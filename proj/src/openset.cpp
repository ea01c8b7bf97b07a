#include "herdid/openset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "herdid/cloudops.hpp"
#include "herdid/error.hpp"
#include "herdid/parallel.hpp"
#include "herdid/rng.hpp"

namespace herdid {

SplitManifest random_split(const std::vector<SampleInfo>& samples, double ratio,
                           std::uint64_t seed) {
  if (samples.empty()) fail(Err::EmptyInput, "random_split: no samples");
  if (!(ratio > 0.0 && ratio < 1.0))
    fail(Err::RangeError, "random_split: ratio must lie in (0, 1)");

  const std::size_t n = samples.size();
  const double exact = ratio * static_cast<double>(n);
  // nearest integer, ties rounded down
  std::size_t train_count = static_cast<std::size_t>(std::floor(exact));
  if (exact - std::floor(exact) > 0.5) ++train_count;
  train_count = std::min(train_count, n);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<char> in_train(n, 0);
  for (std::size_t i = 0; i < train_count; ++i) in_train[order[i]] = 1;

  SplitManifest m;
  m.seed = seed;
  m.ratio = ratio;
  m.n = 0;
  for (std::size_t i = 0; i < n; ++i)
    (in_train[i] ? m.train_ids : m.test_ids).push_back(samples[i].id);
  m.pre_removal_train_ids = m.train_ids;
  return m;
}

SplitManifest leave_sequence_out(const SplitManifest& manifest,
                                 const std::vector<SampleInfo>& samples, int n) {
  if (n < 0) fail(Err::RangeError, "leave_sequence_out: n must be >= 0");

  std::unordered_map<std::string, const SampleInfo*> by_id;
  for (const auto& s : samples) by_id[s.id] = &s;
  auto lookup = [&](const std::string& id) -> const SampleInfo& {
    auto it = by_id.find(id);
    if (it == by_id.end())
      fail(Err::InvalidManifest, "manifest references unknown sample " + id);
    return *it->second;
  };

  // test frames per sequence, sorted for the window check
  std::unordered_map<std::string, std::vector<std::int64_t>> test_frames;
  for (const auto& id : manifest.test_ids) {
    const SampleInfo& s = lookup(id);
    test_frames[s.sequence_id].push_back(s.frame_index);
  }
  for (auto& [seq, frames] : test_frames) std::sort(frames.begin(), frames.end());

  auto near_test = [&](const SampleInfo& s) {
    auto it = test_frames.find(s.sequence_id);
    if (it == test_frames.end()) return false;
    const auto& frames = it->second;
    auto lo = std::lower_bound(frames.begin(), frames.end(), s.frame_index - n);
    return lo != frames.end() && *lo <= s.frame_index + n;
  };

  SplitManifest out = manifest;
  out.n = n;
  out.pre_removal_train_ids = manifest.pre_removal_train_ids;
  out.train_ids.clear();
  out.unknown_identities.clear();

  std::unordered_map<int, long> pre_counts, post_counts;
  for (const auto& id : manifest.train_ids) ++pre_counts[lookup(id).identity];
  for (const auto& id : manifest.train_ids) {
    const SampleInfo& s = lookup(id);
    if (near_test(s)) continue;
    out.train_ids.push_back(id);
    ++post_counts[s.identity];
  }

  std::set<int> unknowns;
  for (const auto& [identity, count] : pre_counts)
    if (count > 0 && post_counts[identity] == 0) unknowns.insert(identity);
  out.unknown_identities.assign(unknowns.begin(), unknowns.end());
  return out;
}

Gallery make_gallery(const std::vector<Eigen::VectorXd>& embeddings,
                     const std::vector<int>& labels, int k) {
  if (embeddings.empty()) fail(Err::EmptyInput, "gallery needs at least one entry");
  if (labels.size() != embeddings.size())
    fail(Err::DimensionMismatch, "gallery: one label per embedding required");

  Gallery g;
  const Eigen::Index dim = embeddings.front().size();
  g.embeddings.resize(static_cast<Eigen::Index>(embeddings.size()), dim);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != dim)
      fail(Err::DimensionMismatch, "gallery embeddings must share one dimensionality");
    g.embeddings.row(static_cast<Eigen::Index>(i)) = embeddings[i].transpose();
  }
  g.labels = labels;
  g.k = std::max(1, std::min<int>(k, static_cast<int>(embeddings.size())));
  if (g.k != k)
    std::cerr << "warning: gallery k clamped from " << k << " to " << g.k << "\n";
  return g;
}

namespace {

std::vector<Eigen::VectorXd> embed_ids(const NetworkParams& params,
                                       const std::vector<std::string>& ids,
                                       const SampleMap& samples, int jobs) {
  std::vector<const Sample*> ordered;
  ordered.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = samples.find(id);
    if (it == samples.end())
      fail(Err::InvalidManifest, "manifest references unloaded sample " + id);
    ordered.push_back(&it->second);
  }
  std::vector<PointCloud> prepared(ordered.size());
  parallel_for(ordered.size(), jobs,
               [&](std::size_t i) { prepared[i] = normalize_cloud(ordered[i]->cloud); });
  return embed_batch(params, prepared, jobs);
}

}  // namespace

Gallery build_gallery(const NetworkParams& params, const SplitManifest& manifest,
                      const SampleMap& samples, int k, int jobs) {
  std::unordered_set<int> unknown(manifest.unknown_identities.begin(),
                                  manifest.unknown_identities.end());

  // knowns from the post-removal train side, unknowns enrolled from the
  // train side prior to temporal bias removal
  std::vector<std::string> ids = manifest.train_ids;
  if (!unknown.empty()) {
    std::unordered_set<std::string> in_train(manifest.train_ids.begin(),
                                             manifest.train_ids.end());
    for (const auto& id : manifest.pre_removal_train_ids) {
      auto it = samples.find(id);
      if (it == samples.end())
        fail(Err::InvalidManifest, "manifest references unloaded sample " + id);
      if (unknown.count(it->second.identity) && !in_train.count(id))
        ids.push_back(id);
    }
  }
  if (ids.empty()) fail(Err::EmptyInput, "gallery would be empty");

  std::vector<Eigen::VectorXd> embeddings = embed_ids(params, ids, samples, jobs);
  std::vector<int> labels;
  labels.reserve(ids.size());
  for (const auto& id : ids) labels.push_back(samples.at(id).identity);
  return make_gallery(embeddings, labels, k);
}

std::pair<int, Eigen::VectorXd> knn_predict(const Gallery& gallery,
                                            const Eigen::VectorXd& embedding) {
  const Eigen::Index n = gallery.entry_count();
  if (n < 1) fail(Err::EmptyInput, "knn_predict: empty gallery");
  if (gallery.k < 1 || gallery.k > n)
    fail(Err::RangeError, "knn_predict: k out of range");
  if (embedding.size() != gallery.dim())
    fail(Err::DimensionMismatch, "knn_predict: embedding dimension mismatch");

  Eigen::VectorXd dist =
      (gallery.embeddings.rowwise() - embedding.transpose()).rowwise().norm();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::partial_sort(order.begin(), order.begin() + gallery.k, order.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      if (dist[a] != dist[b]) return dist[a] < dist[b];
                      return a < b;
                    });

  // votes and mean distance per label among the k nearest
  std::map<int, std::pair<int, double>> tally;  // label -> (count, dist sum)
  Eigen::VectorXd neighbor_dists(gallery.k);
  for (int i = 0; i < gallery.k; ++i) {
    const Eigen::Index idx = order[static_cast<std::size_t>(i)];
    neighbor_dists[i] = dist[idx];
    auto& t = tally[gallery.labels[static_cast<std::size_t>(idx)]];
    t.first += 1;
    t.second += dist[idx];
  }

  int best_label = -1, best_votes = -1;
  double best_mean = 0.0;
  for (const auto& [label, t] : tally) {
    const double mean = t.second / t.first;
    const bool wins = t.first > best_votes ||
                      (t.first == best_votes && mean < best_mean);
    // equal votes and equal mean distance: smallest label id, which the
    // ascending map order already guarantees
    if (wins) {
      best_label = label;
      best_votes = t.first;
      best_mean = mean;
    }
  }
  return {best_label, neighbor_dists};
}

EvalReport evaluate(const NetworkParams& params, const SplitManifest& manifest,
                    const SampleMap& samples, int k, int jobs) {
  Gallery gallery = build_gallery(params, manifest, samples, k, jobs);
  std::unordered_set<int> unknown(manifest.unknown_identities.begin(),
                                  manifest.unknown_identities.end());

  std::vector<Eigen::VectorXd> embeddings =
      embed_ids(params, manifest.test_ids, samples, jobs);

  EvalReport report;
  report.rows.resize(manifest.test_ids.size());
  parallel_for(manifest.test_ids.size(), jobs, [&](std::size_t i) {
    const std::string& id = manifest.test_ids[i];
    const Sample& s = samples.at(id);
    EvalRow row;
    row.sample_id = id;
    row.true_identity = s.identity;
    row.predicted = knn_predict(gallery, embeddings[i]).first;
    row.is_unknown = unknown.count(s.identity) > 0;
    row.correct = row.predicted == row.true_identity;
    report.rows[i] = std::move(row);
  });

  long correct = 0, known_total = 0, known_correct = 0, unknown_total = 0,
       unknown_correct = 0;
  for (const auto& row : report.rows) {
    correct += row.correct;
    if (row.is_unknown) {
      ++unknown_total;
      unknown_correct += row.correct;
    } else {
      ++known_total;
      known_correct += row.correct;
    }
    ++report.confusion[{row.true_identity, row.predicted}];
  }
  const auto frac = [](long num, long den) {
    return den == 0 ? std::nan("") : static_cast<double>(num) / static_cast<double>(den);
  };
  report.overall_accuracy = frac(correct, static_cast<long>(report.rows.size()));
  report.known_accuracy = frac(known_correct, known_total);
  report.unknown_accuracy = frac(unknown_correct, unknown_total);
  return report;
}

void write_eval_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(Err::UnwritablePath, "cannot write report: " + path);
  out << "sample_id,true,predicted,is_unknown_identity,correct\n";
  for (const auto& row : report.rows)
    out << row.sample_id << ',' << row.true_identity << ',' << row.predicted << ','
        << (row.is_unknown ? 1 : 0) << ',' << (row.correct ? 1 : 0) << '\n';
  if (!out) fail(Err::UnwritablePath, "short write: " + path);
}

void write_confusion_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(Err::UnwritablePath, "cannot write confusion: " + path);
  out << "true,predicted,count\n";
  for (const auto& [key, count] : report.confusion)
    out << key.first << ',' << key.second << ',' << count << '\n';
  if (!out) fail(Err::UnwritablePath, "short write: " + path);
}

}  // namespace herdid
