#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "herdid/cloud.hpp"
#include "herdid/dataset.hpp"
#include "herdid/embednet.hpp"

namespace herdid {

/// Identity-agnostic uniform split; pre_removal_train_ids == train_ids,
/// n == 0. Train count is |samples| * ratio rounded to nearest, ties down.
SplitManifest random_split(const std::vector<SampleInfo>& samples, double ratio,
                           std::uint64_t seed);

/// Removes from train_ids every sample within temporal distance n of a
/// same-sequence test sample. Identities whose train entries all vanished
/// are recorded as unknowns; pre_removal_train_ids is preserved.
SplitManifest leave_sequence_out(const SplitManifest& manifest,
                                 const std::vector<SampleInfo>& samples, int n);

/// Loaded samples keyed by sample id.
using SampleMap = std::map<std::string, Sample>;

Gallery make_gallery(const std::vector<Eigen::VectorXd>& embeddings,
                     const std::vector<int>& labels, int k);

/// Enrolls known identities from the post-removal train side and unknown
/// identities from the pre-removal train side. k is clamped to the entry
/// count with a warning.
Gallery build_gallery(const NetworkParams& params, const SplitManifest& manifest,
                      const SampleMap& samples, int k, int jobs = 1);

/// Majority label among the k nearest entries; ties by smallest mean
/// distance among tied labels, then by smallest label id. Also returns the
/// k neighbor distances in ascending order.
std::pair<int, Eigen::VectorXd> knn_predict(const Gallery& gallery,
                                            const Eigen::VectorXd& embedding);

struct EvalRow {
  std::string sample_id;
  int true_identity = -1;
  int predicted = -1;
  bool is_unknown = false;
  bool correct = false;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double overall_accuracy = 0.0;
  double known_accuracy = 0.0;    // NaN when no known test samples
  double unknown_accuracy = 0.0;  // NaN when no unknown test samples
  std::map<std::pair<int, int>, long> confusion;  // (true, predicted) -> count
};

/// Predicts every test sample against the gallery built per the manifest.
EvalReport evaluate(const NetworkParams& params, const SplitManifest& manifest,
                    const SampleMap& samples, int k, int jobs = 1);

/// Columns: sample_id, true, predicted, is_unknown_identity, correct.
void write_eval_csv(const EvalReport& report, const std::string& path);
void write_confusion_csv(const EvalReport& report, const std::string& path);

}  // namespace herdid
