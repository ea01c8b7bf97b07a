#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "herdid/frame.hpp"

namespace herdid {

/// One dataset entry as indexed by the top-level manifest. `id` is
/// "<sequence>_<frame>_<blob>" and unique within a dataset.
struct SampleInfo {
  std::string id;
  int identity = -1;
  std::string sequence_id;
  std::int64_t frame_index = 0;
  int blob = 0;
  std::string crop_path;   // relative to the dataset root
  std::string cloud_path;  // relative to the dataset root
};

struct DatasetIndex {
  CameraIntrinsics intrinsics;
  std::vector<SampleInfo> samples;
};

/// Deterministic record of one train/test partition. `n` is the
/// neighbor-removal radius in frames; identities whose train samples all
/// vanished under removal are listed as unknowns.
struct SplitManifest {
  std::uint64_t seed = 0;
  double ratio = 0.7;
  int n = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::vector<std::string> pre_removal_train_ids;
  std::vector<int> unknown_identities;
};

/// Labeled embedding set plus the kNN rule configuration. Distance is
/// Euclidean; embeddings are one per row.
struct Gallery {
  Eigen::MatrixXd embeddings;
  std::vector<int> labels;
  int k = 5;

  Eigen::Index entry_count() const { return embeddings.rows(); }
  Eigen::Index dim() const { return embeddings.cols(); }
};

void write_dataset_index(const DatasetIndex& index, const std::string& path);
DatasetIndex read_dataset_index(const std::string& path);

/// Round-trips field by field; read rejects manifests violating the split
/// invariants (train/test disjoint, unknowns absent from train, train
/// contained in the pre-removal train side), naming the invariant.
void write_split_manifest(const SplitManifest& manifest, const std::string& path);
SplitManifest read_split_manifest(const std::string& path);

/// Validates the invariants of an in-memory manifest. Returns the name of
/// the violated invariant, or an empty string when valid.
std::string check_split_manifest(const SplitManifest& manifest);

/// Full check including the identity invariant (unknown identities have no
/// train entries), which needs the dataset index to resolve identities.
std::string check_split_manifest(const SplitManifest& manifest,
                                 const DatasetIndex& index);

/// Embeddings stored as decimal floats with 9 significant digits.
void write_gallery(const Gallery& gallery, const std::string& path);
Gallery read_gallery(const std::string& path);

}  // namespace herdid
