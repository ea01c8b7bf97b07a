#include "herdid/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "herdid/error.hpp"

namespace herdid {

namespace {

std::ifstream open_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Err::MissingFile, "file not found: " + path);
  return in;
}

std::ofstream open_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(Err::UnwritablePath, "cannot write: " + path);
  return out;
}

void expect_format(std::istream& in, const std::string& want, const std::string& path) {
  std::string line;
  if (!std::getline(in, line) || line != want)
    fail(Err::ParseError, path + ": expected header '" + want + "'");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_id_list(std::ostream& out, const std::string& name,
                   const std::vector<std::string>& ids) {
  out << name << ' ' << ids.size() << '\n';
  for (const auto& id : ids) out << "  " << id << '\n';
}

std::vector<std::string> read_id_list(std::istream& in, const std::string& name,
                                      const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) fail(Err::ParseError, path + ": truncated before " + name);
  std::istringstream ls(line);
  std::string key;
  std::size_t count = 0;
  if (!(ls >> key >> count) || key != name)
    fail(Err::ParseError, path + ": expected '" + name + " <count>'");
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) fail(Err::ParseError, path + ": truncated " + name);
    std::istringstream el(line);
    std::string id;
    if (!(el >> id)) fail(Err::ParseError, path + ": blank entry in " + name);
    ids.push_back(id);
  }
  return ids;
}

}  // namespace

void write_dataset_index(const DatasetIndex& index, const std::string& path) {
  auto out = open_write(path);
  out << "herdid-dataset v1\n";
  out << "intrinsics " << fmt_double(index.intrinsics.fx) << ' '
      << fmt_double(index.intrinsics.fy) << ' ' << fmt_double(index.intrinsics.cx)
      << ' ' << fmt_double(index.intrinsics.cy) << '\n';
  out << "samples " << index.samples.size() << '\n';
  for (const auto& s : index.samples)
    out << "  " << s.id << ' ' << s.identity << ' ' << s.sequence_id << ' '
        << s.frame_index << ' ' << s.blob << ' ' << s.crop_path << ' '
        << s.cloud_path << '\n';
  if (!out) fail(Err::UnwritablePath, "short write: " + path);
}

DatasetIndex read_dataset_index(const std::string& path) {
  auto in = open_read(path);
  expect_format(in, "herdid-dataset v1", path);

  DatasetIndex index;
  std::string line;
  if (!std::getline(in, line)) fail(Err::ParseError, path + ": missing intrinsics");
  {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key >> index.intrinsics.fx >> index.intrinsics.fy >>
          index.intrinsics.cx >> index.intrinsics.cy) ||
        key != "intrinsics")
      fail(Err::ParseError, path + ": bad intrinsics line");
  }
  if (!std::getline(in, line)) fail(Err::ParseError, path + ": missing samples");
  std::size_t count = 0;
  {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key >> count) || key != "samples")
      fail(Err::ParseError, path + ": bad samples line");
  }
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) fail(Err::ParseError, path + ": truncated sample list");
    std::istringstream ls(line);
    SampleInfo s;
    if (!(ls >> s.id >> s.identity >> s.sequence_id >> s.frame_index >> s.blob >>
          s.crop_path >> s.cloud_path))
      fail(Err::ParseError, path + ": bad sample line " + std::to_string(i));
    if (!seen.insert(s.id).second)
      fail(Err::InvalidManifest, path + ": duplicate sample id " + s.id);
    index.samples.push_back(std::move(s));
  }
  return index;
}

std::string check_split_manifest(const SplitManifest& m) {
  if (!(m.ratio > 0.0 && m.ratio < 1.0)) return "ratio must lie in (0, 1)";
  if (m.n < 0) return "n must be >= 0";

  std::unordered_set<std::string> train(m.train_ids.begin(), m.train_ids.end());
  for (const auto& id : m.test_ids)
    if (train.count(id)) return "train_ids and test_ids must be disjoint (both contain " + id + ")";

  std::unordered_set<std::string> pre(m.pre_removal_train_ids.begin(),
                                      m.pre_removal_train_ids.end());
  for (const auto& id : m.train_ids)
    if (!pre.count(id))
      return "train_ids must be a subset of pre_removal_train_ids (" + id + " is not)";
  return "";
}

std::string check_split_manifest(const SplitManifest& m, const DatasetIndex& index) {
  std::string structural = check_split_manifest(m);
  if (!structural.empty()) return structural;

  std::unordered_map<std::string, int> identity_of;
  for (const auto& s : index.samples) identity_of[s.id] = s.identity;
  std::unordered_set<int> unknown(m.unknown_identities.begin(),
                                  m.unknown_identities.end());
  for (const auto& id : m.train_ids) {
    auto it = identity_of.find(id);
    if (it == identity_of.end()) return "train id " + id + " not present in the dataset";
    if (unknown.count(it->second))
      return "unknown identity " + std::to_string(it->second) +
             " still has train samples (" + id + ")";
  }
  for (const auto& id : m.test_ids)
    if (!identity_of.count(id)) return "test id " + id + " not present in the dataset";
  return "";
}

void write_split_manifest(const SplitManifest& m, const std::string& path) {
  auto out = open_write(path);
  out << "herdid-split v1\n";
  out << "seed " << m.seed << '\n';
  out << "ratio " << fmt_double(m.ratio) << '\n';
  out << "n " << m.n << '\n';
  write_id_list(out, "train_ids", m.train_ids);
  write_id_list(out, "test_ids", m.test_ids);
  write_id_list(out, "pre_removal_train_ids", m.pre_removal_train_ids);
  out << "unknown_identities " << m.unknown_identities.size() << '\n';
  for (int id : m.unknown_identities) out << "  " << id << '\n';
  if (!out) fail(Err::UnwritablePath, "short write: " + path);
}

SplitManifest read_split_manifest(const std::string& path) {
  auto in = open_read(path);
  expect_format(in, "herdid-split v1", path);

  SplitManifest m;
  std::string line, key;
  auto read_kv = [&](const std::string& want) -> std::istringstream {
    if (!std::getline(in, line)) fail(Err::ParseError, path + ": truncated before " + want);
    std::istringstream ls(line);
    if (!(ls >> key) || key != want)
      fail(Err::ParseError, path + ": expected '" + want + "'");
    return ls;
  };
  {
    auto ls = read_kv("seed");
    if (!(ls >> m.seed)) fail(Err::ParseError, path + ": bad seed");
  }
  {
    auto ls = read_kv("ratio");
    if (!(ls >> m.ratio)) fail(Err::ParseError, path + ": bad ratio");
  }
  {
    auto ls = read_kv("n");
    if (!(ls >> m.n)) fail(Err::ParseError, path + ": bad n");
  }
  m.train_ids = read_id_list(in, "train_ids", path);
  m.test_ids = read_id_list(in, "test_ids", path);
  m.pre_removal_train_ids = read_id_list(in, "pre_removal_train_ids", path);
  {
    auto ls = read_kv("unknown_identities");
    std::size_t count = 0;
    if (!(ls >> count)) fail(Err::ParseError, path + ": bad unknown_identities");
    for (std::size_t i = 0; i < count; ++i) {
      if (!std::getline(in, line)) fail(Err::ParseError, path + ": truncated unknowns");
      std::istringstream el(line);
      int id;
      if (!(el >> id)) fail(Err::ParseError, path + ": bad unknown identity entry");
      m.unknown_identities.push_back(id);
    }
  }

  const std::string violated = check_split_manifest(m);
  if (!violated.empty()) fail(Err::InvalidManifest, path + ": " + violated);
  return m;
}

void write_gallery(const Gallery& g, const std::string& path) {
  if (g.entry_count() > 0 && (g.k < 1 || g.k > g.entry_count()))
    fail(Err::RangeError, "gallery k out of range");
  auto out = open_write(path);
  out << "herdid-gallery v1\n";
  out << "k " << g.k << '\n';
  out << "distance euclidean\n";
  out << "dim " << g.dim() << '\n';
  out << "entries " << g.entry_count() << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < g.entry_count(); ++i) {
    out << "  " << g.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < g.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", g.embeddings(i, j));
      out << ' ' << buf;
    }
    out << '\n';
  }
  if (!out) fail(Err::UnwritablePath, "short write: " + path);
}

Gallery read_gallery(const std::string& path) {
  auto in = open_read(path);
  expect_format(in, "herdid-gallery v1", path);

  Gallery g;
  std::string line, key, distance;
  Eigen::Index dim = 0, entries = 0;
  auto kv = [&](const std::string& want, auto& value) {
    if (!std::getline(in, line)) fail(Err::ParseError, path + ": truncated before " + want);
    std::istringstream ls(line);
    if (!(ls >> key >> value) || key != want)
      fail(Err::ParseError, path + ": expected '" + want + " <value>'");
  };
  kv("k", g.k);
  kv("distance", distance);
  if (distance != "euclidean")
    fail(Err::InvalidManifest, path + ": unsupported distance " + distance);
  kv("dim", dim);
  kv("entries", entries);

  g.embeddings.resize(entries, dim);
  g.labels.resize(static_cast<std::size_t>(entries));
  for (Eigen::Index i = 0; i < entries; ++i) {
    if (!std::getline(in, line)) fail(Err::ParseError, path + ": truncated entries");
    std::istringstream ls(line);
    if (!(ls >> g.labels[static_cast<std::size_t>(i)]))
      fail(Err::ParseError, path + ": bad entry label");
    for (Eigen::Index j = 0; j < dim; ++j)
      if (!(ls >> g.embeddings(i, j)))
        fail(Err::ParseError, path + ": bad embedding value");
  }
  if (entries > 0 && (g.k < 1 || g.k > entries))
    fail(Err::InvalidManifest,
         path + ": k must satisfy 1 <= k <= entry count");
  return g;
}

}  // namespace herdid
