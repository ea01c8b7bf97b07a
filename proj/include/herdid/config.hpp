#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace herdid {

/// Sectioned key-value configuration. One canonical text form (sorted
/// sections and keys) backs both the on-disk format and the config hash
/// printed in every run header.
class Config {
 public:
  Config() = default;

  static Config parse_text(const std::string& text);
  static Config load(const std::string& path);

  /// Applies "section.key=value" (the CLI --set syntax).
  void set_path(const std::string& assignment);
  void set(const std::string& section, const std::string& key,
           const std::string& value);

  bool has(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key) const;
  std::int64_t get_int(const std::string& section, const std::string& key) const;
  bool get_bool(const std::string& section, const std::string& key) const;
  std::vector<int> get_int_list(const std::string& section, const std::string& key) const;

  /// Overlays every entry of `other` onto this config.
  void merge(const Config& other);

  std::string canonical_text() const;
  void save(const std::string& path) const;

  /// FNV-1a over the canonical text, printed as 16 hex digits.
  std::string hash() const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return sections_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

/// Every tunable named anywhere in the toolkit, with its default value.
Config default_config();

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::string fnv1a64_hex(const std::string& text);

}  // namespace herdid
