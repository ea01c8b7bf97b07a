#include "herdid/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "herdid/error.hpp"

namespace herdid {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

Config Config::parse_text(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        fail(Err::ParseError, "config line " + std::to_string(lineno) + ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        fail(Err::ParseError, "config line " + std::to_string(lineno) + ": empty section name");
      cfg.sections_[section];  // keep empty sections
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos)
      fail(Err::ParseError, "config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      fail(Err::ParseError, "config line " + std::to_string(lineno) + ": empty key");
    if (section.empty())
      fail(Err::ParseError, "config line " + std::to_string(lineno) + ": key outside any [section]");
    cfg.sections_[section][key] = value;
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Err::MissingFile, "config file not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

void Config::set_path(const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos)
    fail(Err::BadConfig, "expected section.key=value, got: " + assignment);
  std::string path = trim(assignment.substr(0, eq));
  std::string value = trim(assignment.substr(eq + 1));
  auto dot = path.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == path.size())
    fail(Err::BadConfig, "expected section.key=value, got: " + assignment);
  set(path.substr(0, dot), path.substr(dot + 1), value);
}

void Config::set(const std::string& section, const std::string& key,
                 const std::string& value) {
  sections_[section][key] = value;
}

bool Config::has(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

std::string Config::get_string(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  if (s == sections_.end() || !s->second.count(key))
    fail(Err::BadConfig, "missing config key " + section + "." + key);
  return s->second.at(key);
}

double Config::get_double(const std::string& section, const std::string& key) const {
  const std::string v = get_string(section, key);
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(Err::BadConfig, section + "." + key + ": not a number: " + v);
  }
}

std::int64_t Config::get_int(const std::string& section, const std::string& key) const {
  const std::string v = get_string(section, key);
  std::int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(Err::BadConfig, section + "." + key + ": not an integer: " + v);
  return out;
}

bool Config::get_bool(const std::string& section, const std::string& key) const {
  const std::string v = get_string(section, key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(Err::BadConfig, section + "." + key + ": not a boolean: " + v);
}

std::vector<int> Config::get_int_list(const std::string& section, const std::string& key) const {
  std::istringstream in(get_string(section, key));
  std::vector<int> out;
  int x;
  while (in >> x) out.push_back(x);
  if (!in.eof())
    fail(Err::BadConfig, section + "." + key + ": not an integer list");
  return out;
}

void Config::merge(const Config& other) {
  for (const auto& [section, kv] : other.sections_)
    for (const auto& [key, value] : kv) sections_[section][key] = value;
}

std::string Config::canonical_text() const {
  std::ostringstream out;
  for (const auto& [section, kv] : sections_) {
    out << '[' << section << "]\n";
    for (const auto& [key, value] : kv) out << key << " = " << value << '\n';
    out << '\n';
  }
  return out.str();
}

void Config::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) fail(Err::UnwritablePath, "cannot write config: " + path);
  out << canonical_text();
}

std::string Config::hash() const { return fnv1a64_hex(canonical_text()); }

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string fnv1a64_hex(const std::string& text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(text.data(), text.size())));
  return buf;
}

Config default_config() {
  Config c;
  c.set("run", "seed", "1");
  c.set("run", "jobs", "0");  // 0 = hardware concurrency

  c.set("camera", "fx", "365.0");
  c.set("camera", "fy", "365.0");
  c.set("camera", "cx", "255.5");
  c.set("camera", "cy", "211.5");
  c.set("camera", "width", "512");
  c.set("camera", "height", "424");
  c.set("camera", "height_m", "4.0");

  c.set("segmentation", "fg_lo_m", "2.0");
  c.set("segmentation", "fg_hi_m", "3.4");
  c.set("segmentation", "bg_lo_m", "1.0");
  c.set("segmentation", "bg_hi_m", "3.8");
  c.set("segmentation", "bg_tolerance_mm", "100");
  c.set("segmentation", "median_window", "4");
  c.set("segmentation", "blob_area_lo", "8000");
  c.set("segmentation", "blob_area_hi", "22000");
  c.set("segmentation", "connectivity", "8");

  c.set("cloud", "points", "2048");

  c.set("network", "point_mlp", "64 64 128 1024");
  c.set("network", "head", "512 256");
  c.set("network", "embedding_dim", "128");
  c.set("network", "normalize_embeddings", "true");
  c.set("network", "init_gain", "1.0");

  c.set("loss", "mode", "softmax+rtl");
  c.set("loss", "lambda", "0.01");
  c.set("loss", "margin", "0.5");
  c.set("loss", "softmax_members", "all");

  c.set("train", "optimizer", "adam");
  c.set("train", "learning_rate", "1e-3");
  c.set("train", "batch_size", "24");
  c.set("train", "epochs", "30");
  c.set("train", "weight_decay", "1e-4");
  c.set("train", "momentum", "0.9");
  c.set("train", "eval_every", "2");
  c.set("train", "points", "1024");
  c.set("train", "resample", "true");
  c.set("train", "augment_sigma_m", "0.02");
  c.set("train", "augment_max_rotation_deg", "180");
  c.set("train", "validation_fraction", "0.1");

  c.set("split", "ratio", "0.7");
  c.set("split", "n", "0");

  c.set("gallery", "k", "5");

  c.set("synth", "identities", "10");
  c.set("synth", "sequences", "1");
  c.set("synth", "frames", "40");
  c.set("synth", "walk_m", "0.028");
  c.set("synth", "noise_sigma_mm", "8.0");
  c.set("synth", "dropout_rate", "0.05");
  c.set("synth", "separation", "0.5");
  c.set("synth", "first_spine_amplitude", "0");  // 0 = draw like the rest

  c.set("saliency", "drop_count", "10");
  c.set("saliency", "epsilon_r", "1e-9");

  return c;
}

}  // namespace herdid
