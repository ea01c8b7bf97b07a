#include "herdid/ply_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "herdid/error.hpp"

namespace herdid {

namespace {

void write_header(std::ostream& out, const PointCloud& cloud, bool colored) {
  out << "ply\nformat ascii 1.0\n";
  out << "comment sequence_id " << (cloud.sequence_id.empty() ? "-" : cloud.sequence_id) << '\n';
  out << "comment frame_index " << cloud.frame_index << '\n';
  out << "comment identity " << cloud.label << '\n';
  out << "element vertex " << cloud.size() << '\n';
  out << "property double x\nproperty double y\nproperty double z\n";
  if (colored)
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
}

void write_vertex(std::ostream& out, const Eigen::Vector3d& p) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", p.x(), p.y(), p.z());
  out << buf;
}

// blue -> red ramp, used for saliency rank visualisation
void ramp_color(double t, int rgb[3]) {
  t = std::min(1.0, std::max(0.0, t));
  rgb[0] = static_cast<int>(std::lround(255.0 * t));
  rgb[1] = static_cast<int>(std::lround(64.0 * (1.0 - std::abs(2.0 * t - 1.0))));
  rgb[2] = static_cast<int>(std::lround(255.0 * (1.0 - t)));
}

}  // namespace

void write_ply(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(Err::UnwritablePath, "cannot write ply: " + path);
  write_header(out, cloud, false);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    write_vertex(out, cloud.points.col(i));
    out << '\n';
  }
  if (!out) fail(Err::UnwritablePath, "short write: " + path);
}

void write_ply_colored(const PointCloud& cloud, const Eigen::VectorXd& intensity,
                       const std::string& path) {
  if (intensity.size() != cloud.size())
    fail(Err::DimensionMismatch, "intensity length != point count");
  std::ofstream out(path);
  if (!out) fail(Err::UnwritablePath, "cannot write ply: " + path);
  write_header(out, cloud, true);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    write_vertex(out, cloud.points.col(i));
    int rgb[3];
    ramp_color(intensity[i], rgb);
    out << ' ' << rgb[0] << ' ' << rgb[1] << ' ' << rgb[2] << '\n';
  }
  if (!out) fail(Err::UnwritablePath, "short write: " + path);
}

PointCloud read_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Err::MissingFile, "ply not found: " + path);

  std::string line;
  if (!std::getline(in, line) || line != "ply")
    fail(Err::ParseError, path + ": not a ply file");

  PointCloud cloud;
  Eigen::Index count = -1;
  bool ascii = false;
  std::vector<std::string> vertex_props;
  std::string current_element;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string kind;
      ls >> kind;
      ascii = kind == "ascii";
    } else if (tok == "comment") {
      std::string key;
      ls >> key;
      if (key == "sequence_id") {
        std::string v;
        ls >> v;
        cloud.sequence_id = v == "-" ? "" : v;
      } else if (key == "frame_index") {
        ls >> cloud.frame_index;
      } else if (key == "identity") {
        ls >> cloud.label;
      }
    } else if (tok == "element") {
      ls >> current_element;
      if (current_element == "vertex") ls >> count;
    } else if (tok == "property") {
      if (current_element == "vertex") {
        std::string type, name;
        ls >> type >> name;
        vertex_props.push_back(name);
      }
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!ascii) fail(Err::ParseError, path + ": only ascii ply is supported");
  if (count < 0) fail(Err::ParseError, path + ": missing vertex element");
  if (vertex_props.size() < 3 || vertex_props[0] != "x" || vertex_props[1] != "y" ||
      vertex_props[2] != "z")
    fail(Err::ParseError, path + ": vertex must start with x y z properties");

  cloud.points.resize(3, count);
  for (Eigen::Index i = 0; i < count; ++i) {
    if (!std::getline(in, line))
      fail(Err::ParseError, path + ": truncated vertex list");
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z))
      fail(Err::ParseError, path + ": bad vertex line " + std::to_string(i));
    cloud.points.col(i) << x, y, z;
  }
  if (count == 0) fail(Err::EmptyCloud, path + ": empty vertex list");
  return cloud;
}

}  // namespace herdid
