#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

namespace herdid {

/// Row-major grid of depth measurements in millimeters. 0 = no measurement.
using DepthGrid =
    Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DepthFrame {
  DepthGrid data;  // data(v, u), v = row, u = column
  std::string sequence_id;
  std::int64_t frame_index = 0;

  int width() const { return static_cast<int>(data.cols()); }
  int height() const { return static_cast<int>(data.rows()); }

  std::uint16_t at(int v, int u) const { return data(v, u); }

  bool same_grid(const DepthFrame& other) const {
    return data.rows() == other.data.rows() && data.cols() == other.data.cols() &&
           data == other.data;
  }
};

inline DepthFrame make_frame(int width, int height, const std::string& sequence_id = "",
                             std::int64_t frame_index = 0) {
  DepthFrame f;
  f.data = DepthGrid::Zero(height, width);
  f.sequence_id = sequence_id;
  f.frame_index = frame_index;
  return f;
}

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  bool valid() const { return fx > 0 && fy > 0; }
};

/// Tight pixel box around one blob. u/v maxima are exclusive.
struct BoundingBox {
  int u_min = 0, v_min = 0, u_max = 0, v_max = 0;
  std::int64_t area = 0;  // pixel count of the blob it encloses

  int width() const { return u_max - u_min; }
  int height() const { return v_max - v_min; }
};

inline constexpr double kMillimetersPerMeter = 1000.0;

}  // namespace herdid
