#include "herdid/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "herdid/error.hpp"

namespace herdid {

DepthFrame threshold_depth(const DepthFrame& frame, double lo_m, double hi_m) {
  if (!(lo_m < hi_m)) fail(Err::RangeError, "threshold range must satisfy lo < hi");
  const double lo_mm = lo_m * kMillimetersPerMeter;
  const double hi_mm = hi_m * kMillimetersPerMeter;

  DepthFrame out = frame;
  auto* p = out.data.data();
  const auto n = out.data.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = p[i];
    if (d < lo_mm || d > hi_mm) p[i] = 0;
  }
  return out;
}

DepthFrame subtract_background(const DepthFrame& frame, const DepthFrame& background,
                               int tolerance_mm) {
  if (frame.width() != background.width() || frame.height() != background.height())
    fail(Err::DimensionMismatch, "frame and background dimensions differ");

  DepthFrame out = frame;
  auto* p = out.data.data();
  const auto* bg = background.data.data();
  const auto n = out.data.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (bg[i] != 0 &&
        std::abs(static_cast<int>(p[i]) - static_cast<int>(bg[i])) <= tolerance_mm)
      p[i] = 0;
  }
  return out;
}

DepthFrame median_filter(const DepthFrame& frame, int window) {
  if (window < 1) fail(Err::RangeError, "median window must be >= 1");
  if (window == 1) return frame;

  const int h = frame.height(), w = frame.width();
  const int anchor = (window + 1) / 2 - 1;  // output pixel offset in window
  const int count = window * window;
  const int mid = (count - 1) / 2;  // lower middle for even counts

  DepthFrame out = frame;
  std::vector<std::uint16_t> values(static_cast<std::size_t>(count));
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      int k = 0;
      for (int dy = -anchor; dy < window - anchor; ++dy) {
        const int y = std::clamp(v + dy, 0, h - 1);
        for (int dx = -anchor; dx < window - anchor; ++dx) {
          const int x = std::clamp(u + dx, 0, w - 1);
          values[static_cast<std::size_t>(k++)] = frame.data(y, x);
        }
      }
      std::nth_element(values.begin(), values.begin() + mid, values.end());
      out.data(v, u) = values[static_cast<std::size_t>(mid)];
    }
  }
  return out;
}

std::vector<BoundingBox> extract_blobs(const DepthFrame& frame,
                                       const SegmentationParams& params) {
  if (params.connectivity != 4 && params.connectivity != 8)
    fail(Err::RangeError, "connectivity must be 4 or 8");

  const int h = frame.height(), w = frame.width();
  std::vector<std::int32_t> label(static_cast<std::size_t>(h) * w, -1);
  std::vector<BoundingBox> boxes;
  std::vector<int> stack;

  const bool diag = params.connectivity == 8;
  auto idx = [w](int v, int u) { return v * w + u; };

  for (int v0 = 0; v0 < h; ++v0) {
    for (int u0 = 0; u0 < w; ++u0) {
      if (frame.data(v0, u0) == 0 || label[idx(v0, u0)] >= 0) continue;

      const auto component = static_cast<std::int32_t>(boxes.size());
      BoundingBox box{u0, v0, u0 + 1, v0 + 1, 0};
      stack.clear();
      stack.push_back(idx(v0, u0));
      label[idx(v0, u0)] = component;
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int cv = cur / w, cu = cur % w;
        ++box.area;
        box.u_min = std::min(box.u_min, cu);
        box.v_min = std::min(box.v_min, cv);
        box.u_max = std::max(box.u_max, cu + 1);
        box.v_max = std::max(box.v_max, cv + 1);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (!diag && dx != 0 && dy != 0) continue;
            const int nv = cv + dy, nu = cu + dx;
            if (nv < 0 || nv >= h || nu < 0 || nu >= w) continue;
            if (frame.data(nv, nu) == 0 || label[idx(nv, nu)] >= 0) continue;
            label[idx(nv, nu)] = component;
            stack.push_back(idx(nv, nu));
          }
        }
      }
      boxes.push_back(box);
    }
  }

  std::erase_if(boxes, [&](const BoundingBox& b) {
    return b.area < params.blob_area_lo || b.area > params.blob_area_hi;
  });
  std::sort(boxes.begin(), boxes.end(), [](const BoundingBox& a, const BoundingBox& b) {
    if (a.area != b.area) return a.area > b.area;
    if (a.v_min != b.v_min) return a.v_min < b.v_min;
    return a.u_min < b.u_min;
  });
  return boxes;
}

DepthFrame crop_frame(const DepthFrame& frame, const BoundingBox& box) {
  if (box.u_min < 0 || box.v_min < 0 || box.u_max > frame.width() ||
      box.v_max > frame.height() || box.u_min >= box.u_max || box.v_min >= box.v_max)
    fail(Err::RangeError, "crop box outside frame");
  DepthFrame out;
  out.data = frame.data.block(box.v_min, box.u_min, box.height(), box.width());
  out.sequence_id = frame.sequence_id;
  out.frame_index = frame.frame_index;
  return out;
}

std::vector<std::pair<DepthFrame, BoundingBox>> segment_frame(
    const DepthFrame& frame, const DepthFrame& background,
    const SegmentationParams& params) {
  const DepthFrame bg = threshold_depth(background, params.bg_lo_m, params.bg_hi_m);
  DepthFrame fg = threshold_depth(frame, params.fg_lo_m, params.fg_hi_m);
  fg = subtract_background(fg, bg, params.bg_tolerance_mm);
  fg = median_filter(fg, params.median_window);

  std::vector<std::pair<DepthFrame, BoundingBox>> crops;
  for (const BoundingBox& box : extract_blobs(fg, params))
    crops.emplace_back(crop_frame(fg, box), box);
  return crops;
}

}  // namespace herdid
