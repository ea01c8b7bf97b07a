#pragma once

#include <utility>
#include <vector>

#include "herdid/frame.hpp"

namespace herdid {

struct SegmentationParams {
  double fg_lo_m = 2.0, fg_hi_m = 3.4;  // target-frame keep range
  double bg_lo_m = 1.0, bg_hi_m = 3.8;  // background-model keep range
  int bg_tolerance_mm = 100;
  int median_window = 4;
  std::int64_t blob_area_lo = 8000, blob_area_hi = 22000;
  int connectivity = 8;  // 4 or 8
};

/// Keeps pixels whose depth lies in [lo, hi] meters (inclusive), zeroes the
/// rest. Dimensions unchanged; idempotent.
DepthFrame threshold_depth(const DepthFrame& frame, double lo_m, double hi_m);

/// Zeroes a pixel iff the background knows it (nonzero) and the frame value
/// is within `tolerance_mm` of it. Everything else passes through.
DepthFrame subtract_background(const DepthFrame& frame, const DepthFrame& background,
                               int tolerance_mm);

/// window x window median with edge replication. The output pixel sits at
/// offset (ceil(w/2)-1, ceil(w/2)-1) inside its window; even sample counts
/// take the lower middle value.
DepthFrame median_filter(const DepthFrame& frame, int window);

/// Connected components of nonzero pixels whose area lies in
/// [blob_area_lo, blob_area_hi], as tight boxes sorted by area descending,
/// ties by (v_min, u_min).
std::vector<BoundingBox> extract_blobs(const DepthFrame& frame,
                                       const SegmentationParams& params);

/// threshold -> subtract_background -> median_filter -> extract_blobs ->
/// crop. Crops keep the processed millimeter values and their source box.
std::vector<std::pair<DepthFrame, BoundingBox>> segment_frame(
    const DepthFrame& frame, const DepthFrame& background,
    const SegmentationParams& params);

DepthFrame crop_frame(const DepthFrame& frame, const BoundingBox& box);

}  // namespace herdid
