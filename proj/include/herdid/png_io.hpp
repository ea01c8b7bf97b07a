#pragma once

#include <string>

#include "herdid/frame.hpp"

namespace herdid {

/// Reads a 16-bit single-channel PNG plus its metadata sidecar
/// ("frame.png" -> "frame.meta": sequence_id, frame_index and, for crops,
/// the source box). Distinct Err codes: MissingFile, WrongBitDepth,
/// MissingMetadata.
DepthFrame read_depth_frame(const std::string& path);

/// Writes the PNG and its sidecar; read_depth_frame(write_depth_frame(f)) == f.
void write_depth_frame(const DepthFrame& frame, const std::string& path);

/// Pixel-only variants used where the sidecar is managed separately.
DepthGrid read_depth_png(const std::string& path);
void write_depth_png(const DepthGrid& grid, const std::string& path);

std::string sidecar_path(const std::string& png_path);

/// Optional crop sidecar fields; box is absent for full frames.
struct CropMeta {
  std::string sequence_id;
  std::int64_t frame_index = 0;
  bool has_box = false;
  BoundingBox box;
};

CropMeta read_sidecar(const std::string& png_path);
void write_sidecar(const std::string& png_path, const CropMeta& meta);

}  // namespace herdid
