#include "herdid/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "herdid/error.hpp"

namespace herdid {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports fatal errors through this callback; it must not return.
// The message is stashed and control longjmps back across the C frames
// only, so no C++ destructors are skipped.
struct PngJump {
  std::jmp_buf env;
  char message[256];
};

extern "C" void herdid_png_error(png_structp png, png_const_charp msg) {
  auto* jump = static_cast<PngJump*>(png_get_error_ptr(png));
  std::strncpy(jump->message, msg, sizeof jump->message - 1);
  jump->message[sizeof jump->message - 1] = '\0';
  std::longjmp(jump->env, 1);
}

extern "C" void herdid_png_warn(png_structp, png_const_charp) {}

struct ReadGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~ReadGuard() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct WriteGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~WriteGuard() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

}  // namespace

std::string sidecar_path(const std::string& png_path) {
  auto dot = png_path.rfind('.');
  if (dot == std::string::npos) return png_path + ".meta";
  return png_path.substr(0, dot) + ".meta";
}

DepthGrid read_depth_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(Err::MissingFile, "depth png not found: " + path);

  PngJump jump;
  ReadGuard g;
  g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &jump, herdid_png_error,
                                 herdid_png_warn);
  if (!g.png) fail(Err::ParseError, "png: failed to allocate reader");
  g.info = png_create_info_struct(g.png);
  if (!g.info) fail(Err::ParseError, "png: failed to allocate info");

  DepthGrid grid;
  std::vector<png_bytep> rows;
  if (setjmp(jump.env))
    fail(Err::ParseError, path + ": " + jump.message);

  png_init_io(g.png, fp.get());
  png_read_info(g.png, g.info);

  const png_uint_32 width = png_get_image_width(g.png, g.info);
  const png_uint_32 height = png_get_image_height(g.png, g.info);
  const int bit_depth = png_get_bit_depth(g.png, g.info);
  const int color_type = png_get_color_type(g.png, g.info);
  if (bit_depth != 16 || color_type != PNG_COLOR_TYPE_GRAY)
    fail(Err::WrongBitDepth,
         path + ": expected 16-bit grayscale, got bit depth " +
             std::to_string(bit_depth) + ", color type " + std::to_string(color_type));

  png_set_swap(g.png);  // PNG stores big-endian samples

  grid.resize(height, width);
  rows.resize(height);
  for (png_uint_32 v = 0; v < height; ++v)
    rows[v] = reinterpret_cast<png_bytep>(grid.row(v).data());
  png_read_image(g.png, rows.data());
  png_read_end(g.png, nullptr);
  return grid;
}

void write_depth_png(const DepthGrid& grid, const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(Err::UnwritablePath, "cannot open for writing: " + path);

  PngJump jump;
  WriteGuard g;
  g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &jump, herdid_png_error,
                                  herdid_png_warn);
  if (!g.png) fail(Err::ParseError, "png: failed to allocate writer");
  g.info = png_create_info_struct(g.png);
  if (!g.info) fail(Err::ParseError, "png: failed to allocate info");

  std::vector<png_bytep> rows;
  if (setjmp(jump.env))
    fail(Err::UnwritablePath, path + ": " + jump.message);

  png_init_io(g.png, fp.get());
  png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(grid.cols()),
               static_cast<png_uint_32>(grid.rows()), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(g.png, g.info);
  png_set_swap(g.png);

  rows.resize(grid.rows());
  for (Eigen::Index v = 0; v < grid.rows(); ++v)
    rows[v] = reinterpret_cast<png_bytep>(
        const_cast<std::uint16_t*>(grid.row(v).data()));
  png_write_image(g.png, rows.data());
  png_write_end(g.png, nullptr);
}

CropMeta read_sidecar(const std::string& png_path) {
  const std::string meta_path = sidecar_path(png_path);
  std::ifstream in(meta_path);
  if (!in) fail(Err::MissingMetadata, "metadata sidecar not found: " + meta_path);

  CropMeta meta;
  bool have_seq = false, have_frame = false;
  int box_fields = 0;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "sequence_id") {
      have_seq = static_cast<bool>(ls >> meta.sequence_id);
    } else if (key == "frame_index") {
      have_frame = static_cast<bool>(ls >> meta.frame_index);
    } else if (key == "u_min") {
      if (ls >> meta.box.u_min) ++box_fields;
    } else if (key == "v_min") {
      if (ls >> meta.box.v_min) ++box_fields;
    } else if (key == "u_max") {
      if (ls >> meta.box.u_max) ++box_fields;
    } else if (key == "v_max") {
      if (ls >> meta.box.v_max) ++box_fields;
    } else if (key == "area") {
      if (ls >> meta.box.area) ++box_fields;
    }
  }
  if (!have_seq || !have_frame)
    fail(Err::MissingMetadata,
         meta_path + ": sequence_id and frame_index are required");
  meta.has_box = box_fields == 5;
  return meta;
}

void write_sidecar(const std::string& png_path, const CropMeta& meta) {
  const std::string meta_path = sidecar_path(png_path);
  std::ofstream out(meta_path);
  if (!out) fail(Err::UnwritablePath, "cannot write sidecar: " + meta_path);
  out << "sequence_id " << meta.sequence_id << '\n';
  out << "frame_index " << meta.frame_index << '\n';
  if (meta.has_box) {
    out << "u_min " << meta.box.u_min << '\n';
    out << "v_min " << meta.box.v_min << '\n';
    out << "u_max " << meta.box.u_max << '\n';
    out << "v_max " << meta.box.v_max << '\n';
    out << "area " << meta.box.area << '\n';
  }
}

DepthFrame read_depth_frame(const std::string& path) {
  DepthFrame frame;
  frame.data = read_depth_png(path);
  CropMeta meta = read_sidecar(path);
  frame.sequence_id = meta.sequence_id;
  frame.frame_index = meta.frame_index;
  return frame;
}

void write_depth_frame(const DepthFrame& frame, const std::string& path) {
  write_depth_png(frame.data, path);
  CropMeta meta;
  meta.sequence_id = frame.sequence_id;
  meta.frame_index = frame.frame_index;
  write_sidecar(path, meta);
}

}  // namespace herdid
