#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "herdid/dataset.hpp"
#include "herdid/frame.hpp"
#include "herdid/rng.hpp"
#include "herdid/segmentation.hpp"

namespace herdid {

/// Dorsal body shape of one synthetic individual. The surface is a smooth
/// dome: a boundary envelope times a detail field made of a longitudinal
/// height polynomial, a spine ridge along the midline and paired hook/pin
/// bumps. All amplitudes in meters.
struct IdentityShape {
  double body_length = 1.75;
  double body_width = 0.66;
  std::array<double, 4> height_profile{1.30, 0.0, 0.0, 0.0};  // poly in s-0.5
  double spine_amplitude = 0.04;
  double spine_width = 0.07;
  struct Bump {
    double position = 0.67;  // along body, in [0, 1]
    double amplitude = 0.04;
    double radius = 0.09;
  };
  Bump hook{0.67, 0.04, 0.09};
  Bump pin{0.89, 0.03, 0.07};
  std::uint64_t seed = 0;
};

/// Draw ranges for make_identity. Chosen so rendered blob areas stay
/// inside the segmentation area gate at the default camera.
struct IdentityRanges {
  double length_lo = 1.60, length_hi = 1.90;
  double width_lo = 0.60, width_hi = 0.72;
  double base_lo = 1.15, base_hi = 1.40;
  double poly_abs = 0.15;  // c1..c3 in [-poly_abs, poly_abs]
  double spine_amp_lo = 0.03, spine_amp_hi = 0.09;
  double spine_width_lo = 0.05, spine_width_hi = 0.10;
  double hook_pos_lo = 0.60, hook_pos_hi = 0.72;
  double hook_amp_lo = 0.03, hook_amp_hi = 0.08;
  double hook_radius_lo = 0.07, hook_radius_hi = 0.14;
  double pin_pos_lo = 0.84, pin_pos_hi = 0.94;
  double pin_amp_lo = 0.025, pin_amp_hi = 0.07;
  double pin_radius_lo = 0.06, pin_radius_hi = 0.12;
};

/// Shape parameters scaled to their draw ranges; the separation metric is
/// the Euclidean distance between these vectors.
Eigen::VectorXd identity_parameters(const IdentityShape& shape);

/// Issues identities sequentially, rejection-resampling each draw until it
/// clears `separation` against everything issued before.
class IdentityGenerator {
 public:
  explicit IdentityGenerator(std::uint64_t seed) : rng_(seed) {}
  IdentityShape make(double separation);

 private:
  Rng rng_;
  std::vector<Eigen::VectorXd> issued_;
};

std::vector<IdentityShape> make_identities(std::uint64_t seed, int count,
                                           double separation);

struct SynthCamera {
  CameraIntrinsics intrinsics{365.0, 365.0, 255.5, 211.5};
  int width = 512;
  int height = 424;
  double height_m = 4.0;  // camera above the floor
};

struct SensorNoise {
  double sigma_mm = 8.0;
  double dropout_rate = 0.05;
};

struct Pose {
  double x_offset_m = 0.0;
  double heading_rad = 0.0;
};

/// Analytic surface height above the floor at world (x, y); 0 outside the
/// body footprint. This is the oracle the renderer is tested against.
double surface_height(const IdentityShape& shape, const Pose& pose, double x_m,
                      double y_m);

/// Renders the body over a flat floor (plus a fixed background gate bar)
/// into a depth frame: Gaussian depth noise, Bernoulli dropout to zero,
/// millimeter quantization. Deterministic under the rng.
DepthFrame render_depth(const IdentityShape& shape, const Pose& pose,
                        const SynthCamera& camera, const SensorNoise& noise, Rng& rng);

/// Floor and gate only; the background model for segmentation.
DepthFrame render_background(const SynthCamera& camera);

/// Walks the animal across the frame: x advances by walk_m per frame with
/// small seeded heading jitter; frame_index counts from 0.
std::vector<DepthFrame> make_sequence(const IdentityShape& shape, int frames,
                                      double walk_m, const SynthCamera& camera,
                                      const SensorNoise& noise, std::uint64_t seed,
                                      const std::string& sequence_id);

struct SynthParams {
  int identity_count = 10;
  int sequences_per_identity = 1;
  int frames_per_sequence = 40;
  std::uint64_t seed = 1;
  double separation = 0.25;
  double walk_m = 0.028;
  SensorNoise noise;
  SynthCamera camera;
  SegmentationParams segmentation;
  int cloud_points = 2048;
  double first_spine_amplitude = 0.0;  // > 0 overrides identity 0's ridge
  int jobs = 1;
};

/// Renders, segments, reprojects and writes the full labeled tree:
/// raw frames under <root>/<sequence>/, crops under crops/<identity>/,
/// clouds under clouds/<identity>/, background.png and dataset.txt at the
/// root. Byte-identical for identical parameters.
DatasetIndex make_dataset(const SynthParams& params, const std::string& out_root);

}  // namespace herdid
