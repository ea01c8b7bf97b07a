#include "herdid/synthherd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "herdid/cloud.hpp"
#include "herdid/cloudops.hpp"
#include "herdid/error.hpp"
#include "herdid/parallel.hpp"
#include "herdid/ply_io.hpp"
#include "herdid/png_io.hpp"

namespace herdid {

namespace {

constexpr double kPi = 3.141592653589793238462643383280;

// boundary envelope exponents: < 1 gives steep, rounded flanks
constexpr double kEnvelopeAlphaPow = 0.45;
constexpr double kEnvelopeBetaPow = 0.55;

// lateral placement of the paired bumps, as a fraction of the half width
constexpr double kHookLateral = 0.55;
constexpr double kPinLateral = 0.30;

// static background structure (a gate bar), present in frames and model
constexpr double kGateDepthM = 2.9;
constexpr double kGateY0 = 1.00;
constexpr double kGateY1 = 1.20;

constexpr int kMeshAlphaCells = 320;
constexpr int kMeshBetaCells = 200;

double poly_profile(const IdentityShape& shape, double s) {
  const double u = s - 0.5;
  const auto& c = shape.height_profile;
  return c[0] + u * (c[1] + u * (c[2] + u * c[3]));
}

double bump_field(const IdentityShape::Bump& bump, double lateral_frac, double s,
                  double t, double length, double width) {
  const double r2 = bump.radius * bump.radius;
  double sum = 0.0;
  for (double side : {lateral_frac, -lateral_frac}) {
    const double ds = (s - bump.position) * length;
    const double dt = (t - side) * width * 0.5;
    sum += bump.amplitude * std::exp(-(ds * ds + dt * dt) / r2);
  }
  return sum;
}

// detail field in body coordinates s in [0,1], t in [-1,1]
double detail_field(const IdentityShape& shape, double s, double t) {
  const double lateral_m = t * shape.body_width * 0.5;
  const double ridge =
      shape.spine_amplitude *
      std::exp(-(lateral_m * lateral_m) / (shape.spine_width * shape.spine_width));
  return poly_profile(shape, s) + ridge +
         bump_field(shape.hook, kHookLateral, s, t, shape.body_length, shape.body_width) +
         bump_field(shape.pin, kPinLateral, s, t, shape.body_length, shape.body_width);
}

double height_param(const IdentityShape& shape, double alpha, double beta) {
  const double envelope = std::pow(std::cos(alpha), kEnvelopeAlphaPow) *
                          std::pow(std::cos(beta), kEnvelopeBetaPow);
  const double s = (std::sin(alpha) + 1.0) * 0.5;
  const double t = std::sin(beta);
  return envelope * detail_field(shape, s, t);
}

double max_detail(const IdentityShape& shape) {
  const auto& c = shape.height_profile;
  return c[0] + std::abs(c[1]) * 0.5 + std::abs(c[2]) * 0.25 + std::abs(c[3]) * 0.125 +
         shape.spine_amplitude + 2.0 * shape.hook.amplitude + 2.0 * shape.pin.amplitude;
}

}  // namespace

double surface_height(const IdentityShape& shape, const Pose& pose, double x_m,
                      double y_m) {
  // world -> body frame
  const double c = std::cos(pose.heading_rad), s = std::sin(pose.heading_rad);
  const double dx = x_m - pose.x_offset_m;
  const double bx = c * dx + s * y_m;
  const double by = -s * dx + c * y_m;

  const double sa = 2.0 * bx / shape.body_length;
  const double sb = 2.0 * by / shape.body_width;
  if (std::abs(sa) >= 1.0 || std::abs(sb) >= 1.0) return 0.0;
  return height_param(shape, std::asin(sa), std::asin(sb));
}

Eigen::VectorXd identity_parameters(const IdentityShape& shape) {
  const IdentityRanges r;
  auto unit = [](double v, double lo, double hi) { return (v - lo) / (hi - lo); };
  Eigen::VectorXd p(13);
  p << unit(shape.body_length, r.length_lo, r.length_hi),
      unit(shape.body_width, r.width_lo, r.width_hi),
      unit(shape.height_profile[0], r.base_lo, r.base_hi),
      unit(shape.height_profile[1], -r.poly_abs, r.poly_abs),
      unit(shape.height_profile[2], -r.poly_abs, r.poly_abs),
      unit(shape.height_profile[3], -r.poly_abs, r.poly_abs),
      unit(shape.spine_amplitude, r.spine_amp_lo, r.spine_amp_hi),
      unit(shape.spine_width, r.spine_width_lo, r.spine_width_hi),
      unit(shape.hook.position, r.hook_pos_lo, r.hook_pos_hi),
      unit(shape.hook.amplitude, r.hook_amp_lo, r.hook_amp_hi),
      unit(shape.hook.radius, r.hook_radius_lo, r.hook_radius_hi),
      unit(shape.pin.position, r.pin_pos_lo, r.pin_pos_hi),
      unit(shape.pin.amplitude, r.pin_amp_lo, r.pin_amp_hi);
  return p;
}

IdentityShape IdentityGenerator::make(double separation) {
  if (separation < 0.0) fail(Err::RangeError, "separation must be >= 0");
  const IdentityRanges r;
  constexpr int kBudget = 1000;
  for (int attempt = 0; attempt < kBudget; ++attempt) {
    IdentityShape shape;
    shape.body_length = rng_.uniform(r.length_lo, r.length_hi);
    shape.body_width = rng_.uniform(r.width_lo, r.width_hi);
    shape.height_profile[0] = rng_.uniform(r.base_lo, r.base_hi);
    shape.height_profile[1] = rng_.uniform(-r.poly_abs, r.poly_abs);
    shape.height_profile[2] = rng_.uniform(-r.poly_abs, r.poly_abs);
    shape.height_profile[3] = rng_.uniform(-r.poly_abs, r.poly_abs);
    shape.spine_amplitude = rng_.uniform(r.spine_amp_lo, r.spine_amp_hi);
    shape.spine_width = rng_.uniform(r.spine_width_lo, r.spine_width_hi);
    shape.hook = {rng_.uniform(r.hook_pos_lo, r.hook_pos_hi),
                  rng_.uniform(r.hook_amp_lo, r.hook_amp_hi),
                  rng_.uniform(r.hook_radius_lo, r.hook_radius_hi)};
    shape.pin = {rng_.uniform(r.pin_pos_lo, r.pin_pos_hi),
                 rng_.uniform(r.pin_amp_lo, r.pin_amp_hi),
                 rng_.uniform(r.pin_radius_lo, r.pin_radius_hi)};
    shape.seed = rng_.next_u64();

    const Eigen::VectorXd params = identity_parameters(shape);
    bool clear = true;
    for (const auto& other : issued_)
      if ((params - other).norm() < separation) {
        clear = false;
        break;
      }
    if (clear) {
      issued_.push_back(params);
      return shape;
    }
  }
  fail(Err::RejectionBudget, "identity rejection budget exhausted");
}

std::vector<IdentityShape> make_identities(std::uint64_t seed, int count,
                                           double separation) {
  IdentityGenerator gen(seed);
  std::vector<IdentityShape> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(gen.make(separation));
  return out;
}

namespace {

struct ZBuffer {
  int width, height;
  Eigen::ArrayXXd z;  // meters, column-major (v, u)

  ZBuffer(int w, int h, double init) : width(w), height(h) {
    z = Eigen::ArrayXXd::Constant(h, w, init);
  }
};

// perspective-exact triangle rasterization: 1/z is affine in screen space
// over a planar triangle
void raster_triangle(ZBuffer& buf, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                     const Eigen::Vector3d& c) {
  // a, b, c: (u, v, z)
  const double area = (b.x() - a.x()) * (c.y() - a.y()) -
                      (c.x() - a.x()) * (b.y() - a.y());
  if (std::abs(area) < 1e-12) return;

  const int u_lo = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x()}))));
  const int u_hi = std::min(buf.width - 1,
                            static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x()}))));
  const int v_lo = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y()}))));
  const int v_hi = std::min(buf.height - 1,
                            static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y()}))));
  if (u_lo > u_hi || v_lo > v_hi) return;

  const double inv_area = 1.0 / area;
  const double iza = 1.0 / a.z(), izb = 1.0 / b.z(), izc = 1.0 / c.z();
  for (int v = v_lo; v <= v_hi; ++v) {
    for (int u = u_lo; u <= u_hi; ++u) {
      const double w0 = ((b.x() - u) * (c.y() - v) - (c.x() - u) * (b.y() - v)) * inv_area;
      const double w1 = ((c.x() - u) * (a.y() - v) - (a.x() - u) * (c.y() - v)) * inv_area;
      const double w2 = 1.0 - w0 - w1;
      if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
      const double z = 1.0 / (w0 * iza + w1 * izb + w2 * izc);
      if (z < buf.z(v, u)) buf.z(v, u) = z;
    }
  }
}

void raster_gate(ZBuffer& buf, const SynthCamera& cam) {
  const int v_lo = std::max(
      0, static_cast<int>(std::ceil(cam.intrinsics.cy + cam.intrinsics.fy * kGateY0 / kGateDepthM)));
  const int v_hi = std::min(
      buf.height - 1,
      static_cast<int>(std::floor(cam.intrinsics.cy + cam.intrinsics.fy * kGateY1 / kGateDepthM)));
  for (int v = v_lo; v <= v_hi; ++v)
    for (int u = 0; u < buf.width; ++u)
      if (kGateDepthM < buf.z(v, u)) buf.z(v, u) = kGateDepthM;
}

DepthFrame quantize(const ZBuffer& buf, const SensorNoise& noise, Rng& rng) {
  DepthFrame frame = make_frame(buf.width, buf.height);
  for (int v = 0; v < buf.height; ++v) {
    for (int u = 0; u < buf.width; ++u) {
      double mm = buf.z(v, u) * kMillimetersPerMeter;
      if (noise.sigma_mm > 0.0) mm += rng.gaussian(0.0, noise.sigma_mm);
      if (noise.dropout_rate > 0.0 && rng.uniform() < noise.dropout_rate) {
        frame.data(v, u) = 0;
        continue;
      }
      const double q = std::nearbyint(mm);
      frame.data(v, u) = static_cast<std::uint16_t>(std::clamp(q, 1.0, 65535.0));
    }
  }
  return frame;
}

}  // namespace

DepthFrame render_background(const SynthCamera& cam) {
  ZBuffer buf(cam.width, cam.height, cam.height_m);
  raster_gate(buf, cam);
  DepthFrame frame = make_frame(cam.width, cam.height, "background", 0);
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u)
      frame.data(v, u) = static_cast<std::uint16_t>(
          std::clamp(std::nearbyint(buf.z(v, u) * kMillimetersPerMeter), 1.0, 65535.0));
  return frame;
}

DepthFrame render_depth(const IdentityShape& shape, const Pose& pose,
                        const SynthCamera& cam, const SensorNoise& noise, Rng& rng) {
  if (noise.dropout_rate < 0.0 || noise.dropout_rate >= 1.0)
    fail(Err::RangeError, "dropout_rate must lie in [0, 1)");

  // frustum check at the highest (closest) body plane
  {
    const double z_top = cam.height_m - max_detail(shape);
    if (z_top <= 0.5) fail(Err::OutsideFrustum, "body reaches the camera plane");
    const double hl = shape.body_length * 0.5, hw = shape.body_width * 0.5;
    const double ch = std::cos(pose.heading_rad), sh = std::sin(pose.heading_rad);
    for (double sx : {-1.0, 1.0}) {
      for (double sy : {-1.0, 1.0}) {
        const double x = pose.x_offset_m + ch * sx * hl - sh * sy * hw;
        const double y = sh * sx * hl + ch * sy * hw;
        const double u = cam.intrinsics.cx + cam.intrinsics.fx * x / z_top;
        const double v = cam.intrinsics.cy + cam.intrinsics.fy * y / z_top;
        if (u < 1.0 || u > cam.width - 2.0 || v < 1.0 || v > cam.height - 2.0)
          fail(Err::OutsideFrustum, "animal outside the camera frustum");
      }
    }
  }

  ZBuffer buf(cam.width, cam.height, cam.height_m);

  // tessellate the body in (alpha, beta); sin parameterization grades the
  // mesh toward the steep flanks
  const int na = kMeshAlphaCells, nb = kMeshBetaCells;
  Eigen::MatrixXd proj_u(na + 1, nb + 1), proj_v(na + 1, nb + 1), proj_z(na + 1, nb + 1);
  const double ch = std::cos(pose.heading_rad), sh = std::sin(pose.heading_rad);
  for (int i = 0; i <= na; ++i) {
    const double alpha = -kPi / 2 + kPi * i / na;
    for (int j = 0; j <= nb; ++j) {
      const double beta = -kPi / 2 + kPi * j / nb;
      const double h = height_param(shape, alpha, beta);
      const double bx = std::sin(alpha) * shape.body_length * 0.5;
      const double by = std::sin(beta) * shape.body_width * 0.5;
      const double x = pose.x_offset_m + ch * bx - sh * by;
      const double y = sh * bx + ch * by;
      const double z = cam.height_m - h;
      proj_u(i, j) = cam.intrinsics.cx + cam.intrinsics.fx * x / z;
      proj_v(i, j) = cam.intrinsics.cy + cam.intrinsics.fy * y / z;
      proj_z(i, j) = z;
    }
  }
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < nb; ++j) {
      const Eigen::Vector3d p00(proj_u(i, j), proj_v(i, j), proj_z(i, j));
      const Eigen::Vector3d p10(proj_u(i + 1, j), proj_v(i + 1, j), proj_z(i + 1, j));
      const Eigen::Vector3d p01(proj_u(i, j + 1), proj_v(i, j + 1), proj_z(i, j + 1));
      const Eigen::Vector3d p11(proj_u(i + 1, j + 1), proj_v(i + 1, j + 1), proj_z(i + 1, j + 1));
      raster_triangle(buf, p00, p10, p11);
      raster_triangle(buf, p00, p11, p01);
    }
  }

  raster_gate(buf, cam);
  return quantize(buf, noise, rng);
}

std::vector<DepthFrame> make_sequence(const IdentityShape& shape, int frames,
                                      double walk_m, const SynthCamera& cam,
                                      const SensorNoise& noise, std::uint64_t seed,
                                      const std::string& sequence_id) {
  if (frames < 1) fail(Err::RangeError, "make_sequence needs frames >= 1");

  const Rng base(seed);
  std::vector<DepthFrame> out(static_cast<std::size_t>(frames));
  const double x_start = -walk_m * (frames - 1) * 0.5;
  for (int f = 0; f < frames; ++f) {
    Rng frame_rng = base.fork(static_cast<std::uint64_t>(f));
    Pose pose;
    pose.x_offset_m = x_start + walk_m * f;
    pose.heading_rad = std::clamp(frame_rng.gaussian(0.0, 0.04), -0.1, 0.1);
    DepthFrame frame = render_depth(shape, pose, cam, noise, frame_rng);
    frame.sequence_id = sequence_id;
    frame.frame_index = f;
    out[static_cast<std::size_t>(f)] = std::move(frame);
  }
  return out;
}

namespace {

std::string zero_pad(std::int64_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*lld", width, static_cast<long long>(value));
  return buf;
}

}  // namespace

DatasetIndex make_dataset(const SynthParams& params, const std::string& out_root) {
  namespace fs = std::filesystem;
  if (params.identity_count < 1 || params.sequences_per_identity < 1 ||
      params.frames_per_sequence < 1)
    fail(Err::RangeError, "make_dataset counts must be >= 1");

  fs::create_directories(out_root);
  std::vector<IdentityShape> identities =
      make_identities(params.seed, params.identity_count, params.separation);
  if (params.first_spine_amplitude > 0.0)
    identities.front().spine_amplitude = params.first_spine_amplitude;

  const DepthFrame background = render_background(params.camera);
  write_depth_frame(background, (fs::path(out_root) / "background.png").string());

  struct FrameJob {
    int identity;
    int sequence;
    int frame;
    std::string sequence_id;
    std::uint64_t seq_seed;
  };
  std::vector<FrameJob> jobs;
  for (int id = 0; id < params.identity_count; ++id) {
    for (int sq = 0; sq < params.sequences_per_identity; ++sq) {
      const std::string sequence_id = "seq" + zero_pad(id, 2) + "-" + zero_pad(sq, 1);
      const std::uint64_t seq_seed =
          Rng::mix(identities[static_cast<std::size_t>(id)].seed,
                   static_cast<std::uint64_t>(sq));
      fs::create_directories(fs::path(out_root) / sequence_id);
      for (int f = 0; f < params.frames_per_sequence; ++f)
        jobs.push_back({id, sq, f, sequence_id, seq_seed});
    }
  }
  for (int id = 0; id < params.identity_count; ++id) {
    fs::create_directories(fs::path(out_root) / "crops" / std::to_string(id));
    fs::create_directories(fs::path(out_root) / "clouds" / std::to_string(id));
  }

  std::vector<std::vector<SampleInfo>> rows(jobs.size());
  parallel_for(jobs.size(), params.jobs, [&](std::size_t j) {
    const FrameJob& job = jobs[j];
    const IdentityShape& shape = identities[static_cast<std::size_t>(job.identity)];

    Rng frame_rng = Rng(job.seq_seed).fork(static_cast<std::uint64_t>(job.frame));
    Pose pose;
    pose.x_offset_m = -params.walk_m * (params.frames_per_sequence - 1) * 0.5 +
                      params.walk_m * job.frame;
    pose.heading_rad = std::clamp(frame_rng.gaussian(0.0, 0.04), -0.1, 0.1);

    DepthFrame frame = render_depth(shape, pose, params.camera, params.noise, frame_rng);
    frame.sequence_id = job.sequence_id;
    frame.frame_index = job.frame;

    const fs::path frame_png =
        fs::path(out_root) / job.sequence_id / (zero_pad(job.frame, 6) + ".png");
    write_depth_frame(frame, frame_png.string());

    auto crops = segment_frame(frame, background, params.segmentation);
    for (std::size_t b = 0; b < crops.size(); ++b) {
      const auto& [crop, box] = crops[b];
      const std::string stem = job.sequence_id + "_" + zero_pad(job.frame, 6) + "_" +
                               std::to_string(b);
      const std::string crop_rel =
          "crops/" + std::to_string(job.identity) + "/" + stem + ".png";
      const std::string cloud_rel =
          "clouds/" + std::to_string(job.identity) + "/" + stem + ".ply";

      write_depth_png(crop.data, (fs::path(out_root) / crop_rel).string());
      CropMeta meta;
      meta.sequence_id = job.sequence_id;
      meta.frame_index = job.frame;
      meta.has_box = true;
      meta.box = box;
      write_sidecar((fs::path(out_root) / crop_rel).string(), meta);

      PointCloud cloud = unproject(crop, box, params.camera.intrinsics);
      const Eigen::Index want =
          std::min<Eigen::Index>(params.cloud_points, cloud.size());
      cloud = farthest_point_sample(cloud, want);
      cloud.label = job.identity;
      write_ply(cloud, (fs::path(out_root) / cloud_rel).string());

      SampleInfo info;
      info.id = stem;
      info.identity = job.identity;
      info.sequence_id = job.sequence_id;
      info.frame_index = job.frame;
      info.blob = static_cast<int>(b);
      info.crop_path = crop_rel;
      info.cloud_path = cloud_rel;
      rows[j].push_back(std::move(info));
    }
  });

  DatasetIndex index;
  index.intrinsics = params.camera.intrinsics;
  for (auto& frame_rows : rows)
    for (auto& info : frame_rows) index.samples.push_back(std::move(info));
  write_dataset_index(index, (fs::path(out_root) / "dataset.txt").string());
  return index;
}

}  // namespace herdid
