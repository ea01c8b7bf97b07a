#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "herdid/cloudops.hpp"
#include "herdid/config.hpp"
#include "herdid/dataset.hpp"
#include "herdid/embednet.hpp"
#include "herdid/error.hpp"
#include "herdid/openset.hpp"
#include "herdid/parallel.hpp"
#include "herdid/ply_io.hpp"
#include "herdid/png_io.hpp"
#include "herdid/rng.hpp"
#include "herdid/saliency.hpp"
#include "herdid/segmentation.hpp"
#include "herdid/synthherd.hpp"
#include "herdid/trainer.hpp"
#include "herdid/version.hpp"

namespace fs = std::filesystem;
using namespace herdid;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int jobs = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "configuration file");
  cmd->add_option("--set", opts.sets, "override: section.key=value")->take_all();
  cmd->add_option_function<std::uint64_t>(
         "--seed",
         [&opts](std::uint64_t v) {
           opts.seed = v;
           opts.seed_given = true;
         },
         "random seed (overrides config run.seed)");
  cmd->add_option("--jobs", opts.jobs, "worker thread cap");
}

/// defaults <- config file <- --set overrides <- --seed/--jobs/env
Config resolve_config(const CommonOpts& opts) {
  Config cfg = default_config();
  bool seed_explicit = opts.seed_given;
  if (!opts.config_path.empty()) {
    Config file = Config::load(opts.config_path);
    if (file.has("run", "seed")) seed_explicit = true;
    cfg.merge(file);
  }
  for (const auto& s : opts.sets) {
    if (s.rfind("run.seed=", 0) == 0) seed_explicit = true;
    cfg.set_path(s);
  }
  if (opts.seed_given) {
    cfg.set("run", "seed", std::to_string(opts.seed));
  } else if (!seed_explicit) {
    if (const char* env = std::getenv("HERDID_SEED")) cfg.set("run", "seed", env);
  }
  if (opts.jobs >= 0) cfg.set("run", "jobs", std::to_string(opts.jobs));
  return cfg;
}

void print_header(const Config& cfg) {
  std::cout << "herdid " << kVersion << " | seed " << cfg.get_int("run", "seed")
            << " | config " << cfg.hash() << "\n";
}

int effective_jobs(const Config& cfg) {
  const int jobs = static_cast<int>(cfg.get_int("run", "jobs"));
  return jobs <= 0 ? default_jobs() : jobs;
}

SegmentationParams segmentation_params(const Config& cfg) {
  SegmentationParams p;
  p.fg_lo_m = cfg.get_double("segmentation", "fg_lo_m");
  p.fg_hi_m = cfg.get_double("segmentation", "fg_hi_m");
  p.bg_lo_m = cfg.get_double("segmentation", "bg_lo_m");
  p.bg_hi_m = cfg.get_double("segmentation", "bg_hi_m");
  p.bg_tolerance_mm = static_cast<int>(cfg.get_int("segmentation", "bg_tolerance_mm"));
  p.median_window = static_cast<int>(cfg.get_int("segmentation", "median_window"));
  p.blob_area_lo = cfg.get_int("segmentation", "blob_area_lo");
  p.blob_area_hi = cfg.get_int("segmentation", "blob_area_hi");
  p.connectivity = static_cast<int>(cfg.get_int("segmentation", "connectivity"));
  return p;
}

SynthCamera camera_params(const Config& cfg) {
  SynthCamera cam;
  cam.intrinsics.fx = cfg.get_double("camera", "fx");
  cam.intrinsics.fy = cfg.get_double("camera", "fy");
  cam.intrinsics.cx = cfg.get_double("camera", "cx");
  cam.intrinsics.cy = cfg.get_double("camera", "cy");
  cam.width = static_cast<int>(cfg.get_int("camera", "width"));
  cam.height = static_cast<int>(cfg.get_int("camera", "height"));
  cam.height_m = cfg.get_double("camera", "height_m");
  return cam;
}

NetworkSpec network_spec(const Config& cfg) {
  NetworkSpec spec;
  spec.point_mlp_channels = cfg.get_int_list("network", "point_mlp");
  spec.head_widths = cfg.get_int_list("network", "head");
  spec.embedding_dim = static_cast<int>(cfg.get_int("network", "embedding_dim"));
  spec.normalize_embeddings = cfg.get_bool("network", "normalize_embeddings");
  spec.init_gain = cfg.get_double("network", "init_gain");
  return spec;
}

LossConfig loss_config(const Config& cfg) {
  LossConfig loss;
  const std::string mode = cfg.get_string("loss", "mode");
  if (mode == "softmax+tl") {
    loss.mode = LossMode::SoftmaxTriplet;
  } else if (mode == "softmax+rtl") {
    loss.mode = LossMode::SoftmaxReciprocalTriplet;
  } else {
    fail(Err::BadConfig, "loss.mode must be softmax+tl or softmax+rtl");
  }
  loss.lambda = cfg.get_double("loss", "lambda");
  loss.margin = cfg.get_double("loss", "margin");
  const std::string members = cfg.get_string("loss", "softmax_members");
  if (members == "all") {
    loss.softmax_members = SoftmaxMembers::All;
  } else if (members == "anchor") {
    loss.softmax_members = SoftmaxMembers::AnchorOnly;
  } else {
    fail(Err::BadConfig, "loss.softmax_members must be all or anchor");
  }
  return loss;
}

TrainConfig train_config(const Config& cfg) {
  TrainConfig t;
  const std::string opt = cfg.get_string("train", "optimizer");
  if (opt == "adam") {
    t.optimizer = TrainConfig::Optimizer::Adam;
  } else if (opt == "sgd") {
    t.optimizer = TrainConfig::Optimizer::SgdMomentum;
  } else {
    fail(Err::BadConfig, "train.optimizer must be adam or sgd");
  }
  t.learning_rate = cfg.get_double("train", "learning_rate");
  t.batch_size = static_cast<int>(cfg.get_int("train", "batch_size"));
  t.epochs = static_cast<int>(cfg.get_int("train", "epochs"));
  t.weight_decay = cfg.get_double("train", "weight_decay");
  t.momentum = cfg.get_double("train", "momentum");
  t.loss = loss_config(cfg);
  t.eval_every = static_cast<int>(cfg.get_int("train", "eval_every"));
  t.seed = static_cast<std::uint64_t>(cfg.get_int("run", "seed"));
  t.augment_sigma_m = cfg.get_double("train", "augment_sigma_m");
  if (cfg.get_bool("train", "resample"))
    t.resample_points = static_cast<int>(cfg.get_int("train", "points"));
  t.augment_max_rotation_rad =
      cfg.get_double("train", "augment_max_rotation_deg") * 3.141592653589793 / 180.0;
  t.knn_k = static_cast<int>(cfg.get_int("gallery", "k"));
  t.jobs = effective_jobs(cfg);
  return t;
}

/// Loads clouds for the given sample ids, optionally resampled to `points`.
SampleMap load_samples(const DatasetIndex& index, const std::string& root,
                       const std::set<std::string>& wanted, Eigen::Index points,
                       int jobs) {
  std::vector<const SampleInfo*> rows;
  for (const auto& s : index.samples)
    if (wanted.empty() || wanted.count(s.id)) rows.push_back(&s);

  std::vector<Sample> loaded(rows.size());
  parallel_for(rows.size(), jobs, [&](std::size_t i) {
    const SampleInfo& info = *rows[i];
    PointCloud cloud = read_ply((fs::path(root) / info.cloud_path).string());
    if (points > 0 && points < cloud.size())
      cloud = farthest_point_sample(cloud, points);
    Sample s;
    s.cloud = std::move(cloud);
    s.identity = info.identity;
    loaded[i] = std::move(s);
  });

  SampleMap map;
  for (std::size_t i = 0; i < rows.size(); ++i)
    map.emplace(rows[i]->id, std::move(loaded[i]));
  return map;
}

std::set<std::string> id_set(const std::vector<std::string>& ids) {
  return {ids.begin(), ids.end()};
}

void write_embeddings_csv(const std::string& path,
                          const std::vector<std::string>& ids,
                          const std::vector<int>& labels,
                          const std::vector<Eigen::VectorXd>& embeddings) {
  std::ofstream out(path);
  if (!out) fail(Err::UnwritablePath, "cannot write embeddings: " + path);
  const Eigen::Index dim = embeddings.empty() ? 0 : embeddings.front().size();
  out << "sample_id,label";
  for (Eigen::Index j = 0; j < dim; ++j) out << ",e_" << j;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i] << ',' << labels[i];
    for (Eigen::Index j = 0; j < dim; ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", embeddings[i][j]);
      out << ',' << buf;
    }
    out << '\n';
  }
}

int run_synth(const Config& cfg, const std::string& out_dir) {
  SynthParams p;
  p.identity_count = static_cast<int>(cfg.get_int("synth", "identities"));
  p.sequences_per_identity = static_cast<int>(cfg.get_int("synth", "sequences"));
  p.frames_per_sequence = static_cast<int>(cfg.get_int("synth", "frames"));
  p.seed = static_cast<std::uint64_t>(cfg.get_int("run", "seed"));
  p.separation = cfg.get_double("synth", "separation");
  p.walk_m = cfg.get_double("synth", "walk_m");
  p.noise.sigma_mm = cfg.get_double("synth", "noise_sigma_mm");
  p.noise.dropout_rate = cfg.get_double("synth", "dropout_rate");
  p.camera = camera_params(cfg);
  p.segmentation = segmentation_params(cfg);
  p.cloud_points = static_cast<int>(cfg.get_int("cloud", "points"));
  p.first_spine_amplitude = cfg.get_double("synth", "first_spine_amplitude");
  p.jobs = effective_jobs(cfg);

  DatasetIndex index = make_dataset(p, out_dir);
  std::cout << "wrote " << index.samples.size() << " samples to " << out_dir << "\n";
  return 0;
}

int run_segment(const Config& cfg, const std::string& bg_path,
                const std::string& out_root, int identity,
                const std::vector<std::string>& frame_paths) {
  const SegmentationParams params = segmentation_params(cfg);
  const DepthFrame background = read_depth_frame(bg_path);
  const std::string folder = identity < 0 ? "unlabeled" : std::to_string(identity);
  fs::create_directories(fs::path(out_root) / "crops" / folder);

  long total = 0;
  for (const auto& path : frame_paths) {
    const DepthFrame frame = read_depth_frame(path);
    auto crops = segment_frame(frame, background, params);
    for (std::size_t b = 0; b < crops.size(); ++b) {
      const auto& [crop, box] = crops[b];
      char frame_part[32];
      std::snprintf(frame_part, sizeof frame_part, "%06lld",
                    static_cast<long long>(frame.frame_index));
      const std::string stem =
          frame.sequence_id + "_" + frame_part + "_" + std::to_string(b);
      const fs::path crop_png = fs::path(out_root) / "crops" / folder / (stem + ".png");
      write_depth_png(crop.data, crop_png.string());
      CropMeta meta;
      meta.sequence_id = frame.sequence_id;
      meta.frame_index = frame.frame_index;
      meta.has_box = true;
      meta.box = box;
      write_sidecar(crop_png.string(), meta);
      ++total;
    }
  }
  std::cout << "wrote " << total << " crops under " << out_root << "/crops/" << folder
            << "\n";
  return 0;
}

int run_cloud(const Config& cfg, const std::string& scan_root, Eigen::Index points,
              const std::string& out_dir, const std::vector<std::string>& crop_paths) {
  const SynthCamera cam = camera_params(cfg);
  const int jobs = effective_jobs(cfg);

  auto convert = [&](const std::string& crop_path, const std::string& cloud_path,
                     int identity) {
    const DepthGrid grid = read_depth_png(crop_path);
    const CropMeta meta = read_sidecar(crop_path);
    DepthFrame crop;
    crop.data = grid;
    crop.sequence_id = meta.sequence_id;
    crop.frame_index = meta.frame_index;
    BoundingBox box = meta.box;
    if (!meta.has_box)
      box = {0, 0, crop.width(), crop.height(),
             static_cast<std::int64_t>((grid.array() != 0).count())};
    PointCloud cloud = unproject(crop, box, cam.intrinsics);
    if (points > 0 && points < cloud.size())
      cloud = farthest_point_sample(cloud, points);
    cloud.label = identity;
    write_ply(cloud, cloud_path);
    return cloud.size();
  };

  if (!scan_root.empty()) {
    // ingest a crops/<identity>/ tree and index it
    DatasetIndex index;
    index.intrinsics = cam.intrinsics;
    const fs::path crops_dir = fs::path(scan_root) / "crops";
    if (!fs::is_directory(crops_dir))
      fail(Err::MissingFile, "no crops directory under " + scan_root);
    std::vector<fs::path> identity_dirs;
    for (const auto& entry : fs::directory_iterator(crops_dir))
      if (entry.is_directory()) identity_dirs.push_back(entry.path());
    std::sort(identity_dirs.begin(), identity_dirs.end());

    for (const auto& dir : identity_dirs) {
      int identity = -1;
      try {
        identity = std::stoi(dir.filename().string());
      } catch (const std::exception&) {
        std::cerr << "warning: skipping non-numeric identity directory " << dir << "\n";
        continue;
      }
      fs::create_directories(fs::path(scan_root) / "clouds" / dir.filename());
      std::vector<fs::path> pngs;
      for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".png") pngs.push_back(entry.path());
      std::sort(pngs.begin(), pngs.end());

      std::vector<SampleInfo> rows(pngs.size());
      parallel_for(pngs.size(), jobs, [&](std::size_t i) {
        const std::string stem = pngs[i].stem().string();
        const std::string cloud_rel =
            "clouds/" + dir.filename().string() + "/" + stem + ".ply";
        convert(pngs[i].string(), (fs::path(scan_root) / cloud_rel).string(), identity);
        const CropMeta meta = read_sidecar(pngs[i].string());
        SampleInfo info;
        info.id = stem;
        info.identity = identity;
        info.sequence_id = meta.sequence_id;
        info.frame_index = meta.frame_index;
        const auto tail = stem.rfind('_');
        info.blob = tail == std::string::npos ? 0 : std::atoi(stem.c_str() + tail + 1);
        info.crop_path = "crops/" + dir.filename().string() + "/" + stem + ".png";
        info.cloud_path = cloud_rel;
        rows[i] = std::move(info);
      });
      for (auto& r : rows) index.samples.push_back(std::move(r));
    }
    write_dataset_index(index, (fs::path(scan_root) / "dataset.txt").string());
    std::cout << "indexed " << index.samples.size() << " samples in " << scan_root
              << "/dataset.txt\n";
    return 0;
  }

  for (const auto& path : crop_paths) {
    fs::path out = out_dir.empty() ? fs::path(path) : fs::path(out_dir) / fs::path(path).filename();
    out.replace_extension(".ply");
    if (!out_dir.empty()) fs::create_directories(out.parent_path());
    const auto n = convert(path, out.string(), -1);
    std::cout << path << " -> " << out.string() << " (" << n << " points)\n";
  }
  return 0;
}

int run_split(const Config& cfg, const std::string& data_root, const std::string& out) {
  const DatasetIndex index =
      read_dataset_index((fs::path(data_root) / "dataset.txt").string());
  const double ratio = cfg.get_double("split", "ratio");
  const int n = static_cast<int>(cfg.get_int("split", "n"));
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("run", "seed"));

  SplitManifest manifest = random_split(index.samples, ratio, seed);
  manifest = leave_sequence_out(manifest, index.samples, n);
  write_split_manifest(manifest, out);
  std::cout << "split: " << manifest.train_ids.size() << " train, "
            << manifest.test_ids.size() << " test, "
            << manifest.unknown_identities.size() << " unknown identities (n=" << n
            << ")\n";
  return 0;
}

int run_train(const Config& cfg, const std::string& data_root,
              const std::string& manifest_path, const std::string& out_dir) {
  const DatasetIndex index =
      read_dataset_index((fs::path(data_root) / "dataset.txt").string());
  const SplitManifest manifest = read_split_manifest(manifest_path);
  {
    const std::string bad = check_split_manifest(manifest, index);
    if (!bad.empty()) fail(Err::InvalidManifest, bad);
  }
  TrainConfig tc = train_config(cfg);
  // with per-step resampling the loader keeps full clouds; otherwise clouds
  // are FPS-reduced once at load
  const auto train_points =
      tc.resample_points > 0 ? Eigen::Index{0} : cfg.get_int("train", "points");

  SampleMap pool = load_samples(index, data_root, id_set(manifest.train_ids),
                                train_points, tc.jobs);

  // identity-stratified validation carve from the train side
  const double val_fraction = cfg.get_double("train", "validation_fraction");
  std::map<int, std::vector<std::string>> by_identity;
  for (const auto& id : manifest.train_ids)
    by_identity[pool.at(id).identity].push_back(id);
  Rng carve_rng(Rng::mix(tc.seed, 0x56414cull));
  std::set<std::string> val_ids;
  for (auto& [identity, ids] : by_identity) {
    carve_rng.shuffle(ids);
    const auto take = static_cast<std::size_t>(
        std::max(1.0, std::floor(val_fraction * static_cast<double>(ids.size()))));
    if (ids.size() < 3) continue;  // too few to carve from
    for (std::size_t i = 0; i < take && i < ids.size() - 2; ++i) val_ids.insert(ids[i]);
  }

  std::vector<Sample> train, validation;
  for (const auto& id : manifest.train_ids) {
    Sample s = pool.at(id);
    s.split_tag = val_ids.count(id) ? SplitTag::Validation : SplitTag::Train;
    (val_ids.count(id) ? validation : train).push_back(std::move(s));
  }

  fs::create_directories(out_dir);
  const NetworkSpec spec = network_spec(cfg);
  FitResult result =
      fit(train, validation, spec, tc, [&](const NetworkParams& p, int epoch, double acc) {
        char name[64];
        std::snprintf(name, sizeof name, "best_epoch%03d.ckpt", epoch);
        save_checkpoint(p, epoch, (fs::path(out_dir) / name).string());
        std::cout << "epoch " << epoch << ": validation accuracy " << acc
                  << " (checkpoint saved)\n";
      });

  save_checkpoint(result.params, std::max(0, result.history.best_epoch),
                  (fs::path(out_dir) / "best.ckpt").string());
  write_history_csv(result.history, (fs::path(out_dir) / "history.csv").string());
  std::cout << "best validation accuracy " << result.history.best_accuracy
            << " at epoch " << result.history.best_epoch << "\n";
  return 0;
}

int run_embed(const Config& cfg, const std::string& data_root,
              const std::string& manifest_path, const std::string& ckpt_path,
              const std::string& out, Eigen::Index points, const std::string& which) {
  const DatasetIndex index =
      read_dataset_index((fs::path(data_root) / "dataset.txt").string());
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const int jobs = effective_jobs(cfg);

  std::vector<std::string> ids;
  if (manifest_path.empty() || which == "all") {
    for (const auto& s : index.samples) ids.push_back(s.id);
  } else {
    const SplitManifest manifest = read_split_manifest(manifest_path);
    if (which == "train") {
      ids = manifest.train_ids;
    } else if (which == "test") {
      ids = manifest.test_ids;
    } else {
      fail(Err::BadConfig, "--which must be train, test or all");
    }
  }

  SampleMap samples = load_samples(index, data_root, id_set(ids), points, jobs);
  std::vector<PointCloud> prepared(ids.size());
  std::vector<int> labels(ids.size());
  parallel_for(ids.size(), jobs, [&](std::size_t i) {
    const Sample& s = samples.at(ids[i]);
    prepared[i] = normalize_cloud(s.cloud);
    labels[i] = s.identity;
  });
  const auto embeddings = embed_batch(ckpt.params, prepared, jobs);
  write_embeddings_csv(out, ids, labels, embeddings);
  std::cout << "wrote " << ids.size() << " embeddings to " << out << "\n";
  return 0;
}

int run_enroll(const Config& cfg, const std::string& data_root,
               const std::string& manifest_path, const std::string& ckpt_path,
               const std::string& out, Eigen::Index points) {
  const DatasetIndex index =
      read_dataset_index((fs::path(data_root) / "dataset.txt").string());
  const SplitManifest manifest = read_split_manifest(manifest_path);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const int jobs = effective_jobs(cfg);
  const int k = static_cast<int>(cfg.get_int("gallery", "k"));

  std::set<std::string> wanted = id_set(manifest.train_ids);
  for (const auto& id : manifest.pre_removal_train_ids) wanted.insert(id);
  SampleMap samples = load_samples(index, data_root, wanted, points, jobs);

  Gallery gallery = build_gallery(ckpt.params, manifest, samples, k, jobs);
  write_gallery(gallery, out);
  std::cout << "enrolled " << gallery.entry_count() << " entries (k=" << gallery.k
            << ") to " << out << "\n";
  return 0;
}

int run_identify(const std::string& gallery_path, const std::string& ckpt_path,
                 const std::vector<std::string>& cloud_paths) {
  const Gallery gallery = read_gallery(gallery_path);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  for (const auto& path : cloud_paths) {
    PointCloud cloud = normalize_cloud(read_ply(path));
    ForwardTrace trace;
    forward(ckpt.params, cloud, trace);
    auto [label, dists] = knn_predict(gallery, trace.embedding);
    std::cout << path << " -> identity " << label << " (neighbors:";
    for (Eigen::Index i = 0; i < dists.size(); ++i) std::cout << ' ' << dists[i];
    std::cout << ")\n";
  }
  return 0;
}

int run_eval(const Config& cfg, const std::string& data_root,
             const std::string& manifest_path, const std::string& ckpt_path,
             const std::string& out, const std::string& confusion_out,
             Eigen::Index points) {
  const DatasetIndex index =
      read_dataset_index((fs::path(data_root) / "dataset.txt").string());
  const SplitManifest manifest = read_split_manifest(manifest_path);
  {
    const std::string bad = check_split_manifest(manifest, index);
    if (!bad.empty()) fail(Err::InvalidManifest, bad);
  }
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const int jobs = effective_jobs(cfg);
  const int k = static_cast<int>(cfg.get_int("gallery", "k"));

  std::set<std::string> wanted = id_set(manifest.train_ids);
  for (const auto& id : manifest.pre_removal_train_ids) wanted.insert(id);
  for (const auto& id : manifest.test_ids) wanted.insert(id);
  SampleMap samples = load_samples(index, data_root, wanted, points, jobs);

  EvalReport report = evaluate(ckpt.params, manifest, samples, k, jobs);
  write_eval_csv(report, out);
  if (!confusion_out.empty()) write_confusion_csv(report, confusion_out);

  auto show = [](double v) {
    return std::isnan(v) ? std::string("n/a") : std::to_string(v);
  };
  std::cout << "overall accuracy " << show(report.overall_accuracy) << " ("
            << report.rows.size() << " test samples)\n";
  std::cout << "known-identity accuracy " << show(report.known_accuracy) << "\n";
  std::cout << "unknown-identity accuracy " << show(report.unknown_accuracy) << "\n";
  return 0;
}

int run_saliency(const Config& cfg, const std::string& ckpt_path,
                 const std::string& cloud_path, const std::string& out, int true_class,
                 const std::string& drop_mode, int drop_count, int max_iters) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  PointCloud raw = read_ply(cloud_path);
  if (true_class < 0) true_class = raw.label;
  if (true_class < 0)
    fail(Err::BadConfig, "cloud carries no identity; pass --class");

  const PointCloud cloud = normalize_cloud(raw);
  const double eps_r = cfg.get_double("saliency", "epsilon_r");
  Eigen::VectorXd scores = pcsm_scores(ckpt.params, cloud, true_class, eps_r);

  // normalized rank in [0, 1] for the color ramp
  const Eigen::Index n = scores.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return scores[a] < scores[b]; });
  Eigen::VectorXd rank(n);
  for (Eigen::Index i = 0; i < n; ++i)
    rank[order[static_cast<std::size_t>(i)]] =
        n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
  write_ply_colored(raw, rank, out);
  std::cout << "wrote saliency-colored cloud to " << out << "\n";

  if (!drop_mode.empty()) {
    DropMode mode;
    if (drop_mode == "saliency") {
      mode = DropMode::Saliency;
    } else if (drop_mode == "random") {
      mode = DropMode::Random;
    } else {
      fail(Err::BadConfig, "--drop must be saliency or random");
    }
    Rng rng(static_cast<std::uint64_t>(cfg.get_int("run", "seed")));
    DropResult r =
        pcsm_drop(ckpt.params, raw, true_class, drop_count, max_iters, mode, &rng, eps_r);
    if (r.misclassified_at) {
      std::cout << "misclassified at iteration " << *r.misclassified_at << "\n";
    } else {
      std::cout << (r.exhausted ? "cloud exhausted without misclassification\n"
                                : "no misclassification within max iterations\n");
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"depth-only animal identification toolkit"};
  app.require_subcommand(1);

  CommonOpts common;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
  std::string synth_out;
  int synth_identities = -1, synth_frames = -1;
  synth->add_option("--out", synth_out, "output dataset root")->required();
  synth->add_option("--identities", synth_identities, "identity count");
  synth->add_option("--frames", synth_frames, "frames per sequence");
  add_common(synth, common);

  // segment
  auto* segment = app.add_subcommand("segment", "segment depth frames into crops");
  std::string seg_bg, seg_out, seg_params;
  int seg_identity = -1;
  std::vector<std::string> seg_frames;
  segment->add_option("--bg", seg_bg, "background depth png")->required();
  segment->add_option("--params", seg_params, "segmentation parameter file");
  segment->add_option("--out", seg_out, "output dataset root")->required();
  segment->add_option("--identity", seg_identity, "identity label for the crops");
  segment->add_option("frames", seg_frames, "depth frame pngs")->required();
  add_common(segment, common);

  // cloud
  auto* cloud = app.add_subcommand("cloud", "convert depth crops to point clouds");
  std::string cloud_intrinsics, cloud_scan, cloud_out;
  long long cloud_points = -1;
  std::vector<std::string> cloud_inputs;
  cloud->add_option("--intrinsics", cloud_intrinsics, "camera parameter file");
  cloud->add_option("--points", cloud_points, "points per cloud after sampling");
  cloud->add_option("--scan", cloud_scan, "dataset root: ingest crops/ and index");
  cloud->add_option("--out", cloud_out, "output directory for ply files");
  cloud->add_option("crops", cloud_inputs, "crop pngs");
  add_common(cloud, common);

  // split
  auto* split = app.add_subcommand("split", "create a train/test split manifest");
  std::string split_data, split_out;
  double split_ratio = -1.0;
  int split_n = -1;
  split->add_option("--data", split_data, "dataset root")->required();
  split->add_option("--out", split_out, "manifest output path")->required();
  split->add_option("--ratio", split_ratio, "train fraction");
  split->add_option("--n", split_n, "neighbor-removal radius in frames");
  add_common(split, common);

  // train
  auto* train = app.add_subcommand("train", "train the embedding network");
  std::string train_data, train_manifest, train_out;
  train->add_option("--data", train_data, "dataset root")->required();
  train->add_option("--manifest", train_manifest, "split manifest")->required();
  train->add_option("--out", train_out, "checkpoint directory")->required();
  add_common(train, common);

  // embed
  auto* embed = app.add_subcommand("embed", "export embeddings as csv");
  std::string embed_data, embed_manifest, embed_ckpt, embed_out, embed_which = "all";
  long long embed_points = -1;
  embed->add_option("--data", embed_data, "dataset root")->required();
  embed->add_option("--manifest", embed_manifest, "split manifest (optional)");
  embed->add_option("--ckpt", embed_ckpt, "checkpoint file")->required();
  embed->add_option("--out", embed_out, "output csv")->required();
  embed->add_option("--points", embed_points, "resample clouds to this many points");
  embed->add_option("--which", embed_which, "train, test or all");
  add_common(embed, common);

  // enroll
  auto* enroll = app.add_subcommand("enroll", "build a kNN gallery");
  std::string enroll_data, enroll_manifest, enroll_ckpt, enroll_out;
  long long enroll_points = -1;
  enroll->add_option("--data", enroll_data, "dataset root")->required();
  enroll->add_option("--manifest", enroll_manifest, "split manifest")->required();
  enroll->add_option("--ckpt", enroll_ckpt, "checkpoint file")->required();
  enroll->add_option("--out", enroll_out, "gallery output path")->required();
  enroll->add_option("--points", enroll_points, "resample clouds to this many points");
  add_common(enroll, common);

  // identify
  auto* identify = app.add_subcommand("identify", "identify query clouds");
  std::string identify_gallery, identify_ckpt;
  std::vector<std::string> identify_clouds;
  identify->add_option("--gallery", identify_gallery, "gallery file")->required();
  identify->add_option("--ckpt", identify_ckpt, "checkpoint file")->required();
  identify->add_option("clouds", identify_clouds, "query ply files")->required();
  add_common(identify, common);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate on the test side of a split");
  std::string eval_data, eval_manifest, eval_ckpt, eval_out, eval_confusion;
  long long eval_points = -1;
  eval->add_option("--data", eval_data, "dataset root")->required();
  eval->add_option("--manifest", eval_manifest, "split manifest")->required();
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--out", eval_out, "per-sample report csv")->required();
  eval->add_option("--confusion", eval_confusion, "confusion counts csv");
  eval->add_option("--points", eval_points, "resample clouds to this many points");
  add_common(eval, common);

  // saliency
  auto* saliency = app.add_subcommand("saliency", "point cloud saliency mapping");
  std::string sal_ckpt, sal_cloud, sal_out, sal_drop;
  int sal_class = -1, sal_drop_count = -1, sal_iters = 32;
  saliency->add_option("--ckpt", sal_ckpt, "checkpoint file")->required();
  saliency->add_option("--cloud", sal_cloud, "input ply")->required();
  saliency->add_option("--out", sal_out, "saliency-colored output ply")->required();
  saliency->add_option("--class", sal_class, "class index (default: cloud label)");
  saliency->add_option("--drop", sal_drop, "also run point dropping: saliency|random");
  saliency->add_option("--drop-count", sal_drop_count, "points removed per iteration");
  saliency->add_option("--max-iters", sal_iters, "max dropping iterations");
  add_common(saliency, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // exit 0 with usage text
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    Config cfg = resolve_config(common);

    if (synth->parsed()) {
      if (synth_identities > 0)
        cfg.set("synth", "identities", std::to_string(synth_identities));
      if (synth_frames > 0) cfg.set("synth", "frames", std::to_string(synth_frames));
      print_header(cfg);
      return run_synth(cfg, synth_out);
    }
    if (segment->parsed()) {
      if (!seg_params.empty()) cfg.merge(Config::load(seg_params));
      print_header(cfg);
      return run_segment(cfg, seg_bg, seg_out, seg_identity, seg_frames);
    }
    if (cloud->parsed()) {
      if (!cloud_intrinsics.empty()) cfg.merge(Config::load(cloud_intrinsics));
      if (cloud_points > 0) cfg.set("cloud", "points", std::to_string(cloud_points));
      print_header(cfg);
      return run_cloud(cfg, cloud_scan, cfg.get_int("cloud", "points"), cloud_out,
                       cloud_inputs);
    }
    if (split->parsed()) {
      if (split_ratio > 0.0) cfg.set("split", "ratio", std::to_string(split_ratio));
      if (split_n >= 0) cfg.set("split", "n", std::to_string(split_n));
      print_header(cfg);
      return run_split(cfg, split_data, split_out);
    }
    if (train->parsed()) {
      print_header(cfg);
      return run_train(cfg, train_data, train_manifest, train_out);
    }
    if (embed->parsed()) {
      print_header(cfg);
      return run_embed(cfg, embed_data, embed_manifest, embed_ckpt, embed_out,
                       embed_points, embed_which);
    }
    if (enroll->parsed()) {
      print_header(cfg);
      return run_enroll(cfg, enroll_data, enroll_manifest, enroll_ckpt, enroll_out,
                        enroll_points);
    }
    if (identify->parsed()) {
      print_header(cfg);
      return run_identify(identify_gallery, identify_ckpt, identify_clouds);
    }
    if (eval->parsed()) {
      print_header(cfg);
      return run_eval(cfg, eval_data, eval_manifest, eval_ckpt, eval_out,
                      eval_confusion, eval_points);
    }
    if (saliency->parsed()) {
      if (sal_drop_count <= 0)
        sal_drop_count = static_cast<int>(cfg.get_int("saliency", "drop_count"));
      print_header(cfg);
      return run_saliency(cfg, sal_ckpt, sal_cloud, sal_out, sal_class, sal_drop,
                          sal_drop_count, sal_iters);
    }
  } catch (const Error& e) {
    std::cerr << "error (" << err_name(e.code()) << "): " << e.what() << "\n";
    return e.code() == Err::NonFinite ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
