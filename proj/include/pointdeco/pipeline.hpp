#pragma once

// Batch front end: directory-level commands that wire the pipeline stages
// together (generate -> recode -> train -> decorate, plus the self-check
// report). Commands return a process exit code, write per-frame errors to the
// given stream, and are deterministic for a fixed (inputs, seed) regardless
// of the worker count.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pointdeco/checks.hpp"
#include "pointdeco/cloud.hpp"
#include "pointdeco/common.hpp"
#include "pointdeco/frustum.hpp"
#include "pointdeco/io.hpp"
#include "pointdeco/net.hpp"
#include "pointdeco/recode.hpp"
#include "pointdeco/synth.hpp"
#include "pointdeco/train.hpp"

namespace pointdeco {

struct RunConfig {
  std::string input;       // directory (recode/decorate), scene spec (gen)
  std::string output;      // directory (gen/recode/decorate), CSV path (train)
  std::string checkpoint;  // model file to write (train) or read (decorate)
  RecodeMode mode = RecodeMode::Infer;
  double min_conf = 0.1;
  std::uint64_t seed = 1;
  bool seed_given = false;  // gen: overrides the spec file's seed
  FusionVariant fusion = FusionVariant::D;
  bool train_fusion_head = false;  // train: also fit the fusion head
  MaskSource mask_source = MaskSource::GroundTruth;
  int n_cls = 3;
  int m = 2048;
  int jobs = 1;
  int epochs = 40;
  double lr = 0.02;
  double target_accuracy = 0.0;
  int frames = 10;                      // gen only
  std::optional<FaultInjection> fault;  // check only
  bool with_ordering = false;           // check: include the slow suite
};

namespace detail {

namespace fs = std::filesystem;

inline std::vector<std::string> list_stems(const fs::path& dir,
                                           const std::string& ext) {
  std::vector<std::string> stems;
  if (!fs::is_directory(dir)) return stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) {
      stems.push_back(entry.path().stem().string());
    }
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

inline void merge_stems(std::vector<std::string>& all,
                        const std::vector<std::string>& more) {
  all.insert(all.end(), more.begin(), more.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
}

// Runs fn(i) for i in [0, n) on up to `jobs` worker threads. fn must only
// touch its own slot of any shared output.
inline void parallel_for(std::size_t n, int jobs,
                         const std::function<void(std::size_t)>& fn) {
  const int workers =
      std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

inline std::string frame_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", i);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// gen: expand a scene spec file into a directory of synthetic frames laid out
// the way cmd_recode expects (velodyne/, calib/, labels/, detections/).

inline int cmd_gen(const RunConfig& cfg, std::ostream& err) {
  namespace fs = std::filesystem;
  try {
    SceneSpec spec = read_scene_spec(cfg.input);
    if (cfg.seed_given) spec.seed = cfg.seed;
    if (spec.n_cls < 1 || spec.n_cls > 3) {
      throw Error(ErrorCode::InvalidClass,
                  "label type names cover class ids 0..2; got n_cls=" +
                      std::to_string(spec.n_cls));
    }
    const fs::path out(cfg.output);
    fs::create_directories(out / "velodyne");
    fs::create_directories(out / "calib");
    fs::create_directories(out / "labels");
    fs::create_directories(out / "detections");
    static const char* kTypeNames[3] = {"Car", "Pedestrian", "Cyclist"};
    for (int i = 0; i < cfg.frames; ++i) {
      const std::string id = detail::frame_name(i);
      const auto frame = gen_scene(spec, id);
      write_velodyne((out / "velodyne" / (id + ".bin")).string(),
                     frame.points);
      write_calib((out / "calib" / (id + ".txt")).string(), frame.calib);
      std::vector<std::string> names;
      names.reserve(frame.gt_boxes.size());
      for (std::size_t b = 0; b < frame.gt_boxes.size(); ++b) {
        names.push_back(kTypeNames[b % static_cast<std::size_t>(spec.n_cls)]);
      }
      write_labels((out / "labels" / (id + ".txt")).string(), frame.gt_boxes,
                   names, frame.calib);
      write_detections((out / "detections" / (id + ".txt")).string(),
                       frame.detections);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// recode: per-frame label recoding over a directory, plus a summary CSV.
// Frames are matched across the four subdirectories by basename stem; a stem
// missing a required file is an error for that frame, never a silent skip.

inline int cmd_recode(const RunConfig& cfg, std::ostream& err) {
  namespace fs = std::filesystem;
  const fs::path in(cfg.input);
  const fs::path out(cfg.output);

  std::vector<std::string> stems = detail::list_stems(in / "velodyne", ".bin");
  detail::merge_stems(stems, detail::list_stems(in / "calib", ".txt"));
  detail::merge_stems(stems, detail::list_stems(in / "detections", ".txt"));
  detail::merge_stems(stems, detail::list_stems(in / "labels", ".txt"));

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    err << "error: cannot create output directory " << out.string() << "\n";
    return 1;
  }

  struct Row {
    std::string frame_id;
    std::size_t points_in = 0;
    std::size_t points_out = 0;
    std::size_t frusta = 0;
    double fg_fraction = 0.0;
  };
  std::vector<std::optional<Row>> rows(stems.size());
  std::vector<std::string> errors(stems.size());

  detail::parallel_for(stems.size(), cfg.jobs, [&](std::size_t i) {
    const std::string& stem = stems[i];
    try {
      const auto velodyne = in / "velodyne" / (stem + ".bin");
      const auto calib = in / "calib" / (stem + ".txt");
      const auto labels = in / "labels" / (stem + ".txt");
      const auto detections = in / "detections" / (stem + ".txt");
      for (const auto& [path, required] :
           {std::pair{velodyne, true},
            std::pair{calib, true},
            std::pair{detections, true},
            std::pair{labels, cfg.mode == RecodeMode::Train}}) {
        if (required && !fs::is_regular_file(path)) {
          throw Error(ErrorCode::MalformedFile,
                      "missing " + path.string());
        }
      }

      FrameBundle frame;
      frame.frame_id = stem;
      frame.points = read_velodyne(velodyne.string());
      frame.calib = read_calib(calib.string());
      frame.detections = read_detections(detections.string(), cfg.n_cls);
      if (fs::is_regular_file(labels)) {
        frame.gt_boxes = read_labels(labels.string(), frame.calib);
      }

      RecodeOpts opts;
      opts.mode = cfg.mode;
      opts.min_conf = cfg.min_conf;
      opts.seed = cfg.seed;
      const auto cloud = recode_frame(frame, opts);
      write_recoded((out / (stem + ".recoded")).string(), cloud);

      Row row;
      row.frame_id = stem;
      row.points_in = frame.points.size();
      row.points_out = cloud.points.size();
      row.frusta = group_by_index(cloud).size();
      std::size_t fg = 0;
      for (const auto& p : cloud.points) fg += p.seg_label == 1 ? 1 : 0;
      row.fg_fraction = cloud.points.empty()
                            ? 0.0
                            : static_cast<double>(fg) /
                                  static_cast<double>(cloud.points.size());
      rows[i] = std::move(row);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  bool any_error = false;
  for (std::size_t i = 0; i < stems.size(); ++i) {
    if (!errors[i].empty()) {
      any_error = true;
      err << "error: frame " << stems[i] << ": " << errors[i] << "\n";
    }
  }
  std::ostringstream csv;
  csv << "frame_id,points_in,points_out,frusta,fg_fraction\n";
  for (const auto& row : rows) {
    if (!row) continue;
    csv << row->frame_id << ',' << row->points_in << ',' << row->points_out
        << ',' << row->frusta << ',' << fmt_double(row->fg_fraction) << '\n';
  }
  write_file_text((out / "summary.csv").string(), csv.str());
  return any_error ? 1 : 0;
}

// ---------------------------------------------------------------------------
// train: fit the segmentation network (and optionally one fusion head) on a
// directory of recoded clouds. Writes the checkpoint and a per-epoch CSV whose
// last row holds the final full-dataset evaluation.

namespace detail {

inline std::vector<RecodedCloud> load_recoded_dir(const std::string& dir,
                                                  std::ostream& err,
                                                  bool* any_error) {
  std::vector<RecodedCloud> clouds;
  for (const auto& stem : list_stems(dir, ".recoded")) {
    const auto path = (fs::path(dir) / (stem + ".recoded")).string();
    try {
      clouds.push_back(read_recoded(path));
      if (clouds.size() > 1 &&
          clouds.back().base_channels != clouds.front().base_channels) {
        throw Error(ErrorCode::ShapeMismatch,
                    "frame has " +
                        std::to_string(clouds.back().base_channels) +
                        " base channels; expected " +
                        std::to_string(clouds.front().base_channels));
      }
    } catch (const std::exception& e) {
      *any_error = true;
      err << "error: frame " << stem << ": " << e.what() << "\n";
    }
  }
  return clouds;
}

inline std::string train_csv(const TrainReport& report) {
  std::ostringstream csv;
  csv << "epoch,loss,accuracy\n";
  for (std::size_t e = 0; e < report.epoch_loss.size(); ++e) {
    csv << (e + 1) << ',' << fmt_double(report.epoch_loss[e]) << ','
        << fmt_double(report.epoch_accuracy[e]) << '\n';
  }
  csv << "final," << fmt_double(report.final_loss) << ','
      << fmt_double(report.final_accuracy) << '\n';
  return csv.str();
}

}  // namespace detail

inline int cmd_train_seg(const RunConfig& cfg, std::ostream& err) {
  bool any_error = false;
  const auto clouds = detail::load_recoded_dir(cfg.input, err, &any_error);
  if (any_error) return 1;
  if (clouds.empty()) {
    err << "error: no recoded frames in " << cfg.input << "\n";
    return 1;
  }

  TrainOpts opts;
  opts.epochs = cfg.epochs;
  opts.lr = cfg.lr;
  opts.m = cfg.m;
  opts.seed = cfg.seed;
  opts.target_accuracy = cfg.target_accuracy;

  try {
    Rng init(cfg.seed);
    auto seg = SegNetParams::init(clouds.front().base_channels, cfg.n_cls, init);
    const auto report = train_seg(seg, clouds, opts);

    if (cfg.train_fusion_head) {
      if (cfg.fusion == FusionVariant::A) {
        save_model(cfg.checkpoint, seg);  // nothing to fit for the mask head
      } else {
        auto fusion = FusionParams::init(
            cfg.fusion, clouds.front().base_channels - 3, init);
        const auto fusion_report = train_fusion(seg, fusion, clouds, opts);
        err << "fusion head " << fusion_variant_name(cfg.fusion)
            << " accuracy " << fmt_double(fusion_report.final_accuracy)
            << "\n";
        save_model(cfg.checkpoint, seg, &fusion);
      }
    } else {
      save_model(cfg.checkpoint, seg);
    }
    if (!cfg.output.empty()) {
      write_file_text(cfg.output, detail::train_csv(report));
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// decorate: append semantic channels to every recoded frame in a directory.
// The checkpoint must hold exactly the parameters the selected variant needs
// (the segmentation block, then the fusion block).

inline int cmd_decorate(const RunConfig& cfg, std::ostream& err) {
  namespace fs = std::filesystem;
  const auto stems = detail::list_stems(cfg.input, ".recoded");
  std::vector<std::string> errors(stems.size());

  std::error_code ec;
  fs::create_directories(cfg.output, ec);
  if (ec) {
    err << "error: cannot create output directory " << cfg.output << "\n";
    return 1;
  }
  if (stems.empty()) return 0;

  // Model shapes come from the first frame; loading is strict about names
  // and shapes, so a checkpoint trained on different widths is rejected.
  SegNetParams seg;
  FusionParams fusion;
  try {
    const auto first = read_recoded(
        (fs::path(cfg.input) / (stems[0] + ".recoded")).string());
    Rng shape_rng(0);
    seg = SegNetParams::init(first.base_channels, cfg.n_cls, shape_rng);
    fusion = cfg.fusion == FusionVariant::A
                 ? FusionParams{}
                 : FusionParams::init(cfg.fusion, first.base_channels - 3,
                                      shape_rng);
    fusion.variant = cfg.fusion;
    auto refs = seg.named();
    for (auto& r : fusion.named()) refs.push_back(r);
    load_params(cfg.checkpoint, refs);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  detail::parallel_for(stems.size(), cfg.jobs, [&](std::size_t i) {
    try {
      const auto cloud = read_recoded(
          (fs::path(cfg.input) / (stems[i] + ".recoded")).string());
      const auto deco = decorate_cloud(cloud, seg, fusion, cfg.mask_source);
      write_decorated(
          (fs::path(cfg.output) / (stems[i] + ".decorated")).string(), deco);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  bool any_error = false;
  for (std::size_t i = 0; i < stems.size(); ++i) {
    if (!errors[i].empty()) {
      any_error = true;
      err << "error: frame " << stems[i] << ": " << errors[i] << "\n";
    }
  }
  return any_error ? 1 : 0;
}

// ---------------------------------------------------------------------------
// check: run the self-check suites and print one CSV line per check.

inline int cmd_check(const RunConfig& cfg, std::ostream& out) {
  auto results = run_all_checks(cfg.seed, cfg.fault);
  if (cfg.with_ordering) {
    auto ordering = run_variant_ordering(cfg.seed);
    for (auto& r : ordering.checks) results.push_back(std::move(r));
  }
  bool any_fail = false;
  out << "name,status,measured,tolerance\n";
  for (const auto& r : results) {
    any_fail = any_fail || !r.pass;
    out << r.name << ',' << (r.pass ? "pass" : "fail") << ','
        << fmt_double(r.measured) << ',' << fmt_double(r.tolerance) << '\n';
  }
  return any_fail ? 1 : 0;
}

}  // namespace pointdeco
