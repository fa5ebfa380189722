#pragma once

// Offline recoding: lift 2D detections into the cloud by keeping only points
// that project inside a (mode-dependent) enlargement of some surviving
// detection box, and widen each kept point with segmentation, class and
// detection-index labels. Output is grouped detection by detection, points in
// original cloud order within a group; a point under several boxes appears
// once per box.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pointdeco/cloud.hpp"
#include "pointdeco/common.hpp"
#include "pointdeco/geom.hpp"

namespace pointdeco {

enum class RecodeMode { Train, Infer };

struct RecodeOpts {
  RecodeMode mode = RecodeMode::Infer;
  double min_conf = 0.1;   // detections below this are discarded (>= keeps)
  std::uint64_t seed = 0;  // train-mode jitter stream
};

constexpr double kInferEnlargeFrac = 0.05;
constexpr double kTrainJitterMax = 0.10;

// Train-mode box enlargement: width and height are independently scaled by
// 1 + u with u ~ U[0, 0.10]. The draw protocol is part of the recoding
// contract (it is what makes train runs reproducible): a fresh generator is
// seeded with derive_seed(seed, frame_id), then for each surviving detection
// in order one width fraction is drawn before one height fraction.
inline std::vector<Box2D> train_jitter(const std::vector<Box2D>& survivors,
                                       const std::string& frame_id,
                                       std::uint64_t seed) {
  Rng rng(derive_seed(seed, frame_id));
  std::vector<Box2D> out;
  out.reserve(survivors.size());
  for (const auto& det : survivors) {
    const double frac_w = kTrainJitterMax * uniform01(rng);
    const double frac_h = kTrainJitterMax * uniform01(rng);
    out.push_back(enlarge_box2d(det, frac_w, frac_h));
  }
  return out;
}

// Inference-mode enlargement: fixed 5% on both axes.
inline std::vector<Box2D> infer_enlarge(const std::vector<Box2D>& survivors) {
  std::vector<Box2D> out;
  out.reserve(survivors.size());
  for (const auto& det : survivors) {
    out.push_back(enlarge_box2d(det, kInferEnlargeFrac, kInferEnlargeFrac));
  }
  return out;
}

// 1 iff the point lies inside (or on the boundary of) any ground-truth box.
inline int assign_seg_label(const Point3& p, const std::vector<Box3D>& gt) {
  for (const auto& box : gt) {
    if (point_in_box3d(p, box)) return 1;
  }
  return 0;
}

inline RecodedCloud recode_frame(const FrameBundle& frame,
                                 const RecodeOpts& opts) {
  const auto survivors = filter_detections(frame.detections, opts.min_conf);
  const auto boxes = opts.mode == RecodeMode::Train
                         ? train_jitter(survivors, frame.frame_id, opts.seed)
                         : infer_enlarge(survivors);

  const int n = static_cast<int>(frame.points.size());

  // Each point is projected exactly once and labelled lazily on first use, so
  // the frame costs O(points * detections) plus one box test per ground-truth
  // box per point that actually lands in some detection.
  std::vector<std::optional<Pixel>> pixels(n);
  for (int i = 0; i < n; ++i) {
    pixels[i] = project_point(frame.calib, frame.points[i]);
  }
  std::vector<signed char> seg_cache(n, -1);

  RecodedCloud cloud;
  cloud.frame_id = frame.frame_id;
  cloud.base_channels = frame.point_channels;
  cloud.n_detections = static_cast<std::uint32_t>(survivors.size());
  for (std::size_t j = 0; j < boxes.size(); ++j) {
    for (int i = 0; i < n; ++i) {
      if (!pixels[i] || !point_in_box2d(*pixels[i], boxes[j])) continue;
      if (seg_cache[i] < 0) {
        seg_cache[i] = static_cast<signed char>(
            assign_seg_label(frame.points[i], frame.gt_boxes));
      }
      RecodedPoint p;
      p.base = frame.points[i];
      p.seg_label = seg_cache[i];
      p.cls_label = survivors[j].cls;
      p.index_label = static_cast<int>(j);
      cloud.points.push_back(std::move(p));
    }
  }
  return cloud;
}

}  // namespace pointdeco
