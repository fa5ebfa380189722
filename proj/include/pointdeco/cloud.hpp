#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointdeco/geom.hpp"

namespace pointdeco {

// One scene's worth of inputs: raw cloud, calibration, ground-truth 3D boxes
// and 2D detections.
struct FrameBundle {
  std::string frame_id;
  std::vector<Point3> points;
  Calib calib;
  std::vector<Box3D> gt_boxes;
  std::vector<Box2D> detections;
  int point_channels = 4;  // D; kept explicit so empty clouds stay typed
};

// A point widened with the three label channels. cls_label is the class of
// the detection whose frustum the point joined; -1 (background) can never
// appear because points outside every detection are dropped at recode time.
struct RecodedPoint {
  Point3 base;
  int seg_label = 0;    // 1 iff inside any ground-truth 3D box
  int cls_label = 0;    // detection class
  int index_label = 0;  // surviving-detection index within the frame
};

inline bool operator==(const RecodedPoint& a, const RecodedPoint& b) {
  return a.base.x == b.base.x && a.base.y == b.base.y && a.base.z == b.base.z &&
         a.base.feats == b.base.feats && a.seg_label == b.seg_label &&
         a.cls_label == b.cls_label && a.index_label == b.index_label;
}

struct RecodedCloud {
  std::string frame_id;
  int base_channels = 4;  // D
  std::uint32_t n_detections = 0;  // detections surviving the confidence filter
  std::vector<RecodedPoint> points;

  int channels() const { return base_channels + 3; }
};

// Points carrying their original channels plus the semantic features appended
// by the decoration network. Rows are stored flat, frustum by frustum.
struct DecoratedCloud {
  std::string frame_id;
  int base_channels = 4;
  int semantic_channels = 16;
  std::vector<double> rows;  // count * (base + semantic), row-major

  int channels() const { return base_channels + semantic_channels; }
  std::size_t count() const {
    const auto c = static_cast<std::size_t>(channels());
    return c == 0 ? 0 : rows.size() / c;
  }
};

inline bool operator==(const DecoratedCloud& a, const DecoratedCloud& b) {
  return a.frame_id == b.frame_id && a.base_channels == b.base_channels &&
         a.semantic_channels == b.semantic_channels && a.rows == b.rows;
}

}  // namespace pointdeco
