#pragma once

// Frustum grouping and batch construction: recoded points are regrouped by
// their detection index, optionally resampled to a fixed row count, and packed
// into matrices for the decoration networks.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "pointdeco/cloud.hpp"
#include "pointdeco/common.hpp"
#include "pointdeco/tensor.hpp"

namespace pointdeco {

struct Frustum {
  int index = 0;  // detection index within the frame
  int cls = 0;
  std::vector<RecodedPoint> points;  // original recoded order
};

// Splits a recoded cloud into per-detection frusta, ascending by detection
// index. Detections that kept no points simply produce no frustum.
inline std::vector<Frustum> group_by_index(const RecodedCloud& cloud) {
  std::vector<std::vector<RecodedPoint>> buckets(cloud.n_detections);
  std::vector<int> cls_of(cloud.n_detections, 0);
  for (const auto& p : cloud.points) {
    if (p.index_label < 0 ||
        p.index_label >= static_cast<int>(cloud.n_detections)) {
      throw Error(ErrorCode::MalformedFile,
                  "detection index " + std::to_string(p.index_label) +
                      " outside [0, " + std::to_string(cloud.n_detections) +
                      ") in frame " + cloud.frame_id);
    }
    buckets[p.index_label].push_back(p);
    cls_of[p.index_label] = p.cls_label;
  }
  std::vector<Frustum> out;
  for (std::uint32_t j = 0; j < cloud.n_detections; ++j) {
    if (buckets[j].empty()) continue;
    Frustum f;
    f.index = static_cast<int>(j);
    f.cls = cls_of[j];
    f.points = std::move(buckets[j]);
    out.push_back(std::move(f));
  }
  return out;
}

// Returns k row indices into a frustum of n points. Downsampling draws k
// distinct indices (partial Fisher-Yates) and emits them ascending, so the
// surviving points keep their original order; upsampling keeps all originals
// and appends uniformly drawn duplicates.
inline std::vector<int> resample_indices(int n, int k, Rng& rng) {
  if (n <= 0) {
    throw Error(ErrorCode::EmptyFrustum,
                "cannot resample an empty point set");
  }
  std::vector<int> idx;
  if (k <= n) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(uniform_below(
                            rng, static_cast<std::uint64_t>(n - i)));
      std::swap(pool[i], pool[j]);
    }
    idx.assign(pool.begin(), pool.begin() + k);
    std::sort(idx.begin(), idx.end());
  } else {
    idx.resize(k);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = n; i < k; ++i) {
      idx[i] = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(n)));
    }
  }
  return idx;
}

inline std::vector<double> one_hot(int cls, int n_cls) {
  if (cls < 0 || cls >= n_cls) {
    throw Error(ErrorCode::InvalidClass,
                "class " + std::to_string(cls) + " outside [0, " +
                    std::to_string(n_cls) + ")");
  }
  std::vector<double> v(n_cls, 0.0);
  v[cls] = 1.0;
  return v;
}

// Network-ready view of one frustum: point rows, per-row segmentation labels
// and the detection's class as a one-hot row vector.
struct FrustumBatch {
  Mat rows;                    // k x D, xyz centred on the frustum centroid
  Mat feats;                   // k x (D - 3), raw non-coordinate channels
  std::vector<int> seg_labels; // k
  Mat class_onehot;            // 1 x n_cls
  int index = 0;
  int cls = 0;
};

namespace detail {

// Centroid over the frustum's full point set, so resampled batches and
// full-frustum passes see the same coordinate frame.
inline void frustum_centroid(const Frustum& f, double& cx, double& cy,
                             double& cz) {
  cx = cy = cz = 0.0;
  for (const auto& p : f.points) {
    cx += p.base.x;
    cy += p.base.y;
    cz += p.base.z;
  }
  const double n = static_cast<double>(f.points.size());
  cx /= n;
  cy /= n;
  cz /= n;
}

inline FrustumBatch pack_rows(const Frustum& f, const std::vector<int>& idx,
                              int n_cls) {
  double cx, cy, cz;
  frustum_centroid(f, cx, cy, cz);
  const int feat_n = f.points.empty()
                         ? 0
                         : static_cast<int>(f.points[0].base.feats.size());
  FrustumBatch b;
  b.index = f.index;
  b.cls = f.cls;
  b.rows = Mat(static_cast<int>(idx.size()), 3 + feat_n);
  b.feats = Mat(static_cast<int>(idx.size()), feat_n);
  b.seg_labels.resize(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& p = f.points[idx[r]];
    b.rows.at(static_cast<int>(r), 0) = p.base.x - cx;
    b.rows.at(static_cast<int>(r), 1) = p.base.y - cy;
    b.rows.at(static_cast<int>(r), 2) = p.base.z - cz;
    for (int c = 0; c < feat_n; ++c) {
      b.rows.at(static_cast<int>(r), 3 + c) = p.base.feats[c];
      b.feats.at(static_cast<int>(r), c) = p.base.feats[c];
    }
    b.seg_labels[r] = p.seg_label;
  }
  const auto oh = one_hot(f.cls, n_cls);
  b.class_onehot = Mat(1, n_cls);
  for (int c = 0; c < n_cls; ++c) b.class_onehot.at(0, c) = oh[c];
  return b;
}

}  // namespace detail

// Batch with exactly k rows, resampled from the frustum.
inline FrustumBatch build_batch(const Frustum& f, int k, int n_cls, Rng& rng) {
  const auto idx = resample_indices(static_cast<int>(f.points.size()), k, rng);
  return detail::pack_rows(f, idx, n_cls);
}

// Batch over every point of the frustum in order (deterministic; used for
// evaluation and decoration).
inline FrustumBatch build_full(const Frustum& f, int n_cls) {
  if (f.points.empty()) {
    throw Error(ErrorCode::EmptyFrustum, "frustum has no points");
  }
  std::vector<int> idx(f.points.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return detail::pack_rows(f, idx, n_cls);
}

// Contiguous stack of equally shaped per-frustum row matrices along a leading
// batch dimension; unstacking recovers the inputs exactly.
struct StackedBatch {
  int count = 0;
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // count * rows * cols, row-major per matrix
};

inline StackedBatch stack_batch(const std::vector<Mat>& mats) {
  StackedBatch out;
  out.count = static_cast<int>(mats.size());
  if (mats.empty()) return out;
  out.rows = mats[0].rows;
  out.cols = mats[0].cols;
  out.data.reserve(mats.size() * mats[0].d.size());
  for (const auto& m : mats) {
    if (m.rows != out.rows || m.cols != out.cols) {
      throw Error(ErrorCode::ShapeMismatch,
                  "stack_batch requires equal shapes: got " +
                      std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                      " vs " + std::to_string(out.rows) + "x" +
                      std::to_string(out.cols));
    }
    out.data.insert(out.data.end(), m.d.begin(), m.d.end());
  }
  return out;
}

inline std::vector<Mat> unstack_batch(const StackedBatch& b) {
  std::vector<Mat> mats;
  mats.reserve(b.count);
  const std::size_t stride =
      static_cast<std::size_t>(b.rows) * static_cast<std::size_t>(b.cols);
  for (int i = 0; i < b.count; ++i) {
    Mat m(b.rows, b.cols);
    std::copy(b.data.begin() + static_cast<std::ptrdiff_t>(i * stride),
              b.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride),
              m.d.begin());
    mats.push_back(std::move(m));
  }
  return mats;
}

}  // namespace pointdeco
