#pragma once

// Synthetic scenes and brute-force oracles. gen_scene builds fully known
// frames (points, boxes, calibration, detections) from a seeded spec;
// oracle_recode and oracle_contains re-derive the recoding and containment
// answers naively and independently of the production path, so tests can
// compare the two implementations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pointdeco/cloud.hpp"
#include "pointdeco/common.hpp"
#include "pointdeco/geom.hpp"
#include "pointdeco/io.hpp"
#include "pointdeco/recode.hpp"

namespace pointdeco {

// ---------------------------------------------------------------------------
// Scene specification, serialised as `key=value` lines ('#' starts a comment).

struct SceneSpec {
  std::uint64_t seed = 1;
  int n_objects = 3;
  int n_cls = 3;          // object classes cycle 0,1,2,...
  double fg_density = 60.0;   // points per cubic meter inside each box
  double bg_density = 0.4;    // points per cubic meter of clutter in the slab
  double noise_px = 0.0;      // sigma of Gaussian noise per detection edge
  double fg_reflect_lo = 0.55, fg_reflect_hi = 1.0;
  double bg_reflect_lo = 0.0, bg_reflect_hi = 0.5;
  double box_len_lo = 2.6, box_len_hi = 4.6;
  double box_wid_lo = 1.5, box_wid_hi = 2.0;
  double box_hgt_lo = 1.3, box_hgt_hi = 1.9;
  double slab_x_lo = 8.0, slab_x_hi = 28.0;  // box-center placement volume
  double slab_y_lo = -8.0, slab_y_hi = 8.0;
  double slab_z_lo = -1.0, slab_z_hi = 1.4;
  double focal = 350.0, cx = 320.0, cy = 180.0;  // pinhole intrinsics
};

inline SceneSpec parse_scene_spec(const std::string& text,
                                  const std::string& what) {
  SceneSpec s;
  for (const auto& raw : split_lines(text)) {
    const auto hash = raw.find('#');
    const std::string line =
        hash == std::string::npos ? raw : raw.substr(0, hash);
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 1 || toks[0].find('=') == std::string::npos) {
      throw Error(ErrorCode::MalformedLine,
                  what + ": expected key=value, got '" + raw + "'");
    }
    const auto eq = toks[0].find('=');
    const std::string key = toks[0].substr(0, eq);
    const std::string val = toks[0].substr(eq + 1);
    const double v = parse_double(val, what + " key " + key);
    if (key == "seed") s.seed = static_cast<std::uint64_t>(parse_int(val, what));
    else if (key == "n_objects") s.n_objects = static_cast<int>(v);
    else if (key == "n_cls") s.n_cls = static_cast<int>(v);
    else if (key == "fg_density") s.fg_density = v;
    else if (key == "bg_density") s.bg_density = v;
    else if (key == "noise_px") s.noise_px = v;
    else if (key == "fg_reflect_lo") s.fg_reflect_lo = v;
    else if (key == "fg_reflect_hi") s.fg_reflect_hi = v;
    else if (key == "bg_reflect_lo") s.bg_reflect_lo = v;
    else if (key == "bg_reflect_hi") s.bg_reflect_hi = v;
    else if (key == "box_len_lo") s.box_len_lo = v;
    else if (key == "box_len_hi") s.box_len_hi = v;
    else if (key == "box_wid_lo") s.box_wid_lo = v;
    else if (key == "box_wid_hi") s.box_wid_hi = v;
    else if (key == "box_hgt_lo") s.box_hgt_lo = v;
    else if (key == "box_hgt_hi") s.box_hgt_hi = v;
    else if (key == "slab_x_lo") s.slab_x_lo = v;
    else if (key == "slab_x_hi") s.slab_x_hi = v;
    else if (key == "slab_y_lo") s.slab_y_lo = v;
    else if (key == "slab_y_hi") s.slab_y_hi = v;
    else if (key == "slab_z_lo") s.slab_z_lo = v;
    else if (key == "slab_z_hi") s.slab_z_hi = v;
    else if (key == "focal") s.focal = v;
    else if (key == "cx") s.cx = v;
    else if (key == "cy") s.cy = v;
    else {
      throw Error(ErrorCode::MalformedLine,
                  what + ": unknown key '" + key + "'");
    }
  }
  return s;
}

inline SceneSpec read_scene_spec(const std::string& path) {
  return parse_scene_spec(read_file_text(path), path);
}

inline std::string format_scene_spec(const SceneSpec& s) {
  std::string out;
  auto kv = [&out](const char* k, double v) {
    out += k;
    out += '=';
    out += fmt_double(v);
    out += '\n';
  };
  kv("seed", static_cast<double>(s.seed));
  kv("n_objects", s.n_objects);
  kv("n_cls", s.n_cls);
  kv("fg_density", s.fg_density);
  kv("bg_density", s.bg_density);
  kv("noise_px", s.noise_px);
  kv("fg_reflect_lo", s.fg_reflect_lo);
  kv("fg_reflect_hi", s.fg_reflect_hi);
  kv("bg_reflect_lo", s.bg_reflect_lo);
  kv("bg_reflect_hi", s.bg_reflect_hi);
  kv("box_len_lo", s.box_len_lo);
  kv("box_len_hi", s.box_len_hi);
  kv("box_wid_lo", s.box_wid_lo);
  kv("box_wid_hi", s.box_wid_hi);
  kv("box_hgt_lo", s.box_hgt_lo);
  kv("box_hgt_hi", s.box_hgt_hi);
  kv("slab_x_lo", s.slab_x_lo);
  kv("slab_x_hi", s.slab_x_hi);
  kv("slab_y_lo", s.slab_y_lo);
  kv("slab_y_hi", s.slab_y_hi);
  kv("slab_z_lo", s.slab_z_lo);
  kv("slab_z_hi", s.slab_z_hi);
  kv("focal", s.focal);
  kv("cx", s.cx);
  kv("cy", s.cy);
  return out;
}

// Canonical camera: cloud x-forward / y-left / z-up viewed by a camera with
// x-right / y-down / z-forward and no translation.
inline Calib canonical_calib(const SceneSpec& s) {
  Calib c;
  c.T = {0, -1, 0, 0,
         0, 0, -1, 0,
         1, 0, 0, 0,
         0, 0, 0, 1};
  c.C = {s.focal, 0, s.cx, 0,
         0, s.focal, s.cy, 0,
         0, 0, 1, 0};
  return c;
}

// Per-point generation truth: which object each point was sampled from.
struct SceneTruth {
  std::vector<int> point_box;  // object index, or -1 for background clutter
};

namespace detail {

// Margin keeping sampled points strictly off box faces, so float32 rounding
// and independent containment formulations cannot disagree about membership.
constexpr double kFaceMargin = 1e-4;

inline bool near_box(const Box3D& b, double x, double y, double z,
                     double margin) {
  const double dx = x - b.cx;
  const double dy = y - b.cy;
  const double c = std::cos(b.ry);
  const double s = std::sin(b.ry);
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= b.l / 2 + margin && std::abs(ly) <= b.w / 2 + margin &&
         std::abs(z - b.cz) <= b.h / 2 + margin;
}

}  // namespace detail

// Deterministic scene builder. Draw order is fixed: per object its dimensions,
// center, yaw (re-drawn until boxes are pairwise disjoint), then per object
// its foreground points, then the background clutter, then per detection four
// edge-noise values and a confidence. All persisted scalars are rounded to
// float32-representable values at creation, so writing the frame to disk and
// reading it back reproduces the in-memory points bit-exactly.
inline FrameBundle gen_scene(const SceneSpec& spec, const std::string& frame_id,
                             SceneTruth* truth = nullptr) {
  const double max_half_diag =
      0.5 * std::sqrt(spec.box_len_hi * spec.box_len_hi +
                      spec.box_wid_hi * spec.box_wid_hi +
                      spec.box_hgt_hi * spec.box_hgt_hi);
  if (spec.slab_x_lo - max_half_diag <= 0.5) {
    throw Error(ErrorCode::MalformedLine,
                "scene spec places boxes too close to the camera plane");
  }

  Rng rng(derive_seed(spec.seed, frame_id));
  FrameBundle frame;
  frame.frame_id = frame_id;
  frame.calib = canonical_calib(spec);
  frame.point_channels = 4;

  // Objects: rejection-sample centers until pairwise disjoint (bounding
  // spheres), giving up after 100 attempts per object.
  for (int i = 0; i < spec.n_objects; ++i) {
    Box3D box;
    for (int attempt = 0; attempt < 100; ++attempt) {
      box.l = to_f32(uniform_in(rng, spec.box_len_lo, spec.box_len_hi));
      box.w = to_f32(uniform_in(rng, spec.box_wid_lo, spec.box_wid_hi));
      box.h = to_f32(uniform_in(rng, spec.box_hgt_lo, spec.box_hgt_hi));
      box.cx = to_f32(uniform_in(rng, spec.slab_x_lo, spec.slab_x_hi));
      box.cy = to_f32(uniform_in(rng, spec.slab_y_lo, spec.slab_y_hi));
      box.cz = to_f32(uniform_in(rng, spec.slab_z_lo, spec.slab_z_hi));
      box.ry = to_f32(uniform_in(rng, -3.14159, 3.14159));
      const double r1 = 0.5 * std::sqrt(box.l * box.l + box.w * box.w +
                                        box.h * box.h);
      bool clear = true;
      for (const auto& other : frame.gt_boxes) {
        const double r2 = 0.5 * std::sqrt(other.l * other.l +
                                          other.w * other.w +
                                          other.h * other.h);
        const double dx = box.cx - other.cx;
        const double dy = box.cy - other.cy;
        const double dz = box.cz - other.cz;
        if (std::sqrt(dx * dx + dy * dy + dz * dz) <= r1 + r2) {
          clear = false;
          break;
        }
      }
      if (clear) break;
    }
    frame.gt_boxes.push_back(box);
  }

  // Foreground points, object by object.
  for (std::size_t i = 0; i < frame.gt_boxes.size(); ++i) {
    const auto& b = frame.gt_boxes[i];
    const long count = std::lround(spec.fg_density * b.l * b.w * b.h);
    const double c = std::cos(b.ry);
    const double s = std::sin(b.ry);
    for (long k = 0; k < count; ++k) {
      const double hl = b.l / 2 - detail::kFaceMargin;
      const double hw = b.w / 2 - detail::kFaceMargin;
      const double hh = b.h / 2 - detail::kFaceMargin;
      const double lx = uniform_in(rng, -hl, hl);
      const double ly = uniform_in(rng, -hw, hw);
      const double lz = uniform_in(rng, -hh, hh);
      Point3 p;
      p.x = to_f32(b.cx + c * lx - s * ly);
      p.y = to_f32(b.cy + s * lx + c * ly);
      p.z = to_f32(b.cz + lz);
      p.feats = {to_f32(uniform_in(rng, spec.fg_reflect_lo,
                                   spec.fg_reflect_hi))};
      frame.points.push_back(std::move(p));
      if (truth) truth->point_box.push_back(static_cast<int>(i));
    }
  }

  // Background clutter in the slab, kept a margin away from every box.
  {
    const double vol = (spec.slab_x_hi - spec.slab_x_lo) *
                       (spec.slab_y_hi - spec.slab_y_lo) *
                       (spec.slab_z_hi - spec.slab_z_lo);
    const long count = std::lround(spec.bg_density * vol);
    for (long k = 0; k < count; ++k) {
      double x = 0, y = 0, z = 0;
      for (int attempt = 0; attempt < 1000; ++attempt) {
        x = uniform_in(rng, spec.slab_x_lo, spec.slab_x_hi);
        y = uniform_in(rng, spec.slab_y_lo, spec.slab_y_hi);
        z = uniform_in(rng, spec.slab_z_lo, spec.slab_z_hi);
        bool outside = true;
        for (const auto& b : frame.gt_boxes) {
          if (detail::near_box(b, x, y, z, detail::kFaceMargin)) {
            outside = false;
            break;
          }
        }
        if (outside) break;
      }
      Point3 p;
      p.x = to_f32(x);
      p.y = to_f32(y);
      p.z = to_f32(z);
      p.feats = {to_f32(uniform_in(rng, spec.bg_reflect_lo,
                                   spec.bg_reflect_hi))};
      frame.points.push_back(std::move(p));
      if (truth) truth->point_box.push_back(-1);
    }
  }

  // Detections: pixel-space bounding rectangle of each box's projected
  // corners, then independent Gaussian noise on each edge.
  for (std::size_t i = 0; i < frame.gt_boxes.size(); ++i) {
    const auto corners = box3d_corners(frame.gt_boxes[i]);
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    bool first = true;
    for (const auto& c : corners) {
      const auto px = project_point(frame.calib, c);
      if (!px) {
        throw Error(ErrorCode::MalformedLine,
                    "generated box projects behind the camera; widen the "
                    "slab x range");
      }
      if (first) {
        x1 = x2 = px->u;
        y1 = y2 = px->v;
        first = false;
      } else {
        x1 = std::min(x1, px->u);
        y1 = std::min(y1, px->v);
        x2 = std::max(x2, px->u);
        y2 = std::max(y2, px->v);
      }
    }
    Box2D det;
    det.x1 = x1 + gaussian(rng, 0.0, spec.noise_px);
    det.y1 = y1 + gaussian(rng, 0.0, spec.noise_px);
    det.x2 = x2 + gaussian(rng, 0.0, spec.noise_px);
    det.y2 = y2 + gaussian(rng, 0.0, spec.noise_px);
    if (det.x1 > det.x2) std::swap(det.x1, det.x2);
    if (det.y1 > det.y2) std::swap(det.y1, det.y2);
    det.cls = static_cast<int>(i) % spec.n_cls;
    det.conf = uniform_in(rng, 0.15, 1.0);
    frame.detections.push_back(det);
  }
  return frame;
}

// ---------------------------------------------------------------------------
// Containment oracle: signed-distance test against the six face planes built
// from the box's corner points (shares only box3d_corners with production).

inline bool oracle_contains(const Point3& p, const Box3D& b) {
  const auto c = box3d_corners(b);
  // Corner layout: 0..3 bottom face, 4..7 top face, vertically aligned.
  static constexpr int kFaces[6][3] = {
      {0, 1, 2},  // bottom
      {4, 7, 6},  // top
      {0, 4, 5},  // side 0-1
      {1, 5, 6},  // side 1-2
      {2, 6, 7},  // side 2-3
      {3, 7, 4},  // side 3-0
  };
  double ccx = 0, ccy = 0, ccz = 0;
  for (const auto& q : c) {
    ccx += q.x / 8;
    ccy += q.y / 8;
    ccz += q.z / 8;
  }
  for (const auto& f : kFaces) {
    const auto& a = c[f[0]];
    const auto& q = c[f[1]];
    const auto& r = c[f[2]];
    const double e1x = q.x - a.x, e1y = q.y - a.y, e1z = q.z - a.z;
    const double e2x = r.x - a.x, e2y = r.y - a.y, e2z = r.z - a.z;
    double nx = e1y * e2z - e1z * e2y;
    double ny = e1z * e2x - e1x * e2z;
    double nz = e1x * e2y - e1y * e2x;
    // Orient the normal away from the box centroid.
    if (nx * (ccx - a.x) + ny * (ccy - a.y) + nz * (ccz - a.z) > 0) {
      nx = -nx;
      ny = -ny;
      nz = -nz;
    }
    if (nx * (p.x - a.x) + ny * (p.y - a.y) + nz * (p.z - a.z) > 0) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Brute-force recoder: a deliberately naive O(points * detections * boxes)
// re-derivation of the recoding contract with its own projection, containment
// and enlargement arithmetic. Only the documented jitter draw protocol is
// shared knowledge with production.

inline RecodedCloud oracle_recode(const FrameBundle& frame,
                                  const RecodeOpts& opts) {
  // Confidence filter (>= keeps), preserving order.
  std::vector<Box2D> survivors;
  for (const auto& d : frame.detections) {
    if (d.conf >= opts.min_conf) survivors.push_back(d);
  }

  // Enlargement fractions per surviving detection.
  std::vector<std::pair<double, double>> fracs(survivors.size(), {0.05, 0.05});
  if (opts.mode == RecodeMode::Train) {
    Rng rng(derive_seed(opts.seed, frame.frame_id));
    for (auto& f : fracs) {
      f.first = 0.10 * uniform01(rng);
      f.second = 0.10 * uniform01(rng);
    }
  }

  RecodedCloud cloud;
  cloud.frame_id = frame.frame_id;
  cloud.base_channels = frame.point_channels;
  cloud.n_detections = static_cast<std::uint32_t>(survivors.size());

  for (std::size_t j = 0; j < survivors.size(); ++j) {
    const auto& d = survivors[j];
    const double mx = (d.x1 + d.x2) / 2.0;
    const double my = (d.y1 + d.y2) / 2.0;
    const double hw = (d.x2 - d.x1) / 2.0 * (1.0 + fracs[j].first);
    const double hh = (d.y2 - d.y1) / 2.0 * (1.0 + fracs[j].second);
    for (const auto& p : frame.points) {
      // Independent projection: camera coordinates row by row.
      const auto& T = frame.calib.T;
      const double cx = T[0] * p.x + T[1] * p.y + T[2] * p.z + T[3];
      const double cy = T[4] * p.x + T[5] * p.y + T[6] * p.z + T[7];
      const double cz = T[8] * p.x + T[9] * p.y + T[10] * p.z + T[11];
      const double cw = T[12] * p.x + T[13] * p.y + T[14] * p.z + T[15];
      if (cz <= 0.0) continue;  // behind the camera
      const auto& C = frame.calib.C;
      const double r0 = C[0] * cx + C[1] * cy + C[2] * cz + C[3] * cw;
      const double r1 = C[4] * cx + C[5] * cy + C[6] * cz + C[7] * cw;
      const double r2 = C[8] * cx + C[9] * cy + C[10] * cz + C[11] * cw;
      const double u = r0 / r2;
      const double v = r1 / r2;
      if (u < mx - hw || u > mx + hw || v < my - hh || v > my + hh) continue;
      RecodedPoint rp;
      rp.base = p;
      rp.seg_label = 0;
      for (const auto& gt : frame.gt_boxes) {
        if (oracle_contains(p, gt)) {
          rp.seg_label = 1;
          break;
        }
      }
      rp.cls_label = d.cls;
      rp.index_label = static_cast<int>(j);
      cloud.points.push_back(std::move(rp));
    }
  }
  return cloud;
}

}  // namespace pointdeco
