#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "pointdeco/common.hpp"

namespace pointdeco {

// A LiDAR return: xyz in meters plus any extra scalar channels (reflectance
// for KITTI-style input, so D = 3 + feats.size() = 4).
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  std::vector<double> feats;

  Point3() = default;
  Point3(double x_, double y_, double z_, std::vector<double> feats_ = {})
      : x(x_), y(y_), z(z_), feats(std::move(feats_)) {}

  int channels() const { return 3 + static_cast<int>(feats.size()); }
};

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

// T: 4x4 LiDAR -> rectified-camera transform, row-major.
// C: 3x4 camera projection matrix, row-major.
struct Calib {
  std::array<double, 16> T{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  std::array<double, 12> C{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
};

struct Box2D {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
  int cls = 0;
  double conf = 1.0;
};

// Oriented 3D box, center-anchored in the LiDAR frame; ry is yaw about the
// vertical (z) axis, l along the heading, w across, h up.
struct Box3D {
  double cx = 0.0;
  double cy = 0.0;
  double cz = 0.0;
  double h = 1.0;
  double w = 1.0;
  double l = 1.0;
  double ry = 0.0;
};

// --- small fixed-size matrix helpers (row-major) ---------------------------

inline std::array<double, 4> mat4_apply(const std::array<double, 16>& m, double x, double y,
                                        double z, double w = 1.0) {
  std::array<double, 4> r{};
  const double in[4] = {x, y, z, w};
  for (int i = 0; i < 4; ++i) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) s += m[static_cast<std::size_t>(i * 4 + j)] * in[j];
    r[static_cast<std::size_t>(i)] = s;
  }
  return r;
}

inline std::array<double, 16> mat4_mul(const std::array<double, 16>& a,
                                       const std::array<double, 16>& b) {
  std::array<double, 16> r{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k)
        s += a[static_cast<std::size_t>(i * 4 + k)] * b[static_cast<std::size_t>(k * 4 + j)];
      r[static_cast<std::size_t>(i * 4 + j)] = s;
    }
  return r;
}

// Gauss-Jordan with partial pivoting; throws on singular input.
inline std::array<double, 16> mat4_inverse(const std::array<double, 16>& m) {
  double a[4][8];
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      a[i][j] = m[static_cast<std::size_t>(i * 4 + j)];
      a[i][j + 4] = (i == j) ? 1.0 : 0.0;
    }
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-14)
      throw Error(ErrorCode::MalformedMatrix, "singular 4x4 matrix");
    if (pivot != col)
      for (int j = 0; j < 8; ++j) std::swap(a[pivot][j], a[col][j]);
    const double inv = 1.0 / a[col][col];
    for (int j = 0; j < 8; ++j) a[col][j] *= inv;
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (int j = 0; j < 8; ++j) a[r][j] -= f * a[col][j];
    }
  }
  std::array<double, 16> out{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) out[static_cast<std::size_t>(i * 4 + j)] = a[i][j + 4];
  return out;
}

// --- operations -------------------------------------------------------------

// Pinhole projection u = C.row0*q / C.row2*q, v = C.row1*q / C.row2*q with
// q = T*[x y z 1]. Returns nullopt when the point is behind the camera
// (camera-frame depth <= 0); such points belong to no frustum.
inline std::optional<Pixel> project_point(const Calib& calib, const Point3& p) {
  const auto q = mat4_apply(calib.T, p.x, p.y, p.z);
  if (q[2] <= 0.0) return std::nullopt;
  double row[3];
  for (int i = 0; i < 3; ++i)
    row[i] = calib.C[static_cast<std::size_t>(i * 4 + 0)] * q[0] +
             calib.C[static_cast<std::size_t>(i * 4 + 1)] * q[1] +
             calib.C[static_cast<std::size_t>(i * 4 + 2)] * q[2] +
             calib.C[static_cast<std::size_t>(i * 4 + 3)] * q[3];
  return Pixel{row[0] / row[2], row[1] / row[2]};
}

// Closed intervals on all four edges.
inline bool point_in_box2d(const Pixel& px, const Box2D& b) {
  return px.u >= b.x1 && px.u <= b.x2 && px.v >= b.y1 && px.v <= b.y2;
}

// Containment in the box-local frame: |x'| <= l/2, |y'| <= w/2, |z'| <= h/2
// after undoing the yaw. Closed on the faces.
inline bool point_in_box3d(const Point3& p, const Box3D& b) {
  const double dx = p.x - b.cx;
  const double dy = p.y - b.cy;
  const double dz = p.z - b.cz;
  const double c = std::cos(b.ry);
  const double s = std::sin(b.ry);
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= b.l * 0.5 && std::abs(ly) <= b.w * 0.5 && std::abs(dz) <= b.h * 0.5;
}

// Corners in LiDAR frame: bottom face first, counter-clockwise from
// (-l/2, -w/2), then the top face in the same order.
inline std::array<Point3, 8> box3d_corners(const Box3D& b) {
  const double c = std::cos(b.ry);
  const double s = std::sin(b.ry);
  const double hl = b.l * 0.5, hw = b.w * 0.5, hh = b.h * 0.5;
  constexpr int sx[8] = {-1, 1, 1, -1, -1, 1, 1, -1};
  constexpr int sy[8] = {-1, -1, 1, 1, -1, -1, 1, 1};
  constexpr int sz[8] = {-1, -1, -1, -1, 1, 1, 1, 1};
  std::array<Point3, 8> out;
  for (int i = 0; i < 8; ++i) {
    const double lx = sx[i] * hl;
    const double ly = sy[i] * hw;
    out[static_cast<std::size_t>(i)] =
        Point3{b.cx + c * lx - s * ly, b.cy + s * lx + c * ly, b.cz + sz[i] * hh};
  }
  return out;
}

// Scales width/height by (1 + frac) about the box center; class and
// confidence pass through.
inline Box2D enlarge_box2d(const Box2D& b, double frac_w, double frac_h) {
  const double cx = (b.x1 + b.x2) * 0.5;
  const double cy = (b.y1 + b.y2) * 0.5;
  const double hw = (b.x2 - b.x1) * 0.5 * (1.0 + frac_w);
  const double hh = (b.y2 - b.y1) * 0.5 * (1.0 + frac_h);
  Box2D out = b;
  out.x1 = cx - hw;
  out.x2 = cx + hw;
  out.y1 = cy - hh;
  out.y2 = cy + hh;
  return out;
}

// Order-preserving; keeps conf >= min_conf ("lower than" is discarded, the
// boundary survives).
inline std::vector<Box2D> filter_detections(const std::vector<Box2D>& dets, double min_conf) {
  std::vector<Box2D> out;
  out.reserve(dets.size());
  for (const auto& d : dets)
    if (d.conf >= min_conf) out.push_back(d);
  return out;
}

}  // namespace pointdeco
