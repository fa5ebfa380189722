#pragma once

// File formats: KITTI-style velodyne/calib/label/detection files plus the
// project's own little-endian binary containers for recoded clouds, decorated
// clouds and network checkpoints. All float payloads are 32-bit; writers are
// deterministic byte-for-byte.

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pointdeco/cloud.hpp"
#include "pointdeco/common.hpp"
#include "pointdeco/geom.hpp"
#include "pointdeco/tensor.hpp"

namespace pointdeco {

// ---------------------------------------------------------------------------
// Low-level byte helpers (explicit little-endian, host-order independent).

inline void put_u32le(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  buf.push_back(static_cast<std::uint8_t>(v & 0xff));
  buf.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  buf.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  buf.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline void put_u64le(std::vector<std::uint8_t>& buf, std::uint64_t v) {
  put_u32le(buf, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32le(buf, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32le(std::vector<std::uint8_t>& buf, double v) {
  put_u32le(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

// Cursor over an in-memory file image; every get_* throws MalformedFile on
// truncation so callers never read past the end.
struct ByteReader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
  std::string what;  // file name, for error messages

  void need(std::size_t n) const {
    if (pos + n > buf.size()) {
      throw Error(ErrorCode::MalformedFile, what + ": truncated file");
    }
  }
  std::uint32_t get_u32le() {
    need(4);
    std::uint32_t v = static_cast<std::uint32_t>(buf[pos]) |
                      (static_cast<std::uint32_t>(buf[pos + 1]) << 8) |
                      (static_cast<std::uint32_t>(buf[pos + 2]) << 16) |
                      (static_cast<std::uint32_t>(buf[pos + 3]) << 24);
    pos += 4;
    return v;
  }
  std::uint64_t get_u64le() {
    const std::uint64_t lo = get_u32le();
    const std::uint64_t hi = get_u32le();
    return lo | (hi << 32);
  }
  double get_f32le() { return std::bit_cast<float>(get_u32le()); }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  bool at_end() const { return pos == buf.size(); }
};

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::MalformedFile, path + ": cannot open for reading");
  }
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  return buf;
}

inline void write_file_bytes(const std::string& path,
                             const std::vector<std::uint8_t>& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::MalformedFile, path + ": cannot open for writing");
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) {
    throw Error(ErrorCode::MalformedFile, path + ": write failed");
  }
}

inline std::string read_file_text(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

inline void write_file_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::MalformedFile, path + ": cannot open for writing");
  }
  out << text;
  if (!out) {
    throw Error(ErrorCode::MalformedFile, path + ": write failed");
  }
}

// ---------------------------------------------------------------------------
// Text parsing helpers.

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' ||
                               line[i] == '\r')) {
      ++i;
    }
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' &&
           line[j] != '\r') {
      ++j;
    }
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '\n') {
      out.emplace_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  // Trailing newline produces one empty tail entry; drop it.
  if (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

inline double parse_double(const std::string& tok, const std::string& what) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [p, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || p != last || !std::isfinite(v)) {
    throw Error(ErrorCode::MalformedLine, what + ": bad number '" + tok + "'");
  }
  return v;
}

inline long parse_int(const std::string& tok, const std::string& what) {
  long v = 0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [p, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || p != last) {
    throw Error(ErrorCode::MalformedLine, what + ": bad integer '" + tok + "'");
  }
  return v;
}

// Shortest exact decimal form of a double (round-trips bit-exactly).
inline std::string fmt_double(double v) {
  char tmp[64];
  std::snprintf(tmp, sizeof(tmp), "%.17g", v);
  double back = 0.0;
  std::from_chars(tmp, tmp + std::char_traits<char>::length(tmp), back);
  for (int prec = 1; prec <= 16; ++prec) {
    char probe[64];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    std::from_chars(probe, probe + std::char_traits<char>::length(probe), back);
    if (back == v) return probe;
  }
  return tmp;
}

// ---------------------------------------------------------------------------
// Velodyne scans: packed float32 quadruples x,y,z,reflectance.

inline std::vector<Point3> read_velodyne(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() % 16 != 0) {
    throw Error(ErrorCode::MalformedFile,
                path + ": size " + std::to_string(bytes.size()) +
                    " is not a multiple of 16");
  }
  ByteReader r{bytes, 0, path};
  std::vector<Point3> pts;
  pts.reserve(bytes.size() / 16);
  while (!r.at_end()) {
    Point3 p;
    p.x = r.get_f32le();
    p.y = r.get_f32le();
    p.z = r.get_f32le();
    p.feats = {r.get_f32le()};
    pts.push_back(std::move(p));
  }
  return pts;
}

inline void write_velodyne(const std::string& path,
                           const std::vector<Point3>& pts) {
  std::vector<std::uint8_t> buf;
  buf.reserve(pts.size() * 16);
  for (const auto& p : pts) {
    if (p.channels() != 4) {
      throw Error(ErrorCode::ShapeMismatch,
                  path + ": scan rows must have exactly 4 channels, got " +
                      std::to_string(p.channels()));
    }
    put_f32le(buf, p.x);
    put_f32le(buf, p.y);
    put_f32le(buf, p.z);
    put_f32le(buf, p.feats[0]);
  }
  write_file_bytes(path, buf);
}

// ---------------------------------------------------------------------------
// Calibration files: "KEY: v0 v1 ..." lines. Required keys are the 3x4 left
// camera projection P2, the 3x3 rectification R0_rect and the 3x4 rigid
// Tr_velo_to_cam. The combined cloud->rectified-camera transform is
// pad4(R0_rect) * pad4(Tr_velo_to_cam).

namespace detail {

inline std::vector<double> calib_values(
    const std::vector<std::pair<std::string, std::vector<double>>>& entries,
    const std::string& key, std::size_t n, const std::string& path) {
  for (const auto& [k, v] : entries) {
    if (k == key) {
      if (v.size() != n) {
        throw Error(ErrorCode::MalformedMatrix,
                    path + ": key " + key + " expects " + std::to_string(n) +
                        " values, got " + std::to_string(v.size()));
      }
      return v;
    }
  }
  throw Error(ErrorCode::MissingKey, path + ": missing key " + key);
}

}  // namespace detail

inline Calib read_calib(const std::string& path) {
  const auto text = read_file_text(path);
  std::vector<std::pair<std::string, std::vector<double>>> entries;
  for (const auto& line : split_lines(text)) {
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0].size() < 2 || toks[0].back() != ':') {
      throw Error(ErrorCode::MalformedLine,
                  path + ": expected 'KEY:' prefix in line '" + line + "'");
    }
    std::string key = toks[0].substr(0, toks[0].size() - 1);
    std::vector<double> vals;
    vals.reserve(toks.size() - 1);
    for (std::size_t i = 1; i < toks.size(); ++i) {
      vals.push_back(parse_double(toks[i], path));
    }
    entries.emplace_back(std::move(key), std::move(vals));
  }

  const auto p2 = detail::calib_values(entries, "P2", 12, path);
  const auto r0 = detail::calib_values(entries, "R0_rect", 9, path);
  const auto tr = detail::calib_values(entries, "Tr_velo_to_cam", 12, path);

  std::array<double, 16> rect{};  // pad4(R0_rect)
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rect[4 * r + c] = r0[3 * r + c];
  }
  rect[15] = 1.0;

  std::array<double, 16> velo{};  // pad4(Tr_velo_to_cam)
  for (int i = 0; i < 12; ++i) velo[(i / 4) * 4 + (i % 4)] = tr[i];
  velo[15] = 1.0;

  Calib calib;
  calib.T = mat4_mul(rect, velo);
  for (int i = 0; i < 12; ++i) calib.C[i] = p2[i];
  return calib;
}

// Writes a calib file that read_calib maps back to the same combined
// transform: P2 is emitted as-is, R0_rect as identity and Tr_velo_to_cam as
// the top three rows of T.
inline void write_calib(const std::string& path, const Calib& calib) {
  std::ostringstream out;
  out << "P2:";
  for (int i = 0; i < 12; ++i) out << ' ' << fmt_double(calib.C[i]);
  out << "\nR0_rect: 1 0 0 0 1 0 0 0 1\nTr_velo_to_cam:";
  for (int i = 0; i < 12; ++i) out << ' ' << fmt_double(calib.T[i]);
  out << '\n';
  write_file_text(path, out.str());
}

// ---------------------------------------------------------------------------
// Label files: 15 whitespace-separated fields per line,
//   type trunc occ alpha x1 y1 x2 y2 h w l x y z ry
// with (x,y,z) the bottom-face center in the rectified camera frame and ry
// the rotation about the camera y axis. "DontCare" lines are skipped.

constexpr double kHalfTurn = 3.14159265358979323846;

inline double normalize_angle(double a) {
  a = std::fmod(a + kHalfTurn, 2.0 * kHalfTurn);
  if (a <= 0.0) a += 2.0 * kHalfTurn;
  return a - kHalfTurn;  // (-pi, pi]
}

// Camera-frame bottom-anchored label box -> cloud-frame center-anchored box.
// The center is lifted by h/2 along camera up (-y) before applying T^-1; yaw
// follows the fixed axis relationship between the two frames.
inline Box3D box3d_from_camera_label(const Calib& calib, double h, double w,
                                     double l, double x, double y, double z,
                                     double ry) {
  const auto t_inv = mat4_inverse(calib.T);
  const auto center = mat4_apply(t_inv, x, y - h / 2.0, z);
  Box3D box;
  box.cx = center[0] / center[3];
  box.cy = center[1] / center[3];
  box.cz = center[2] / center[3];
  box.h = h;
  box.w = w;
  box.l = l;
  box.ry = normalize_angle(-ry - kHalfTurn / 2.0);
  return box;
}

struct CameraLabel {
  double h = 0, w = 0, l = 0;
  double x = 0, y = 0, z = 0;  // bottom-face center, camera frame
  double ry = 0;
};

inline CameraLabel box3d_to_camera_label(const Calib& calib, const Box3D& box) {
  const auto center = mat4_apply(calib.T, box.cx, box.cy, box.cz);
  CameraLabel lab;
  lab.x = center[0] / center[3];
  lab.y = center[1] / center[3] + box.h / 2.0;
  lab.z = center[2] / center[3];
  lab.h = box.h;
  lab.w = box.w;
  lab.l = box.l;
  lab.ry = normalize_angle(-box.ry - kHalfTurn / 2.0);
  return lab;
}

inline std::vector<Box3D> read_labels(const std::string& path,
                                      const Calib& calib) {
  const auto text = read_file_text(path);
  std::vector<Box3D> boxes;
  for (const auto& line : split_lines(text)) {
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 15) {
      throw Error(ErrorCode::MalformedLine,
                  path + ": expected 15 fields, got " +
                      std::to_string(toks.size()) + " in '" + line + "'");
    }
    if (toks[0] == "DontCare") continue;
    double f[14];
    for (int i = 0; i < 14; ++i) f[i] = parse_double(toks[i + 1], path);
    boxes.push_back(box3d_from_camera_label(calib, f[7], f[8], f[9], f[10],
                                            f[11], f[12], f[13]));
  }
  return boxes;
}

inline void write_labels(const std::string& path,
                         const std::vector<Box3D>& boxes,
                         const std::vector<std::string>& type_names,
                         const Calib& calib) {
  if (type_names.size() != boxes.size()) {
    throw Error(ErrorCode::ShapeMismatch,
                path + ": " + std::to_string(boxes.size()) + " boxes but " +
                    std::to_string(type_names.size()) + " type names");
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto lab = box3d_to_camera_label(calib, boxes[i]);
    out << type_names[i] << " 0 0 0 0 0 0 0 " << fmt_double(lab.h) << ' '
        << fmt_double(lab.w) << ' ' << fmt_double(lab.l) << ' '
        << fmt_double(lab.x) << ' ' << fmt_double(lab.y) << ' '
        << fmt_double(lab.z) << ' ' << fmt_double(lab.ry) << '\n';
  }
  write_file_text(path, out.str());
}

// Class ids used throughout: 0 vehicle, 1 pedestrian, 2 cyclist.
inline std::optional<int> class_id_from_name(std::string_view name) {
  if (name == "Car" || name == "Van" || name == "Truck") return 0;
  if (name == "Pedestrian" || name == "Person_sitting") return 1;
  if (name == "Cyclist") return 2;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Detection files: one "cls x1 y1 x2 y2 conf" line per 2D detection.

inline std::vector<Box2D> read_detections(const std::string& path, int n_cls) {
  const auto text = read_file_text(path);
  std::vector<Box2D> dets;
  for (const auto& line : split_lines(text)) {
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 6) {
      throw Error(ErrorCode::MalformedLine,
                  path + ": expected 6 fields, got " +
                      std::to_string(toks.size()) + " in '" + line + "'");
    }
    Box2D b;
    const long cls = parse_int(toks[0], path);
    if (cls < 0 || cls >= n_cls) {
      throw Error(ErrorCode::InvalidClass,
                  path + ": class " + std::to_string(cls) +
                      " outside [0, " + std::to_string(n_cls) + ")");
    }
    b.cls = static_cast<int>(cls);
    b.x1 = parse_double(toks[1], path);
    b.y1 = parse_double(toks[2], path);
    b.x2 = parse_double(toks[3], path);
    b.y2 = parse_double(toks[4], path);
    b.conf = parse_double(toks[5], path);
    if (b.x1 > b.x2 || b.y1 > b.y2) {
      throw Error(ErrorCode::MalformedLine,
                  path + ": inverted box in '" + line + "'");
    }
    if (b.conf < 0.0 || b.conf > 1.0) {
      throw Error(ErrorCode::MalformedLine,
                  path + ": confidence outside [0, 1] in '" + line + "'");
    }
    dets.push_back(b);
  }
  return dets;
}

inline void write_detections(const std::string& path,
                             const std::vector<Box2D>& dets) {
  std::ostringstream out;
  for (const auto& d : dets) {
    out << d.cls << ' ' << fmt_double(d.x1) << ' ' << fmt_double(d.y1) << ' '
        << fmt_double(d.x2) << ' ' << fmt_double(d.y2) << ' '
        << fmt_double(d.conf) << '\n';
  }
  write_file_text(path, out.str());
}

// ---------------------------------------------------------------------------
// Recoded-cloud container. Layout (little-endian):
//   magic "PDCRECOD" | u32 version=1 | u64 point count | u32 channels (D+3)
//   | u32 n_detections | u32 frame-id length | frame-id bytes
//   | count * channels float32 row-major values.
// Label channels are stored as exact small integers in float32.

constexpr char kRecodedMagic[9] = "PDCRECOD";
constexpr std::uint32_t kContainerVersion = 1;

inline void write_recoded(const std::string& path, const RecodedCloud& cloud) {
  std::vector<std::uint8_t> buf;
  buf.reserve(32 + cloud.points.size() * (cloud.channels()) * 4);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(kRecodedMagic[i]));
  put_u32le(buf, kContainerVersion);
  put_u64le(buf, cloud.points.size());
  put_u32le(buf, static_cast<std::uint32_t>(cloud.channels()));
  put_u32le(buf, cloud.n_detections);
  put_u32le(buf, static_cast<std::uint32_t>(cloud.frame_id.size()));
  for (char c : cloud.frame_id) buf.push_back(static_cast<std::uint8_t>(c));
  for (const auto& p : cloud.points) {
    if (p.base.channels() != cloud.base_channels) {
      throw Error(ErrorCode::ShapeMismatch,
                  path + ": point with " + std::to_string(p.base.channels()) +
                      " channels in a " + std::to_string(cloud.base_channels) +
                      "-channel cloud");
    }
    put_f32le(buf, p.base.x);
    put_f32le(buf, p.base.y);
    put_f32le(buf, p.base.z);
    for (double f : p.base.feats) put_f32le(buf, f);
    put_f32le(buf, static_cast<double>(p.seg_label));
    put_f32le(buf, static_cast<double>(p.cls_label));
    put_f32le(buf, static_cast<double>(p.index_label));
  }
  write_file_bytes(path, buf);
}

inline RecodedCloud read_recoded(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r{bytes, 0, path};
  if (r.get_bytes(8) != std::string(kRecodedMagic, 8)) {
    throw Error(ErrorCode::MalformedFile, path + ": bad magic");
  }
  if (const auto ver = r.get_u32le(); ver != kContainerVersion) {
    throw Error(ErrorCode::MalformedFile,
                path + ": unsupported version " + std::to_string(ver));
  }
  const std::uint64_t count = r.get_u64le();
  const std::uint32_t channels = r.get_u32le();
  if (channels < 6) {  // x, y, z plus the three label channels
    throw Error(ErrorCode::MalformedFile,
                path + ": channel count " + std::to_string(channels) +
                    " too small");
  }
  RecodedCloud cloud;
  cloud.base_channels = static_cast<int>(channels) - 3;
  cloud.n_detections = r.get_u32le();
  const std::uint32_t id_len = r.get_u32le();
  cloud.frame_id = r.get_bytes(id_len);
  cloud.points.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    RecodedPoint p;
    p.base.x = r.get_f32le();
    p.base.y = r.get_f32le();
    p.base.z = r.get_f32le();
    p.base.feats.resize(cloud.base_channels - 3);
    for (auto& f : p.base.feats) f = r.get_f32le();
    p.seg_label = static_cast<int>(std::lround(r.get_f32le()));
    p.cls_label = static_cast<int>(std::lround(r.get_f32le()));
    p.index_label = static_cast<int>(std::lround(r.get_f32le()));
    cloud.points.push_back(std::move(p));
  }
  if (!r.at_end()) {
    throw Error(ErrorCode::MalformedFile, path + ": trailing bytes");
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Decorated-cloud container. Layout mirrors the recoded one:
//   magic "PDCDECOR" | u32 version=1 | u64 point count | u32 total channels
//   | u32 base channels | u32 frame-id length | frame-id bytes | f32 rows.

constexpr char kDecoratedMagic[9] = "PDCDECOR";

inline void write_decorated(const std::string& path,
                            const DecoratedCloud& cloud) {
  if (cloud.channels() <= 0 ||
      cloud.rows.size() % static_cast<std::size_t>(cloud.channels()) != 0) {
    throw Error(ErrorCode::ShapeMismatch,
                path + ": row storage is not a multiple of the channel count");
  }
  std::vector<std::uint8_t> buf;
  buf.reserve(32 + cloud.rows.size() * 4);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(kDecoratedMagic[i]));
  put_u32le(buf, kContainerVersion);
  put_u64le(buf, cloud.count());
  put_u32le(buf, static_cast<std::uint32_t>(cloud.channels()));
  put_u32le(buf, static_cast<std::uint32_t>(cloud.base_channels));
  put_u32le(buf, static_cast<std::uint32_t>(cloud.frame_id.size()));
  for (char c : cloud.frame_id) buf.push_back(static_cast<std::uint8_t>(c));
  for (double v : cloud.rows) put_f32le(buf, v);
  write_file_bytes(path, buf);
}

inline DecoratedCloud read_decorated(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r{bytes, 0, path};
  if (r.get_bytes(8) != std::string(kDecoratedMagic, 8)) {
    throw Error(ErrorCode::MalformedFile, path + ": bad magic");
  }
  if (const auto ver = r.get_u32le(); ver != kContainerVersion) {
    throw Error(ErrorCode::MalformedFile,
                path + ": unsupported version " + std::to_string(ver));
  }
  const std::uint64_t count = r.get_u64le();
  const std::uint32_t channels = r.get_u32le();
  const std::uint32_t base = r.get_u32le();
  if (base < 3 || channels <= base) {
    throw Error(ErrorCode::MalformedFile,
                path + ": inconsistent channel counts " +
                    std::to_string(channels) + "/" + std::to_string(base));
  }
  DecoratedCloud cloud;
  cloud.base_channels = static_cast<int>(base);
  cloud.semantic_channels = static_cast<int>(channels - base);
  const std::uint32_t id_len = r.get_u32le();
  cloud.frame_id = r.get_bytes(id_len);
  cloud.rows.resize(count * channels);
  for (auto& v : cloud.rows) v = r.get_f32le();
  if (!r.at_end()) {
    throw Error(ErrorCode::MalformedFile, path + ": trailing bytes");
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Checkpoint container: an ordered list of named float32 matrices.
//   magic "PDCPARAM" | u32 version=1 | u32 entry count | per entry:
//   u32 name length | name bytes | u32 rows | u32 cols | f32 values.
// Matrices whose values are exactly representable in float32 round-trip
// bit-for-bit.

constexpr char kCheckpointMagic[9] = "PDCPARAM";

using NamedMats = std::vector<std::pair<std::string, Mat>>;

inline void save_checkpoint(const std::string& path, const NamedMats& entries) {
  std::vector<std::uint8_t> buf;
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(kCheckpointMagic[i]));
  put_u32le(buf, kContainerVersion);
  put_u32le(buf, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, mat] : entries) {
    put_u32le(buf, static_cast<std::uint32_t>(name.size()));
    for (char c : name) buf.push_back(static_cast<std::uint8_t>(c));
    put_u32le(buf, static_cast<std::uint32_t>(mat.rows));
    put_u32le(buf, static_cast<std::uint32_t>(mat.cols));
    for (double v : mat.d) put_f32le(buf, v);
  }
  write_file_bytes(path, buf);
}

inline NamedMats load_checkpoint(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r{bytes, 0, path};
  if (r.get_bytes(8) != std::string(kCheckpointMagic, 8)) {
    throw Error(ErrorCode::MalformedFile, path + ": bad magic");
  }
  if (const auto ver = r.get_u32le(); ver != kContainerVersion) {
    throw Error(ErrorCode::MalformedFile,
                path + ": unsupported version " + std::to_string(ver));
  }
  const std::uint32_t n = r.get_u32le();
  NamedMats entries;
  entries.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t name_len = r.get_u32le();
    std::string name = r.get_bytes(name_len);
    const std::uint32_t rows = r.get_u32le();
    const std::uint32_t cols = r.get_u32le();
    Mat m(static_cast<int>(rows), static_cast<int>(cols));
    for (auto& v : m.d) v = r.get_f32le();
    entries.emplace_back(std::move(name), std::move(m));
  }
  if (!r.at_end()) {
    throw Error(ErrorCode::MalformedFile, path + ": trailing bytes");
  }
  return entries;
}

}  // namespace pointdeco
