#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pointdeco/geom.hpp"
#include "pointdeco/io.hpp"
#include "pointdeco/synth.hpp"
#include "test_util.hpp"

using namespace pointdeco;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("pinhole projection maps known points to known pixels") {
  Calib cal;
  cal.C = {100, 0, 50, 0, 0, 100, 50, 0, 0, 0, 1, 0};
  const auto center = project_point(cal, {0, 0, 10});
  REQUIRE(center);
  REQUIRE(center->u == 50.0);
  REQUIRE(center->v == 50.0);
  const auto offset = project_point(cal, {1, 0, 10});
  REQUIRE(offset);
  REQUIRE(offset->u == 60.0);
  REQUIRE(offset->v == 50.0);
}

TEST_CASE("points at or behind the camera plane project to nothing") {
  Calib cal;  // identity transform, camera looks along +z
  REQUIRE_FALSE(project_point(cal, {0, 0, -5}));
  REQUIRE_FALSE(project_point(cal, {1, 1, 0}));
  REQUIRE(project_point(cal, {0, 0, 1e-9}));
}

TEST_CASE("projection is invariant to scaling the projection matrix") {
  Calib cal;
  cal.C = {350, 0, 320, 0, 0, 350, 180, 0, 0, 0, 1, 0};
  const Point3 p{1.5, -2.0, 12.0};
  const auto a = project_point(cal, p);
  Calib scaled = cal;
  for (auto& v : scaled.C) v *= 3.7;
  const auto b = project_point(scaled, p);
  REQUIRE(a);
  REQUIRE(b);
  REQUIRE(a->u == Catch::Approx(b->u).margin(1e-10));
  REQUIRE(a->v == Catch::Approx(b->v).margin(1e-10));
}

TEST_CASE("2d box containment includes all four edges") {
  Box2D b;
  b.x1 = 0;
  b.y1 = 0;
  b.x2 = 10;
  b.y2 = 5;
  REQUIRE(point_in_box2d({0, 0}, b));
  REQUIRE(point_in_box2d({10, 5}, b));
  REQUIRE(point_in_box2d({0, 5}, b));
  REQUIRE(point_in_box2d({5, 2.5}, b));
  REQUIRE_FALSE(point_in_box2d({10.0001, 2}, b));
  REQUIRE_FALSE(point_in_box2d({5, -0.0001}, b));
}

TEST_CASE("3d box containment handles yawed boxes and closed faces") {
  Box3D b;
  b.l = 4;
  b.w = 2;
  b.h = 2;
  b.ry = kPi / 2;  // heading along +y
  REQUIRE(point_in_box3d({0.9, 1.9, 0}, b));
  REQUIRE_FALSE(point_in_box3d({0, 2.1, 0}, b));
  REQUIRE_FALSE(point_in_box3d({1.1, 0, 0}, b));
  b.ry = 0;
  REQUIRE(point_in_box3d({2.0, 1.0, 1.0}, b));  // exactly on the corner
  REQUIRE(point_in_box3d({2.0, 0, 0}, b));      // exactly on a face
  REQUIRE_FALSE(point_in_box3d({2.0 + 1e-12, 0, 0}, b));
}

TEST_CASE("corner layout walks the bottom face counter-clockwise") {
  Box3D b;
  b.l = 2;
  b.w = 2;
  b.h = 2;
  const auto c = box3d_corners(b);
  REQUIRE(c[0].x == -1.0);
  REQUIRE(c[0].y == -1.0);
  REQUIRE(c[0].z == -1.0);
  REQUIRE(c[1].x == 1.0);
  REQUIRE(c[1].y == -1.0);
  REQUIRE(c[2].x == 1.0);
  REQUIRE(c[2].y == 1.0);
  REQUIRE(c[3].x == -1.0);
  REQUIRE(c[3].y == 1.0);
  for (int i = 0; i < 4; ++i) {
    REQUIRE(c[i].z == -1.0);
    REQUIRE(c[i + 4].x == c[i].x);
    REQUIRE(c[i + 4].y == c[i].y);
    REQUIRE(c[i + 4].z == 1.0);
  }
}

TEST_CASE("box enlargement scales width and height about the center") {
  Box2D b;
  b.x1 = 0;
  b.y1 = 0;
  b.x2 = 10;
  b.y2 = 20;
  b.cls = 2;
  b.conf = 0.7;
  const auto e = enlarge_box2d(b, 0.1, 0.5);
  REQUIRE(e.x1 == Catch::Approx(-0.5).margin(1e-12));
  REQUIRE(e.x2 == Catch::Approx(10.5).margin(1e-12));
  REQUIRE(e.y1 == Catch::Approx(-5.0).margin(1e-12));
  REQUIRE(e.y2 == Catch::Approx(25.0).margin(1e-12));
  REQUIRE(e.cls == 2);
  REQUIRE(e.conf == 0.7);
  const auto same = enlarge_box2d(b, 0.0, 0.0);
  REQUIRE(same.x1 == b.x1);
  REQUIRE(same.y2 == b.y2);
}

TEST_CASE("enlarged boxes always contain their input") {
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    Box2D b;
    b.x1 = uniform_in(rng, -100.0, 100.0);
    b.x2 = b.x1 + uniform_in(rng, 0.0, 50.0);
    b.y1 = uniform_in(rng, -100.0, 100.0);
    b.y2 = b.y1 + uniform_in(rng, 0.0, 50.0);
    const auto e =
        enlarge_box2d(b, uniform_in(rng, 0.0, 1.0), uniform_in(rng, 0.0, 1.0));
    REQUIRE(e.x1 <= b.x1);
    REQUIRE(e.y1 <= b.y1);
    REQUIRE(e.x2 >= b.x2);
    REQUIRE(e.y2 >= b.y2);
  }
}

TEST_CASE("confidence filter keeps the boundary and preserves order") {
  std::vector<Box2D> dets(3);
  dets[0].conf = 0.5;
  dets[0].cls = 0;
  dets[1].conf = 0.1;
  dets[1].cls = 1;
  dets[2].conf = 0.0999;
  dets[2].cls = 2;
  const auto kept = filter_detections(dets, 0.1);
  REQUIRE(kept.size() == 2);
  REQUIRE(kept[0].cls == 0);
  REQUIRE(kept[1].cls == 1);
}

TEST_CASE("4x4 inverse round trips rigid transforms") {
  SceneSpec spec;
  const auto cal = canonical_calib(spec);
  const auto inv = mat4_inverse(cal.T);
  const auto prod = mat4_mul(cal.T, inv);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      REQUIRE(prod[4 * i + j] == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-12));
    }
  }
}

TEST_CASE("4x4 inverse rejects singular matrices") {
  std::array<double, 16> zero_row{1, 0, 0, 0, 0, 1, 0, 0,
                                  0, 0, 0, 0, 0, 0, 0, 1};
  REQUIRE(code_of([&] { mat4_inverse(zero_row); }) ==
          ErrorCode::MalformedMatrix);
}

TEST_CASE("containment matches an independent half-space formulation") {
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    Box3D b;
    b.cx = uniform_in(rng, -10.0, 10.0);
    b.cy = uniform_in(rng, -10.0, 10.0);
    b.cz = uniform_in(rng, -2.0, 2.0);
    b.l = uniform_in(rng, 0.5, 4.0);
    b.w = uniform_in(rng, 0.5, 4.0);
    b.h = uniform_in(rng, 0.5, 4.0);
    b.ry = uniform_in(rng, -kPi, kPi);
    const Point3 p{b.cx + uniform_in(rng, -3.0, 3.0),
                   b.cy + uniform_in(rng, -3.0, 3.0),
                   b.cz + uniform_in(rng, -3.0, 3.0)};
    REQUIRE(point_in_box3d(p, b) == oracle_contains(p, b));
  }
}

TEST_CASE("angle normalization lands in the half-open symmetric range") {
  REQUIRE(normalize_angle(0.0) == 0.0);
  REQUIRE(normalize_angle(kPi) == Catch::Approx(kPi));
  REQUIRE(normalize_angle(-kPi) == Catch::Approx(kPi));  // -pi maps to +pi
  REQUIRE(normalize_angle(2.5 * kPi) == Catch::Approx(0.5 * kPi));
  REQUIRE(normalize_angle(-0.5 * kPi) == Catch::Approx(-0.5 * kPi));
}
