#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "pointdeco/checks.hpp"
#include "pointdeco/synth.hpp"
#include "test_util.hpp"

using namespace pointdeco;

TEST_CASE("scene generation is a pure function of spec and frame id") {
  SceneSpec spec;
  spec.seed = 77;
  spec.n_objects = 4;
  spec.noise_px = 1.5;
  SceneTruth t1, t2;
  const auto a = gen_scene(spec, "000001", &t1);
  const auto b = gen_scene(spec, "000001", &t2);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    REQUIRE(a.points[i].x == b.points[i].x);
    REQUIRE(a.points[i].y == b.points[i].y);
    REQUIRE(a.points[i].z == b.points[i].z);
    REQUIRE(a.points[i].feats == b.points[i].feats);
  }
  REQUIRE(t1.point_box == t2.point_box);
  REQUIRE(a.detections.size() == b.detections.size());
  for (std::size_t i = 0; i < a.detections.size(); ++i) {
    REQUIRE(a.detections[i].x1 == b.detections[i].x1);
    REQUIRE(a.detections[i].conf == b.detections[i].conf);
  }

  const auto c = gen_scene(spec, "000002", nullptr);
  REQUIRE((c.points.size() != a.points.size() ||
           c.points[0].x != a.points[0].x));
}

TEST_CASE("scene truth agrees with both containment implementations") {
  SceneSpec spec;
  spec.seed = 31;
  spec.n_objects = 3;
  SceneTruth truth;
  const auto frame = gen_scene(spec, "truth", &truth);
  REQUIRE(truth.point_box.size() == frame.points.size());
  REQUIRE(frame.gt_boxes.size() == 3);
  REQUIRE(frame.detections.size() == 3);

  std::size_t fg = 0;
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const auto& p = frame.points[i];
    const int owner = truth.point_box[i];
    for (std::size_t j = 0; j < frame.gt_boxes.size(); ++j) {
      const bool inside = point_in_box3d(p, frame.gt_boxes[j]);
      const bool oracle = oracle_contains(p, frame.gt_boxes[j]);
      REQUIRE(inside == oracle);
      REQUIRE(inside == (owner == static_cast<int>(j)));
    }
    fg += owner >= 0 ? 1 : 0;
  }
  REQUIRE(fg > 0);
  REQUIRE(fg < frame.points.size());
}

TEST_CASE("noiseless detections contain their object's every point") {
  SceneSpec spec;
  spec.seed = 55;
  spec.n_objects = 4;
  spec.noise_px = 0.0;
  SceneTruth truth;
  const auto frame = gen_scene(spec, "exact", &truth);
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const int owner = truth.point_box[i];
    if (owner < 0) continue;
    const auto px = project_point(frame.calib, frame.points[i]);
    REQUIRE(px.has_value());
    REQUIRE(point_in_box2d(*px, frame.detections[owner]));
  }
  for (std::size_t i = 0; i < frame.detections.size(); ++i) {
    REQUIRE(frame.detections[i].cls == static_cast<int>(i) % spec.n_cls);
    REQUIRE(frame.detections[i].conf >= 0.15);
    REQUIRE(frame.detections[i].conf <= 1.0);
  }
}

TEST_CASE("scene specs survive a format and parse round trip") {
  SceneSpec spec;
  spec.seed = 123;
  spec.n_objects = 7;
  spec.fg_density = 33.25;
  spec.noise_px = 2.5;
  spec.slab_x_lo = 9.5;
  spec.focal = 400;
  const auto text = format_scene_spec(spec);
  const auto back = parse_scene_spec(text, "round-trip");
  REQUIRE(back.seed == spec.seed);
  REQUIRE(back.n_objects == spec.n_objects);
  REQUIRE(back.fg_density == spec.fg_density);
  REQUIRE(back.noise_px == spec.noise_px);
  REQUIRE(back.slab_x_lo == spec.slab_x_lo);
  REQUIRE(back.focal == spec.focal);
  REQUIRE(format_scene_spec(back) == text);
}

TEST_CASE("scene spec parsing flags unknown keys and bad numbers") {
  REQUIRE(code_of([] { parse_scene_spec("bogus_key=1\n", "t"); }) ==
          ErrorCode::MalformedLine);
  REQUIRE(code_of([] { parse_scene_spec("fg_density=abc\n", "t"); }) ==
          ErrorCode::MalformedLine);
  REQUIRE(code_of([] { parse_scene_spec("n_objects 3\n", "t"); }) ==
          ErrorCode::MalformedLine);

  const auto s = parse_scene_spec("# comment only\n\nn_cls=2 # trailing\n", "t");
  REQUIRE(s.n_cls == 2);
}

TEST_CASE("scenes hugging the camera plane are rejected") {
  SceneSpec spec;
  spec.slab_x_lo = 1.0;
  spec.slab_x_hi = 3.0;
  REQUIRE(code_of([&] { gen_scene(spec, "close", nullptr); }) ==
          ErrorCode::MalformedLine);
}

TEST_CASE("recode agreement checks pass on fresh scenes") {
  const auto results = run_recode_checks(404, 3);
  for (const auto& r : results) {
    INFO(r.name << " measured " << r.measured);
    REQUIRE(r.pass);
  }
}
