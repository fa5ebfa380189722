#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <vector>

#include "pointdeco/checks.hpp"
#include "pointdeco/recode.hpp"
#include "pointdeco/synth.hpp"
#include "test_util.hpp"

using namespace pointdeco;

namespace {

// One hand-checkable frame under the canonical calibration (camera looks
// along +x, focal 350, principal point (320,180)):
//   cloud (10,0,0)   -> pixel (320,180)
//   cloud (10,3,0)   -> pixel (215,180)
//   cloud (-5,0,0)   -> behind the camera
FrameBundle manual_frame() {
  FrameBundle frame;
  frame.frame_id = "000000";
  frame.calib = canonical_calib(SceneSpec{});
  frame.points = {{10, 0, 0, {0.9}}, {10, 3, 0, {0.2}}, {-5, 0, 0, {0.5}}};
  frame.gt_boxes = {Box3D{10, 0, 0, 2, 2, 2, 0}};
  frame.detections = {Box2D{0, 0, 640, 360, 1, 0.9},
                      Box2D{310, 170, 330, 190, 2, 0.55}};
  return frame;
}

}  // namespace

TEST_CASE("recoding keeps frustum points and widens them with labels") {
  const auto frame = manual_frame();
  RecodeOpts opts;
  opts.mode = RecodeMode::Infer;
  const auto cloud = recode_frame(frame, opts);

  REQUIRE(cloud.frame_id == "000000");
  REQUIRE(cloud.n_detections == 2);
  REQUIRE(cloud.channels() == 7);
  REQUIRE(cloud.points.size() == 3);

  // Group 0: the full-image detection catches both visible points.
  REQUIRE(cloud.points[0].base.x == 10);
  REQUIRE(cloud.points[0].base.y == 0);
  REQUIRE(cloud.points[0].seg_label == 1);
  REQUIRE(cloud.points[0].cls_label == 1);
  REQUIRE(cloud.points[0].index_label == 0);
  REQUIRE(cloud.points[1].base.y == 3);
  REQUIRE(cloud.points[1].seg_label == 0);  // in the frustum, outside the box
  REQUIRE(cloud.points[1].cls_label == 1);
  REQUIRE(cloud.points[1].index_label == 0);

  // Group 1: the tight detection catches only the box center; the point is
  // duplicated with the second detection's class and index.
  REQUIRE(cloud.points[2].base.x == 10);
  REQUIRE(cloud.points[2].base.y == 0);
  REQUIRE(cloud.points[2].seg_label == 1);
  REQUIRE(cloud.points[2].cls_label == 2);
  REQUIRE(cloud.points[2].index_label == 1);
}

TEST_CASE("points behind the camera never join a frustum") {
  auto frame = manual_frame();
  frame.points = {{-5, 0, 0, {0.5}}};
  frame.detections = {Box2D{-10000, -10000, 10000, 10000, 0, 0.9}};
  const auto cloud = recode_frame(frame, RecodeOpts{});
  REQUIRE(cloud.n_detections == 1);
  REQUIRE(cloud.points.empty());
}

TEST_CASE("confidence filtering keeps the threshold and renumbers survivors") {
  auto frame = manual_frame();
  frame.detections = {Box2D{0, 0, 640, 360, 0, 0.5},
                      Box2D{0, 0, 640, 360, 1, 0.1},
                      Box2D{0, 0, 640, 360, 2, 0.0999}};
  RecodeOpts opts;
  opts.min_conf = 0.1;
  const auto cloud = recode_frame(frame, opts);
  REQUIRE(cloud.n_detections == 2);
  // Two surviving detections, two visible points each.
  REQUIRE(cloud.points.size() == 4);
  REQUIRE(cloud.points[0].cls_label == 0);
  REQUIRE(cloud.points[0].index_label == 0);
  REQUIRE(cloud.points[2].cls_label == 1);
  REQUIRE(cloud.points[2].index_label == 1);
}

TEST_CASE("a frame with no surviving detections recodes to an empty cloud") {
  auto frame = manual_frame();
  frame.detections.clear();
  const auto cloud = recode_frame(frame, RecodeOpts{});
  REQUIRE(cloud.n_detections == 0);
  REQUIRE(cloud.points.empty());
  REQUIRE(cloud.base_channels == 4);

  frame.detections = {Box2D{0, 0, 640, 360, 0, 0.05}};
  RecodeOpts opts;
  opts.min_conf = 0.1;
  const auto dropped = recode_frame(frame, opts);
  REQUIRE(dropped.n_detections == 0);
  REQUIRE(dropped.points.empty());
}

TEST_CASE("train jitter enlarges each box by an independent bounded draw") {
  const std::vector<Box2D> dets = {Box2D{100, 100, 200, 200, 0, 0.9},
                                   Box2D{50, 60, 70, 80, 1, 0.8}};
  const auto a = train_jitter(dets, "000007", 42);
  const auto b = train_jitter(dets, "000007", 42);
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].x1 == b[i].x1);
    REQUIRE(a[i].y1 == b[i].y1);
    REQUIRE(a[i].x2 == b[i].x2);
    REQUIRE(a[i].y2 == b[i].y2);
    // Never shrinks, never exceeds the 10% cap.
    const auto cap = enlarge_box2d(dets[i], 0.10, 0.10);
    REQUIRE(a[i].x1 <= dets[i].x1);
    REQUIRE(a[i].y1 <= dets[i].y1);
    REQUIRE(a[i].x1 >= cap.x1);
    REQUIRE(a[i].y2 <= cap.y2);
    REQUIRE(a[i].cls == dets[i].cls);
    REQUIRE(a[i].conf == dets[i].conf);
  }

  const auto other_seed = train_jitter(dets, "000007", 43);
  const auto other_frame = train_jitter(dets, "000008", 42);
  REQUIRE(a[0].x1 != other_seed[0].x1);
  REQUIRE(a[0].x1 != other_frame[0].x1);
}

TEST_CASE("train recoding is reproducible per seed and inference ignores it") {
  SceneSpec spec;
  spec.seed = 314;
  spec.n_objects = 4;
  spec.bg_density = 2.0;
  const auto frame = gen_scene(spec, "000314", nullptr);

  RecodeOpts train;
  train.mode = RecodeMode::Train;
  train.seed = 5;
  const auto t1 = recode_frame(frame, train);
  const auto t2 = recode_frame(frame, train);
  REQUIRE(t1.points.size() == t2.points.size());
  for (std::size_t i = 0; i < t1.points.size(); ++i) {
    REQUIRE(t1.points[i] == t2.points[i]);
  }

  train.seed = 6;
  const auto t3 = recode_frame(frame, train);
  const bool differs =
      t3.points.size() != t1.points.size() ||
      !std::equal(t1.points.begin(), t1.points.end(), t3.points.begin(),
                  [](const RecodedPoint& a, const RecodedPoint& b) {
                    return a == b;
                  });
  REQUIRE(differs);

  RecodeOpts infer1, infer2;
  infer1.seed = 1;
  infer2.seed = 999;
  const auto i1 = recode_frame(frame, infer1);
  const auto i2 = recode_frame(frame, infer2);
  REQUIRE(i1.points.size() == i2.points.size());
  for (std::size_t i = 0; i < i1.points.size(); ++i) {
    REQUIRE(i1.points[i] == i2.points[i]);
  }
}

TEST_CASE("production recoding matches the brute-force rebuild") {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    SceneSpec spec;
    spec.seed = seed;
    spec.n_objects = 5;
    spec.noise_px = 2.0;
    const auto frame = gen_scene(spec, "oracle", nullptr);
    RecodeOpts opts;
    opts.mode = seed % 2 == 0 ? RecodeMode::Train : RecodeMode::Infer;
    opts.seed = 17;
    const auto got = recode_frame(frame, opts);
    const auto want = oracle_recode(frame, opts);
    REQUIRE(got.n_detections == want.n_detections);
    REQUIRE(got.points.size() == want.points.size());
    REQUIRE(recoded_multiset_distance(got, want) == 0);
  }
}
