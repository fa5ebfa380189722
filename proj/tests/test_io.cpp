#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "pointdeco/io.hpp"
#include "pointdeco/synth.hpp"
#include "test_util.hpp"

using namespace pointdeco;

namespace {

std::vector<std::uint8_t> f32_bytes(std::initializer_list<float> vals) {
  std::vector<std::uint8_t> buf;
  for (float v : vals) put_f32le(buf, v);
  return buf;
}

RecodedCloud sample_recoded() {
  RecodedCloud cloud;
  cloud.frame_id = "000042";
  cloud.base_channels = 4;
  cloud.n_detections = 3;
  Rng rng(5);
  for (int i = 0; i < 25; ++i) {
    RecodedPoint p;
    p.base = Point3{to_f32(uniform_in(rng, -10, 10)),
                    to_f32(uniform_in(rng, -10, 10)),
                    to_f32(uniform_in(rng, -2, 2)),
                    {to_f32(uniform01(rng))}};
    p.seg_label = i % 2;
    p.cls_label = i % 3;
    p.index_label = i % 3;
    cloud.points.push_back(std::move(p));
  }
  return cloud;
}

}  // namespace

TEST_CASE("velodyne scans parse packed float32 quadruples") {
  TempDir tmp;
  const auto bytes = f32_bytes({1.5f, -2.25f, 0.5f, 0.25f,  //
                                3.0f, 4.0f, -1.0f, 0.75f});
  write_file_bytes(tmp.file("scan.bin"), bytes);
  const auto pts = read_velodyne(tmp.file("scan.bin"));
  REQUIRE(pts.size() == 2);
  REQUIRE(pts[0].x == 1.5);
  REQUIRE(pts[0].y == -2.25);
  REQUIRE(pts[0].z == 0.5);
  REQUIRE(pts[0].feats == std::vector<double>{0.25});
  REQUIRE(pts[1].feats == std::vector<double>{0.75});
}

TEST_CASE("velodyne write then read is identity and bytes are canonical") {
  TempDir tmp;
  Rng rng(3);
  std::vector<Point3> pts;
  for (int i = 0; i < 100; ++i) {
    pts.emplace_back(to_f32(uniform_in(rng, -50, 50)),
                     to_f32(uniform_in(rng, -50, 50)),
                     to_f32(uniform_in(rng, -5, 5)),
                     std::vector<double>{to_f32(uniform01(rng))});
  }
  write_velodyne(tmp.file("a.bin"), pts);
  const auto back = read_velodyne(tmp.file("a.bin"));
  REQUIRE(back.size() == pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    REQUIRE(back[i].x == pts[i].x);
    REQUIRE(back[i].y == pts[i].y);
    REQUIRE(back[i].z == pts[i].z);
    REQUIRE(back[i].feats == pts[i].feats);
  }
  write_velodyne(tmp.file("b.bin"), back);
  REQUIRE(read_file_bytes(tmp.file("a.bin")) ==
          read_file_bytes(tmp.file("b.bin")));
}

TEST_CASE("velodyne files with ragged sizes are rejected") {
  TempDir tmp;
  write_file_bytes(tmp.file("bad.bin"), std::vector<std::uint8_t>(17, 0));
  REQUIRE(code_of([&] { read_velodyne(tmp.file("bad.bin")); }) ==
          ErrorCode::MalformedFile);
}

TEST_CASE("calibration files round trip the combined transform exactly") {
  TempDir tmp;
  SceneSpec spec;
  const auto cal = canonical_calib(spec);
  write_calib(tmp.file("calib.txt"), cal);
  const auto back = read_calib(tmp.file("calib.txt"));
  REQUIRE(back.T == cal.T);
  REQUIRE(back.C == cal.C);
}

TEST_CASE("calibration parsing reports missing and malformed keys") {
  TempDir tmp;
  write_file_text(tmp.file("no_p2.txt"),
                  "R0_rect: 1 0 0 0 1 0 0 0 1\n"
                  "Tr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n");
  REQUIRE(code_of([&] { read_calib(tmp.file("no_p2.txt")); }) ==
          ErrorCode::MissingKey);

  write_file_text(tmp.file("short.txt"),
                  "P2: 1 2 3\n"
                  "R0_rect: 1 0 0 0 1 0 0 0 1\n"
                  "Tr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n");
  REQUIRE(code_of([&] { read_calib(tmp.file("short.txt")); }) ==
          ErrorCode::MalformedMatrix);

  write_file_text(tmp.file("nocolon.txt"), "P2 1 2 3\n");
  REQUIRE(code_of([&] { read_calib(tmp.file("nocolon.txt")); }) ==
          ErrorCode::MalformedLine);
}

TEST_CASE("label files round trip boxes through the camera frame") {
  TempDir tmp;
  SceneSpec spec;
  const auto cal = canonical_calib(spec);
  SceneTruth truth;
  const auto frame = gen_scene(spec, "lab", &truth);
  std::vector<std::string> names(frame.gt_boxes.size(), "Car");
  write_labels(tmp.file("labels.txt"), frame.gt_boxes, names, cal);
  const auto back = read_labels(tmp.file("labels.txt"), cal);
  REQUIRE(back.size() == frame.gt_boxes.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    REQUIRE(back[i].cx == Catch::Approx(frame.gt_boxes[i].cx).margin(1e-6));
    REQUIRE(back[i].cy == Catch::Approx(frame.gt_boxes[i].cy).margin(1e-6));
    REQUIRE(back[i].cz == Catch::Approx(frame.gt_boxes[i].cz).margin(1e-6));
    REQUIRE(back[i].h == frame.gt_boxes[i].h);
    REQUIRE(back[i].w == frame.gt_boxes[i].w);
    REQUIRE(back[i].l == frame.gt_boxes[i].l);
    REQUIRE(back[i].ry == Catch::Approx(frame.gt_boxes[i].ry).margin(1e-6));
  }
}

TEST_CASE("label parsing skips DontCare and rejects short lines") {
  TempDir tmp;
  const Calib cal;
  write_file_text(tmp.file("labels.txt"),
                  "DontCare -1 -1 -10 0 0 0 0 -1 -1 -1 -1000 -1000 -1000 -10\n"
                  "Car 0 0 0 0 0 0 0 1.5 1.6 3.9 1 2 10 0.3\n");
  const auto boxes = read_labels(tmp.file("labels.txt"), cal);
  REQUIRE(boxes.size() == 1);
  REQUIRE(boxes[0].h == 1.5);

  write_file_text(tmp.file("short.txt"), "Car 0 0 0 0 0 0 0 1.5 1.6 3.9 1 2 10\n");
  REQUIRE(code_of([&] { read_labels(tmp.file("short.txt"), cal); }) ==
          ErrorCode::MalformedLine);
}

TEST_CASE("class names map to merged category ids") {
  REQUIRE(class_id_from_name("Car") == 0);
  REQUIRE(class_id_from_name("Van") == 0);
  REQUIRE(class_id_from_name("Truck") == 0);
  REQUIRE(class_id_from_name("Pedestrian") == 1);
  REQUIRE(class_id_from_name("Person_sitting") == 1);
  REQUIRE(class_id_from_name("Cyclist") == 2);
  REQUIRE_FALSE(class_id_from_name("Tram").has_value());
}

TEST_CASE("detection files round trip and validate their fields") {
  TempDir tmp;
  std::vector<Box2D> dets(2);
  dets[0] = Box2D{10.5, 20.25, 110.75, 220.125, 1, 0.875};
  dets[1] = Box2D{0, 0, 640, 360, 2, 0.1};
  write_detections(tmp.file("dets.txt"), dets);
  const auto back = read_detections(tmp.file("dets.txt"), 3);
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].x1 == dets[0].x1);
  REQUIRE(back[0].conf == dets[0].conf);
  REQUIRE(back[1].cls == 2);

  write_file_text(tmp.file("inverted.txt"), "0 10 0 5 5 0.9\n");
  REQUIRE(code_of([&] { read_detections(tmp.file("inverted.txt"), 3); }) ==
          ErrorCode::MalformedLine);
  write_file_text(tmp.file("conf.txt"), "0 0 0 5 5 1.5\n");
  REQUIRE(code_of([&] { read_detections(tmp.file("conf.txt"), 3); }) ==
          ErrorCode::MalformedLine);
  write_file_text(tmp.file("cls.txt"), "7 0 0 5 5 0.9\n");
  REQUIRE(code_of([&] { read_detections(tmp.file("cls.txt"), 3); }) ==
          ErrorCode::InvalidClass);
}

TEST_CASE("recoded container round trips bit-exactly") {
  TempDir tmp;
  const auto cloud = sample_recoded();
  write_recoded(tmp.file("a.recoded"), cloud);
  const auto back = read_recoded(tmp.file("a.recoded"));
  REQUIRE(back.frame_id == cloud.frame_id);
  REQUIRE(back.base_channels == cloud.base_channels);
  REQUIRE(back.n_detections == cloud.n_detections);
  REQUIRE(back.points.size() == cloud.points.size());
  for (std::size_t i = 0; i < back.points.size(); ++i) {
    REQUIRE(back.points[i] == cloud.points[i]);
  }
  write_recoded(tmp.file("b.recoded"), back);
  REQUIRE(read_file_bytes(tmp.file("a.recoded")) ==
          read_file_bytes(tmp.file("b.recoded")));
}

TEST_CASE("recoded container rejects damage") {
  TempDir tmp;
  write_recoded(tmp.file("ok.recoded"), sample_recoded());
  auto bytes = read_file_bytes(tmp.file("ok.recoded"));

  auto trailing = bytes;
  trailing.push_back(0);
  write_file_bytes(tmp.file("trailing.recoded"), trailing);
  REQUIRE(code_of([&] { read_recoded(tmp.file("trailing.recoded")); }) ==
          ErrorCode::MalformedFile);

  auto truncated = bytes;
  truncated.pop_back();
  write_file_bytes(tmp.file("truncated.recoded"), truncated);
  REQUIRE(code_of([&] { read_recoded(tmp.file("truncated.recoded")); }) ==
          ErrorCode::MalformedFile);

  auto magic = bytes;
  magic[0] = 'X';
  write_file_bytes(tmp.file("magic.recoded"), magic);
  REQUIRE(code_of([&] { read_recoded(tmp.file("magic.recoded")); }) ==
          ErrorCode::MalformedFile);

  auto version = bytes;
  version[8] = 9;
  write_file_bytes(tmp.file("version.recoded"), version);
  REQUIRE(code_of([&] { read_recoded(tmp.file("version.recoded")); }) ==
          ErrorCode::MalformedFile);
}

TEST_CASE("decorated container round trips bit-exactly") {
  TempDir tmp;
  DecoratedCloud cloud;
  cloud.frame_id = "frame_7";
  cloud.base_channels = 4;
  cloud.semantic_channels = 16;
  Rng rng(11);
  for (int i = 0; i < 6 * 20; ++i) cloud.rows.push_back(to_f32(uniform01(rng)));
  write_decorated(tmp.file("a.decorated"), cloud);
  const auto back = read_decorated(tmp.file("a.decorated"));
  REQUIRE(back == cloud);
  REQUIRE(back.count() == 6);
  write_decorated(tmp.file("b.decorated"), back);
  REQUIRE(read_file_bytes(tmp.file("a.decorated")) ==
          read_file_bytes(tmp.file("b.decorated")));
}

TEST_CASE("checkpoint container round trips named matrices in order") {
  TempDir tmp;
  Rng rng(13);
  NamedMats mats;
  mats.emplace_back("alpha", random_mat(3, 4, 1.0, rng));
  mats.emplace_back("beta", random_mat(1, 7, 2.0, rng));
  save_checkpoint(tmp.file("m.ckpt"), mats);
  const auto back = load_checkpoint(tmp.file("m.ckpt"));
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].first == "alpha");
  REQUIRE(back[1].first == "beta");
  REQUIRE(back[0].second == mats[0].second);
  REQUIRE(back[1].second == mats[1].second);
}

TEST_CASE("decimal formatting round trips doubles exactly") {
  Rng rng(17);
  for (int i = 0; i < 500; ++i) {
    const double v = (uniform01(rng) - 0.5) * std::pow(10.0, uniform_in(rng, -8, 8));
    REQUIRE(parse_double(fmt_double(v), "t") == v);
  }
  REQUIRE(parse_double(fmt_double(0.1), "t") == 0.1);
  REQUIRE(fmt_double(1.0) == "1");
  REQUIRE(fmt_double(0.5) == "0.5");
}
