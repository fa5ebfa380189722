#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "pointdeco/checks.hpp"
#include "pointdeco/pipeline.hpp"
#include "test_util.hpp"

using namespace pointdeco;
namespace fs = std::filesystem;

namespace {

constexpr const char* kSpecText =
    "seed=9\n"
    "n_objects=2\n"
    "fg_density=20\n"
    "bg_density=0.5\n"
    "noise_px=1\n";

// gen -> recode over a fresh corpus; returns the recoded directory.
std::string make_recoded(const TempDir& tmp, int frames = 4,
                         RecodeMode mode = RecodeMode::Train) {
  const auto spec_path = tmp.file("scene.spec");
  write_file_text(spec_path, kSpecText);

  RunConfig gen;
  gen.input = spec_path;
  gen.output = tmp.file("raw");
  gen.frames = frames;
  std::ostringstream err;
  REQUIRE(cmd_gen(gen, err) == 0);
  REQUIRE(err.str().empty());

  RunConfig rec;
  rec.input = tmp.file("raw");
  rec.output = tmp.file("recoded");
  rec.mode = mode;
  rec.seed = 5;
  std::ostringstream rerr;
  REQUIRE(cmd_recode(rec, rerr) == 0);
  REQUIRE(rerr.str().empty());
  return rec.output;
}

}  // namespace

TEST_CASE("gen lays out one file per frame in each subdirectory") {
  TempDir tmp;
  const auto spec_path = tmp.file("scene.spec");
  write_file_text(spec_path, kSpecText);

  RunConfig cfg;
  cfg.input = spec_path;
  cfg.output = tmp.file("raw");
  cfg.frames = 4;
  std::ostringstream err;
  REQUIRE(cmd_gen(cfg, err) == 0);

  for (const char* sub : {"velodyne", "calib", "labels", "detections"}) {
    int count = 0;
    for (const auto& entry : fs::directory_iterator(tmp.file("raw") + "/" + sub)) {
      (void)entry;
      ++count;
    }
    REQUIRE(count == 4);
  }
  REQUIRE(fs::is_regular_file(tmp.file("raw") + "/velodyne/000003.bin"));

  RunConfig bad = cfg;
  bad.input = tmp.file("bad.spec");
  write_file_text(bad.input, "n_cls=4\n");
  std::ostringstream berr;
  REQUIRE(cmd_gen(bad, berr) == 1);
  REQUIRE(berr.str().find("error:") != std::string::npos);
}

TEST_CASE("recode writes one cloud per frame that matches the naive rebuild") {
  TempDir tmp;
  const auto out = make_recoded(tmp);

  const auto csv = read_file_text(out + "/summary.csv");
  REQUIRE(csv.rfind("frame_id,points_in,points_out,frusta,fg_fraction\n", 0) ==
          0);

  SceneSpec spec = parse_scene_spec(kSpecText, "t");
  int rows = 0;
  for (int i = 0; i < 4; ++i) {
    const std::string id = "00000" + std::to_string(i);
    const auto got = read_recoded(out + "/" + id + ".recoded");
    const auto frame = gen_scene(spec, id);
    RecodeOpts opts;
    opts.mode = RecodeMode::Train;
    opts.seed = 5;
    const auto want = oracle_recode(frame, opts);
    REQUIRE(got.n_detections == want.n_detections);
    REQUIRE(got.points.size() == want.points.size());
    REQUIRE(recoded_multiset_distance(got, want) == 0);
    REQUIRE(csv.find("\n" + id + ",") != std::string::npos);
    ++rows;
  }
  REQUIRE(rows == 4);
}

TEST_CASE("recoding an empty directory succeeds with a bare summary") {
  TempDir tmp;
  fs::create_directories(tmp.file("empty/velodyne"));
  RunConfig cfg;
  cfg.input = tmp.file("empty");
  cfg.output = tmp.file("out");
  std::ostringstream err;
  REQUIRE(cmd_recode(cfg, err) == 0);
  REQUIRE(read_file_text(tmp.file("out") + "/summary.csv") ==
          "frame_id,points_in,points_out,frusta,fg_fraction\n");
}

TEST_CASE("a frame missing its calibration is reported by stem") {
  TempDir tmp;
  const auto spec_path = tmp.file("scene.spec");
  write_file_text(spec_path, kSpecText);
  RunConfig gen;
  gen.input = spec_path;
  gen.output = tmp.file("raw");
  gen.frames = 3;
  std::ostringstream gerr;
  REQUIRE(cmd_gen(gen, gerr) == 0);
  fs::remove(tmp.file("raw") + "/calib/000001.txt");

  RunConfig rec;
  rec.input = tmp.file("raw");
  rec.output = tmp.file("recoded");
  std::ostringstream err;
  REQUIRE(cmd_recode(rec, err) == 1);
  REQUIRE(err.str().find("frame 000001") != std::string::npos);
  // The healthy frames still came through.
  REQUIRE(fs::is_regular_file(tmp.file("recoded") + "/000000.recoded"));
  REQUIRE(fs::is_regular_file(tmp.file("recoded") + "/000002.recoded"));
  REQUIRE(!fs::exists(tmp.file("recoded") + "/000001.recoded"));
}

TEST_CASE("inference recoding works without label files") {
  TempDir tmp;
  const auto spec_path = tmp.file("scene.spec");
  write_file_text(spec_path, kSpecText);
  RunConfig gen;
  gen.input = spec_path;
  gen.output = tmp.file("raw");
  gen.frames = 2;
  std::ostringstream gerr;
  REQUIRE(cmd_gen(gen, gerr) == 0);
  fs::remove_all(tmp.file("raw") + "/labels");

  RunConfig rec;
  rec.input = tmp.file("raw");
  rec.output = tmp.file("infer");
  rec.mode = RecodeMode::Infer;
  std::ostringstream err;
  REQUIRE(cmd_recode(rec, err) == 0);
  const auto cloud = read_recoded(tmp.file("infer") + "/000000.recoded");
  for (const auto& p : cloud.points) REQUIRE(p.seg_label == 0);

  RunConfig train = rec;
  train.output = tmp.file("train");
  train.mode = RecodeMode::Train;
  std::ostringstream terr;
  REQUIRE(cmd_recode(train, terr) == 1);
  REQUIRE(terr.str().find("missing") != std::string::npos);
}

TEST_CASE("recode output is independent of the worker count") {
  TempDir tmp;
  const auto spec_path = tmp.file("scene.spec");
  write_file_text(spec_path, kSpecText);
  RunConfig gen;
  gen.input = spec_path;
  gen.output = tmp.file("raw");
  gen.frames = 5;
  std::ostringstream gerr;
  REQUIRE(cmd_gen(gen, gerr) == 0);

  RunConfig one;
  one.input = tmp.file("raw");
  one.output = tmp.file("serial");
  one.mode = RecodeMode::Train;
  one.seed = 3;
  one.jobs = 1;
  RunConfig many = one;
  many.output = tmp.file("parallel");
  many.jobs = 3;
  std::ostringstream e1, e2;
  REQUIRE(cmd_recode(one, e1) == 0);
  REQUIRE(cmd_recode(many, e2) == 0);

  for (int i = 0; i < 5; ++i) {
    const std::string name = "00000" + std::to_string(i) + ".recoded";
    REQUIRE(read_file_bytes(tmp.file("serial") + "/" + name) ==
            read_file_bytes(tmp.file("parallel") + "/" + name));
  }
  REQUIRE(read_file_bytes(tmp.file("serial") + "/summary.csv") ==
          read_file_bytes(tmp.file("parallel") + "/summary.csv"));
}

TEST_CASE("training writes a checkpoint and a reproducible loss curve") {
  TempDir tmp;
  const auto recoded = make_recoded(tmp);

  RunConfig train;
  train.input = recoded;
  train.checkpoint = tmp.file("model.ckpt");
  train.output = tmp.file("curve.csv");
  train.epochs = 2;
  train.m = 64;
  train.seed = 2;
  std::ostringstream err;
  REQUIRE(cmd_train_seg(train, err) == 0);

  const auto csv = read_file_text(tmp.file("curve.csv"));
  REQUIRE(csv.rfind("epoch,loss,accuracy\n", 0) == 0);
  REQUIRE(csv.find("\n1,") != std::string::npos);
  REQUIRE(csv.find("\n2,") != std::string::npos);
  REQUIRE(csv.find("\nfinal,") != std::string::npos);

  const auto entries = load_checkpoint(tmp.file("model.ckpt"));
  REQUIRE(entries.size() == 12);  // segmentation block only
  REQUIRE(entries[0].first == "seg.enc1_w");

  train.checkpoint = tmp.file("model2.ckpt");
  train.output = tmp.file("curve2.csv");
  std::ostringstream err2;
  REQUIRE(cmd_train_seg(train, err2) == 0);
  REQUIRE(read_file_bytes(tmp.file("curve.csv")) ==
          read_file_bytes(tmp.file("curve2.csv")));
  REQUIRE(read_file_bytes(tmp.file("model.ckpt")) ==
          read_file_bytes(tmp.file("model2.ckpt")));
}

TEST_CASE("training with a fusion head stores both parameter blocks") {
  TempDir tmp;
  const auto recoded = make_recoded(tmp);

  RunConfig train;
  train.input = recoded;
  train.checkpoint = tmp.file("model.ckpt");
  train.epochs = 2;
  train.m = 64;
  train.train_fusion_head = true;
  train.fusion = FusionVariant::D;
  std::ostringstream err;
  REQUIRE(cmd_train_seg(train, err) == 0);
  REQUIRE(err.str().find("fusion head D accuracy") != std::string::npos);

  const auto entries = load_checkpoint(tmp.file("model.ckpt"));
  REQUIRE(entries.size() == 12 + 14);
  REQUIRE(entries[12].first == "fus.d_f1a_w");
}

TEST_CASE("decoration appends the learned width and reruns byte-identically") {
  TempDir tmp;
  const auto recoded = make_recoded(tmp);

  RunConfig train;
  train.input = recoded;
  train.checkpoint = tmp.file("model.ckpt");
  train.epochs = 1;
  train.m = 64;
  train.train_fusion_head = true;
  train.fusion = FusionVariant::D;
  std::ostringstream terr;
  REQUIRE(cmd_train_seg(train, terr) == 0);

  RunConfig deco;
  deco.input = recoded;
  deco.output = tmp.file("decorated");
  deco.checkpoint = tmp.file("model.ckpt");
  deco.fusion = FusionVariant::D;
  std::ostringstream derr;
  REQUIRE(cmd_decorate(deco, derr) == 0);
  REQUIRE(derr.str().empty());

  const auto cloud = read_recoded(recoded + "/000000.recoded");
  const auto deco0 = read_decorated(tmp.file("decorated") + "/000000.decorated");
  REQUIRE(deco0.base_channels == 4);
  REQUIRE(deco0.semantic_channels == 16);
  REQUIRE(deco0.channels() == 20);
  REQUIRE(deco0.count() == cloud.points.size());

  RunConfig again = deco;
  again.output = tmp.file("decorated2");
  std::ostringstream aerr;
  REQUIRE(cmd_decorate(again, aerr) == 0);
  REQUIRE(read_file_bytes(tmp.file("decorated") + "/000000.decorated") ==
          read_file_bytes(tmp.file("decorated2") + "/000000.decorated"));
}

TEST_CASE("mask decoration copies the stored labels into the extra channel") {
  TempDir tmp;
  const auto recoded = make_recoded(tmp, 2);

  RunConfig train;
  train.input = recoded;
  train.checkpoint = tmp.file("seg.ckpt");
  train.epochs = 1;
  train.m = 64;
  std::ostringstream terr;
  REQUIRE(cmd_train_seg(train, terr) == 0);

  RunConfig deco;
  deco.input = recoded;
  deco.output = tmp.file("masked");
  deco.checkpoint = tmp.file("seg.ckpt");
  deco.fusion = FusionVariant::A;
  deco.mask_source = MaskSource::GroundTruth;
  std::ostringstream derr;
  REQUIRE(cmd_decorate(deco, derr) == 0);

  for (const char* stem : {"000000", "000001"}) {
    const auto cloud = read_recoded(recoded + "/" + stem + ".recoded");
    const auto deco_cloud =
        read_decorated(tmp.file("masked") + "/" + stem + ".decorated");
    REQUIRE(deco_cloud.semantic_channels == 1);
    REQUIRE(deco_cloud.count() == cloud.points.size());
    std::size_t r = 0;
    for (const auto& f : group_by_index(cloud)) {
      for (const auto& p : f.points) {
        REQUIRE(deco_cloud.rows[r * 5 + 4] ==
                static_cast<double>(p.seg_label));
        ++r;
      }
    }
  }
}

TEST_CASE("decorating with a mismatched checkpoint fails up front") {
  TempDir tmp;
  const auto recoded = make_recoded(tmp, 1);

  RunConfig train;
  train.input = recoded;
  train.checkpoint = tmp.file("seg.ckpt");
  train.epochs = 0;
  std::ostringstream terr;
  REQUIRE(cmd_train_seg(train, terr) == 0);

  RunConfig deco;
  deco.input = recoded;
  deco.output = tmp.file("decorated");
  deco.checkpoint = tmp.file("seg.ckpt");
  deco.fusion = FusionVariant::D;  // checkpoint has no fusion block
  std::ostringstream derr;
  REQUIRE(cmd_decorate(deco, derr) == 1);
  REQUIRE(derr.str().find("error:") != std::string::npos);
}

TEST_CASE("the self-check command flags an injected gradient fault") {
  RunConfig cfg;
  cfg.seed = 3;
  cfg.fault = FaultInjection{OpKind::MatMul, 2.0};
  std::ostringstream out;
  REQUIRE(cmd_check(cfg, out) == 1);
  const auto text = out.str();
  REQUIRE(text.rfind("name,status,measured,tolerance\n", 0) == 0);
  REQUIRE(text.find("grad matmul,fail") != std::string::npos);
  REQUIRE(text.find("grad relu,pass") != std::string::npos);
  REQUIRE(text.find("recode oracle equivalence,pass") != std::string::npos);
}
