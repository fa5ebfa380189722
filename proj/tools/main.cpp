// Command-line front end for the decoration pipeline. Subcommands:
//   gen        expand a scene spec file into a directory of synthetic frames
//   recode     filter + label points from 2D detections, one file per frame
//   train-seg  fit the segmentation net (optionally a fusion head) on recoded
//              frames, writing a checkpoint and a per-epoch metrics CSV
//   decorate   append semantic channels to recoded frames from a checkpoint
//   check      run the self-check suites and print a pass/fail report

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "pointdeco/pipeline.hpp"

namespace {

using pointdeco::RunConfig;

void add_seed(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
}

void add_jobs(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--jobs", cfg.jobs, "worker threads for per-frame stages")
      ->capture_default_str();
}

void add_n_cls(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--n-cls", cfg.n_cls, "number of detection classes")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"point cloud decoration pipeline"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string mode = "infer";
  std::string fusion = "D";
  std::string mask = "gt";
  std::string fault_name;
  double fault_scale = 2.0;

  auto* gen = app.add_subcommand(
      "gen", "generate synthetic frames from a scene spec file");
  gen->add_option("--input", cfg.input, "scene spec file (key=value lines)")
      ->required();
  gen->add_option("--output", cfg.output, "output frame directory")
      ->required();
  gen->add_option("--frames", cfg.frames, "number of frames")
      ->capture_default_str();
  auto* gen_seed =
      gen->add_option("--seed", cfg.seed, "override the spec file's seed");

  auto* recode = app.add_subcommand(
      "recode", "project points into 2D detections and write labeled clouds");
  recode->add_option("--input", cfg.input,
                     "frame directory (velodyne/, calib/, detections/, "
                     "labels/)")
      ->required();
  recode->add_option("--output", cfg.output, "output directory")->required();
  recode->add_option("--mode", mode, "jitter policy: train or infer")
      ->check(CLI::IsMember({"train", "infer"}))
      ->capture_default_str();
  recode
      ->add_option("--min-conf", cfg.min_conf,
                   "detections below this confidence are dropped")
      ->capture_default_str();
  add_seed(recode, cfg);
  add_n_cls(recode, cfg);
  add_jobs(recode, cfg);

  auto* train = app.add_subcommand(
      "train-seg", "train the segmentation network on recoded frames");
  train->add_option("--input", cfg.input, "directory of .recoded files")
      ->required();
  train->add_option("--checkpoint", cfg.checkpoint, "checkpoint file to write")
      ->required();
  train->add_option("--output", cfg.output,
                    "per-epoch metrics CSV path (optional)");
  train->add_option("--epochs", cfg.epochs, "training epochs")
      ->capture_default_str();
  train->add_option("--lr", cfg.lr, "gradient step size")
      ->capture_default_str();
  train->add_option("--m", cfg.m, "points resampled per frustum batch")
      ->capture_default_str();
  train
      ->add_option("--target-accuracy", cfg.target_accuracy,
                   "stop early once training accuracy reaches this (0 = off)")
      ->capture_default_str();
  auto* train_fusion_opt =
      train->add_option("--fusion", fusion,
                        "also fit this fusion head after the segmentation net")
          ->check(CLI::IsMember({"A", "B", "C", "D"}));
  add_seed(train, cfg);
  add_n_cls(train, cfg);

  auto* decorate = app.add_subcommand(
      "decorate", "append semantic channels to recoded frames");
  decorate->add_option("--input", cfg.input, "directory of .recoded files")
      ->required();
  decorate->add_option("--output", cfg.output, "output directory")->required();
  decorate
      ->add_option("--checkpoint", cfg.checkpoint, "checkpoint file to read")
      ->required();
  decorate->add_option("--fusion", fusion, "fusion variant")
      ->check(CLI::IsMember({"A", "B", "C", "D"}))
      ->capture_default_str();
  decorate
      ->add_option("--mask", mask,
                   "variant A mask source: gt (label channel) or pred "
                   "(network prediction)")
      ->check(CLI::IsMember({"gt", "pred"}))
      ->capture_default_str();
  add_n_cls(decorate, cfg);
  add_jobs(decorate, cfg);

  auto* check =
      app.add_subcommand("check", "run the self-check suites and report");
  add_seed(check, cfg);
  check->add_option("--inject-fault", fault_name,
                    "scale one primitive's backward pass to prove the "
                    "gradient checks catch it (e.g. matmul)");
  check
      ->add_option("--fault-scale", fault_scale,
                   "backward scale factor for --inject-fault")
      ->capture_default_str();
  check->add_flag("--ordering", cfg.with_ordering,
                  "include the slow fusion-variant ordering suite");

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.mode = mode == "train" ? pointdeco::RecodeMode::Train
                               : pointdeco::RecodeMode::Infer;
    cfg.fusion = pointdeco::fusion_variant_from_name(fusion);
    cfg.mask_source = mask == "pred" ? pointdeco::MaskSource::Predicted
                                     : pointdeco::MaskSource::GroundTruth;
    cfg.train_fusion_head = train_fusion_opt->count() > 0;
    cfg.seed_given = gen_seed->count() > 0;
    if (!fault_name.empty()) {
      cfg.fault = pointdeco::FaultInjection{
          pointdeco::op_kind_from_name(fault_name), fault_scale};
    }

    if (gen->parsed()) return pointdeco::cmd_gen(cfg, std::cerr);
    if (recode->parsed()) return pointdeco::cmd_recode(cfg, std::cerr);
    if (train->parsed()) return pointdeco::cmd_train_seg(cfg, std::cerr);
    if (decorate->parsed()) return pointdeco::cmd_decorate(cfg, std::cerr);
    if (check->parsed()) return pointdeco::cmd_check(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
