// psadet: experiments and data tools for pillar-query set abstraction and
// foreground point compensation.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "cli/commands.hpp"

namespace {

using psadet::cli::RunConfig;

void common_flags(CLI::App* app, RunConfig& c) {
  app->add_option("--seed", c.seed, "Base random seed")->capture_default_str();
  app->add_option("--threads", c.threads, "Worker threads (1 = sequential reference path)")->capture_default_str();
  app->add_option("--out", c.out, "Run directory (default runs/<subcommand>)");
  app->add_option("--data-root", c.data_root,
                  "KITTI-layout root with velodyne/, label_2/, calib/ (default $PSADET_DATA_ROOT)");
  app->add_option("--frame", c.frames, "Frame stem(s), e.g. 000000 (default: all)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pillar-query grouping, foreground point compensation and KITTI evaluation tools"};
  app.set_version_flag("--version", std::string(psadet::kVersion));
  app.require_subcommand(1);
  RunConfig c;

  auto* cov = app.add_subcommand("coverage", "Ball vs pillar group coverage of object points");
  common_flags(cov, c);
  cov->add_option("--source", c.source, "fixture | kitti")->check(CLI::IsMember({"fixture", "kitti"}));
  cov->add_option("--radius", c.radii, "Query radii in meters");
  cov->add_option("--keys", c.keys, "FPS key counts per object");
  cov->add_option("--group-size", c.group_size, "Max points per group (0 = unlimited)");
  cov->add_option("--density", c.density, "Fixture point density (points / m^3)");
  cov->add_option("--fixtures", c.fixtures, "Number of seeded pedestrian fixtures");
  cov->add_option("--class", c.cls, "Object class taken from KITTI labels");

  auto* fpc = app.add_subcommand("fpc", "Candidate recall over a fusion-ratio sweep");
  common_flags(fpc, c);
  fpc->add_option("--source", c.source, "synthetic | kitti (predictions/<frame>.csv or .bin)")
      ->check(CLI::IsMember({"synthetic", "kitti"}));
  fpc->add_option("--fusion-ratio", c.fusion_ratios, "Fusion ratios (default 0 0.25 0.5 0.75 1)");
  fpc->add_option("--top-k", c.top_k, "Candidates kept per scene")->capture_default_str();
  fpc->add_option("--scenes", c.scenes, "Synthetic scenes with >= 1 occluded object (default 100)");
  fpc->add_option("--degrade", c.degrade, "Confidence factor for occluded objects")->capture_default_str();

  auto* ev = app.add_subcommand("eval", "AP@40 per class and difficulty");
  common_flags(ev, c);
  ev->add_option("--det-dir", c.det_dir, "Detections in KITTI result format")->required();
  ev->add_option("--gt-dir", c.gt_dir, "Ground-truth labels (default <data-root>/label_2)");
  ev->add_option("--calib-dir", c.calib_dir, "Calibration files (default <data-root>/calib, else reference)");
  ev->add_option("--iou-thresh", c.iou_thresh, "IoU threshold for all classes, or CLASS=VALUE");

  auto* bench = app.add_subcommand("bench", "Time FPS, ball query and pillar query");
  common_flags(bench, c);
  bench->add_option("--radius", c.radii, "Query radii (default 0.1 0.5)");
  bench->add_option("--keys", c.keys, "Key counts (default 4096 8192)");
  bench->add_option("--group-size", c.group_size, "Max points per group (default 32)");
  bench->add_option("--points", c.points, "Scene size")->capture_default_str();
  bench->add_option("--repeats", c.repeats, "Timed repetitions")->capture_default_str();
  bench->add_option("--warmup", c.warmup, "Untimed warmup runs")->capture_default_str();

  auto* syn = app.add_subcommand("synth", "Write synthetic scenes in KITTI layout");
  common_flags(syn, c);
  syn->add_option("--scenes", c.scenes, "Number of scenes (default 1)");
  syn->add_option("--spec", c.spec, "Scene spec JSON (default: random street scenes)")->check(CLI::ExistingFile);
  syn->add_option("--degrade", c.degrade, "Confidence factor for occluded objects")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  c.subcommand = app.get_subcommands().front()->get_name();
  try {
    std::cout << psadet::cli::run(c);
    std::cout.flush();
  } catch (const std::exception& e) {
    std::cerr << "psadet: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
