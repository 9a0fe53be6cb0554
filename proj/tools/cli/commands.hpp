#pragma once

// Subcommand implementations for the psadet tool. Each command reads its
// inputs, writes CSV + JSON outputs into a run directory and returns a short
// human-readable summary. The run directory is staged as "<out>.partial" and
// renamed only when the command succeeds.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psadet/psadet.hpp"

namespace psadet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kDataRootEnv = "PSADET_DATA_ROOT";

struct RunConfig {
  std::string subcommand;
  std::uint64_t seed = 0;
  unsigned threads = default_threads();
  fs::path out;
  std::string source;     // coverage: fixture|kitti, fpc: synthetic|kitti
  fs::path data_root;     // KITTI layout: velodyne/, label_2/, calib/, predictions/
  std::vector<std::string> frames;  // empty: every frame under data_root
  std::vector<double> radii;
  std::vector<std::size_t> keys;
  std::vector<double> fusion_ratios;
  std::size_t top_k = 16;
  std::vector<std::string> iou_thresh;  // "0.5" (all classes) or "Car=0.7"
  std::size_t group_size = 0;           // 0: unlimited (coverage) / 32 (bench)
  std::string cls = "Pedestrian";
  double density = 2000.0;
  std::size_t fixtures = 1;
  std::size_t scenes = 0;
  double degrade = 0.3;
  fs::path det_dir;
  fs::path gt_dir;
  fs::path calib_dir;
  std::size_t points = 16384;
  std::size_t repeats = 7;
  std::size_t warmup = 1;
  fs::path spec;

  json to_json() const {
    json j = {{"source", source},         {"data_root", data_root.string()},
              {"frames", frames},         {"radii", radii},
              {"keys", keys},             {"fusion_ratios", fusion_ratios},
              {"top_k", top_k},           {"iou_thresh", iou_thresh},
              {"group_size", group_size}, {"class", cls},
              {"density", density},       {"fixtures", fixtures},
              {"scenes", scenes},         {"degrade", degrade},
              {"det_dir", det_dir.string()}, {"gt_dir", gt_dir.string()},
              {"calib_dir", calib_dir.string()}, {"points", points},
              {"repeats", repeats},       {"warmup", warmup},
              {"spec", spec.string()}};
    return j;
  }
};

/// Fills subcommand-specific defaults so meta.json records the values used.
inline void resolve_defaults(RunConfig& c) {
  if (c.data_root.empty()) {
    if (const char* env = std::getenv(kDataRootEnv)) c.data_root = env;
  }
  if (c.threads == 0) throw Error("--threads must be >= 1");
  if (c.subcommand == "coverage") {
    if (c.source.empty()) c.source = "fixture";
    if (c.radii.empty()) c.radii = {0.1, 0.25, 0.5, 1.0};
    if (c.keys.empty()) c.keys = {1, 2, 4, 8, 16, 32, 64};
  } else if (c.subcommand == "fpc") {
    if (c.source.empty()) c.source = "synthetic";
    if (c.fusion_ratios.empty()) c.fusion_ratios = {0.0, 0.25, 0.5, 0.75, 1.0};
    if (c.scenes == 0) c.scenes = 100;
  } else if (c.subcommand == "bench") {
    if (c.radii.empty()) c.radii = {0.1, 0.5};
    if (c.keys.empty()) c.keys = {4096, 8192};
    if (c.group_size == 0) c.group_size = 32;
  } else if (c.subcommand == "synth") {
    if (c.scenes == 0) c.scenes = 1;
  }
  if (c.out.empty()) c.out = fs::path("runs") / c.subcommand;
}

// ---------------------------------------------------------------------------
// Run directory

class RunDir {
 public:
  explicit RunDir(fs::path final_dir) : final_(std::move(final_dir)), tmp_(final_.string() + ".partial") {
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }
  RunDir(const RunDir&) = delete;
  RunDir& operator=(const RunDir&) = delete;
  ~RunDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(tmp_, ec);
    }
  }

  fs::path path(const fs::path& rel) const { return tmp_ / rel; }

  void write(const fs::path& rel, std::string_view data) {
    const fs::path p = tmp_ / rel;
    fs::create_directories(p.parent_path());
    kitti::write_file(p, data);
    files_.push_back(rel.generic_string());
  }
  void write_json(const fs::path& rel, const json& j) { write(rel, j.dump(2) + "\n"); }
  void record(const fs::path& rel) { files_.push_back(rel.generic_string()); }
  const std::vector<std::string>& files() const { return files_; }

  void commit() {
    fs::remove_all(final_);
    if (!final_.parent_path().empty()) fs::create_directories(final_.parent_path());
    fs::rename(tmp_, final_);
    committed_ = true;
  }

 private:
  fs::path final_;
  fs::path tmp_;
  std::vector<std::string> files_;
  bool committed_ = false;
};

inline json meta_json(const RunConfig& c, const RunDir& dir) {
  return {{"tool", "psadet"}, {"version", kVersion}, {"subcommand", c.subcommand}, {"seed", c.seed},
          {"threads", c.threads}, {"config", c.to_json()}, {"outputs", dir.files()}};
}

// ---------------------------------------------------------------------------
// Helpers

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct KittiFrame {
  std::string stem;
  PointCloud cloud;
  std::vector<kitti::KittiObject> labels;
  kitti::KittiCalib calib;
};

inline std::vector<std::string> frame_stems(const RunConfig& c) {
  if (c.data_root.empty()) throw Error(std::string("no data root: pass --data-root or set ") + kDataRootEnv);
  if (!c.frames.empty()) return c.frames;
  auto stems = kitti::list_stems(c.data_root / "velodyne", ".bin");
  if (stems.empty()) throw Error("no frames under " + (c.data_root / "velodyne").string());
  return stems;
}

inline kitti::KittiCalib calib_for(const fs::path& calib_dir, const std::string& stem) {
  if (calib_dir.empty()) return kitti::KittiCalib::reference();
  return kitti::read_calib(calib_dir / (stem + ".txt"));
}

inline KittiFrame load_frame(const fs::path& root, const std::string& stem) {
  KittiFrame f;
  f.stem = stem;
  f.cloud = kitti::read_point_cloud(root / "velodyne" / (stem + ".bin"));
  f.labels = kitti::read_labels(root / "label_2" / (stem + ".txt"));
  const fs::path calib = root / "calib" / (stem + ".txt");
  f.calib = fs::exists(calib) ? kitti::read_calib(calib) : kitti::KittiCalib::reference();
  return f;
}

/// Per-class IoU thresholds after applying "--iou-thresh" overrides.
inline eval::EvalConfig eval_config(const RunConfig& c) {
  eval::EvalConfig cfg;
  for (const auto& s : c.iou_thresh) {
    const auto eq = s.find('=');
    const std::string value = eq == std::string::npos ? s : s.substr(eq + 1);
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw Error("--iou-thresh: malformed value '" + s + "'");
    }
    if (!(v > 0.0 && v <= 1.0)) throw Error("--iou-thresh: value must be in (0, 1]");
    if (eq == std::string::npos) {
      for (auto& [cls, thr] : cfg.iou_thresholds) thr = v;
    } else {
      cfg.iou_thresholds[s.substr(0, eq)] = v;
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// coverage

inline std::string cmd_coverage(const RunConfig& c, RunDir& dir) {
  std::vector<experiments::CoverageRow> rows;
  const std::size_t cap = c.group_size == 0 ? grouping::kUnlimited : c.group_size;
  if (c.source == "fixture") {
    if (!(c.density > 0.0)) throw Error("coverage: empty scene (density must be positive)");
    if (c.fixtures == 0) throw Error("coverage: --fixtures must be >= 1");
    std::vector<PointCloud> objs;
    for (std::size_t i = 0; i < c.fixtures; ++i) objs.push_back(synth::pedestrian_fixture(c.density, c.seed + i));
    rows = experiments::coverage_sweep(objs, "fixture", c.keys, c.radii, cap);
  } else if (c.source == "kitti") {
    for (const auto& stem : frame_stems(c)) {
      const auto f = load_frame(c.data_root, stem);
      if (f.cloud.empty()) throw Error("coverage: empty scene in frame " + stem);
      std::vector<PointCloud> objs;
      for (const auto& lo : kitti::labels_to_lidar(f.labels, f.calib)) {
        if (lo.type != c.cls) continue;
        std::vector<std::size_t> inside;
        for (std::size_t i = 0; i < f.cloud.size(); ++i) {
          if (point_in_box(f.cloud[i], lo.box)) inside.push_back(i);
        }
        if (!inside.empty()) objs.push_back(f.cloud.select(inside));
      }
      auto r = experiments::coverage_sweep(objs, stem, c.keys, c.radii, cap);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    if (rows.empty()) throw Error("coverage: no " + c.cls + " objects with points in the selected frames");
  } else {
    throw Error("coverage: unknown --source '" + c.source + "' (fixture|kitti)");
  }

  std::string csv = "source,object,points,query,n_keys,radius,coverage\n";
  json arr = json::array();
  for (const auto& r : rows) {
    const std::string q(grouping::to_string(r.query));
    csv += r.source + ',' + std::to_string(r.object) + ',' + std::to_string(r.points) + ',' + q + ',' +
           std::to_string(r.n_keys) + ',' + num(r.radius) + ',' + num(r.coverage) + '\n';
    arr.push_back({{"source", r.source}, {"object", r.object}, {"points", r.points}, {"query", q},
                   {"n_keys", r.n_keys}, {"radius", r.radius}, {"coverage", r.coverage}});
  }
  dir.write("coverage.csv", csv);
  dir.write_json("coverage.json", arr);
  return std::to_string(rows.size()) + " coverage rows\n";
}

// ---------------------------------------------------------------------------
// fpc

inline std::string cmd_fpc(const RunConfig& c, RunDir& dir) {
  if (c.top_k == 0) throw Error("fpc: --top-k must be >= 1");
  std::vector<std::string> scene_ids;
  std::vector<std::vector<experiments::SweepRow>> per_scene;
  if (c.source == "synthetic") {
    experiments::SyntheticSweepConfig sc;
    sc.scenes = c.scenes;
    sc.seed = c.seed;
    sc.ratios = c.fusion_ratios;
    sc.top_k = c.top_k;
    sc.degrade = c.degrade;
    sc.threads = c.threads;
    auto sw = experiments::synthetic_sweep(sc);
    for (auto s : sw.scene_seeds) scene_ids.push_back(std::to_string(s));
    per_scene = std::move(sw.per_scene);
  } else if (c.source == "kitti") {
    for (const auto& stem : frame_stems(c)) {
      const auto f = load_frame(c.data_root, stem);
      fs::path pred_path = c.data_root / "predictions" / (stem + ".csv");
      if (!fs::exists(pred_path)) pred_path.replace_extension(".bin");
      const auto pred = fpc::read_predictions(pred_path);
      experiments::SweepInput in{f.cloud.points(), pred.confidence, pred.boxes, {}, {}};
      for (const auto& lo : kitti::labels_to_lidar(f.labels, f.calib)) {
        in.gt_boxes.push_back(lo.box);
        in.gt_occluded.push_back(lo.source.occlusion >= 1 ? 1 : 0);
      }
      scene_ids.push_back(stem);
      per_scene.push_back(experiments::sweep_scene(in, c.fusion_ratios, c.top_k));
    }
  } else {
    throw Error("fpc: unknown --source '" + c.source + "' (synthetic|kitti)");
  }

  std::vector<experiments::SweepRow> total(c.fusion_ratios.size());
  std::string scenes_csv = "scene,ratio,recalled,total,occluded_recalled,occluded_total\n";
  std::string cand_csv = "scene,ratio,rank,point\n";
  for (std::size_t s = 0; s < per_scene.size(); ++s) {
    for (std::size_t r = 0; r < total.size(); ++r) {
      const auto& row = per_scene[s][r];
      total[r].ratio = row.ratio;
      total[r].recalled += row.recalled;
      total[r].total += row.total;
      total[r].occluded_recalled += row.occluded_recalled;
      total[r].occluded_total += row.occluded_total;
      scenes_csv += scene_ids[s] + ',' + num(row.ratio) + ',' + std::to_string(row.recalled) + ',' +
                    std::to_string(row.total) + ',' + std::to_string(row.occluded_recalled) + ',' +
                    std::to_string(row.occluded_total) + '\n';
      for (std::size_t k = 0; k < row.candidates.size(); ++k) {
        cand_csv += scene_ids[s] + ',' + num(row.ratio) + ',' + std::to_string(k) + ',' +
                    std::to_string(row.candidates[k]) + '\n';
      }
    }
  }
  std::string csv = "ratio,recalled,total,recall,occluded_recalled,occluded_total,occluded_recall\n";
  json arr = json::array();
  std::ostringstream summary;
  for (const auto& t : total) {
    csv += num(t.ratio) + ',' + std::to_string(t.recalled) + ',' + std::to_string(t.total) + ',' + num(t.recall()) +
           ',' + std::to_string(t.occluded_recalled) + ',' + std::to_string(t.occluded_total) + ',' +
           num(t.occluded_recall()) + '\n';
    arr.push_back({{"ratio", t.ratio}, {"recalled", t.recalled}, {"total", t.total}, {"recall", t.recall()},
                   {"occluded_recalled", t.occluded_recalled}, {"occluded_total", t.occluded_total},
                   {"occluded_recall", t.occluded_recall()}});
    summary << "r=" << num(t.ratio) << " recall=" << num(t.recall()) << '\n';
  }
  dir.write("fpc_sweep.csv", csv);
  dir.write_json("fpc_sweep.json", {{"scenes", scene_ids}, {"top_k", c.top_k}, {"sweep", arr}});
  dir.write("fpc_scenes.csv", scenes_csv);
  dir.write("candidates.csv", cand_csv);
  return summary.str();
}

// ---------------------------------------------------------------------------
// eval

inline std::string cmd_eval(const RunConfig& c, RunDir& dir) {
  const fs::path gt_dir = !c.gt_dir.empty() ? c.gt_dir
                          : !c.data_root.empty() ? c.data_root / "label_2"
                                                 : throw Error("eval: pass --gt-dir or --data-root");
  if (c.det_dir.empty()) throw Error("eval: --det-dir is required");
  if (!fs::is_directory(c.det_dir)) throw Error("eval: not a directory: " + c.det_dir.string());
  fs::path calib_dir = c.calib_dir;
  if (calib_dir.empty() && !c.data_root.empty() && fs::is_directory(c.data_root / "calib")) {
    calib_dir = c.data_root / "calib";
  }
  const auto cfg = eval_config(c);

  std::vector<eval::FrameData> frames;
  const auto stems = c.frames.empty() ? kitti::list_stems(gt_dir, ".txt") : c.frames;
  if (stems.empty()) throw Error("eval: no label files under " + gt_dir.string());
  for (const auto& stem : stems) {
    const auto calib = calib_for(calib_dir, stem);
    eval::FrameData f;
    f.gts = eval::ground_truths(kitti::read_labels(gt_dir / (stem + ".txt")), calib);
    const fs::path det = c.det_dir / (stem + ".txt");
    if (fs::exists(det)) f.dets = kitti::read_detections(det, calib);
    frames.push_back(std::move(f));
  }

  std::string csv = "class,difficulty,iou_threshold,num_gt,num_det,num_tp,ap40\n";
  std::string pr = "class,difficulty,score,recall,precision\n";
  json arr = json::array();
  std::ostringstream summary;
  for (const auto& [cls, thr] : cfg.iou_thresholds) {
    for (auto level : {eval::Difficulty::easy, eval::Difficulty::moderate, eval::Difficulty::hard}) {
      const std::string lv(eval::to_string(level));
      std::size_t n_gt = 0;
      for (const auto& f : frames) {
        for (const auto& g : f.gts) n_gt += (g.cls == cls && eval::qualifies(g.attrs, level, cfg.difficulty)) ? 1 : 0;
      }
      if (n_gt == 0) {
        // AP is undefined without ground truth; the row is kept with an empty value.
        csv += cls + ',' + lv + ',' + num(thr) + ",0,,,\n";
        arr.push_back({{"class", cls}, {"difficulty", lv}, {"iou_threshold", thr}, {"num_gt", 0}, {"ap40", nullptr}});
        continue;
      }
      const auto res = eval::evaluate_class(frames, cls, level, cfg);
      csv += cls + ',' + lv + ',' + num(thr) + ',' + std::to_string(res.num_gt) + ',' + std::to_string(res.num_det) +
             ',' + std::to_string(res.num_tp) + ',' + num(res.ap) + '\n';
      json curve = json::array();
      for (const auto& p : res.curve) {
        pr += cls + ',' + lv + ',' + num(p.score) + ',' + num(p.recall) + ',' + num(p.precision) + '\n';
        curve.push_back({{"score", p.score}, {"recall", p.recall}, {"precision", p.precision}});
      }
      arr.push_back({{"class", cls}, {"difficulty", lv}, {"iou_threshold", thr}, {"num_gt", res.num_gt},
                     {"num_det", res.num_det}, {"num_tp", res.num_tp}, {"ap40", res.ap},
                     {"interpolated", res.interpolated}, {"curve", curve}});
      summary << cls << ' ' << lv << " AP40=" << num(res.ap) << '\n';
    }
  }
  dir.write("ap.csv", csv);
  dir.write("pr_curves.csv", pr);
  dir.write_json("ap.json", arr);
  return summary.str();
}

// ---------------------------------------------------------------------------
// bench

inline std::string cmd_bench(const RunConfig& c, RunDir& dir) {
  if (c.repeats == 0) throw Error("bench: --repeats must be >= 1");
  const auto cloud = synth::street_cloud(c.seed, c.points);
  const auto rows = experiments::bench_kernels(cloud, c.keys, c.radii, c.group_size, c.repeats, c.warmup, c.threads);

  std::string csv = "kernel,n_points,n_keys,radius,group_size,median_ms,min_ms,repeats,deterministic\n";
  json arr = json::array();
  std::map<std::pair<std::size_t, double>, std::pair<double, double>> pairs;  // (keys, r) -> (ball, pillar)
  for (const auto& r : rows) {
    csv += r.kernel + ',' + std::to_string(r.n_points) + ',' + std::to_string(r.n_keys) + ',' + num(r.radius) + ',' +
           std::to_string(r.group_size) + ',' + num(r.median_ms) + ',' + num(r.min_ms) + ',' +
           std::to_string(r.repeats) + ',' + (r.deterministic ? "true" : "false") + '\n';
    arr.push_back({{"kernel", r.kernel}, {"n_points", r.n_points}, {"n_keys", r.n_keys}, {"radius", r.radius},
                   {"group_size", r.group_size}, {"median_ms", r.median_ms}, {"min_ms", r.min_ms},
                   {"repeats", r.repeats}, {"deterministic", r.deterministic}});
    if (r.kernel == "ball_query") pairs[{r.n_keys, r.radius}].first = r.median_ms;
    if (r.kernel == "pillar_query") pairs[{r.n_keys, r.radius}].second = r.median_ms;
  }
  std::string ratio_csv = "n_keys,radius,ball_median_ms,pillar_median_ms,pillar_over_ball\n";
  json ratios = json::array();
  std::ostringstream summary;
  for (const auto& [k, v] : pairs) {
    const double ratio = v.first > 0.0 ? v.second / v.first : 0.0;
    ratio_csv += std::to_string(k.first) + ',' + num(k.second) + ',' + num(v.first) + ',' + num(v.second) + ',' +
                 num(ratio) + '\n';
    ratios.push_back({{"n_keys", k.first}, {"radius", k.second}, {"ball_median_ms", v.first},
                      {"pillar_median_ms", v.second}, {"pillar_over_ball", ratio}});
    summary << "keys=" << k.first << " r=" << num(k.second) << " pillar/ball=" << num(ratio) << '\n';
  }
  dir.write("bench.csv", csv);
  dir.write("bench_ratio.csv", ratio_csv);
  dir.write_json("bench.json", {{"timings", arr}, {"ratios", ratios}});
  return summary.str();
}

// ---------------------------------------------------------------------------
// synth

inline std::string cmd_synth(const RunConfig& c, RunDir& dir) {
  std::optional<synth::SceneSpec> base;
  if (!c.spec.empty()) base = synth::spec_from_json(json::parse(kitti::read_file(c.spec), nullptr, true, true));
  const auto calib = kitti::KittiCalib::reference();
  std::size_t n_points = 0;
  for (std::size_t i = 0; i < c.scenes; ++i) {
    synth::SceneSpec spec = base ? *base : synth::random_street_spec(c.seed + i);
    spec.seed = c.seed + i;
    if (!base) spec.oracle.degrade = c.degrade;
    const auto scene = synth::build_scene(spec);
    const auto pred = synth::oracle_predictions(scene, spec.oracle, synth::oracle_seed(spec));
    const std::string stem = kitti::frame_name(i);
    dir.write(fs::path("velodyne") / (stem + ".bin"), kitti::encode_point_cloud(scene.cloud));
    dir.write(fs::path("label_2") / (stem + ".txt"), kitti::format_labels(synth::scene_labels(scene, calib)));
    dir.write(fs::path("calib") / (stem + ".txt"), kitti::format_calib(calib));
    dir.write(fs::path("predictions") / (stem + ".csv"),
              fpc::format_predictions_csv({pred.confidence, pred.boxes}));
    dir.write_json(fs::path("spec") / (stem + ".json"), synth::spec_to_json(spec));
    n_points += scene.cloud.size();
  }
  return std::to_string(c.scenes) + " scenes, " + std::to_string(n_points) + " points\n";
}

// ---------------------------------------------------------------------------

/// Runs one subcommand end to end. Throws on any error; the partial run
/// directory is removed in that case.
inline std::string run(RunConfig c) {
  resolve_defaults(c);
  RunDir dir(c.out);
  std::string summary;
  if (c.subcommand == "coverage") summary = cmd_coverage(c, dir);
  else if (c.subcommand == "fpc") summary = cmd_fpc(c, dir);
  else if (c.subcommand == "eval") summary = cmd_eval(c, dir);
  else if (c.subcommand == "bench") summary = cmd_bench(c, dir);
  else if (c.subcommand == "synth") summary = cmd_synth(c, dir);
  else throw Error("unknown subcommand '" + c.subcommand + "'");
  dir.write_json("meta.json", meta_json(c, dir));
  dir.commit();
  return summary;
}

}  // namespace psadet::cli
