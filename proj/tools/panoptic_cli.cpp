// panoptic: synthetic data generation, map fusion, segmentation export,
// retrieval, evaluation and timing.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "panoptic/config.hpp"
#include "panoptic/dataset.hpp"
#include "panoptic/errors.hpp"
#include "panoptic/evaluation.hpp"
#include "panoptic/logging.hpp"
#include "panoptic/pipeline.hpp"
#include "panoptic/query.hpp"
#include "panoptic/synth.hpp"
#include "panoptic/track_io.hpp"

namespace fs = std::filesystem;
using namespace panoptic;

namespace {

std::string fixed3(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", x);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void require_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IngestError("no such directory: " + dir.string());
}

PipelineConfig config_or_default(const std::string& path) {
  return path.empty() ? PipelineConfig{} : load_config(path);
}

struct SynthArgs {
  std::uint64_t seed = 1;
  int objects = 5;
  int frames = 60;
  int classes = 5;
  double noise = 0.05;
  int width = 640;
  int height = 480;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  SynthConfig cfg;
  cfg.seed = a.seed;
  cfg.n_objects = a.objects;
  cfg.n_classes = a.classes;
  cfg.noise = a.noise;
  cfg.trajectory.n_frames = a.frames;
  const double scale_x = a.width / 640.0, scale_y = a.height / 480.0;
  cfg.intrinsics = {525.0 * scale_x, 525.0 * scale_y, (a.width - 1) / 2.0, (a.height - 1) / 2.0, a.width, a.height};
  const SynthScene scene = generate_scene(cfg);
  export_dataset(scene, cfg, a.out);
  spdlog::info("wrote {} objects, {} frames to {}", scene.objects.size(), a.frames, a.out);
  return 0;
}

struct FuseArgs {
  std::string data;
  std::string out;
  std::string config;
};

int run_fuse(const FuseArgs& a) {
  const PipelineConfig cfg = config_or_default(a.config);
  require_dir(a.data);
  const DatasetManifest manifest = read_manifest(a.data);
  Pipeline pipeline(cfg, manifest.intrinsics);
  const RunReport report = run_pipeline(pipeline, manifest);

  const fs::path out = a.out;
  fs::create_directories(out);
  save_map_snapshot(pipeline.grid(), out / "map.pmap");
  save_tracks(out, pipeline.tracker().tracks(), cfg.semantics.emb_dim);
  {
    std::ofstream f = open_out(out / "report.txt");
    write_run_report(f, report);
  }
  {
    std::ofstream f = open_out(out / "timing.txt");
    write_timing_report(f, report);
  }
  {
    std::ofstream f = open_out(out / "config.txt");
    f << format_config(cfg);
  }
  spdlog::info("{} tracks, {} voxels", report.final_tracks, report.final_voxels);
  if (report.aborted) {
    spdlog::error("run stopped early: {} (partial map saved)", report.abort_reason);
    return 1;
  }
  return 0;
}

void write_ply(const fs::path& path, const std::vector<SurfacePoint>& points) {
  std::ofstream out = open_out(path);
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  char buf[96];
  for (const SurfacePoint& p : points) {
    std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %d %d %d\n", p.position.x(), p.position.y(), p.position.z(),
                  p.color[0], p.color[1], p.color[2]);
    out << buf;
  }
}

int run_segment(const std::string& map_dir, const std::string& out_dir) {
  require_dir(map_dir);
  const VoxelGrid grid = load_map_snapshot(fs::path(map_dir) / "map.pmap");
  std::set<InstanceId> ids;
  grid.for_each([&](const VoxelKey&, const Voxel& v) {
    if (v.label != kNoInstance) ids.insert(v.label);
  });
  fs::create_directories(out_dir);
  std::size_t written = 0;
  for (InstanceId id : ids) {
    const std::vector<SurfacePoint> points = extract_instance_points(grid, id);
    if (points.empty()) continue;
    write_ply(fs::path(out_dir) / ("instance_" + std::to_string(id) + ".ply"), points);
    ++written;
  }
  spdlog::info("wrote {} instance point clouds to {}", written, out_dir);
  return 0;
}

struct QueryArgs {
  std::string map;
  std::string query;
  std::size_t row = 0;
  std::size_t top_k = 0;
  double threshold = 0.0;
};

int run_query(const QueryArgs& a, bool by_threshold) {
  require_dir(a.map);
  const TrackMap tracks = load_tracks(a.map);
  const EmbeddingTable table = read_embeddings(a.query);
  if (a.row >= table.rows.size()) throw FormatError(a.query + ": no row " + std::to_string(a.row));
  RetrievalMode mode;
  if (by_threshold) {
    mode.threshold = a.threshold;
  } else {
    mode.top_k = a.top_k;
  }
  for (const RankedInstance& r : retrieve(tracks, normalized_or_throw(table.rows[a.row]), mode)) {
    std::printf("%u %.6f\n", r.id, r.score);
  }
  return 0;
}

struct EvalArgs {
  std::string map;
  std::string data;
  std::vector<double> iou;
  std::vector<int> exclude;
  std::string report;
};

int run_eval(const EvalArgs& a) {
  require_dir(a.map);
  require_dir(a.data);
  const VoxelGrid grid = load_map_snapshot(fs::path(a.map) / "map.pmap");
  const TrackMap tracks = load_tracks(a.map);
  const LabelBank labels = read_label_bank(a.data);
  const std::vector<SynthObject> objects = read_gt_instances(fs::path(a.data) / "gt_instances.txt");
  EvalOptions options;
  if (!a.iou.empty()) options.iou_thresholds = a.iou;
  options.excluded_classes = a.exclude;
  const EvalResult r = evaluate(grid, tracks, labels, objects, options);

  std::string text;
  for (const auto& [t, v] : r.map) text += "map@" + std::to_string(std::lround(t * 100.0)) + ' ' + fixed3(v) + '\n';
  text += "miou " + fixed3(r.semantic.miou) + '\n';
  text += "macc " + fixed3(r.semantic.macc) + '\n';
  text += "fmiou " + fixed3(r.semantic.fmiou) + '\n';
  text += "fmacc " + fixed3(r.semantic.fmacc) + '\n';
  text += "top1 " + fixed3(r.top1) + '\n';
  std::cout << text;
  if (!a.report.empty()) {
    std::ofstream f = open_out(a.report);
    f << text << "gt_instances " << r.gt_instances << '\n' << "predicted_instances " << r.predicted_instances << '\n';
  }
  return 0;
}

int run_bench(const std::string& data, const std::string& config) {
  const PipelineConfig cfg = config_or_default(config);
  require_dir(data);
  const DatasetManifest manifest = read_manifest(data);
  Pipeline pipeline(cfg, manifest.intrinsics);
  const RunReport report = run_pipeline(pipeline, manifest);
  const StageTimes mean = mean_stage_times(report);
  std::size_t processed = 0;
  for (const FrameReport& f : report.frames) processed += f.skipped ? 0 : 1;
  std::printf("frames %zu\n", processed);
  for (std::size_t s = 0; s < kStageNames.size(); ++s) std::printf("%-10s %8.3f ms\n", kStageNames[s], mean.ms[s]);
  std::printf("%-10s %8.3f ms\n", "tracking", mean.tracking());
  std::printf("%-10s %8.3f ms\n", "total", mean.total());
  return report.aborted ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Online panoptic mapping with tracked open-vocabulary instances"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic RGB-D dataset");
  synth_cmd->add_option("--seed", synth.seed, "Random seed");
  synth_cmd->add_option("--objects", synth.objects, "Number of objects")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--frames", synth.frames, "Number of orbit frames")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--classes", synth.classes, "Number of classes")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--noise", synth.noise, "Embedding noise level");
  synth_cmd->add_option("--width", synth.width, "Image width")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--height", synth.height, "Image height")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();

  FuseArgs fuse;
  auto* fuse_cmd = app.add_subcommand("fuse", "Build a map and track set from a dataset");
  fuse_cmd->add_option("--data", fuse.data, "Dataset directory")->required();
  fuse_cmd->add_option("--out", fuse.out, "Output directory")->required();
  fuse_cmd->add_option("--config", fuse.config, "Config file");

  std::string segment_map, segment_out;
  auto* segment_cmd = app.add_subcommand("segment", "Export per-instance point clouds as PLY");
  segment_cmd->add_option("--map", segment_map, "Fused output directory")->required();
  segment_cmd->add_option("--out", segment_out, "Output directory")->required();

  QueryArgs query;
  auto* query_cmd = app.add_subcommand("query", "Rank instances against a query embedding");
  query_cmd->add_option("--map", query.map, "Fused output directory")->required();
  query_cmd->add_option("--query", query.query, "Query embeddings (EMB1)")->required();
  query_cmd->add_option("--row", query.row, "Row of the query file to use");
  auto* top_k = query_cmd->add_option("--top-k", query.top_k, "Return the best N instances");
  auto* threshold = query_cmd->add_option("--threshold", query.threshold, "Return instances scoring above this");
  top_k->excludes(threshold);
  threshold->excludes(top_k);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a fused map against synthetic ground truth");
  eval_cmd->add_option("--map", eval.map, "Fused output directory")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
  eval_cmd->add_option("--iou", eval.iou, "IoU thresholds (default 0.25 0.5)");
  eval_cmd->add_option("--exclude-class", eval.exclude, "Class ids left out of mAP and Top-1");
  eval_cmd->add_option("--report", eval.report, "Also write the metrics to this file");

  std::string bench_data, bench_config;
  auto* bench_cmd = app.add_subcommand("bench", "Per-stage timing over a dataset");
  bench_cmd->add_option("--data", bench_data, "Dataset directory")->required();
  bench_cmd->add_option("--config", bench_config, "Config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*fuse_cmd) return run_fuse(fuse);
    if (*segment_cmd) return run_segment(segment_map, segment_out);
    if (*query_cmd) {
      if (!*top_k && !*threshold) query.top_k = 5;
      return run_query(query, static_cast<bool>(*threshold));
    }
    if (*eval_cmd) return run_eval(eval);
    if (*bench_cmd) return run_bench(bench_data, bench_config);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 1;
}
