#include "panoptic/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <future>
#include <optional>

#include <spdlog/spdlog.h>

#include "panoptic/detect.hpp"
#include "panoptic/errors.hpp"

namespace panoptic {
namespace {

using Clock = std::chrono::steady_clock;

class StageClock {
 public:
  explicit StageClock(StageTimes& times) : times_(times), last_(Clock::now()) {}
  void lap(std::size_t stage) {
    const auto now = Clock::now();
    times_.ms[stage] += std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
  }

 private:
  StageTimes& times_;
  Clock::time_point last_;
};

enum Stage : std::size_t { kIntegrate, kDetect, kAssociate, kUpdate, kEmbed, kLabels, kPrune };

std::string ms(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", x);
  return buf;
}

}  // namespace

double StageTimes::total() const {
  double sum = 0.0;
  for (double x : ms) sum += x;
  return sum;
}

double StageTimes::tracking() const { return ms[kDetect] + ms[kAssociate] + ms[kUpdate] + ms[kEmbed] + ms[kPrune]; }

Pipeline::Pipeline(PipelineConfig cfg, Intrinsics intr)
    : cfg_(std::move(cfg)), intr_(intr), grid_(cfg_.tsdf), tracker_(cfg_.track, cfg_.semantics) {
  cfg_.validate();
  if (!intr_.is_valid()) throw ConfigError("invalid camera intrinsics");
}

FrameReport Pipeline::process(const Frame& frame) {
  FrameReport report;
  report.index = frame.index;
  report.masks = frame.masks.size();
  StageClock clock(report.times);

  integrate_frame(grid_, frame.depth, frame.rgb, frame.pose, intr_);
  clock.lap(kIntegrate);

  const FrameDetections detections = detect_frame(frame.masks, frame.depth, frame.pose, intr_, cfg_.detect);
  const std::vector<Detection>& dets = detections.detections;
  clock.lap(kDetect);

  const Association assoc = tracker_.associate(dets);
  clock.lap(kAssociate);

  const Frustum frustum = Frustum::from_camera(frame.pose, intr_, cfg_.tsdf.depth_min, cfg_.tsdf.depth_max);
  const auto used = tracker_.apply_geometry(assoc, dets, frustum, frame.index);
  clock.lap(kUpdate);

  tracker_.apply_semantics(used, dets);
  clock.lap(kEmbed);

  for (const auto& [id, j] : used) {
    update_labels(grid_, tracker_.tracks().at(id).obb.inflated(cfg_.label_margin), id);
  }
  clock.lap(kLabels);

  report.pruned = tracker_.prune(frustum, grid_).size();
  clock.lap(kPrune);

  report.detections = dets.size();
  report.matches = assoc.matches.size();
  report.spawned = assoc.new_dets.size();
  report.tracks = tracker_.tracks().size();
  report.voxels = grid_.size();
  spdlog::debug("frame {}: {} masks, {} detections, {} matched, {} new, {} pruned, {} tracks", frame.index,
                report.masks, report.detections, report.matches, report.spawned, report.pruned, report.tracks);
  return report;
}

RunReport run_pipeline(Pipeline& pipeline, const DatasetManifest& manifest_in) {
  RunReport run;
  DatasetManifest manifest = manifest_in;
  if (pipeline.config().depth_scale) manifest.depth_scale = *pipeline.config().depth_scale;

  auto finish = [&]() {
    run.final_tracks = pipeline.tracker().tracks().size();
    run.final_voxels = pipeline.grid().size();
    return run;
  };

  EmbeddingTable embeddings;
  if (manifest.frames.empty()) return finish();
  try {
    embeddings = read_embeddings(manifest.embeddings);
  } catch (const Error& e) {
    run.aborted = true;
    run.abort_reason = e.what();
    spdlog::error("cannot read embeddings: {}", e.what());
    return finish();
  }
  if (embeddings.truncated()) {
    spdlog::warn("{}: {} of {} embedding rows present", manifest.embeddings.string(), embeddings.rows.size(),
                 embeddings.declared_count);
  }

  using Loaded = std::pair<std::optional<Frame>, std::string>;
  auto load = [&](std::size_t i) -> Loaded {
    try {
      return {ingest_frame(manifest.frames[i], manifest, embeddings), {}};
    } catch (const Error& e) {
      return {std::nullopt, e.what()};
    }
  };

  std::future<Loaded> next;
  if (!manifest.frames.empty()) next = std::async(std::launch::async, load, 0);
  std::optional<std::int64_t> last_index;
  for (std::size_t i = 0; i < manifest.frames.size(); ++i) {
    Loaded loaded = next.get();
    const std::int64_t index = manifest.frames[i].index;
    if (last_index && index <= *last_index) {
      run.aborted = true;
      run.abort_reason = "frame index " + std::to_string(index) + " does not increase";
      spdlog::error("{}; stopping", run.abort_reason);
      break;
    }
    last_index = index;
    if (i + 1 < manifest.frames.size()) next = std::async(std::launch::async, load, i + 1);

    if (!loaded.first) {
      FrameReport skipped;
      skipped.index = index;
      skipped.skipped = true;
      skipped.error = loaded.second;
      spdlog::warn("skipping frame {}: {}", index, loaded.second);
      run.frames.push_back(std::move(skipped));
      continue;
    }
    try {
      run.frames.push_back(pipeline.process(*loaded.first));
    } catch (const Error& e) {
      FrameReport skipped;
      skipped.index = index;
      skipped.skipped = true;
      skipped.error = e.what();
      spdlog::warn("skipping frame {}: {}", index, e.what());
      run.frames.push_back(std::move(skipped));
    }
  }
  if (next.valid()) next.wait();
  return finish();
}

void write_run_report(std::ostream& out, const RunReport& report) {
  std::size_t processed = 0, skipped = 0;
  for (const FrameReport& f : report.frames) (f.skipped ? skipped : processed)++;
  out << "stages";
  for (const char* name : kStageNames) out << ' ' << name;
  out << '\n';
  out << "frames_processed " << processed << '\n';
  out << "frames_skipped " << skipped << '\n';
  out << "aborted " << (report.aborted ? 1 : 0) << '\n';
  if (report.aborted) out << "abort_reason " << report.abort_reason << '\n';
  out << "final_tracks " << report.final_tracks << '\n';
  out << "final_voxels " << report.final_voxels << '\n';
  out << "# frame masks detections matches spawned pruned tracks voxels\n";
  for (const FrameReport& f : report.frames) {
    if (f.skipped) {
      out << "frame " << f.index << " skipped " << f.error << '\n';
      continue;
    }
    out << "frame " << f.index << ' ' << f.masks << ' ' << f.detections << ' ' << f.matches << ' ' << f.spawned
        << ' ' << f.pruned << ' ' << f.tracks << ' ' << f.voxels << '\n';
  }
}

StageTimes mean_stage_times(const RunReport& report) {
  StageTimes mean;
  std::size_t n = 0;
  for (const FrameReport& f : report.frames) {
    if (f.skipped) continue;
    for (std::size_t s = 0; s < mean.ms.size(); ++s) mean.ms[s] += f.times.ms[s];
    ++n;
  }
  if (n > 0) {
    for (double& x : mean.ms) x /= static_cast<double>(n);
  }
  return mean;
}

void write_timing_report(std::ostream& out, const RunReport& report) {
  out << "# frame";
  for (const char* name : kStageNames) out << ' ' << name;
  out << " total tracking (ms)\n";
  for (const FrameReport& f : report.frames) {
    if (f.skipped) continue;
    out << f.index;
    for (double x : f.times.ms) out << ' ' << ms(x);
    out << ' ' << ms(f.times.total()) << ' ' << ms(f.times.tracking()) << '\n';
  }
  const StageTimes mean = mean_stage_times(report);
  out << "mean";
  for (double x : mean.ms) out << ' ' << ms(x);
  out << ' ' << ms(mean.total()) << ' ' << ms(mean.tracking()) << '\n';
}

}  // namespace panoptic
