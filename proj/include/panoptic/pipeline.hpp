#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "panoptic/config.hpp"
#include "panoptic/dataset.hpp"
#include "panoptic/tracker.hpp"
#include "panoptic/tsdf.hpp"

namespace panoptic {

/// Per-frame stage order: integrate, detect, associate, update, embed, labels, prune.
inline constexpr std::array<const char*, 7> kStageNames{"integrate", "detect", "associate", "update",
                                                        "embed",     "labels", "prune"};

struct StageTimes {
  std::array<double, kStageNames.size()> ms{};

  double total() const;
  /// Detection, association, track update, embedding update and pruning.
  double tracking() const;
};

struct FrameReport {
  std::int64_t index = 0;
  bool skipped = false;
  std::string error;
  std::size_t masks = 0;
  std::size_t detections = 0;
  std::size_t matches = 0;
  std::size_t spawned = 0;
  std::size_t pruned = 0;
  std::size_t tracks = 0;
  std::size_t voxels = 0;
  StageTimes times;
};

struct RunReport {
  std::vector<FrameReport> frames;
  bool aborted = false;
  std::string abort_reason;
  std::size_t final_tracks = 0;
  std::size_t final_voxels = 0;
};

/// Map and tracker state driven one frame at a time.
class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, Intrinsics intr);

  FrameReport process(const Frame& frame);

  const PipelineConfig& config() const { return cfg_; }
  const Intrinsics& intrinsics() const { return intr_; }
  const VoxelGrid& grid() const { return grid_; }
  const Tracker& tracker() const { return tracker_; }

 private:
  PipelineConfig cfg_;
  Intrinsics intr_;
  VoxelGrid grid_;
  Tracker tracker_;
};

/// Ingests and processes every manifest frame, decoding frame t+1 while
/// frame t is processed. Frame-level failures are logged and skipped; a
/// non-increasing frame index or an unreadable embedding table stops the run
/// with `aborted` set, leaving the state built so far in `pipeline`.
RunReport run_pipeline(Pipeline& pipeline, const DatasetManifest& manifest);

/// Counts only, so identical runs give identical bytes.
void write_run_report(std::ostream& out, const RunReport& report);
/// Per-frame stage times in milliseconds plus means.
void write_timing_report(std::ostream& out, const RunReport& report);
/// Mean per-stage times over processed frames.
StageTimes mean_stage_times(const RunReport& report);

}  // namespace panoptic
