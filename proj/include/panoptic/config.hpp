#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "panoptic/detect.hpp"
#include "panoptic/semantics.hpp"
#include "panoptic/tracker.hpp"
#include "panoptic/tsdf.hpp"

namespace panoptic {

struct PipelineConfig {
  TsdfConfig tsdf;
  /// Growth of a track box when voting voxel labels.
  double label_margin = 0.02;
  DetectConfig detect;
  TrackerConfig track;
  SemanticsConfig semantics;
  /// Overrides the dataset's depth scale when set.
  std::optional<double> depth_scale;

  void validate() const;
};

/// Parses `key = value` lines with dotted keys (e.g. `tsdf.voxel_size = 0.02`).
/// `#` starts a comment. Unknown keys and bad values throw ConfigError.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

/// Every key with its current value, one per line, in parse_config syntax.
std::string format_config(const PipelineConfig& cfg);

}  // namespace panoptic
