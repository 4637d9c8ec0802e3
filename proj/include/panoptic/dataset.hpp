#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "panoptic/detect.hpp"
#include "panoptic/geometry.hpp"
#include "panoptic/image.hpp"
#include "panoptic/semantics.hpp"

namespace panoptic {

struct FrameRecord {
  std::int64_t index = 0;
  std::filesystem::path depth;  // .png (16-bit) or .f32 (raw meters)
  std::filesystem::path rgb;
  std::filesystem::path pose;
  std::filesystem::path masks_dir;  // masks.png + masks.txt
};

// manifest.txt:
//   intrinsics fx fy cx cy width height
//   depth_scale S
//   embeddings FILE
//   frame INDEX DEPTH RGB POSE MASKS_DIR
// Paths are relative to the dataset directory.
struct DatasetManifest {
  std::filesystem::path root;
  Intrinsics intrinsics;
  double depth_scale = 1000.0;
  std::filesystem::path embeddings;
  std::vector<FrameRecord> frames;
};

/// Throws IngestError if the manifest is missing, FormatError if malformed.
/// Frame indices are not checked here; the pipeline enforces their order.
DatasetManifest read_manifest(const std::filesystem::path& dir);
void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest);

/// 4x4 row-major camera-to-world text matrix. Rotations within 1e-3 of
/// orthonormal are re-orthonormalized; worse ones throw PoseError.
Pose read_pose(const std::filesystem::path& path);
void write_pose(const std::filesystem::path& path, const Pose& pose);

struct MaskRecord {
  int index = 0;
  double confidence = 0.0;
  std::uint64_t embedding_row = 0;
};

std::vector<MaskRecord> read_mask_records(const std::filesystem::path& path);
void write_mask_records(const std::filesystem::path& path, const std::vector<MaskRecord>& records);

struct Frame {
  std::int64_t index = 0;
  DepthImage depth;
  RgbImage rgb;
  Pose pose;
  std::vector<InstanceMask> masks;
};

/// Loads one frame. Missing files throw IngestError naming the path; size
/// mismatches and references past the embedding table throw FormatError.
Frame ingest_frame(const FrameRecord& record, const DatasetManifest& manifest, const EmbeddingTable& embeddings);

}  // namespace panoptic
