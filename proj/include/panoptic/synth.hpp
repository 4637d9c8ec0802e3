#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "panoptic/geometry.hpp"
#include "panoptic/image.hpp"
#include "panoptic/rng.hpp"
#include "panoptic/semantics.hpp"

namespace panoptic {

enum class ShapeKind { kBox, kSphere };

struct SynthObject {
  std::uint32_t id = 0;  // 1-based
  int class_id = 0;
  ShapeKind shape = ShapeKind::kBox;
  Obb box;             // boxes only
  Vec3 center = Vec3::Zero();
  double radius = 0.0;  // spheres only
  Rgb color{0, 0, 0};

  Aabb aabb() const;
  /// Signed distance to the surface, negative inside.
  double sdf(const Vec3& p) const;
  /// Smallest t > 0 with origin + t * dir on the surface.
  std::optional<double> intersect(const Vec3& origin, const Vec3& dir) const;
};

struct TrajectoryConfig {
  int n_frames = 60;
  double radius = 2.5;
  double height = 1.2;
  Vec3 look_at = Vec3(0.0, 0.0, 0.3);
};

struct SynthConfig {
  std::uint64_t seed = 1;
  int n_objects = 5;
  int n_classes = 5;
  double noise = 0.05;
  std::size_t emb_dim = 512;
  Intrinsics intrinsics{525.0, 525.0, 319.5, 239.5, 640, 480};
  /// Objects are placed inside [-room_half, room_half]^2 x [0, room_height].
  double room_half = 1.0;
  double room_height = 1.0;
  double min_gap = 0.2;
  TrajectoryConfig trajectory;

  void validate() const;
};

struct SynthScene {
  std::vector<SynthObject> objects;
  Aabb room;
};

/// Rejection-sampled, pairwise separated objects; classes assigned
/// round-robin. Throws SceneTooDenseError after 10,000 failed placements.
SynthScene generate_scene(const SynthConfig& cfg);

struct RenderedFrame {
  DepthImage depth;              // 0 where no object is hit
  Image<std::uint16_t> instance;  // object id, 0 for background
};

RenderedFrame render_frame(const SynthScene& scene, const Pose& pose, const Intrinsics& intr);

/// Orbit poses around the look-at point, one full turn.
std::vector<Pose> orbit_trajectory(const TrajectoryConfig& traj);

/// Noisy one-hot class embedding: basis vector plus N(0, noise^2 / dim) per
/// component, renormalized. Throws EmbeddingError if class_id >= dim.
Embedding synth_embedding(int class_id, std::size_t dim, double noise, Xorshift64Star& rng);
Embedding class_anchor(int class_id, std::size_t dim);

/// Writes the dataset directory (manifest, frames, embeddings, ground truth,
/// label bank). Throws IoError when the path cannot be written.
void export_dataset(const SynthScene& scene, const SynthConfig& cfg, const std::filesystem::path& out);

void write_gt_instances(const std::filesystem::path& path, const std::vector<SynthObject>& objects);
std::vector<SynthObject> read_gt_instances(const std::filesystem::path& path);

}  // namespace panoptic
