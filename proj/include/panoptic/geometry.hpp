#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace panoptic {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Continuous pixel coordinates; integer values are pixel centers.
struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

/// Rigid camera-to-world transform.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Pose inverse() const;
  Pose operator*(const Pose& rhs) const;

  /// Orthonormal, right-handed rotation within `tol`.
  bool is_valid(double tol = 1e-6) const;

  /// Camera at `eye` looking at `target`; camera +z is the viewing direction,
  /// +y points down in the image.
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up);
};

/// Pinhole intrinsics. The image spans [-0.5, width-0.5] x [-0.5, height-0.5].
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool is_valid() const;
  bool in_bounds(Pixel px) const;
};

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool intersects(const Aabb& other) const;
  bool contains(const Vec3& p) const;
  bool contains(const Aabb& other) const;
  Aabb inflated(double margin) const;
  Aabb merged(const Aabb& other) const;
  double volume() const;
};

/// Oriented box. Columns of `rotation` are the box axes; `extents` are full
/// side lengths along those axes.
struct Obb {
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Vec3 extents = Vec3::Zero();

  std::array<Vec3, 8> corners() const;
  bool contains(const Vec3& p, double tol = 1e-9) const;
  double volume() const { return extents.prod(); }
  Obb inflated(double margin) const;
};

/// Running point statistics: count, centroid and scatter sum((p-c)(p-c)^T).
struct ObbStats {
  std::uint64_t count = 0;
  Vec3 centroid = Vec3::Zero();
  Mat3 scatter = Mat3::Zero();

  static ObbStats from_points(std::span<const Vec3> points);
  /// scatter / (count - 1); zero for count < 2.
  Mat3 covariance() const;
};

struct ObbFit {
  Obb obb;
  ObbStats stats;
};

struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;

  double signed_distance(const Vec3& p) const { return normal.dot(p) + offset; }
};

/// Six inward-facing planes of a camera viewing volume in the world frame.
struct Frustum {
  std::array<Plane, 6> planes;

  static Frustum from_camera(const Pose& pose, const Intrinsics& intr, double near, double far);
  bool contains(const Vec3& p) const;
};

/// World point for a pixel at the given z-depth, or nullopt when the depth is
/// not a positive finite value or the pixel lies outside the image.
std::optional<Vec3> back_project(Pixel px, double depth, const Intrinsics& intr, const Pose& pose);

/// Principal axes of a covariance matrix as the columns of a right-handed
/// rotation, sorted by descending eigenvalue.
Mat3 principal_axes(const Mat3& covariance);

/// PCA box over `points`. Throws DegenerateClusterError for fewer than 3 points.
ObbFit fit_obb(std::span<const Vec3> points);

ObbStats merge_stats(const ObbStats& a, const ObbStats& b);

Aabb obb_to_aabb(const Obb& obb);

/// Overlap of two boxes estimated on a resolution^3 lattice over their joint AABB.
double obb_iou(const Obb& a, const Obb& b, int resolution = 48);

bool frustum_contains(const Frustum& f, const Vec3& p);

}  // namespace panoptic
