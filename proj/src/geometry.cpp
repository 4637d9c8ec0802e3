#include "panoptic/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "panoptic/errors.hpp"

namespace panoptic {
namespace {

constexpr double kEigenFloor = 1e-12;
constexpr double kEigenTie = 1e-9;
constexpr double kPlaneTolerance = 1e-9;

// Flip `v` so that its largest-magnitude component is positive.
Vec3 canonical_sign(const Vec3& v) {
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  return v[idx] < 0.0 ? Vec3(-v) : v;
}

// Range [lo, hi] of the ray parameter t for which origin + t * x_hat lies
// inside `box`. Returns false for an empty range.
bool slab_interval(const Obb& box, const Vec3& origin, double& lo, double& hi) {
  lo = -std::numeric_limits<double>::infinity();
  hi = std::numeric_limits<double>::infinity();
  const Vec3 offset = origin - box.center;
  for (int i = 0; i < 3; ++i) {
    const Vec3 axis = box.rotation.col(i);
    const double half = 0.5 * box.extents[i];
    const double q = axis.dot(offset);
    const double s = axis.x();
    if (std::abs(s) < 1e-15) {
      if (std::abs(q) > half) return false;
      continue;
    }
    double t0 = (-half - q) / s;
    double t1 = (half - q) / s;
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
    if (lo > hi) return false;
  }
  return true;
}

// Number of lattice cells k in [0, n) whose centers (k + 0.5) * pitch fall in [lo, hi].
long cells_in(double lo, double hi, double pitch, long n) {
  if (lo > hi) return 0;
  const long first = std::max<long>(0, static_cast<long>(std::ceil(lo / pitch - 0.5)));
  const long last = std::min<long>(n - 1, static_cast<long>(std::floor(hi / pitch - 0.5)));
  return last >= first ? last - first + 1 : 0;
}

}  // namespace

Pose Pose::inverse() const {
  Pose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

Pose Pose::operator*(const Pose& rhs) const {
  Pose out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

bool Pose::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

Pose Pose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-12) x = z.unitOrthogonal();
  x.normalize();
  const Vec3 y = z.cross(x);
  Pose pose;
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = z;
  pose.translation = eye;
  return pose;
}

bool Intrinsics::is_valid() const {
  return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 && cx < width && cy >= 0.0 &&
         cy < height;
}

bool Intrinsics::in_bounds(Pixel px) const {
  return px.u >= -0.5 && px.u <= width - 0.5 && px.v >= -0.5 && px.v <= height - 0.5;
}

bool Aabb::intersects(const Aabb& other) const {
  return (min.array() <= other.max.array()).all() && (other.min.array() <= max.array()).all();
}

bool Aabb::contains(const Vec3& p) const {
  return (min.array() <= p.array()).all() && (p.array() <= max.array()).all();
}

bool Aabb::contains(const Aabb& other) const {
  return (min.array() <= other.min.array()).all() && (other.max.array() <= max.array()).all();
}

Aabb Aabb::inflated(double margin) const {
  return {min.array() - margin, max.array() + margin};
}

Aabb Aabb::merged(const Aabb& other) const {
  return {min.cwiseMin(other.min), max.cwiseMax(other.max)};
}

double Aabb::volume() const { return (max - min).cwiseMax(0.0).prod(); }

std::array<Vec3, 8> Obb::corners() const {
  std::array<Vec3, 8> out;
  const Vec3 half = 0.5 * extents;
  for (int i = 0; i < 8; ++i) {
    const Vec3 sign((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 4) ? 1.0 : -1.0);
    out[i] = center + rotation * sign.cwiseProduct(half);
  }
  return out;
}

bool Obb::contains(const Vec3& p, double tol) const {
  const Vec3 local = rotation.transpose() * (p - center);
  return (local.cwiseAbs().array() <= (0.5 * extents).array() + tol).all();
}

Obb Obb::inflated(double margin) const {
  Obb out = *this;
  out.extents = (extents.array() + 2.0 * margin).cwiseMax(0.0);
  return out;
}

ObbStats ObbStats::from_points(std::span<const Vec3> points) {
  ObbStats stats;
  if (points.empty()) return stats;
  stats.count = points.size();
  for (const Vec3& p : points) stats.centroid += p;
  stats.centroid /= static_cast<double>(points.size());
  for (const Vec3& p : points) {
    const Vec3 d = p - stats.centroid;
    stats.scatter.noalias() += d * d.transpose();
  }
  return stats;
}

Mat3 ObbStats::covariance() const {
  if (count < 2) return Mat3::Zero();
  return scatter / static_cast<double>(count - 1);
}

Frustum Frustum::from_camera(const Pose& pose, const Intrinsics& intr, double near, double far) {
  auto ray = [&](double u, double v) {
    return Vec3((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
  };
  const double u0 = -0.5, v0 = -0.5;
  const double u1 = intr.width - 0.5, v1 = intr.height - 0.5;
  const std::array<Vec3, 4> corners = {ray(u0, v0), ray(u1, v0), ray(u1, v1), ray(u0, v1)};

  std::array<Plane, 6> local;
  for (int i = 0; i < 4; ++i) {
    Vec3 n = corners[i].cross(corners[(i + 1) % 4]);
    if (n.z() < 0.0) n = -n;
    local[i] = {n.normalized(), 0.0};
  }
  local[4] = {Vec3::UnitZ(), -near};
  local[5] = {-Vec3::UnitZ(), far};

  Frustum f;
  for (int i = 0; i < 6; ++i) {
    const Vec3 n = pose.rotation * local[i].normal;
    f.planes[i] = {n, local[i].offset - n.dot(pose.translation)};
  }
  return f;
}

bool Frustum::contains(const Vec3& p) const {
  const double tol = kPlaneTolerance * (1.0 + p.norm());
  return std::all_of(planes.begin(), planes.end(),
                     [&](const Plane& plane) { return plane.signed_distance(p) >= -tol; });
}

std::optional<Vec3> back_project(Pixel px, double depth, const Intrinsics& intr, const Pose& pose) {
  if (!std::isfinite(depth) || depth <= 0.0) return std::nullopt;
  if (!intr.in_bounds(px)) return std::nullopt;
  const Vec3 cam((px.u - intr.cx) * depth / intr.fx, (px.v - intr.cy) * depth / intr.fy, depth);
  return pose.apply(cam);
}

Mat3 principal_axes(const Mat3& covariance) {
  Eigen::SelfAdjointEigenSolver<Mat3> solver(covariance);
  if (solver.info() != Eigen::Success) return Mat3::Identity();
  Vec3 values = solver.eigenvalues();
  const Mat3& vectors = solver.eigenvectors();
  for (int i = 0; i < 3; ++i) {
    if (values[i] < kEigenFloor) values[i] = 0.0;
  }

  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (std::abs(values[a] - values[b]) > kEigenTie) return values[a] > values[b];
    const Vec3 va = vectors.col(a).cwiseAbs();
    const Vec3 vb = vectors.col(b).cwiseAbs();
    for (int k = 0; k < 3; ++k) {
      if (va[k] != vb[k]) return va[k] > vb[k];
    }
    return false;
  });

  Mat3 axes;
  axes.col(0) = canonical_sign(vectors.col(order[0]).normalized());
  Vec3 second = vectors.col(order[1]);
  second -= axes.col(0).dot(second) * axes.col(0);
  axes.col(1) = canonical_sign(second.normalized());
  axes.col(2) = axes.col(0).cross(axes.col(1)).normalized();
  return axes;
}

ObbFit fit_obb(std::span<const Vec3> points) {
  if (points.size() < 3) {
    throw DegenerateClusterError("fit_obb needs at least 3 points, got " +
                                 std::to_string(points.size()));
  }
  ObbFit fit;
  fit.stats = ObbStats::from_points(points);
  const Mat3 axes = principal_axes(fit.stats.covariance());

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Vec3& p : points) {
    const Vec3 q = axes.transpose() * p;
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  fit.obb.rotation = axes;
  fit.obb.extents = hi - lo;
  fit.obb.center = axes * (0.5 * (lo + hi));
  return fit;
}

ObbStats merge_stats(const ObbStats& a, const ObbStats& b) {
  if (a.count == 0) return b;
  if (b.count == 0) return a;
  ObbStats out;
  out.count = a.count + b.count;
  const double na = static_cast<double>(a.count);
  const double nb = static_cast<double>(b.count);
  const double n = static_cast<double>(out.count);
  out.centroid = (na * a.centroid + nb * b.centroid) / n;
  const Vec3 delta = a.centroid - b.centroid;
  out.scatter = a.scatter + b.scatter + (na * nb / n) * (delta * delta.transpose());
  return out;
}

Aabb obb_to_aabb(const Obb& obb) {
  const Vec3 half = obb.rotation.cwiseAbs() * (0.5 * obb.extents);
  return {obb.center - half, obb.center + half};
}

double obb_iou(const Obb& a, const Obb& b, int resolution) {
  if (a.volume() <= 0.0 || b.volume() <= 0.0) {
    const bool identical = a.center == b.center && a.rotation == b.rotation && a.extents == b.extents;
    return identical ? 1.0 : 0.0;
  }
  const Aabb box_a = obb_to_aabb(a);
  const Aabb box_b = obb_to_aabb(b);
  if (!box_a.intersects(box_b)) return 0.0;

  const Aabb joint = box_a.merged(box_b);
  const long n = std::max(resolution, 1);
  const Vec3 pitch = (joint.max - joint.min) / static_cast<double>(n);

  // Each box is convex, so every lattice row along x meets it in one interval.
  long count_a = 0, count_b = 0, count_ab = 0;
  for (long iz = 0; iz < n; ++iz) {
    const double z = joint.min.z() + (static_cast<double>(iz) + 0.5) * pitch.z();
    for (long iy = 0; iy < n; ++iy) {
      const double y = joint.min.y() + (static_cast<double>(iy) + 0.5) * pitch.y();
      const Vec3 origin(joint.min.x(), y, z);
      double a0, a1, b0, b1;
      const bool hit_a = slab_interval(a, origin, a0, a1);
      const bool hit_b = slab_interval(b, origin, b0, b1);
      if (hit_a) count_a += cells_in(a0, a1, pitch.x(), n);
      if (hit_b) count_b += cells_in(b0, b1, pitch.x(), n);
      if (hit_a && hit_b) count_ab += cells_in(std::max(a0, b0), std::min(a1, b1), pitch.x(), n);
    }
  }
  const long uni = count_a + count_b - count_ab;
  return uni > 0 ? static_cast<double>(count_ab) / static_cast<double>(uni) : 0.0;
}

bool frustum_contains(const Frustum& f, const Vec3& p) { return f.contains(p); }

}  // namespace panoptic
