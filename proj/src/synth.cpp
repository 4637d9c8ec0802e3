#include "panoptic/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "panoptic/dataset.hpp"
#include "panoptic/errors.hpp"

namespace panoptic {
namespace {

constexpr int kMaxPlacementAttempts = 10000;
constexpr std::uint64_t kEmbeddingStream = 0xE3B0C44298FC1C14ULL;

Rgb instance_color(std::uint32_t id) {
  std::uint64_t h = (id + 1) * 0x9E3779B97F4A7C15ULL;
  h ^= h >> 29;
  return {static_cast<std::uint8_t>(64 + (h & 0x7F)), static_cast<std::uint8_t>(64 + ((h >> 8) & 0x7F)),
          static_cast<std::uint8_t>(64 + ((h >> 16) & 0x7F))};
}

std::string frame_dir_name(int t) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", t);
  return buf;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

Aabb SynthObject::aabb() const {
  if (shape == ShapeKind::kBox) return obb_to_aabb(box);
  return {center - Vec3::Constant(radius), center + Vec3::Constant(radius)};
}

double SynthObject::sdf(const Vec3& p) const {
  if (shape == ShapeKind::kSphere) return (p - center).norm() - radius;
  const Vec3 q = (box.rotation.transpose() * (p - box.center)).cwiseAbs() - 0.5 * box.extents;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

std::optional<double> SynthObject::intersect(const Vec3& origin, const Vec3& dir) const {
  if (shape == ShapeKind::kSphere) {
    const Vec3 oc = origin - center;
    const double a = dir.squaredNorm();
    const double b = oc.dot(dir);
    const double c = oc.squaredNorm() - radius * radius;
    const double disc = b * b - a * c;
    if (disc < 0.0) return std::nullopt;
    const double root = std::sqrt(disc);
    double t = (-b - root) / a;
    if (t <= 0.0) t = (-b + root) / a;
    if (t <= 0.0) return std::nullopt;
    return t;
  }
  const Vec3 o = box.rotation.transpose() * (origin - box.center);
  const Vec3 d = box.rotation.transpose() * dir;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const double half = 0.5 * box.extents[i];
    if (d[i] == 0.0) {
      if (std::abs(o[i]) > half) return std::nullopt;
      continue;
    }
    double t0 = (-half - o[i]) / d[i];
    double t1 = (half - o[i]) / d[i];
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
  }
  if (lo > hi || hi <= 0.0) return std::nullopt;
  return lo > 0.0 ? lo : hi;
}

void SynthConfig::validate() const {
  if (n_objects < 1) throw ConfigError("synth needs at least one object");
  if (n_classes < 1) throw ConfigError("synth needs at least one class");
  if (!(noise >= 0.0 && noise < 0.3)) throw ConfigError("synth noise must lie in [0, 0.3)");
  if (static_cast<std::size_t>(n_classes) > emb_dim) throw ConfigError("synth class count exceeds emb_dim");
  if (!intrinsics.is_valid()) throw ConfigError("synth intrinsics are invalid");
  if (!(room_half > 0.0 && room_height > 0.0)) throw ConfigError("synth room must have positive size");
  if (trajectory.n_frames < 1) throw ConfigError("synth needs at least one frame");
}

SynthScene generate_scene(const SynthConfig& cfg) {
  cfg.validate();
  Xorshift64Star rng(cfg.seed);
  SynthScene scene;
  scene.room = {Vec3(-cfg.room_half, -cfg.room_half, 0.0), Vec3(cfg.room_half, cfg.room_half, cfg.room_height)};

  int attempts = 0;
  while (static_cast<int>(scene.objects.size()) < cfg.n_objects) {
    if (attempts++ >= kMaxPlacementAttempts) {
      throw SceneTooDenseError("could not place " + std::to_string(cfg.n_objects) + " objects");
    }
    SynthObject obj;
    obj.id = static_cast<std::uint32_t>(scene.objects.size() + 1);
    obj.class_id = static_cast<int>(scene.objects.size()) % cfg.n_classes;
    obj.color = instance_color(obj.id);
    const bool is_box = rng.uniform() < 0.5;
    const Vec3 center(rng.uniform(-cfg.room_half, cfg.room_half), rng.uniform(-cfg.room_half, cfg.room_half),
                      rng.uniform(0.15, 0.6));
    if (is_box) {
      obj.shape = ShapeKind::kBox;
      obj.box.center = center;
      obj.box.extents = Vec3(rng.uniform(0.2, 0.4), rng.uniform(0.2, 0.4), rng.uniform(0.2, 0.4));
      obj.box.rotation = Eigen::AngleAxisd(rng.uniform(0.0, std::numbers::pi), Vec3::UnitZ()).toRotationMatrix();
      obj.center = center;
    } else {
      obj.shape = ShapeKind::kSphere;
      obj.center = center;
      obj.radius = rng.uniform(0.1, 0.2);
    }
    const Aabb box = obj.aabb();
    if (!scene.room.contains(box)) continue;
    const bool clear = std::none_of(scene.objects.begin(), scene.objects.end(), [&](const SynthObject& other) {
      return other.aabb().inflated(0.5 * cfg.min_gap).intersects(box.inflated(0.5 * cfg.min_gap));
    });
    if (clear) scene.objects.push_back(obj);
  }
  return scene;
}

RenderedFrame render_frame(const SynthScene& scene, const Pose& pose, const Intrinsics& intr) {
  RenderedFrame out{DepthImage(intr.width, intr.height, 0.0f), Image<std::uint16_t>(intr.width, intr.height, 0)};
  const Pose world_to_cam = pose.inverse();
  // In camera coordinates the ray through (u, v) is o + t * ((u-cx)/fx, (v-cy)/fy, 1),
  // so the hit parameter t is the z-depth.
  std::vector<SynthObject> local = scene.objects;
  for (SynthObject& obj : local) {
    obj.center = world_to_cam.apply(obj.center);
    obj.box.center = world_to_cam.apply(obj.box.center);
    obj.box.rotation = world_to_cam.rotation * obj.box.rotation;
  }
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const Vec3 dir((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t hit = 0;
      for (const SynthObject& obj : local) {
        if (auto t = obj.intersect(Vec3::Zero(), dir); t && *t < best) {
          best = *t;
          hit = obj.id;
        }
      }
      if (hit) {
        out.depth.at(u, v) = static_cast<float>(best);
        out.instance.at(u, v) = static_cast<std::uint16_t>(hit);
      }
    }
  }
  return out;
}

std::vector<Pose> orbit_trajectory(const TrajectoryConfig& traj) {
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(traj.n_frames));
  for (int t = 0; t < traj.n_frames; ++t) {
    const double angle = 2.0 * std::numbers::pi * t / traj.n_frames;
    const Vec3 eye(traj.radius * std::cos(angle), traj.radius * std::sin(angle), traj.height);
    poses.push_back(Pose::look_at(eye, traj.look_at, Vec3::UnitZ()));
  }
  return poses;
}

Embedding class_anchor(int class_id, std::size_t dim) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= dim) {
    throw EmbeddingError("class id " + std::to_string(class_id) + " does not fit embedding dimension");
  }
  Embedding e = Embedding::Zero(static_cast<Eigen::Index>(dim));
  e[class_id] = 1.0;
  return e;
}

Embedding synth_embedding(int class_id, std::size_t dim, double noise, Xorshift64Star& rng) {
  Embedding e = class_anchor(class_id, dim);
  if (noise == 0.0) return e;
  const double sigma = noise / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index k = 0; k < e.size(); ++k) e[k] += sigma * rng.normal();
  return e.normalized();
}

void write_gt_instances(const std::filesystem::path& path, const std::vector<SynthObject>& objects) {
  std::ofstream out = open_out(path);
  char buf[64];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof(buf), " %.17g", x);
    out << buf;
  };
  for (const SynthObject& obj : objects) {
    out << obj.id << ' ' << obj.class_id;
    if (obj.shape == ShapeKind::kBox) {
      out << " box";
      for (int i = 0; i < 3; ++i) num(obj.box.center[i]);
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) num(obj.box.rotation(r, c));
      }
      for (int i = 0; i < 3; ++i) num(obj.box.extents[i]);
    } else {
      out << " sphere";
      for (int i = 0; i < 3; ++i) num(obj.center[i]);
      num(obj.radius);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<SynthObject> read_gt_instances(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  std::vector<SynthObject> objects;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    SynthObject obj;
    std::string kind;
    ss >> obj.id >> obj.class_id >> kind;
    if (kind == "box") {
      obj.shape = ShapeKind::kBox;
      for (int i = 0; i < 3; ++i) ss >> obj.box.center[i];
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) ss >> obj.box.rotation(r, c);
      }
      for (int i = 0; i < 3; ++i) ss >> obj.box.extents[i];
      obj.center = obj.box.center;
    } else if (kind == "sphere") {
      obj.shape = ShapeKind::kSphere;
      for (int i = 0; i < 3; ++i) ss >> obj.center[i];
      ss >> obj.radius;
    } else {
      throw FormatError(path.string() + ": unknown shape '" + kind + "'");
    }
    if (!ss) throw FormatError(path.string() + ": malformed line '" + line + "'");
    obj.color = instance_color(obj.id);
    objects.push_back(obj);
  }
  return objects;
}

void export_dataset(const SynthScene& scene, const SynthConfig& cfg, const std::filesystem::path& out) {
  cfg.validate();
  ensure_dir(out / "frames");
  Xorshift64Star rng(cfg.seed ^ kEmbeddingStream);

  DatasetManifest manifest;
  manifest.root = out;
  manifest.intrinsics = cfg.intrinsics;
  manifest.depth_scale = 1000.0;
  manifest.embeddings = "embeddings.emb";

  std::vector<Embedding> rows;
  const std::vector<Pose> poses = orbit_trajectory(cfg.trajectory);
  for (int t = 0; t < static_cast<int>(poses.size()); ++t) {
    const std::filesystem::path rel = std::filesystem::path("frames") / frame_dir_name(t);
    ensure_dir(out / rel);
    const RenderedFrame frame = render_frame(scene, poses[t], cfg.intrinsics);

    std::vector<std::uint16_t> visible;
    for (std::uint16_t id : frame.instance.data()) {
      if (id) visible.push_back(id);
    }
    std::sort(visible.begin(), visible.end());
    visible.erase(std::unique(visible.begin(), visible.end()), visible.end());

    RgbImage rgb(cfg.intrinsics.width, cfg.intrinsics.height, Rgb{0, 0, 0});
    Image<std::uint16_t> masks(cfg.intrinsics.width, cfg.intrinsics.height, 0);
    for (std::size_t i = 0; i < frame.instance.data().size(); ++i) {
      const std::uint16_t id = frame.instance.data()[i];
      if (!id) continue;
      rgb.data()[i] = scene.objects[id - 1].color;
      const auto pos = std::lower_bound(visible.begin(), visible.end(), id) - visible.begin();
      masks.data()[i] = static_cast<std::uint16_t>(pos + 1);
    }

    std::vector<MaskRecord> records;
    for (std::size_t k = 0; k < visible.size(); ++k) {
      const SynthObject& obj = scene.objects[visible[k] - 1];
      records.push_back({static_cast<int>(k), rng.uniform(0.8, 1.0), rows.size()});
      rows.push_back(synth_embedding(obj.class_id, cfg.emb_dim, cfg.noise, rng));
    }

    write_png_u16(out / rel / "depth.png", depth_to_u16(frame.depth, manifest.depth_scale));
    write_png_rgb(out / rel / "rgb.png", rgb);
    write_pose(out / rel / "pose.txt", poses[t]);
    write_png_u16(out / rel / "masks.png", masks);
    write_mask_records(out / rel / "masks.txt", records);
    manifest.frames.push_back({t, rel / "depth.png", rel / "rgb.png", rel / "pose.txt", rel});
  }

  write_embeddings(out / manifest.embeddings, cfg.emb_dim, rows);
  write_manifest(out, manifest);
  write_gt_instances(out / "gt_instances.txt", scene.objects);

  std::vector<Embedding> anchors;
  std::ofstream names = open_out(out / "labels.txt");
  for (int c = 0; c < cfg.n_classes; ++c) {
    anchors.push_back(class_anchor(c, cfg.emb_dim));
    names << "class_" << c << '\n';
  }
  write_embeddings(out / "labels.emb", cfg.emb_dim, anchors);
}

}  // namespace panoptic
