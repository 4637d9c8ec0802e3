#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "panoptic/synth.hpp"
#include "panoptic/tsdf.hpp"
#include "test_util.hpp"

using namespace panoptic;
using namespace panoptic::testing;

namespace {

TsdfConfig coarse() {
  TsdfConfig cfg;
  cfg.voxel_size = 0.1;
  cfg.truncation = 0.3;
  return cfg;
}

Intrinsics small_intr() { return {60.0, 60.0, 31.5, 23.5, 64, 48}; }

// Fronto-parallel wall at z = `z` in front of an identity camera.
DepthImage wall(const Intrinsics& intr, float z) { return DepthImage(intr.width, intr.height, z); }

bool labels_match_histograms(const VoxelGrid& grid) {
  bool ok = true;
  grid.for_each([&](const VoxelKey&, const Voxel& v) {
    InstanceId best = kNoInstance;
    std::uint32_t best_count = 0;
    for (const auto& [id, c] : v.hist.entries()) {
      if (c > best_count) {
        best = id;
        best_count = c;
      }
    }
    ok = ok && v.label == best;
  });
  return ok;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

SynthScene single_box_scene() {
  SynthObject box;
  box.id = 1;
  box.shape = ShapeKind::kBox;
  box.box = make_obb(Vec3(0, 0, 0.3), Mat3::Identity(), Vec3(0.4, 0.3, 0.3));
  box.center = box.box.center;
  box.color = {200, 100, 50};
  SynthScene scene;
  scene.objects.push_back(box);
  return scene;
}

VoxelGrid fuse(const SynthScene& scene, int frames) {
  SynthConfig cfg;
  cfg.trajectory.n_frames = frames;
  VoxelGrid grid;
  for (const Pose& pose : orbit_trajectory(cfg.trajectory)) {
    const RenderedFrame f = render_frame(scene, pose, cfg.intrinsics);
    integrate_frame(grid, f.depth, {}, pose, cfg.intrinsics);
  }
  return grid;
}

}  // namespace

TEST(LabelHistogram, ArgmaxAndTies) {
  LabelHistogram h;
  EXPECT_EQ(h.argmax(), kNoInstance);
  h.add(2);
  h.add(1);
  EXPECT_EQ(h.argmax(), 1u);
  h.add(2);
  EXPECT_EQ(h.argmax(), 2u);
  EXPECT_EQ(h.count(2), 2u);
  EXPECT_EQ(h.count(9), 0u);
}

TEST(VoxelGrid, KeyCenterMapping) {
  VoxelGrid grid(coarse());
  EXPECT_TRUE(grid.center({0, 0, 9}).isApprox(Vec3(0.05, 0.05, 0.95)));
  EXPECT_TRUE(grid.center({-3, 2, -1}).isApprox(Vec3(-0.25, 0.25, -0.05)));
  for (VoxelKey k : {VoxelKey{0, 0, 0}, VoxelKey{-1, -9, 17}, VoxelKey{40, -40, 3}}) {
    EXPECT_EQ(grid.key_of(grid.center(k)), k);
  }
  EXPECT_EQ(grid.size(), 0u);
}

TEST(Integrate, SingleRayHandTrace) {
  VoxelGrid grid(coarse());
  const Intrinsics intr{1.0, 1.0, 0.0, 0.0, 1, 1};
  const IntegrationReport r = integrate_frame(grid, DepthImage(1, 1, 1.0f), {}, Pose{}, intr);
  EXPECT_GT(r.voxels_updated, 0u);
  const Voxel* v = grid.find({0, 0, 9});
  ASSERT_NE(v, nullptr);
  EXPECT_NEAR(v->d, 0.05, 1e-6);
  EXPECT_EQ(v->w, 1.0f);
  // Behind the surface by more than the band: untouched.
  EXPECT_EQ(grid.find({0, 0, 14}), nullptr);
  const Voxel* behind = grid.find({0, 0, 12});
  ASSERT_NE(behind, nullptr);
  EXPECT_NEAR(behind->d, -0.25, 1e-6);
}

TEST(Integrate, SameFrameTwiceDoublesWeight) {
  VoxelGrid grid(coarse());
  const Intrinsics intr = small_intr();
  integrate_frame(grid, wall(intr, 1.5f), {}, Pose{}, intr);
  std::map<VoxelKey, float> first;
  grid.for_each([&](const VoxelKey& k, const Voxel& v) { first[k] = v.d; });
  integrate_frame(grid, wall(intr, 1.5f), {}, Pose{}, intr);
  grid.for_each([&](const VoxelKey& k, const Voxel& v) {
    EXPECT_FLOAT_EQ(v.d, first.at(k));
    EXPECT_EQ(v.w, 2.0f);
  });
}

TEST(Integrate, WeightSaturatesAndBandHolds) {
  TsdfConfig cfg = coarse();
  cfg.max_weight = 3.0;
  VoxelGrid grid(cfg);
  const Intrinsics intr = small_intr();
  Xorshift64Star rng(3);
  for (int i = 0; i < 8; ++i) {
    DepthImage d = wall(intr, 1.0f);
    for (float& z : d.data()) z = static_cast<float>(rng.uniform(0.9, 1.6));
    integrate_frame(grid, d, {}, Pose{}, intr);
  }
  grid.for_each([&](const VoxelKey&, const Voxel& v) {
    EXPECT_LE(std::abs(v.d), cfg.truncation + 1e-6);
    EXPECT_GE(v.w, 0.0f);
    EXPECT_LE(v.w, cfg.max_weight);
  });
}

TEST(Integrate, WallSignedDistance) {
  VoxelGrid grid;
  const Intrinsics intr = small_intr();
  integrate_frame(grid, wall(intr, 1.0f), {}, Pose{}, intr);
  std::size_t checked = 0;
  grid.for_each([&](const VoxelKey& k, const Voxel& v) {
    const double expected = std::clamp(1.0 - grid.center(k).z(), -0.08, 0.08);
    if (v.w > 0 && std::abs(expected) < 0.08) {
      EXPECT_NEAR(v.d, expected, 1e-5);
      ++checked;
    }
  });
  EXPECT_GT(checked, 100u);
}

TEST(Integrate, OutOfRangeDepthSkipped) {
  VoxelGrid grid;
  const Intrinsics intr = small_intr();
  EXPECT_EQ(integrate_frame(grid, wall(intr, 0.0f), {}, Pose{}, intr).voxels_updated, 0u);
  EXPECT_EQ(integrate_frame(grid, wall(intr, 9.0f), {}, Pose{}, intr).voxels_updated, 0u);
  EXPECT_EQ(integrate_frame(grid, wall(intr, 0.05f), {}, Pose{}, intr).voxels_updated, 0u);
  EXPECT_EQ(grid.size(), 0u);
}

TEST(Integrate, WeightsOrderInsensitive) {
  const Intrinsics intr = small_intr();
  Pose side;
  side.rotation = rot_z(0.2);
  side.translation = Vec3(0.05, 0, 0);
  auto run = [&](bool swap) {
    VoxelGrid grid;
    const DepthImage a = wall(intr, 1.0f), b = wall(intr, 1.05f);
    if (swap) {
      integrate_frame(grid, b, {}, side, intr);
      integrate_frame(grid, a, {}, Pose{}, intr);
    } else {
      integrate_frame(grid, a, {}, Pose{}, intr);
      integrate_frame(grid, b, {}, side, intr);
    }
    std::map<VoxelKey, std::pair<float, float>> out;
    grid.for_each([&](const VoxelKey& k, const Voxel& v) { out[k] = {v.w, v.d}; });
    return out;
  };
  const auto ab = run(false), ba = run(true);
  ASSERT_EQ(ab.size(), ba.size());
  for (const auto& [k, wd] : ab) {
    ASSERT_TRUE(ba.count(k));
    EXPECT_NEAR(wd.first, ba.at(k).first, 1e-9);
  }
}

TEST(Integrate, VoxelCountBounded) {
  VoxelGrid grid;
  const Intrinsics intr = small_intr();
  integrate_frame(grid, wall(intr, 2.0f), {}, Pose{}, intr);
  const double bound = intr.width * intr.height * 2.0 * 0.08 / 0.02;
  EXPECT_LE(static_cast<double>(grid.size()), bound);
}

TEST(Labels, OneUpdateLabelsBand) {
  VoxelGrid grid;
  const Intrinsics intr = small_intr();
  integrate_frame(grid, wall(intr, 1.0f), {}, Pose{}, intr);
  const Obb box = make_obb(Vec3(0, 0, 1.0), Mat3::Identity(), Vec3(0.2, 0.2, 0.3));
  const std::size_t n = update_labels(grid, box, 4);
  EXPECT_GT(n, 0u);
  std::size_t labeled = 0;
  grid.for_each([&](const VoxelKey& k, const Voxel& v) {
    const bool inside = box.contains(grid.center(k));
    EXPECT_EQ(v.label == 4u, inside);
    if (inside) {
      EXPECT_EQ(v.hist.count(4), 1u);
      ++labeled;
    }
  });
  EXPECT_EQ(labeled, n);
}

TEST(Labels, MajorityAndTieBreak) {
  VoxelGrid grid;
  const Intrinsics intr = small_intr();
  integrate_frame(grid, wall(intr, 1.0f), {}, Pose{}, intr);
  const Obb box = make_obb(Vec3(0, 0, 1.0), Mat3::Identity(), Vec3(0.1, 0.1, 0.1));
  update_labels(grid, box, 1);
  update_labels(grid, box, 1);
  update_labels(grid, box, 2);
  grid.for_each([&](const VoxelKey& k, const Voxel& v) {
    if (box.contains(grid.center(k))) {
      EXPECT_EQ(v.label, 1u);
    }
  });
  update_labels(grid, box, 2);
  grid.for_each([&](const VoxelKey& k, const Voxel& v) {
    if (box.contains(grid.center(k))) {
      EXPECT_EQ(v.label, 1u);
    }
  });
  update_labels(grid, box, 2);
  grid.for_each([&](const VoxelKey& k, const Voxel& v) {
    if (box.contains(grid.center(k))) {
      EXPECT_EQ(v.label, 2u);
    }
  });
  EXPECT_TRUE(labels_match_histograms(grid));
}

TEST(Labels, AuditAfterRandomUpdates) {
  VoxelGrid grid;
  const Intrinsics intr = small_intr();
  integrate_frame(grid, wall(intr, 1.0f), {}, Pose{}, intr);
  Xorshift64Star rng(12);
  for (int i = 0; i < 200; ++i) {
    const Obb box = make_obb(Vec3(rng.uniform(-0.4, 0.4), rng.uniform(-0.3, 0.3), 1.0), random_rotation(rng),
                             random_vec(rng, 0.05, 0.3));
    update_labels(grid, box, 1 + static_cast<InstanceId>(rng.below(5)));
  }
  EXPECT_TRUE(labels_match_histograms(grid));
}

TEST(SupportRatio, HalfOfEightCells) {
  VoxelGrid grid(coarse());
  int i = 0;
  for (int z = 0; z < 2; ++z) {
    for (int y = 0; y < 2; ++y) {
      for (int x = 0; x < 2; ++x) {
        grid.touch({x, y, z}).w = 1;
        if (i++ % 2 == 0) update_labels(grid, make_obb(grid.center({x, y, z}), Mat3::Identity(), Vec3::Constant(0.05)), 3);
      }
    }
  }
  const Obb box = make_obb(Vec3(0.1, 0.1, 0.1), Mat3::Identity(), Vec3(0.2, 0.2, 0.2));
  EXPECT_EQ(grid.label_count(3), 4u);
  EXPECT_DOUBLE_EQ(support_ratio(grid, box, 3), 0.5);
  EXPECT_DOUBLE_EQ(support_ratio(grid, box, 4), 0.0);
  const Obb empty = make_obb(Vec3(5, 5, 5), Mat3::Identity(), Vec3(0.2, 0.2, 0.2));
  EXPECT_DOUBLE_EQ(support_ratio(grid, empty, 4), 0.0);
  EXPECT_DOUBLE_EQ(support_ratio(grid, make_obb(Vec3(0.1, 0.1, 0.1), Mat3::Identity(), Vec3(0.2, 0.2, 0)), 3), 0.0);
}

TEST(SupportRatio, LabelCountsFollowRelabeling) {
  VoxelGrid grid;
  const Intrinsics intr = small_intr();
  integrate_frame(grid, wall(intr, 1.0f), {}, Pose{}, intr);
  Xorshift64Star rng(21);
  for (int i = 0; i < 300; ++i) {
    const Obb box = make_obb(Vec3(rng.uniform(-0.4, 0.4), rng.uniform(-0.3, 0.3), 1.0), random_rotation(rng),
                             random_vec(rng, 0.05, 0.3));
    update_labels(grid, box, 1 + static_cast<InstanceId>(rng.below(4)));
  }
  std::map<InstanceId, std::size_t> scan;
  grid.for_each([&](const VoxelKey&, const Voxel& v) {
    if (v.label != kNoInstance) ++scan[v.label];
  });
  for (InstanceId id = 1; id <= 5; ++id) EXPECT_EQ(grid.label_count(id), scan[id]) << id;
}

// Labeled voxels of a fused box are those within the truncation band behind
// its visible faces (the bottom is never seen from the orbit).
TEST(SupportRatio, FusedBoxMatchesBandFraction) {
  const SynthScene scene = single_box_scene();
  VoxelGrid grid = fuse(scene, 30);
  const Obb& box = scene.objects[0].box;
  update_labels(grid, box, 1);
  const double vs = grid.config().voxel_size, tau = grid.config().truncation;
  const Vec3 lo = box.center - 0.5 * box.extents, hi = box.center + 0.5 * box.extents;
  long band = 0, total = 0;
  for (double z = lo.z() + 0.5 * vs; z < hi.z(); z += vs) {
    for (double y = lo.y() + 0.5 * vs; y < hi.y(); y += vs) {
      for (double x = lo.x() + 0.5 * vs; x < hi.x(); x += vs) {
        const double depth_in = std::min({x - lo.x(), hi.x() - x, y - lo.y(), hi.y() - y, hi.z() - z});
        ++total;
        band += depth_in <= tau;
      }
    }
  }
  const double expected = static_cast<double>(band) / static_cast<double>(total);
  EXPECT_NEAR(support_ratio(grid, box, 1), expected, 0.15);
}

TEST(Extract, UnknownIdAndRoundTrip) {
  VoxelGrid grid;
  const Intrinsics intr = small_intr();
  integrate_frame(grid, wall(intr, 1.0f), RgbImage(intr.width, intr.height, Rgb{10, 20, 30}), Pose{}, intr);
  EXPECT_TRUE(extract_instance_points(grid, 7).empty());
  update_labels(grid, make_obb(Vec3(0, 0, 1.0), Mat3::Identity(), Vec3(0.3, 0.3, 0.3)), 7);
  const auto pts = extract_instance_points(grid, 7);
  ASSERT_FALSE(pts.empty());
  for (const SurfacePoint& p : pts) {
    const Voxel* v = grid.find(grid.key_of(p.position));
    ASSERT_NE(v, nullptr);
    EXPECT_EQ(v->label, 7u);
    EXPECT_LT(std::abs(v->d), grid.config().voxel_size);
    EXPECT_EQ(p.color, (Rgb{10, 20, 30}));
  }
}

TEST(Extract, TwoObjectsDisjointNearSurface) {
  SynthConfig cfg;
  cfg.seed = 3;
  cfg.n_objects = 2;
  const SynthScene scene = generate_scene(cfg);
  VoxelGrid grid = fuse(scene, 30);
  for (const SynthObject& o : scene.objects) {
    Obb region;
    region.center = 0.5 * (o.aabb().min + o.aabb().max);
    region.extents = (o.aabb().max - o.aabb().min) + Vec3::Constant(0.1);
    update_labels(grid, region, o.id);
  }
  std::set<VoxelKey> seen;
  for (const SynthObject& o : scene.objects) {
    const auto pts = extract_instance_points(grid, o.id);
    EXPECT_GT(pts.size(), 50u);
    for (const SurfacePoint& p : pts) {
      EXPECT_TRUE(seen.insert(grid.key_of(p.position)).second);
      EXPECT_LE(std::abs(o.sdf(p.position)), 2 * grid.config().voxel_size);
    }
  }
}

TEST(Snapshot, RoundTripIsExact) {
  SynthConfig cfg;
  cfg.n_objects = 3;
  const SynthScene scene = generate_scene(cfg);
  VoxelGrid grid = fuse(scene, 8);
  for (const SynthObject& o : scene.objects) {
    Obb region;
    region.center = 0.5 * (o.aabb().min + o.aabb().max);
    region.extents = o.aabb().max - o.aabb().min;
    update_labels(grid, region, o.id);
  }
  const auto dir = std::filesystem::temp_directory_path() / "panoptic_test_tsdf";
  std::filesystem::create_directories(dir);
  save_map_snapshot(grid, dir / "a.pmap");
  const VoxelGrid back = load_map_snapshot(dir / "a.pmap");
  EXPECT_EQ(back.size(), grid.size());
  EXPECT_EQ(back.sorted_keys(), grid.sorted_keys());
  for (const VoxelKey& k : grid.sorted_keys()) {
    const Voxel* a = grid.find(k);
    const Voxel* b = back.find(k);
    ASSERT_NE(b, nullptr);
    EXPECT_EQ(a->d, b->d);
    EXPECT_EQ(a->w, b->w);
    EXPECT_EQ(a->label, b->label);
    EXPECT_EQ(a->hist.entries(), b->hist.entries());
  }
  for (const SynthObject& o : scene.objects) EXPECT_EQ(back.label_count(o.id), grid.label_count(o.id));
  save_map_snapshot(back, dir / "b.pmap");
  EXPECT_EQ(slurp(dir / "a.pmap"), slurp(dir / "b.pmap"));
  const std::string bytes = slurp(dir / "a.pmap");
  EXPECT_EQ(bytes.substr(0, 4), "PMAP");
}
