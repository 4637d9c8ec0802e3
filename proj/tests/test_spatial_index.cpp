#include <algorithm>
#include <map>

#include <gtest/gtest.h>

#include "panoptic/errors.hpp"
#include "panoptic/spatial_index.hpp"
#include "test_util.hpp"

using namespace panoptic;
using namespace panoptic::testing;

namespace {

Aabb random_box(Xorshift64Star& rng, double world = 10.0, double size = 1.0) {
  const Vec3 lo = random_vec(rng, -world, world);
  return {lo, lo + random_vec(rng, 0.0, size)};
}

std::vector<TrackId> linear_scan(const std::map<TrackId, Aabb>& boxes, const Aabb& q, double margin) {
  std::vector<TrackId> out;
  const Vec3 lo = q.min.array() - margin, hi = q.max.array() + margin;
  for (const auto& [id, b] : boxes) {
    if ((b.min.array() <= hi.array()).all() && (lo.array() <= b.max.array()).all()) out.push_back(id);
  }
  return out;
}

Aabb everything() { return {Vec3::Constant(-1e9), Vec3::Constant(1e9)}; }

}  // namespace

TEST(SpatialIndex, EmptyQuery) {
  SpatialIndex idx;
  EXPECT_TRUE(idx.query(everything()).empty());
  EXPECT_TRUE(idx.query_tree(everything()).empty());
  EXPECT_TRUE(idx.check_invariants());
  EXPECT_FALSE(idx.remove(3));
}

TEST(SpatialIndex, HundredTracksMatchLinearScan) {
  Xorshift64Star rng(100);
  SpatialIndex idx;
  std::map<TrackId, Aabb> truth;
  for (TrackId id = 1; id <= 100; ++id) {
    truth[id] = random_box(rng);
    idx.insert(id, truth[id]);
  }
  EXPECT_TRUE(idx.check_invariants());
  EXPECT_GT(idx.height(), 1u);
  for (int q = 0; q < 200; ++q) {
    const Aabb box = random_box(rng, 10.0, 4.0);
    const double margin = rng.uniform(0.0, 0.5);
    EXPECT_EQ(idx.query(box, margin), linear_scan(truth, box, margin));
  }
  std::vector<TrackId> all;
  for (const auto& [id, b] : truth) all.push_back(id);
  EXPECT_EQ(idx.query(everything()), all);
}

TEST(SpatialIndex, MarginInflatesQuery) {
  SpatialIndex idx;
  idx.insert(1, {Vec3(1, 0, 0), Vec3(2, 1, 1)});
  const Aabb probe{Vec3(-1, 0, 0), Vec3(0.95, 1, 1)};
  EXPECT_TRUE(idx.query(probe).empty());
  EXPECT_EQ(idx.query(probe, 0.1), std::vector<TrackId>{1});
  // Touching boxes intersect.
  EXPECT_EQ(idx.query({Vec3(2, 1, 1), Vec3(3, 3, 3)}), std::vector<TrackId>{1});
}

TEST(SpatialIndex, DuplicateInsertThrows) {
  SpatialIndex idx;
  idx.insert(7, {Vec3::Zero(), Vec3::Ones()});
  EXPECT_THROW(idx.insert(7, {Vec3::Zero(), Vec3::Ones()}), Error);
  EXPECT_EQ(idx.size(), 1u);
}

TEST(SpatialIndex, RejectsBadFanout) {
  EXPECT_THROW(SpatialIndex(SpatialIndex::Params{1, 1, 16}), Error);
  EXPECT_THROW(SpatialIndex(SpatialIndex::Params{8, 5, 16}), Error);
}

TEST(SpatialIndex, RandomOperationSequences) {
  Xorshift64Star rng(2718);
  for (int seq = 0; seq < 40; ++seq) {
    SpatialIndex idx;
    std::map<TrackId, Aabb> truth;
    TrackId next = 1;
    for (int op = 0; op < 400; ++op) {
      const auto r = rng.below(10);
      if (r < 4 || truth.empty()) {
        truth[next] = random_box(rng);
        idx.insert(next, truth[next]);
        ++next;
      } else if (r < 6) {
        auto it = std::next(truth.begin(), static_cast<long>(rng.below(truth.size())));
        it->second = random_box(rng);
        idx.update(it->first, it->second);
      } else if (r < 8) {
        auto it = std::next(truth.begin(), static_cast<long>(rng.below(truth.size())));
        EXPECT_TRUE(idx.remove(it->first));
        truth.erase(it);
      } else {
        const Aabb q = random_box(rng, 10.0, 6.0);
        EXPECT_EQ(idx.query(q, 0.1), linear_scan(truth, q, 0.1));
        EXPECT_EQ(idx.query_tree(q, 0.1), linear_scan(truth, q, 0.1));
      }
      ASSERT_TRUE(idx.check_invariants()) << "seq " << seq << " op " << op;
      ASSERT_EQ(idx.size(), truth.size());
    }
    std::vector<TrackId> live;
    for (const auto& [id, b] : truth) live.push_back(id);
    EXPECT_EQ(idx.query_tree(everything()), live);
  }
}

TEST(SpatialIndex, DrainToEmpty) {
  Xorshift64Star rng(1);
  SpatialIndex idx;
  for (TrackId id = 1; id <= 150; ++id) idx.insert(id, random_box(rng));
  for (TrackId id = 150; id >= 1; --id) {
    ASSERT_TRUE(idx.remove(id));
    ASSERT_TRUE(idx.check_invariants());
  }
  EXPECT_EQ(idx.size(), 0u);
  EXPECT_EQ(idx.height(), 1u);
}
