#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "panoptic/errors.hpp"
#include "panoptic/query.hpp"
#include "test_util.hpp"

using namespace panoptic;
using namespace panoptic::testing;

namespace {

Track track_with(TrackId id, std::vector<BankEntry> entries) {
  Track t;
  t.id = id;
  t.bank.entries = std::move(entries);
  return t;
}

VoxelSet cube_voxels(int x0, int n) {
  std::vector<VoxelKey> keys;
  for (int x = x0; x < x0 + n; ++x) {
    for (int y = 0; y < n; ++y) {
      for (int z = 0; z < n; ++z) keys.push_back({x, y, z});
    }
  }
  return make_voxel_set(std::move(keys));
}

}  // namespace

TEST(Retrieve, QueryInBankScoresOne) {
  Xorshift64Star rng(1);
  const Embedding q = random_unit(rng, 32);
  TrackMap tracks;
  tracks[7] = track_with(7, {{random_unit(rng, 32), 1.0}, {q, 2.0}});
  const auto r = retrieve(tracks, q, {.top_k = 5, .threshold = std::nullopt});
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].id, 7u);
  EXPECT_NEAR(r[0].score, 1.0, 1e-12);
  EXPECT_TRUE(retrieve({}, q, {.top_k = 5, .threshold = std::nullopt}).empty());
}

TEST(Retrieve, OneHotClasses) {
  TrackMap tracks;
  for (TrackId id = 1; id <= 5; ++id) tracks[id] = track_with(id, {{Embedding::Unit(8, static_cast<int>(id)), 1.0}});
  const auto r = retrieve(tracks, Embedding::Unit(8, 2), {.top_k = 5, .threshold = std::nullopt});
  ASSERT_EQ(r.size(), 5u);
  EXPECT_EQ(r[0].id, 2u);
  EXPECT_DOUBLE_EQ(r[0].score, 1.0);
  for (std::size_t i = 1; i < r.size(); ++i) EXPECT_LE(r[i].score, 0.0);
}

TEST(Retrieve, MatchesNaiveSort) {
  Xorshift64Star rng(20);
  TrackMap tracks;
  for (TrackId id = 1; id <= 20; ++id) {
    std::vector<BankEntry> entries;
    const int n = 1 + static_cast<int>(rng.below(3));
    for (int k = 0; k < n; ++k) entries.push_back({random_unit(rng, 16), 1.0 + static_cast<double>(rng.below(5))});
    tracks[id] = track_with(id, entries);
  }
  tracks[21] = tracks[4];  // exact tie, lower id first
  tracks[21].id = 21;
  const Embedding q = random_unit(rng, 16);
  std::vector<std::pair<double, TrackId>> naive;
  for (const auto& [id, t] : tracks) {
    double best = -2;
    for (const BankEntry& e : t.bank.entries) best = std::max(best, e.embedding.dot(q));
    naive.emplace_back(-best, id);
  }
  std::sort(naive.begin(), naive.end());
  const auto r = retrieve(tracks, q, {.top_k = 100, .threshold = std::nullopt});
  ASSERT_EQ(r.size(), naive.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_EQ(r[i].id, naive[i].second);
    EXPECT_NEAR(r[i].score, -naive[i].first, 1e-12);
  }
  EXPECT_EQ(retrieve(tracks, q, {.top_k = 3, .threshold = std::nullopt}).size(), 3u);
  const auto thr = retrieve(tracks, q, {.top_k = std::nullopt, .threshold = 0.1});
  for (const auto& ri : thr) EXPECT_GT(ri.score, 0.1);
  EXPECT_EQ(thr.size(), static_cast<std::size_t>(std::count_if(naive.begin(), naive.end(),
                                                               [](const auto& n) { return -n.first > 0.1; })));
}

TEST(Retrieve, ScoresIgnoreConfidenceScale) {
  Xorshift64Star rng(3);
  TrackMap a, b;
  for (TrackId id = 1; id <= 10; ++id) {
    a[id] = track_with(id, {{random_unit(rng, 16), 1.0 + id}, {random_unit(rng, 16), 2.0}});
    b[id] = a[id];
    for (BankEntry& e : b[id].bank.entries) e.confidence *= 37.5;
  }
  const Embedding q = random_unit(rng, 16);
  const auto ra = retrieve(a, q, {.top_k = 10, .threshold = std::nullopt});
  const auto rb = retrieve(b, q, {.top_k = 10, .threshold = std::nullopt});
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(ra[i].id, rb[i].id);
    EXPECT_EQ(ra[i].score, rb[i].score);
  }
}

TEST(Classify, PicksLabelAndSkipsEmptyBanks) {
  LabelBank labels;
  for (int i = 0; i < 5; ++i) labels.push_back({"c" + std::to_string(i), Embedding::Unit(8, i)});
  TrackMap tracks;
  tracks[1] = track_with(1, {{Embedding::Unit(8, 3), 1.0}});
  tracks[2] = track_with(2, {});
  const auto c = classify_instances(tracks, labels);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.at(1).label, 3u);
  EXPECT_DOUBLE_EQ(c.at(1).score, 1.0);
}

TEST(Classify, NoisyEmbeddingsAgree) {
  Xorshift64Star rng(5);
  LabelBank labels;
  for (int i = 0; i < 5; ++i) labels.push_back({"c" + std::to_string(i), Embedding::Unit(64, i)});
  TrackMap tracks;
  for (TrackId id = 1; id <= 50; ++id) {
    Embedding e = Embedding::Unit(64, static_cast<int>(id % 5));
    for (int k = 0; k < 64; ++k) e[k] += 0.05 / 8.0 * rng.normal();
    tracks[id] = track_with(id, {{e.normalized(), 1.0}});
  }
  for (const auto& [id, c] : classify_instances(tracks, labels)) EXPECT_EQ(c.label, id % 5);
}

TEST(InstanceAp, TrivialCases) {
  const VoxelSet a = cube_voxels(0, 4), b = cube_voxels(10, 4);
  const std::vector<GtInstance> gt{{1, 0, a}};
  EXPECT_DOUBLE_EQ(eval_instance_ap({{a, 0.9, 0}}, gt, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(eval_instance_ap({{b, 0.9, 0}}, gt, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(eval_instance_ap({}, gt, 0.5), 0.0);
  EXPECT_THROW(eval_instance_ap({{a, 0.9, 0}}, {}, 0.5), MetricError);
  EXPECT_THROW(eval_instance_ap({{a, 0.9, 0}}, gt, 1.0), MetricError);
  EXPECT_THROW(eval_instance_ap({{a, 0.9, 0}}, gt, 0.0), MetricError);
}

TEST(InstanceAp, HandComputedCurve) {
  const VoxelSet g1 = cube_voxels(0, 4), g2 = cube_voxels(10, 4), fp = cube_voxels(20, 4);
  const std::vector<GtInstance> gt{{1, 0, g1}, {2, 0, g2}};
  const std::vector<PredictedInstance> preds{{g1, 0.9, 0}, {fp, 0.8, 0}, {g2, 0.7, 0}};
  // Precision (1, 1/2, 2/3) at recall (1/2, 1/2, 1); interpolated precision at recall 1/2 is 1.
  EXPECT_NEAR(eval_instance_ap(preds, gt, 0.5), 0.5 * 1.0 + 0.5 * (2.0 / 3.0), 1e-12);
  // A duplicate of an already matched instance is a false positive.
  EXPECT_NEAR(eval_instance_ap({{g1, 0.9, 0}, {g1, 0.8, 0}}, gt, 0.5), 0.5, 1e-12);
}

TEST(InstanceAp, IouThresholdOnVoxels) {
  const VoxelSet g = cube_voxels(0, 4);
  const VoxelSet shifted = cube_voxels(1, 4);  // IoU 3/5
  EXPECT_NEAR(voxel_iou(g, shifted), 0.6, 1e-12);
  EXPECT_DOUBLE_EQ(eval_instance_ap({{shifted, 1.0, 0}}, {{1, 0, g}}, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(eval_instance_ap({{shifted, 1.0, 0}}, {{1, 0, g}}, 0.75), 0.0);
}

TEST(InstanceAp, RankOnlyDependence) {
  Xorshift64Star rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<GtInstance> gt;
    std::vector<PredictedInstance> preds;
    for (int i = 0; i < 6; ++i) gt.push_back({static_cast<std::uint32_t>(i), 0, cube_voxels(10 * i, 3)});
    for (int i = 0; i < 8; ++i) {
      preds.push_back({cube_voxels(10 * static_cast<int>(rng.below(8)) + static_cast<int>(rng.below(2)), 3),
                       rng.uniform(), 0});
    }
    std::vector<PredictedInstance> warped = preds;
    for (auto& p : warped) p.score = std::exp(5.0 * p.score) - 3.0;
    EXPECT_DOUBLE_EQ(eval_instance_ap(preds, gt, 0.5), eval_instance_ap(warped, gt, 0.5));
  }
}

TEST(MeanAp, AveragesOverGtClasses) {
  const VoxelSet a = cube_voxels(0, 4), b = cube_voxels(10, 4);
  const std::vector<GtInstance> gt{{1, 0, a}, {2, 1, b}};
  EXPECT_DOUBLE_EQ(eval_mean_ap({{a, 0.9, 0}, {b, 0.9, 1}}, gt, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(eval_mean_ap({{a, 0.9, 0}, {b, 0.9, 0}}, gt, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(eval_mean_ap({{a, 0.9, 0}}, gt, 0.5, {1}), 1.0);
}

TEST(Semantic, PerfectAndComplement) {
  const std::vector<int> g{0, 0, 1, 1, 1};
  const SemanticMetrics p = eval_semantic(g, g);
  EXPECT_DOUBLE_EQ(p.miou, 1.0);
  EXPECT_DOUBLE_EQ(p.macc, 1.0);
  EXPECT_DOUBLE_EQ(p.fmiou, 1.0);
  EXPECT_DOUBLE_EQ(p.fmacc, 1.0);
  const SemanticMetrics c = eval_semantic({1, 1, 0, 0, 0}, g);
  EXPECT_DOUBLE_EQ(c.miou, 0.0);
  EXPECT_DOUBLE_EQ(c.macc, 0.0);
  EXPECT_THROW(eval_semantic({}, {}), MetricError);
  EXPECT_THROW(eval_semantic({0}, {0, 1}), MetricError);
}

TEST(Semantic, MatchesConfusionMatrix) {
  Xorshift64Star rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> pred, gt;
    double conf[3][3] = {};
    for (int i = 0; i < 300; ++i) {
      const int g = static_cast<int>(rng.below(3));
      const int p = rng.below(3) ? g : static_cast<int>(rng.below(3));
      gt.push_back(g);
      pred.push_back(p);
      conf[g][p] += 1;
    }
    double miou = 0, macc = 0, fmiou = 0, fmacc = 0;
    for (int c = 0; c < 3; ++c) {
      double row = 0, col = 0;
      for (int k = 0; k < 3; ++k) {
        row += conf[c][k];
        col += conf[k][c];
      }
      const double iou = conf[c][c] / (row + col - conf[c][c]);
      const double acc = conf[c][c] / row;
      miou += iou / 3;
      macc += acc / 3;
      fmiou += row / 300 * iou;
      fmacc += row / 300 * acc;
    }
    const SemanticMetrics m = eval_semantic(pred, gt);
    EXPECT_NEAR(m.miou, miou, 1e-12);
    EXPECT_NEAR(m.macc, macc, 1e-12);
    EXPECT_NEAR(m.fmiou, fmiou, 1e-12);
    EXPECT_NEAR(m.fmacc, fmacc, 1e-12);
    for (double v : {m.miou, m.macc, m.fmiou, m.fmacc}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}
