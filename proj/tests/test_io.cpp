#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "panoptic/config.hpp"
#include "panoptic/dataset.hpp"
#include "panoptic/errors.hpp"
#include "panoptic/pipeline.hpp"
#include "panoptic/synth.hpp"
#include "panoptic/track_io.hpp"
#include "test_util.hpp"

using namespace panoptic;
using namespace panoptic::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("panoptic_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

SynthConfig small_synth() {
  SynthConfig cfg;
  cfg.seed = 2;
  cfg.emb_dim = 16;
  cfg.intrinsics = {120, 120, 79.5, 59.5, 160, 120};
  cfg.trajectory.n_frames = 8;
  return cfg;
}

PipelineConfig small_pipeline() {
  PipelineConfig cfg;
  cfg.semantics.emb_dim = 16;
  cfg.tsdf.voxel_size = 0.04;
  cfg.tsdf.truncation = 0.12;
  cfg.detect.min_cluster_points = 20;
  return cfg;
}

fs::path exported(const std::string& name) {
  const fs::path dir = scratch(name);
  const SynthConfig cfg = small_synth();
  export_dataset(generate_scene(cfg), cfg, dir);
  return dir;
}

}  // namespace

TEST(Config, ParsesDottedKeysAndComments) {
  const PipelineConfig c = parse_config(
      "# comment\n"
      "tsdf.voxel_size = 0.03\n"
      "  track.miss_limit=7   # trailing\n"
      "\n"
      "io.depth_scale = 5000\n");
  EXPECT_DOUBLE_EQ(c.tsdf.voxel_size, 0.03);
  EXPECT_EQ(c.track.miss_limit, 7);
  EXPECT_EQ(c.depth_scale, 5000.0);
  EXPECT_EQ(c.detect.dbscan_min_pts, PipelineConfig{}.detect.dbscan_min_pts);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("tsdf.voxel = 0.03\n"), ConfigError);
  EXPECT_THROW(parse_config("tsdf.voxel_size 0.03\n"), ConfigError);
  EXPECT_THROW(parse_config("tsdf.voxel_size = abc\n"), ConfigError);
  EXPECT_THROW(parse_config("track.miss_limit = 2.5\n"), ConfigError);
  EXPECT_THROW(parse_config("tsdf.voxel_size = -1\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/panoptic.cfg"), ConfigError);
}

TEST(Config, FormatRoundTrips) {
  PipelineConfig c;
  c.tsdf.voxel_size = 0.025;
  c.track.match_cost_max = 1.1;
  c.depth_scale = 4000;
  const std::string text = format_config(c);
  EXPECT_EQ(format_config(parse_config(text)), text);
}

TEST(Depth, ScaleArithmetic) {
  Image<std::uint16_t> raw(2, 1, 0);
  raw.at(0, 0) = 2500;
  const DepthImage d = depth_from_u16(raw, 1000.0);
  EXPECT_FLOAT_EQ(d.at(0, 0), 2.5f);
  EXPECT_EQ(d.at(1, 0), 0.0f);
  EXPECT_EQ(depth_to_u16(d, 1000.0), raw);
}

TEST(Depth, PngAndRawRoundTrip) {
  const fs::path dir = scratch("depth");
  Image<std::uint16_t> raw(5, 3, 0);
  for (std::size_t i = 0; i < raw.data().size(); ++i) raw.data()[i] = static_cast<std::uint16_t>(1000 * i + 7);
  write_png_u16(dir / "d.png", raw);
  EXPECT_EQ(read_png_u16(dir / "d.png"), raw);
  const DepthImage d = depth_from_u16(raw, 1000.0);
  write_depth_f32(dir / "d.f32", d);
  EXPECT_EQ(read_depth_f32(dir / "d.f32", 5, 3), d);
  EXPECT_THROW(read_depth_f32(dir / "d.f32", 6, 3), FormatError);
  EXPECT_THROW(read_png_u16(dir / "missing.png"), IoError);
  fs::remove_all(dir);
}

TEST(Pose, RoundTripAndRepair) {
  const fs::path dir = scratch("pose");
  Xorshift64Star rng(3);
  Pose p;
  p.rotation = random_rotation(rng);
  p.translation = Vec3(1, -2, 0.5);
  write_pose(dir / "p.txt", p);
  const Pose q = read_pose(dir / "p.txt");
  EXPECT_LT((q.rotation - p.rotation).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(q.translation, p.translation);

  std::ofstream(dir / "slightly_off.txt") << "1 0.0005 0 0\n0 1 0 0\n0 0 1 2\n0 0 0 1\n";
  const Pose r = read_pose(dir / "slightly_off.txt");
  EXPECT_LT((r.rotation.transpose() * r.rotation - Mat3::Identity()).norm(), 1e-12);
  EXPECT_DOUBLE_EQ(r.translation.z(), 2.0);

  std::ofstream(dir / "skewed.txt") << "1 0.1 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n";
  EXPECT_THROW(read_pose(dir / "skewed.txt"), PoseError);
  std::ofstream(dir / "short.txt") << "1 0 0 0\n0 1 0 0\n";
  EXPECT_THROW(read_pose(dir / "short.txt"), FormatError);
  fs::remove_all(dir);
}

TEST(Ingest, MissingFileNamesPath) {
  const fs::path dir = exported("missing");
  const DatasetManifest m = read_manifest(dir);
  const EmbeddingTable table = read_embeddings(dir / m.embeddings);
  fs::remove(dir / m.frames[2].depth);
  try {
    ingest_frame(m.frames[2], m, table);
    FAIL() << "expected IngestError";
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find((dir / m.frames[2].depth).string()), std::string::npos);
  }
  EXPECT_THROW(read_manifest(dir / "nowhere"), IngestError);
  fs::remove_all(dir);
}

TEST(Ingest, MaskRecordsRoundTrip) {
  const fs::path dir = scratch("masks");
  const std::vector<MaskRecord> recs{{0, 0.9, 3}, {1, 0.55, 4}};
  write_mask_records(dir / "masks.txt", recs);
  const auto back = read_mask_records(dir / "masks.txt");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].index, 1);
  EXPECT_DOUBLE_EQ(back[1].confidence, 0.55);
  EXPECT_EQ(back[1].embedding_row, 4u);
  fs::remove_all(dir);
}

TEST(Pipeline, EmptyStream) {
  DatasetManifest m;
  m.intrinsics = small_synth().intrinsics;
  Pipeline p(small_pipeline(), m.intrinsics);
  const RunReport r = run_pipeline(p, m);
  EXPECT_FALSE(r.aborted);
  EXPECT_EQ(r.final_tracks, 0u);
  EXPECT_EQ(r.final_voxels, 0u);
  EXPECT_EQ(p.grid().size(), 0u);
}

TEST(Pipeline, TruncatedEmbeddingsSkipLaterFrames) {
  const fs::path dir = exported("truncated");
  const DatasetManifest m = read_manifest(dir);
  const fs::path emb = dir / m.embeddings;
  // Keep the rows of the first half of the frames.
  std::uint64_t rows_kept = 0;
  for (std::size_t t = 0; t < m.frames.size() / 2; ++t) {
    rows_kept += read_mask_records(dir / m.frames[t].masks_dir / "masks.txt").size();
  }
  fs::resize_file(emb, 16 + rows_kept * 16 * 4 + 5);
  Pipeline p(small_pipeline(), m.intrinsics);
  const RunReport r = run_pipeline(p, m);
  EXPECT_FALSE(r.aborted);
  ASSERT_EQ(r.frames.size(), m.frames.size());
  for (std::size_t t = 0; t < m.frames.size(); ++t) {
    EXPECT_EQ(r.frames[t].skipped, t >= m.frames.size() / 2) << t;
  }
  EXPECT_GT(r.final_tracks, 0u);
  fs::remove_all(dir);
}

TEST(Pipeline, NonIncreasingIndexAborts) {
  const fs::path dir = exported("order");
  DatasetManifest m = read_manifest(dir);
  m.frames[3].index = m.frames[2].index;
  Pipeline p(small_pipeline(), m.intrinsics);
  const RunReport r = run_pipeline(p, m);
  EXPECT_TRUE(r.aborted);
  EXPECT_EQ(r.frames.size(), 3u);
  EXPECT_GT(p.grid().size(), 0u);
  fs::remove_all(dir);
}

TEST(Pipeline, StageTimesSumToTotal) {
  const fs::path dir = exported("timing");
  const DatasetManifest m = read_manifest(dir);
  Pipeline p(small_pipeline(), m.intrinsics);
  const RunReport r = run_pipeline(p, m);
  for (const FrameReport& f : r.frames) {
    double sum = 0;
    for (double ms : f.times.ms) {
      EXPECT_GE(ms, 0.0);
      sum += ms;
    }
    EXPECT_NEAR(f.times.total(), sum, 1e-9);
    EXPECT_LE(f.times.tracking(), f.times.total() + 1e-9);
  }
  fs::remove_all(dir);
}

TEST(Pipeline, DeterministicOutputs) {
  const fs::path dir = exported("determinism");
  const DatasetManifest m = read_manifest(dir);
  std::string reports[2], maps[2], tracks[2];
  for (int run = 0; run < 2; ++run) {
    Pipeline p(small_pipeline(), m.intrinsics);
    std::ostringstream out;
    write_run_report(out, run_pipeline(p, m));
    reports[run] = out.str();
    const fs::path o = dir / ("out" + std::to_string(run));
    fs::create_directories(o);
    save_map_snapshot(p.grid(), o / "map.pmap");
    save_tracks(o, p.tracker().tracks(), 16);
    maps[run] = slurp(o / "map.pmap");
    tracks[run] = slurp(o / "tracks.txt") + slurp(o / "tracks.emb");
  }
  EXPECT_EQ(reports[0], reports[1]);
  EXPECT_EQ(maps[0], maps[1]);
  EXPECT_EQ(tracks[0], tracks[1]);
  EXPECT_FALSE(maps[0].empty());
  fs::remove_all(dir);
}

TEST(TrackIo, SnapshotRoundTrip) {
  Xorshift64Star rng(8);
  TrackMap tracks;
  for (TrackId id : {2u, 5u, 9u}) {
    Track t;
    t.id = id;
    t.obb = make_obb(random_vec(rng, -1, 1), random_rotation(rng), random_vec(rng, 0.1, 1));
    for (int k = 0; k < 3; ++k) t.bank.entries.push_back({random_unit(rng, 16), 1.0 + k});
    tracks[id] = t;
  }
  const fs::path dir = scratch("tracks");
  save_tracks(dir, tracks, 16);
  const TrackMap back = load_tracks(dir);
  ASSERT_EQ(back.size(), 3u);
  for (const auto& [id, t] : tracks) {
    const Track& b = back.at(id);
    EXPECT_LT((b.obb.center - t.obb.center).norm(), 1e-9);
    EXPECT_LT((b.obb.extents - t.obb.extents).norm(), 1e-9);
    ASSERT_EQ(b.bank.entries.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_LT((b.bank.entries[k].embedding - t.bank.entries[k].embedding).norm(), 1e-6);
      EXPECT_DOUBLE_EQ(b.bank.entries[k].confidence, t.bank.entries[k].confidence);
    }
  }
  fs::remove_all(dir);
}
