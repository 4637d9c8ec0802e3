#include "panoptic/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/SVD>

#include "panoptic/errors.hpp"

namespace panoptic {
namespace {

constexpr double kPoseRepairTolerance = 1e-3;

std::ifstream open_in(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IngestError("missing file: " + path.string());
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const std::filesystem::path path = dir / "manifest.txt";
  std::ifstream in = open_in(path);
  DatasetManifest m;
  m.root = dir;
  bool have_intrinsics = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key) || key[0] == '#') continue;
    auto bad = [&]() { return FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed '" + key + "'"); };
    if (key == "intrinsics") {
      Intrinsics& k = m.intrinsics;
      if (!(ss >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height) || !k.is_valid()) throw bad();
      have_intrinsics = true;
    } else if (key == "depth_scale") {
      if (!(ss >> m.depth_scale) || !(m.depth_scale > 0.0)) throw bad();
    } else if (key == "embeddings") {
      std::string file;
      if (!(ss >> file)) throw bad();
      m.embeddings = dir / file;
    } else if (key == "frame") {
      FrameRecord r;
      std::string depth, rgb, pose, masks;
      if (!(ss >> r.index >> depth >> rgb >> pose >> masks)) throw bad();
      r.depth = dir / depth;
      r.rgb = dir / rgb;
      r.pose = dir / pose;
      r.masks_dir = dir / masks;
      m.frames.push_back(std::move(r));
    } else {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  if (!have_intrinsics) throw FormatError(path.string() + ": missing intrinsics");
  return m;
}

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
  std::ofstream out = open_out(dir / "manifest.txt");
  const Intrinsics& k = m.intrinsics;
  out << "intrinsics " << fmt(k.fx) << ' ' << fmt(k.fy) << ' ' << fmt(k.cx) << ' ' << fmt(k.cy) << ' ' << k.width
      << ' ' << k.height << '\n';
  out << "depth_scale " << fmt(m.depth_scale) << '\n';
  out << "embeddings " << m.embeddings.generic_string() << '\n';
  for (const FrameRecord& r : m.frames) {
    out << "frame " << r.index << ' ' << r.depth.generic_string() << ' ' << r.rgb.generic_string() << ' '
        << r.pose.generic_string() << ' ' << r.masks_dir.generic_string() << '\n';
  }
  if (!out) throw IoError("failed writing manifest in " + dir.string());
}

Pose read_pose(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (!(in >> m(r, c))) throw FormatError(path.string() + ": expected 16 numbers");
    }
  }
  if (!m.allFinite()) throw PoseError(path.string() + ": non-finite pose");
  if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > kPoseRepairTolerance) {
    throw PoseError(path.string() + ": last row is not 0 0 0 1");
  }
  Pose pose;
  pose.rotation = m.topLeftCorner<3, 3>();
  pose.translation = m.topRightCorner<3, 1>();
  if (!pose.is_valid(kPoseRepairTolerance)) throw PoseError(path.string() + ": rotation is not orthonormal");
  const Eigen::JacobiSVD<Mat3> svd(pose.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
  pose.rotation = svd.matrixU() * svd.matrixV().transpose();
  return pose;
}

void write_pose(const std::filesystem::path& path, const Pose& pose) {
  std::ofstream out = open_out(path);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out << fmt(pose.rotation(r, c)) << ' ';
    out << fmt(pose.translation[r]) << '\n';
  }
  out << "0 0 0 1\n";
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<MaskRecord> read_mask_records(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<MaskRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    MaskRecord r;
    if (!(ss >> r.index)) continue;
    if (!(ss >> r.confidence >> r.embedding_row) || r.index < 0) {
      throw FormatError(path.string() + ": malformed line '" + line + "'");
    }
    records.push_back(r);
  }
  return records;
}

void write_mask_records(const std::filesystem::path& path, const std::vector<MaskRecord>& records) {
  std::ofstream out = open_out(path);
  for (const MaskRecord& r : records) {
    out << r.index << ' ' << fmt(r.confidence) << ' ' << r.embedding_row << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Frame ingest_frame(const FrameRecord& record, const DatasetManifest& manifest, const EmbeddingTable& embeddings) {
  const Intrinsics& intr = manifest.intrinsics;
  Frame frame;
  frame.index = record.index;

  if (!std::filesystem::exists(record.depth)) throw IngestError("missing file: " + record.depth.string());
  if (record.depth.extension() == ".f32") {
    frame.depth = read_depth_f32(record.depth, intr.width, intr.height);
  } else {
    frame.depth = depth_from_u16(read_png_u16(record.depth), manifest.depth_scale);
  }
  if (frame.depth.width() != intr.width || frame.depth.height() != intr.height) {
    throw FormatError(record.depth.string() + ": size does not match intrinsics");
  }
  if (!std::filesystem::exists(record.rgb)) throw IngestError("missing file: " + record.rgb.string());
  frame.rgb = read_png_rgb(record.rgb);
  if (frame.rgb.width() != intr.width || frame.rgb.height() != intr.height) {
    throw FormatError(record.rgb.string() + ": size does not match intrinsics");
  }
  frame.pose = read_pose(record.pose);

  const std::filesystem::path mask_png = record.masks_dir / "masks.png";
  const std::vector<MaskRecord> records = read_mask_records(record.masks_dir / "masks.txt");
  if (!std::filesystem::exists(mask_png)) throw IngestError("missing file: " + mask_png.string());
  const Image<std::uint16_t> labels = read_png_u16(mask_png);
  if (labels.width() != intr.width || labels.height() != intr.height) {
    throw FormatError(mask_png.string() + ": size does not match intrinsics");
  }
  for (const MaskRecord& r : records) {
    if (r.embedding_row >= embeddings.rows.size()) {
      throw FormatError("embedding row " + std::to_string(r.embedding_row) + " is missing (table has " +
                        std::to_string(embeddings.rows.size()) + " rows)");
    }
    InstanceMask mask;
    mask.mask = MaskImage(intr.width, intr.height, 0);
    const std::uint16_t value = static_cast<std::uint16_t>(r.index + 1);
    for (std::size_t i = 0; i < labels.data().size(); ++i) {
      if (labels.data()[i] == value) mask.mask.data()[i] = 1;
    }
    mask.confidence = r.confidence;
    mask.embedding = normalized_or_throw(embeddings.rows[r.embedding_row]);
    frame.masks.push_back(std::move(mask));
  }
  return frame;
}

}  // namespace panoptic
