#include "panoptic/track_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "panoptic/errors.hpp"

namespace panoptic {

void save_tracks(const std::filesystem::path& dir, const TrackMap& tracks, std::size_t emb_dim) {
  const std::filesystem::path path = dir / "tracks.txt";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  std::vector<Embedding> rows;
  char buf[32];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof(buf), " %.9g", x);
    out << buf;
  };
  for (const auto& [id, t] : tracks) {
    out << id;
    for (int i = 0; i < 3; ++i) num(t.obb.center[i]);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) num(t.obb.rotation(r, c));
    }
    for (int i = 0; i < 3; ++i) num(t.obb.extents[i]);
    out << ' ' << t.bank.size();
    for (const BankEntry& e : t.bank.entries) {
      num(e.confidence);
      out << ' ' << rows.size();
      rows.push_back(e.embedding);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
  if (!rows.empty()) emb_dim = static_cast<std::size_t>(rows.front().size());
  write_embeddings(dir / "tracks.emb", emb_dim, rows);
}

TrackMap load_tracks(const std::filesystem::path& dir) {
  const std::filesystem::path path = dir / "tracks.txt";
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  const EmbeddingTable table = read_embeddings(dir / "tracks.emb");
  TrackMap tracks;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    Track t;
    std::size_t n = 0;
    ss >> t.id;
    for (int i = 0; i < 3; ++i) ss >> t.obb.center[i];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) ss >> t.obb.rotation(r, c);
    }
    for (int i = 0; i < 3; ++i) ss >> t.obb.extents[i];
    ss >> n;
    for (std::size_t k = 0; k < n && ss; ++k) {
      BankEntry e;
      std::uint64_t row = 0;
      ss >> e.confidence >> row;
      if (row >= table.rows.size()) throw FormatError(path.string() + ": embedding row " + std::to_string(row) + " missing");
      e.embedding = table.rows[row].normalized();
      t.bank.entries.push_back(std::move(e));
    }
    if (!ss) throw FormatError(path.string() + ": malformed line '" + line + "'");
    if (!tracks.emplace(t.id, t).second) throw FormatError(path.string() + ": duplicate track " + std::to_string(t.id));
  }
  return tracks;
}

}  // namespace panoptic
