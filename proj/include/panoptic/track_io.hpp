#pragma once

#include <filesystem>

#include "panoptic/tracker.hpp"

namespace panoptic {

// tracks.txt, one track per line:
//   id cx cy cz r00 r01 r02 r10 r11 r12 r20 r21 r22 ex ey ez n (confidence row)*n
// where `row` indexes tracks.emb (EMB1). Running statistics and lifecycle
// counters are not part of the snapshot.
void save_tracks(const std::filesystem::path& dir, const TrackMap& tracks, std::size_t emb_dim);
TrackMap load_tracks(const std::filesystem::path& dir);

}  // namespace panoptic
