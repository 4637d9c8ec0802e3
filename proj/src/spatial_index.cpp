#include "panoptic/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <utility>

#include "panoptic/errors.hpp"

namespace panoptic {
namespace detail {

struct RTreeEntry {
  Aabb box;
  TrackId id = 0;
  std::unique_ptr<RTreeNode> child;
};

struct RTreeNode {
  bool leaf = true;
  std::vector<RTreeEntry> entries;
};

}  // namespace detail

namespace {

using detail::RTreeEntry;
using detail::RTreeNode;
using Orphans = std::vector<std::pair<TrackId, Aabb>>;

Aabb bounds(const RTreeNode& node) {
  Aabb box = node.entries.front().box;
  for (std::size_t i = 1; i < node.entries.size(); ++i) box = box.merged(node.entries[i].box);
  return box;
}

double enlargement(const Aabb& box, const Aabb& add) { return box.merged(add).volume() - box.volume(); }

std::size_t choose_subtree(const RTreeNode& node, const Aabb& box) {
  std::size_t best = 0;
  double best_growth = std::numeric_limits<double>::infinity();
  double best_volume = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < node.entries.size(); ++i) {
    const double growth = enlargement(node.entries[i].box, box);
    const double volume = node.entries[i].box.volume();
    if (growth < best_growth || (growth == best_growth && volume < best_volume)) {
      best = i;
      best_growth = growth;
      best_volume = volume;
    }
  }
  return best;
}

// Quadratic split; `node` keeps one group and the returned sibling the other.
std::unique_ptr<RTreeNode> split(RTreeNode& node, std::size_t min_fill) {
  std::vector<RTreeEntry> pool = std::move(node.entries);
  node.entries.clear();

  std::size_t seed_a = 0, seed_b = 1;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      const double waste = pool[i].box.merged(pool[j].box).volume() - pool[i].box.volume() - pool[j].box.volume();
      if (waste > worst) {
        worst = waste;
        seed_a = i;
        seed_b = j;
      }
    }
  }

  auto sibling = std::make_unique<RTreeNode>();
  sibling->leaf = node.leaf;
  Aabb box_a = pool[seed_a].box, box_b = pool[seed_b].box;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (i != seed_a && i != seed_b) rest.push_back(i);
  }
  node.entries.push_back(std::move(pool[seed_a]));
  sibling->entries.push_back(std::move(pool[seed_b]));

  while (!rest.empty()) {
    if (node.entries.size() + rest.size() == min_fill) {
      for (std::size_t i : rest) node.entries.push_back(std::move(pool[i]));
      break;
    }
    if (sibling->entries.size() + rest.size() == min_fill) {
      for (std::size_t i : rest) sibling->entries.push_back(std::move(pool[i]));
      break;
    }
    std::size_t pick = 0;
    double best_diff = -1.0;
    for (std::size_t k = 0; k < rest.size(); ++k) {
      const double diff = std::abs(enlargement(box_a, pool[rest[k]].box) - enlargement(box_b, pool[rest[k]].box));
      if (diff > best_diff) {
        best_diff = diff;
        pick = k;
      }
    }
    const std::size_t idx = rest[pick];
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(pick));
    const double grow_a = enlargement(box_a, pool[idx].box);
    const double grow_b = enlargement(box_b, pool[idx].box);
    bool to_a;
    if (grow_a != grow_b) {
      to_a = grow_a < grow_b;
    } else if (box_a.volume() != box_b.volume()) {
      to_a = box_a.volume() < box_b.volume();
    } else {
      to_a = node.entries.size() <= sibling->entries.size();
    }
    if (to_a) {
      box_a = box_a.merged(pool[idx].box);
      node.entries.push_back(std::move(pool[idx]));
    } else {
      box_b = box_b.merged(pool[idx].box);
      sibling->entries.push_back(std::move(pool[idx]));
    }
  }
  return sibling;
}

std::unique_ptr<RTreeNode> insert_rec(RTreeNode& node, RTreeEntry entry, const SpatialIndex::Params& params) {
  if (node.leaf) {
    node.entries.push_back(std::move(entry));
  } else {
    const std::size_t idx = choose_subtree(node, entry.box);
    RTreeNode& child = *node.entries[idx].child;
    std::unique_ptr<RTreeNode> sibling = insert_rec(child, std::move(entry), params);
    node.entries[idx].box = bounds(child);
    if (sibling) {
      const Aabb box = bounds(*sibling);
      node.entries.push_back({box, 0, std::move(sibling)});
    }
  }
  if (node.entries.size() > params.max_fanout) return split(node, params.min_fill);
  return nullptr;
}

void collect_leaves(const RTreeNode& node, Orphans& out) {
  for (const RTreeEntry& e : node.entries) {
    if (node.leaf) {
      out.emplace_back(e.id, e.box);
    } else {
      collect_leaves(*e.child, out);
    }
  }
}

bool remove_rec(RTreeNode& node, TrackId id, const Aabb& box, std::size_t min_fill, Orphans& orphans) {
  if (node.leaf) {
    auto it = std::find_if(node.entries.begin(), node.entries.end(), [&](const RTreeEntry& e) { return e.id == id; });
    if (it == node.entries.end()) return false;
    node.entries.erase(it);
    return true;
  }
  for (std::size_t i = 0; i < node.entries.size(); ++i) {
    if (!node.entries[i].box.contains(box)) continue;
    RTreeNode& child = *node.entries[i].child;
    if (!remove_rec(child, id, box, min_fill, orphans)) continue;
    if (child.entries.size() < min_fill) {
      collect_leaves(child, orphans);
      node.entries.erase(node.entries.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      node.entries[i].box = bounds(child);
    }
    return true;
  }
  return false;
}

void query_rec(const RTreeNode& node, const Aabb& box, std::vector<TrackId>& out) {
  for (const RTreeEntry& e : node.entries) {
    if (!e.box.intersects(box)) continue;
    if (node.leaf) {
      out.push_back(e.id);
    } else {
      query_rec(*e.child, box, out);
    }
  }
}

// Returns the leaf depth below `node`, or -1 on any violation.
int audit(const RTreeNode& node, bool is_root, const SpatialIndex::Params& params, Orphans& leaves) {
  if (node.entries.size() > params.max_fanout) return -1;
  if (!is_root && node.entries.size() < params.min_fill) return -1;
  if (node.leaf) {
    for (const RTreeEntry& e : node.entries) {
      if (e.child) return -1;
      leaves.emplace_back(e.id, e.box);
    }
    return 0;
  }
  if (node.entries.empty()) return -1;
  int depth = -2;
  for (const RTreeEntry& e : node.entries) {
    if (!e.child || e.child->entries.empty()) return -1;
    if (!e.box.contains(bounds(*e.child))) return -1;
    const int d = audit(*e.child, false, params, leaves);
    if (d < 0 || (depth != -2 && d != depth)) return -1;
    depth = d;
  }
  return depth + 1;
}

}  // namespace

SpatialIndex::SpatialIndex() : SpatialIndex(Params{}) {}

SpatialIndex::SpatialIndex(Params params) : params_(params), root_(std::make_unique<RTreeNode>()) {
  if (params_.max_fanout < 2 || params_.min_fill < 1 || 2 * params_.min_fill > params_.max_fanout + 1) {
    throw Error("invalid R-tree fanout parameters");
  }
}

SpatialIndex::~SpatialIndex() = default;
SpatialIndex::SpatialIndex(SpatialIndex&&) noexcept = default;
SpatialIndex& SpatialIndex::operator=(SpatialIndex&&) noexcept = default;

void SpatialIndex::insert(TrackId id, const Aabb& box) {
  if (!boxes_.emplace(id, box).second) throw Error("track id " + std::to_string(id) + " already indexed");
  insert_leaf_entry(id, box);
}

void SpatialIndex::insert_leaf_entry(TrackId id, const Aabb& box) {
  std::unique_ptr<RTreeNode> sibling = insert_rec(*root_, {box, id, nullptr}, params_);
  if (!sibling) return;
  auto root = std::make_unique<RTreeNode>();
  root->leaf = false;
  const Aabb old_box = bounds(*root_);
  const Aabb new_box = bounds(*sibling);
  root->entries.push_back({old_box, 0, std::move(root_)});
  root->entries.push_back({new_box, 0, std::move(sibling)});
  root_ = std::move(root);
}

bool SpatialIndex::remove(TrackId id) {
  auto it = boxes_.find(id);
  if (it == boxes_.end()) return false;
  const Aabb box = it->second;
  boxes_.erase(it);

  Orphans orphans;
  remove_rec(*root_, id, box, params_.min_fill, orphans);
  while (!root_->leaf && root_->entries.size() == 1) {
    std::unique_ptr<RTreeNode> child = std::move(root_->entries.front().child);
    root_ = std::move(child);
  }
  if (!root_->leaf && root_->entries.empty()) root_ = std::make_unique<RTreeNode>();
  for (const auto& [oid, obox] : orphans) insert_leaf_entry(oid, obox);
  return true;
}

void SpatialIndex::update(TrackId id, const Aabb& box) {
  remove(id);
  insert(id, box);
}

std::vector<TrackId> SpatialIndex::query(const Aabb& box, double margin) const {
  if (boxes_.size() >= params_.linear_scan_below) return query_tree(box, margin);
  const Aabb probe = box.inflated(margin);
  std::vector<TrackId> out;
  for (const auto& [id, b] : boxes_) {
    if (b.intersects(probe)) out.push_back(id);
  }
  return out;
}

std::vector<TrackId> SpatialIndex::query_tree(const Aabb& box, double margin) const {
  std::vector<TrackId> out;
  query_rec(*root_, box.inflated(margin), out);
  std::sort(out.begin(), out.end());
  return out;
}

bool SpatialIndex::check_invariants() const {
  Orphans leaves;
  if (audit(*root_, true, params_, leaves) < 0) return false;
  if (leaves.size() != boxes_.size()) return false;
  std::set<TrackId> seen;
  for (const auto& [id, box] : leaves) {
    if (!seen.insert(id).second) return false;
    auto it = boxes_.find(id);
    if (it == boxes_.end() || it->second.min != box.min || it->second.max != box.max) return false;
  }
  return true;
}

std::size_t SpatialIndex::height() const {
  std::size_t h = 1;
  for (const RTreeNode* node = root_.get(); !node->leaf; node = node->entries.front().child.get()) ++h;
  return h;
}

}  // namespace panoptic
