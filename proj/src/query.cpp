#include "panoptic/query.hpp"

#include <algorithm>
#include <set>

#include "panoptic/errors.hpp"

namespace panoptic {
namespace {

bool is_excluded(const std::vector<int>& excluded, int c) {
  return std::find(excluded.begin(), excluded.end(), c) != excluded.end();
}

}  // namespace

std::vector<RankedInstance> retrieve(const TrackMap& tracks, const Embedding& query, const RetrievalMode& mode) {
  std::vector<RankedInstance> out;
  if (tracks.empty()) return out;
  require_unit(query);
  for (const auto& [id, track] : tracks) {
    if (track.bank.empty()) continue;
    const double score = bank_similarity(track.bank, query);
    if (mode.threshold && !(score > *mode.threshold)) continue;
    out.push_back({id, score});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedInstance& a, const RankedInstance& b) { return a.score > b.score; });
  if (mode.top_k && out.size() > *mode.top_k) out.resize(*mode.top_k);
  return out;
}

std::map<TrackId, Classification> classify_instances(const TrackMap& tracks, const LabelBank& labels) {
  if (labels.empty()) throw Error("label bank is empty");
  std::map<TrackId, Classification> out;
  for (const auto& [id, track] : tracks) {
    if (track.bank.empty()) continue;
    Classification best{0, bank_similarity(track.bank, labels[0].embedding)};
    for (std::size_t k = 1; k < labels.size(); ++k) {
      const double s = bank_similarity(track.bank, labels[k].embedding);
      if (s > best.score) best = {k, s};
    }
    out.emplace(id, best);
  }
  return out;
}

VoxelSet make_voxel_set(std::vector<VoxelKey> keys) {
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

double voxel_iou(const VoxelSet& a, const VoxelSet& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

double eval_instance_ap(const std::vector<PredictedInstance>& preds, const std::vector<GtInstance>& gt,
                        double iou_threshold) {
  if (gt.empty()) throw MetricError("average precision is undefined without ground truth");
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw MetricError("IoU threshold must lie in (0, 1)");

  std::vector<std::size_t> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });

  std::vector<bool> taken(gt.size(), false);
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const PredictedInstance& p = preds[order[rank]];
    double best_iou = -1.0;
    std::size_t best = gt.size();
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (taken[g]) continue;
      const double iou = voxel_iou(p.voxels, gt[g].voxels);
      if (iou > best_iou) {
        best_iou = iou;
        best = g;
      }
    }
    if (best < gt.size() && best_iou >= iou_threshold) {
      taken[best] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(rank + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gt.size()));
  }

  // All-point interpolation: precision envelope from the right, summed over
  // recall steps.
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < precision.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

double eval_mean_ap(const std::vector<PredictedInstance>& preds, const std::vector<GtInstance>& gt,
                    double iou_threshold, const std::vector<int>& excluded) {
  std::set<int> classes;
  for (const GtInstance& g : gt) {
    if (!is_excluded(excluded, g.class_id)) classes.insert(g.class_id);
  }
  if (classes.empty()) throw MetricError("no ground-truth classes to evaluate");
  double sum = 0.0;
  for (int c : classes) {
    std::vector<PredictedInstance> class_preds;
    std::vector<GtInstance> class_gt;
    for (const PredictedInstance& p : preds) {
      if (p.class_id == c) class_preds.push_back(p);
    }
    for (const GtInstance& g : gt) {
      if (g.class_id == c) class_gt.push_back(g);
    }
    sum += eval_instance_ap(class_preds, class_gt, iou_threshold);
  }
  return sum / static_cast<double>(classes.size());
}

SemanticMetrics eval_semantic(const std::vector<int>& pred, const std::vector<int>& gt,
                              const std::vector<int>& excluded) {
  if (pred.empty() || pred.size() != gt.size()) throw MetricError("semantic labels are empty or mismatched");
  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
  };
  std::map<int, Counts> per_class;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], g = gt[i];
    if (p == g) {
      if (g >= 0) ++per_class[g].tp;
      continue;
    }
    if (p >= 0) ++per_class[p].fp;
    if (g >= 0) ++per_class[g].fn;
  }

  SemanticMetrics m;
  std::size_t n_iou = 0, n_acc = 0, gt_total = 0;
  for (const auto& [c, k] : per_class) {
    if (!is_excluded(excluded, c)) gt_total += k.tp + k.fn;
  }
  for (const auto& [c, k] : per_class) {
    if (is_excluded(excluded, c)) continue;
    const double iou = static_cast<double>(k.tp) / static_cast<double>(k.tp + k.fp + k.fn);
    m.miou += iou;
    ++n_iou;
    const std::size_t support = k.tp + k.fn;
    if (support == 0) continue;
    const double acc = static_cast<double>(k.tp) / static_cast<double>(support);
    const double weight = static_cast<double>(support) / static_cast<double>(gt_total);
    m.macc += acc;
    ++n_acc;
    m.fmiou += weight * iou;
    m.fmacc += weight * acc;
  }
  if (n_iou == 0) throw MetricError("no classes to evaluate");
  m.miou /= static_cast<double>(n_iou);
  if (n_acc > 0) m.macc /= static_cast<double>(n_acc);
  return m;
}

}  // namespace panoptic
