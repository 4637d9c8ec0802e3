#include "panoptic/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "panoptic/errors.hpp"

namespace panoptic {

LabelBank read_label_bank(const std::filesystem::path& dir) {
  const EmbeddingTable table = read_embeddings(dir / "labels.emb");
  std::ifstream in(dir / "labels.txt");
  if (!in) throw IngestError("cannot open " + (dir / "labels.txt").string());
  LabelBank bank;
  std::string name;
  while (std::getline(in, name)) {
    if (name.empty()) continue;
    if (bank.size() >= table.rows.size()) throw FormatError("labels.txt lists more names than labels.emb has rows");
    bank.push_back({name, normalized_or_throw(table.rows[bank.size()])});
  }
  if (bank.size() != table.rows.size()) throw FormatError("labels.txt and labels.emb disagree in length");
  return bank;
}

std::vector<GtInstance> gt_instances_on_map(const VoxelGrid& grid, const std::vector<SynthObject>& objects) {
  const double voxel = grid.config().voxel_size;
  std::map<std::uint32_t, std::vector<VoxelKey>> members;
  grid.for_each([&](const VoxelKey& key, const Voxel& v) {
    if (v.w <= 0.0f || !is_surface(v, voxel)) return;
    const Vec3 p = grid.center(key);
    double best = 2.0 * voxel;
    const SynthObject* owner = nullptr;
    for (const SynthObject& obj : objects) {
      const double d = std::abs(obj.sdf(p));
      if (d <= best) {
        if (d == best && owner) continue;
        best = d;
        owner = &obj;
      }
    }
    if (owner) members[owner->id].push_back(key);
  });
  std::vector<GtInstance> out;
  for (const SynthObject& obj : objects) {
    auto it = members.find(obj.id);
    if (it == members.end()) continue;
    out.push_back({obj.id, obj.class_id, make_voxel_set(std::move(it->second))});
  }
  return out;
}

std::vector<PredictedInstance> predicted_instances(const VoxelGrid& grid, const TrackMap& tracks,
                                                   const LabelBank& labels) {
  const double voxel = grid.config().voxel_size;
  std::map<TrackId, std::vector<VoxelKey>> members;
  grid.for_each([&](const VoxelKey& key, const Voxel& v) {
    if (v.label == kNoInstance || v.w <= 0.0f || !is_surface(v, voxel)) return;
    if (tracks.count(v.label)) members[v.label].push_back(key);
  });
  const auto classes = labels.empty() ? std::map<TrackId, Classification>{} : classify_instances(tracks, labels);
  std::vector<PredictedInstance> out;
  for (auto& [id, keys] : members) {
    PredictedInstance p;
    p.voxels = make_voxel_set(std::move(keys));
    p.score = bank_confidence(tracks.at(id).bank);
    auto c = classes.find(id);
    p.class_id = c == classes.end() ? -1 : static_cast<int>(c->second.label);
    out.push_back(std::move(p));
  }
  return out;
}

EvalResult evaluate(const VoxelGrid& grid, const TrackMap& tracks, const LabelBank& labels,
                    const std::vector<SynthObject>& objects, const EvalOptions& options) {
  const std::vector<GtInstance> gt = gt_instances_on_map(grid, objects);
  if (gt.empty()) throw MetricError("no ground-truth instance is present in the map");
  const std::vector<PredictedInstance> preds = predicted_instances(grid, tracks, labels);

  EvalResult result;
  result.gt_instances = gt.size();
  result.predicted_instances = preds.size();
  for (double t : options.iou_thresholds) {
    result.map.emplace_back(t, eval_mean_ap(preds, gt, t, options.excluded_classes));
  }

  // Semantic labels per ground-truth voxel: the class of the instance that
  // labeled it, or -1.
  const double voxel = grid.config().voxel_size;
  const auto classes = labels.empty() ? std::map<TrackId, Classification>{} : classify_instances(tracks, labels);
  std::vector<int> pred_labels, gt_labels;
  for (const GtInstance& g : gt) {
    for (const VoxelKey& key : g.voxels) {
      const Voxel* v = grid.find(key);
      int c = -1;
      if (v && v->label != kNoInstance && is_surface(*v, voxel)) {
        auto it = classes.find(v->label);
        if (it != classes.end()) c = static_cast<int>(it->second.label);
      }
      pred_labels.push_back(c);
      gt_labels.push_back(g.class_id);
    }
  }
  result.semantic = eval_semantic(pred_labels, gt_labels, options.excluded_classes);

  std::size_t counted = 0, correct = 0;
  for (const GtInstance& g : gt) {
    if (std::find(options.excluded_classes.begin(), options.excluded_classes.end(), g.class_id) !=
        options.excluded_classes.end()) {
      continue;
    }
    ++counted;
    double best = 0.0;
    const PredictedInstance* match = nullptr;
    for (const PredictedInstance& p : preds) {
      const double iou = voxel_iou(p.voxels, g.voxels);
      if (iou > best) {
        best = iou;
        match = &p;
      }
    }
    if (match && match->class_id == g.class_id) ++correct;
  }
  result.top1 = counted ? static_cast<double>(correct) / static_cast<double>(counted) : 0.0;
  return result;
}

}  // namespace panoptic
