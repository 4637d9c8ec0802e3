#include "panoptic/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "panoptic/errors.hpp"

namespace panoptic {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) throw ConfigError(key + ": '" + value + "' is not a number");
  return x;
}

int parse_int(const std::string& key, const std::string& value) {
  const double x = parse_double(key, value);
  if (x != static_cast<double>(static_cast<int>(x))) throw ConfigError(key + ": '" + value + "' is not an integer");
  return static_cast<int>(x);
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  auto real = [](double PipelineConfig::*outer) {
    return [outer](PipelineConfig& c, const std::string& k, const std::string& v) { c.*outer = parse_double(k, v); };
  };
  static const std::map<std::string, Setter> table = {
      {"tsdf.voxel_size", [](auto& c, auto& k, auto& v) { c.tsdf.voxel_size = parse_double(k, v); }},
      {"tsdf.truncation", [](auto& c, auto& k, auto& v) { c.tsdf.truncation = parse_double(k, v); }},
      {"tsdf.max_weight", [](auto& c, auto& k, auto& v) { c.tsdf.max_weight = parse_double(k, v); }},
      {"tsdf.depth_min", [](auto& c, auto& k, auto& v) { c.tsdf.depth_min = parse_double(k, v); }},
      {"tsdf.depth_max", [](auto& c, auto& k, auto& v) { c.tsdf.depth_max = parse_double(k, v); }},
      {"tsdf.label_margin", real(&PipelineConfig::label_margin)},
      {"detect.mask_conf_min", [](auto& c, auto& k, auto& v) { c.detect.mask_conf_min = parse_double(k, v); }},
      {"detect.dbscan_eps", [](auto& c, auto& k, auto& v) { c.detect.dbscan_eps = parse_double(k, v); }},
      {"detect.dbscan_min_pts", [](auto& c, auto& k, auto& v) { c.detect.dbscan_min_pts = parse_int(k, v); }},
      {"detect.min_cluster_points",
       [](auto& c, auto& k, auto& v) { c.detect.min_cluster_points = parse_int(k, v); }},
      {"detect.pixel_stride", [](auto& c, auto& k, auto& v) { c.detect.pixel_stride = parse_int(k, v); }},
      {"track.w_v", [](auto& c, auto& k, auto& v) { c.track.w_v = parse_double(k, v); }},
      {"track.w_s", [](auto& c, auto& k, auto& v) { c.track.w_s = parse_double(k, v); }},
      {"track.match_cost_max", [](auto& c, auto& k, auto& v) { c.track.match_cost_max = parse_double(k, v); }},
      {"track.miss_limit", [](auto& c, auto& k, auto& v) { c.track.miss_limit = parse_int(k, v); }},
      {"track.query_margin", [](auto& c, auto& k, auto& v) { c.track.query_margin = parse_double(k, v); }},
      {"track.supp_min", [](auto& c, auto& k, auto& v) { c.track.supp_min = parse_double(k, v); }},
      {"track.conf_exempt", [](auto& c, auto& k, auto& v) { c.track.conf_exempt = parse_double(k, v); }},
      {"track.iou_resolution", [](auto& c, auto& k, auto& v) { c.track.iou_resolution = parse_int(k, v); }},
      {"semantics.sim_threshold",
       [](auto& c, auto& k, auto& v) { c.semantics.sim_threshold = parse_double(k, v); }},
      {"semantics.emb_dim",
       [](auto& c, auto& k, auto& v) {
         const int n = parse_int(k, v);
         if (n <= 0) throw ConfigError(k + " must be > 0");
         c.semantics.emb_dim = static_cast<std::size_t>(n);
       }},
      {"io.depth_scale", [](auto& c, auto& k, auto& v) { c.depth_scale = parse_double(k, v); }},
  };
  return table;
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

}  // namespace

void PipelineConfig::validate() const {
  tsdf.validate();
  detect.validate();
  track.validate();
  semantics.validate();
  if (!(label_margin >= 0.0)) throw ConfigError("tsdf.label_margin must be >= 0");
  if (depth_scale && !(*depth_scale > 0.0)) throw ConfigError("io.depth_scale must be > 0");
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    it->second(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const PipelineConfig& c) {
  std::ostringstream out;
  out << "tsdf.voxel_size = " << num(c.tsdf.voxel_size) << '\n'
      << "tsdf.truncation = " << num(c.tsdf.truncation) << '\n'
      << "tsdf.max_weight = " << num(c.tsdf.max_weight) << '\n'
      << "tsdf.depth_min = " << num(c.tsdf.depth_min) << '\n'
      << "tsdf.depth_max = " << num(c.tsdf.depth_max) << '\n'
      << "tsdf.label_margin = " << num(c.label_margin) << '\n'
      << "detect.mask_conf_min = " << num(c.detect.mask_conf_min) << '\n'
      << "detect.dbscan_eps = " << num(c.detect.dbscan_eps) << '\n'
      << "detect.dbscan_min_pts = " << c.detect.dbscan_min_pts << '\n'
      << "detect.min_cluster_points = " << c.detect.min_cluster_points << '\n'
      << "detect.pixel_stride = " << c.detect.pixel_stride << '\n'
      << "track.w_v = " << num(c.track.w_v) << '\n'
      << "track.w_s = " << num(c.track.w_s) << '\n'
      << "track.match_cost_max = " << num(c.track.gate()) << '\n'
      << "track.miss_limit = " << c.track.miss_limit << '\n'
      << "track.query_margin = " << num(c.track.query_margin) << '\n'
      << "track.supp_min = " << num(c.track.supp_min) << '\n'
      << "track.conf_exempt = " << num(c.track.conf_exempt) << '\n'
      << "track.iou_resolution = " << c.track.iou_resolution << '\n'
      << "semantics.sim_threshold = " << num(c.semantics.sim_threshold) << '\n'
      << "semantics.emb_dim = " << c.semantics.emb_dim << '\n';
  if (c.depth_scale) out << "io.depth_scale = " << num(*c.depth_scale) << '\n';
  return out.str();
}

}  // namespace panoptic
