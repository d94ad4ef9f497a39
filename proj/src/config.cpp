#include "ptt/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ptt/error.hpp"

namespace ptt {

namespace {

using nlohmann::ordered_json;

// Each config struct lists its fields once; the same list drives writing
// and reading.

struct Writer {
  ordered_json& out;
  template <typename T>
  void field(const char* name, const T& value) {
    out[name] = value;
  }
  template <typename F>
  void section(const char* name, F&& fields) {
    ordered_json sub = ordered_json::object();
    Writer w{sub};
    fields(w);
    out[name] = std::move(sub);
  }
};

struct Reader {
  const ordered_json& in;
  std::string path;
  std::set<std::string> seen{};

  template <typename T>
  void field(const char* name, T& value) {
    seen.insert(name);
    const auto it = in.find(name);
    if (it == in.end()) return;
    try {
      value = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::Config, "config: " + path + name + " has the wrong type");
    }
  }
  template <typename F>
  void section(const char* name, F&& fields) {
    seen.insert(name);
    const auto it = in.find(name);
    if (it == in.end()) return;
    if (!it->is_object()) fail(ErrorKind::Config, "config: " + path + name + " must be an object");
    Reader r{*it, path + name + "."};
    fields(r);
    r.finish();
  }
  void finish() const {
    for (const auto& [key, value] : in.items())
      if (!seen.contains(key)) fail(ErrorKind::Config, "config: unknown key " + path + key);
  }
};

template <typename V, typename C>
void visit(V& v, C& cfg) {
  v.field("model_dim", cfg.model_dim);
  v.field("heads", cfg.heads);
  v.field("encoder_layers", cfg.encoder_layers);
  v.field("share_tree_params", cfg.share_tree_params);
  v.field("pe_base", cfg.pe_base);
  v.field("seed", cfg.seed);
  v.section("tree", [&](auto& s) {
    s.field("layers", cfg.tree.layers);
    s.field("leaf_voxel_size", cfg.tree.leaf_voxel_size);
    s.field("group_factor", cfg.tree.group_factor);
    s.field("top_s", cfg.tree.top_s);
    s.field("leaf_cap", cfg.tree.leaf_cap);
  });
  v.section("loss", [&](auto& s) {
    s.field("lambda_c", cfg.loss.lambda_c);
    s.field("lambda_f", cfg.loss.lambda_f);
    s.field("overlap_radius", cfg.loss.overlap_radius);
    s.field("positive_radius", cfg.loss.positive_radius);
    s.field("negative_radius", cfg.loss.negative_radius);
  });
  v.section("thresholds", [&](auto& s) {
    s.field("rre_deg", cfg.thresholds.rre_deg);
    s.field("rte", cfg.thresholds.rte);
    s.field("rmse", cfg.thresholds.rmse);
  });
  v.section("bench", [&](auto& s) {
    s.field("sizes", cfg.bench.sizes);
    s.field("points_per_leaf", cfg.bench.points_per_leaf);
    s.field("dense_exec_limit", cfg.bench.dense_exec_limit);
    s.field("timing", cfg.bench.timing);
    s.field("parallel", cfg.bench.parallel);
  });
  v.section("synthetic", [&](auto& s) {
    s.field("points", cfg.synthetic.points);
    s.field("max_angle_deg", cfg.synthetic.max_angle_deg);
    s.field("max_translation", cfg.synthetic.max_translation);
    s.field("jitter_sigma", cfg.synthetic.jitter_sigma);
    s.field("jitter_clip", cfg.synthetic.jitter_clip);
  });
}

}  // namespace

void SyntheticConfig::validate() const {
  if (points == 0) fail(ErrorKind::Config, "synthetic: points must be positive");
  if (!(max_angle_deg >= 0.0 && max_angle_deg <= 180.0))
    fail(ErrorKind::Config, "synthetic: max_angle_deg must lie in [0, 180]");
  if (!(max_translation >= 0.0)) fail(ErrorKind::Config, "synthetic: max_translation must be >= 0");
  if (!(jitter_sigma >= 0.0) || !(jitter_clip >= 0.0))
    fail(ErrorKind::Config, "synthetic: jitter parameters must be >= 0");
}

EncoderConfig RunConfig::encoder() const {
  EncoderConfig e;
  e.model_dim = model_dim;
  e.heads = heads;
  e.layers = encoder_layers;
  e.top_s = tree.top_s;
  e.tree_layers = tree.layers;
  e.share_tree_params = share_tree_params;
  e.pe_base = pe_base;
  return e;
}

void RunConfig::validate() const {
  encoder().validate();
  tree.validate();
  loss.validate();
  if (!(thresholds.rre_deg > 0.0) || !(thresholds.rte > 0.0) || !(thresholds.rmse > 0.0))
    fail(ErrorKind::Config, "thresholds must be positive");
  bench.validate();
  synthetic.validate();
}

std::string config_to_json(const RunConfig& cfg) {
  ordered_json out = ordered_json::object();
  Writer w{out};
  visit(w, cfg);
  return out.dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text, const std::string& source) {
  ordered_json in;
  try {
    in = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Config, source + ": invalid JSON: " + e.what());
  }
  if (!in.is_object()) fail(ErrorKind::Config, source + ": top level must be an object");
  RunConfig cfg;
  Reader r{in, ""};
  visit(r, cfg);
  r.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Config, "cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return config_from_json(text.str(), path.string());
}

}  // namespace ptt
