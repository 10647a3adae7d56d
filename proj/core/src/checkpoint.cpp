#include "docsim/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace docsim {

using nlohmann::json;

namespace {

json block_to_json(const BlockConfig& b) {
  json j;
  j["feature_dim"] = b.feature_dim;
  j["attention_layers"] = b.attention_layers;
  j["heads"] = b.heads;
  j["char_channels"] = b.char_channels;
  j["char_kernel_width"] = b.char_kernel_width;
  j["seq_kernel_width"] = b.seq_kernel_width;
  j["gcn_width"] = b.gcn_width;
  return j;
}

BlockConfig block_from_json(const json& j) {
  BlockConfig b;
  b.feature_dim = j.value("feature_dim", b.feature_dim);
  b.attention_layers = j.value("attention_layers", b.attention_layers);
  b.heads = j.value("heads", b.heads);
  b.char_channels = j.value("char_channels", b.char_channels);
  b.char_kernel_width = j.value("char_kernel_width", b.char_kernel_width);
  b.seq_kernel_width = j.value("seq_kernel_width", b.seq_kernel_width);
  b.gcn_width = j.value("gcn_width", b.gcn_width);
  return b;
}

std::string triplet_variant_name(TripletConfig::Variant v) {
  switch (v) {
    case TripletConfig::Variant::kTripletLike: return "triplet_like";
    case TripletConfig::Variant::kLossless: return "lossless";
    default: return "both";
  }
}

TripletConfig::Variant triplet_variant_from(const std::string& s) {
  if (s == "triplet_like") return TripletConfig::Variant::kTripletLike;
  if (s == "lossless") return TripletConfig::Variant::kLossless;
  if (s == "both") return TripletConfig::Variant::kBoth;
  throw ConfigError("unknown triplet loss variant: " + s);
}

}  // namespace

std::string model_config_json(const ModelConfig& c) {
  json j;
  j["arch"] = c.arch;
  j["block"] = block_to_json(c.block);
  j["triplet"] = {{"margin", c.triplet.margin},
                  {"variant", triplet_variant_name(c.triplet.variant)},
                  {"distance",
                   c.triplet.distance == TripletConfig::Distance::kEuclidean ? "euclidean"
                                                                             : "cosine"},
                  {"add_class_info", c.triplet.add_class_info},
                  {"calibration", c.triplet.calibration},
                  {"triplet_weight", c.triplet.triplet_weight},
                  {"lossless_weight", c.triplet.lossless_weight},
                  {"calibration_weight", c.triplet.calibration_weight}};
  j["pairwise"] = {{"add_class_info", c.pairwise.add_class_info},
                   {"refine", c.pairwise.refine},
                   {"hidden", c.pairwise.hidden}};
  j["qa"] = {{"query_all", c.qa.query_all},
             {"skip_connection", c.qa.skip_connection},
             {"filter", c.qa.filter},
             {"field_of_view", c.qa.field_of_view}};
  j["target"] = target_name(c.target);
  j["class_count"] = c.class_count;
  j["neighbors_per_edge"] = c.neighbors_per_edge;
  j["fov_k"] = c.fov_k;
  j["fov_max_dist"] = c.fov_max_dist;
  j["vote_threshold"] = c.vote_threshold;
  j["init_seed"] = c.init_seed;
  return j.dump(2);
}

ModelConfig model_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  ModelConfig c;
  c.arch = j.value("arch", c.arch);
  if (j.contains("block")) c.block = block_from_json(j["block"]);
  if (j.contains("triplet")) {
    const json& t = j["triplet"];
    c.triplet.margin = t.value("margin", c.triplet.margin);
    if (t.contains("variant"))
      c.triplet.variant = triplet_variant_from(t["variant"].get<std::string>());
    if (t.contains("distance"))
      c.triplet.distance = t["distance"].get<std::string>() == "cosine"
                               ? TripletConfig::Distance::kCosine
                               : TripletConfig::Distance::kEuclidean;
    c.triplet.add_class_info = t.value("add_class_info", c.triplet.add_class_info);
    c.triplet.calibration = t.value("calibration", c.triplet.calibration);
    c.triplet.triplet_weight = t.value("triplet_weight", c.triplet.triplet_weight);
    c.triplet.lossless_weight = t.value("lossless_weight", c.triplet.lossless_weight);
    c.triplet.calibration_weight = t.value("calibration_weight", c.triplet.calibration_weight);
  }
  if (j.contains("pairwise")) {
    const json& p = j["pairwise"];
    c.pairwise.add_class_info = p.value("add_class_info", c.pairwise.add_class_info);
    c.pairwise.refine = p.value("refine", c.pairwise.refine);
    c.pairwise.hidden = p.value("hidden", c.pairwise.hidden);
  }
  if (j.contains("qa")) {
    const json& q = j["qa"];
    c.qa.query_all = q.value("query_all", c.qa.query_all);
    c.qa.skip_connection = q.value("skip_connection", c.qa.skip_connection);
    c.qa.filter = q.value("filter", c.qa.filter);
    c.qa.field_of_view = q.value("field_of_view", c.qa.field_of_view);
  }
  if (j.contains("target")) {
    auto t = target_from_name(j["target"].get<std::string>());
    if (!t) throw ConfigError("unknown target: " + j["target"].get<std::string>());
    c.target = *t;
  }
  c.class_count = j.value("class_count", c.class_count);
  c.neighbors_per_edge = j.value("neighbors_per_edge", c.neighbors_per_edge);
  c.fov_k = j.value("fov_k", c.fov_k);
  c.fov_max_dist = j.value("fov_max_dist", c.fov_max_dist);
  c.vote_threshold = j.value("vote_threshold", c.vote_threshold);
  c.init_seed = j.value("init_seed", c.init_seed);
  return c;
}

std::string config_hash(const ModelConfig& config) {
  return hex64(fnv1a64(model_config_json(config)));
}

void save_checkpoint(const std::string& path, const ExtractionModel& model) {
  json j;
  j["format"] = "docsim-checkpoint-1";
  j["feature_layout"] = feature_layout_version();
  j["config"] = json::parse(model_config_json(model.config()));
  json params = json::array();
  const ad::ParamStore& store = model.params();
  for (int i = 0; i < store.size(); ++i) {
    json p;
    p["name"] = store.name(i);
    p["shape"] = store.tensor(i).shape;
    p["values"] = store.tensor(i).v;
    params.push_back(p);
  }
  j["params"] = params;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open for writing: " + path);
  f << j.dump();
  if (!f) throw ValidationError("write failed: " + path);
}

std::unique_ptr<ExtractionModel> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open checkpoint: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  if (j.value("format", std::string()) != "docsim-checkpoint-1")
    throw ValidationError("unknown checkpoint format");
  std::string layout = j.value("feature_layout", std::string());
  if (layout != feature_layout_version())
    throw ValidationError("feature layout mismatch: checkpoint has '" + layout +
                          "', this build uses '" + feature_layout_version() + "'");
  ModelConfig config = model_config_from_json_text(j.at("config").dump());
  std::unique_ptr<ExtractionModel> model = make_model(config);
  ad::ParamStore& store = model->params();
  const json& params = j.at("params");
  if (static_cast<int>(params.size()) != store.size())
    throw ValidationError("checkpoint parameter count mismatch");
  for (const json& p : params) {
    std::string name = p.at("name").get<std::string>();
    int idx = store.index_of(name);
    if (idx < 0) throw ValidationError("checkpoint has unknown parameter: " + name);
    ad::Tensor& t = store.tensor(idx);
    std::vector<int> shape = p.at("shape").get<std::vector<int>>();
    if (shape != t.shape)
      throw ValidationError("checkpoint shape mismatch for parameter: " + name);
    std::vector<double> values = p.at("values").get<std::vector<double>>();
    if (values.size() != t.v.size())
      throw ValidationError("checkpoint value count mismatch for parameter: " + name);
    t.v = std::move(values);
  }
  return model;
}

}  // namespace docsim
