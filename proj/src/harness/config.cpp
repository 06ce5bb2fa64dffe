#include "mmfs/harness/config.hpp"

#include <fstream>
#include <set>

#include "mmfs/core/error.hpp"

namespace mmfs {

using nlohmann::json;

namespace {

// Reads fields of one JSON object, remembering which keys were consumed so
// leftovers (typos) can be reported.
class FieldReader {
 public:
  FieldReader(const json& object, std::string context) : object_(object), context_(std::move(context)) {
    if (!object_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
  }

  template <typename T>
  void read(const char* key, T& target) {
    if (!object_.contains(key)) return;
    seen_.insert(key);
    try {
      target = object_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(context_ + ": field '" + key + "' has the wrong type");
    }
  }

  bool has(const char* key) const { return object_.contains(key); }

  const json& take(const char* key) {
    seen_.insert(key);
    return object_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : object_.items()) {
      if (!seen_.contains(key)) throw ConfigError(context_ + ": unknown field '" + key + "'");
    }
  }

 private:
  const json& object_;
  std::string context_;
  std::set<std::string> seen_;
};

void fill_model_fields(FieldReader& r, ModelConfig& m) {
  std::string token;
  if (r.has("modality")) {
    r.read("modality", token);
    m.modality = parse_modality(token);
  }
  if (r.has("fusion")) {
    r.read("fusion", token);
    m.fusion = parse_fusion_method(token);
  }
  if (r.has("model")) {
    r.read("model", token);
    m.model = parse_meta_learner(token);
  }
  r.read("backbone", m.backbone);
  r.read("embed_dim", m.embed_dim);
  r.read("conv_hidden", m.conv_hidden);
  r.read("image_channels", m.image_channels);
  r.read("image_height", m.image_height);
  r.read("image_width", m.image_width);
  r.read("sentences_per_item", m.sentences_per_item);
  r.read("vocab_size", m.vocab_size);
  r.read("text_projection_dim", m.text_projection_dim);
  r.read("temperature", m.temperature);
  r.read("cls_weight", m.cls_weight);
  r.read("matching_weight", m.matching_weight);
  if (r.has("maml")) {
    FieldReader maml(r.take("maml"), "maml");
    maml.read("inner_lr", m.maml.inner_lr);
    maml.read("inner_steps", m.maml.inner_steps);
    maml.read("second_order", m.maml.second_order);
    maml.finish();
  }
}

void write_model_fields(json& j, const ModelConfig& m) {
  j["modality"] = std::string(to_string(m.modality));
  j["fusion"] = std::string(to_string(m.fusion));
  j["model"] = std::string(to_string(m.model));
  j["backbone"] = m.backbone;
  j["embed_dim"] = m.embed_dim;
  j["conv_hidden"] = m.conv_hidden;
  j["image_channels"] = m.image_channels;
  j["image_height"] = m.image_height;
  j["image_width"] = m.image_width;
  j["sentences_per_item"] = m.sentences_per_item;
  j["vocab_size"] = m.vocab_size;
  j["text_projection_dim"] = m.text_projection_dim;
  j["temperature"] = m.temperature;
  j["cls_weight"] = m.cls_weight;
  j["matching_weight"] = m.matching_weight;
  j["maml"] = {{"inner_lr", m.maml.inner_lr},
               {"inner_steps", m.maml.inner_steps},
               {"second_order", m.maml.second_order}};
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace

Modality parse_modality(std::string_view token) {
  if (token == "image_only") return Modality::ImageOnly;
  if (token == "text_only") return Modality::TextOnly;
  if (token == "multimodal") return Modality::MultiModal;
  throw ConfigError("unknown modality '" + std::string(token) + "' (expected image_only, text_only or multimodal)");
}

std::string_view to_string(Modality modality) {
  switch (modality) {
    case Modality::ImageOnly: return "image_only";
    case Modality::TextOnly: return "text_only";
    case Modality::MultiModal: return "multimodal";
  }
  return "multimodal";
}

Precision parse_precision(std::string_view token) {
  if (token == "float32") return Precision::Float32;
  if (token == "float64") return Precision::Float64;
  throw ConfigError("unknown precision '" + std::string(token) + "' (expected float32 or float64)");
}

std::string_view to_string(Precision precision) {
  return precision == Precision::Float32 ? "float32" : "float64";
}

void ModelConfig::validate() const {
  if (backbone != "conv4") throw ConfigError("unsupported backbone '" + backbone + "' (only conv4 is available)");
  if (embed_dim == 0 || conv_hidden == 0 || vocab_size == 0 || text_projection_dim == 0 || sentences_per_item == 0) {
    throw ConfigError("model sizes must be positive");
  }
  if (uses_images() && (image_height == 0 || image_width == 0 || image_height % 16 != 0 || image_width % 16 != 0)) {
    throw ConfigError("image resolution " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                      " must be divisible by 16");
  }
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(cls_weight >= 0.0) || !(matching_weight >= 0.0)) throw ConfigError("loss weights must be >= 0");
  maml.validate();
}

void RunConfig::validate() const {
  if (synthetic.has_value() == manifest.has_value()) {
    throw ConfigError("data: give exactly one of 'synthetic' or 'manifest'");
  }
  if (synthetic) synthetic->validate();
  model_config.validate();
  if (ways < 2 || shots == 0 || queries == 0) throw ConfigError("episodes need ways >= 2, shots >= 1, queries >= 1");
  if (episodes_per_epoch == 0) throw ConfigError("episodes_per_epoch must be positive");
  if (val_episodes == 0) throw ConfigError("val_episodes must be positive");
  if (!(optimizer.learning_rate >= 0.0) || !(optimizer.weight_decay >= 0.0)) {
    throw ConfigError("optimizer: learning_rate and weight_decay must be >= 0");
  }
}

json to_json(const SyntheticSpec& s) {
  return json{{"train_classes", s.train_classes},
              {"val_classes", s.val_classes},
              {"test_classes", s.test_classes},
              {"items_per_class", s.items_per_class},
              {"latent_dim", s.latent_dim},
              {"image_noise", s.image_noise},
              {"text_signal", s.text_signal},
              {"channels", s.channels},
              {"height", s.height},
              {"width", s.width},
              {"sentences_per_item", s.sentences_per_item},
              {"words_per_sentence", s.words_per_sentence},
              {"class_vocab", s.class_vocab},
              {"shared_vocab", s.shared_vocab},
              {"seed", s.seed}};
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
  SyntheticSpec s;
  FieldReader r(j, "synthetic");
  r.read("train_classes", s.train_classes);
  r.read("val_classes", s.val_classes);
  r.read("test_classes", s.test_classes);
  r.read("items_per_class", s.items_per_class);
  r.read("latent_dim", s.latent_dim);
  r.read("image_noise", s.image_noise);
  r.read("text_signal", s.text_signal);
  r.read("channels", s.channels);
  r.read("height", s.height);
  r.read("width", s.width);
  r.read("sentences_per_item", s.sentences_per_item);
  r.read("words_per_sentence", s.words_per_sentence);
  r.read("class_vocab", s.class_vocab);
  r.read("shared_vocab", s.shared_vocab);
  r.read("seed", s.seed);
  r.finish();
  s.validate();
  return s;
}

json to_json(const ModelConfig& config) {
  json j = json::object();
  write_model_fields(j, config);
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  FieldReader r(j, "model");
  fill_model_fields(r, m);
  r.finish();
  m.validate();
  return m;
}

json to_json(const RunConfig& c) {
  json j = json::object();
  if (c.synthetic) j["data"] = {{"synthetic", to_json(*c.synthetic)}};
  if (c.manifest) j["data"] = {{"manifest", c.manifest->string()}};
  write_model_fields(j, c.model_config);
  j["ways"] = c.ways;
  j["shots"] = c.shots;
  j["queries"] = c.queries;
  j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"decoupled_weight_decay", c.optimizer.decoupled_weight_decay},
                    {"lr_decay_every", c.optimizer.lr_decay_every},
                    {"lr_decay_factor", c.optimizer.lr_decay_factor}};
  j["epochs"] = c.epochs;
  j["episodes_per_epoch"] = c.episodes_per_epoch;
  j["val_period"] = c.val_period;
  j["val_episodes"] = c.val_episodes;
  j["test_episodes"] = c.test_episodes;
  j["fixed_episode_pool"] = c.fixed_episode_pool;
  j["seed"] = c.seed;
  j["precision"] = std::string(to_string(c.precision));
  j["output_dir"] = c.output_dir.string();
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  FieldReader r(j, "config");
  if (r.has("data")) {
    FieldReader data(r.take("data"), "data");
    if (data.has("synthetic")) c.synthetic = synthetic_spec_from_json(data.take("synthetic"));
    if (data.has("manifest")) {
      std::string path;
      data.read("manifest", path);
      c.manifest = path;
    }
    data.finish();
  }
  fill_model_fields(r, c.model_config);
  r.read("ways", c.ways);
  r.read("shots", c.shots);
  r.read("queries", c.queries);
  if (r.has("optimizer")) {
    FieldReader opt(r.take("optimizer"), "optimizer");
    opt.read("learning_rate", c.optimizer.learning_rate);
    opt.read("weight_decay", c.optimizer.weight_decay);
    opt.read("decoupled_weight_decay", c.optimizer.decoupled_weight_decay);
    opt.read("lr_decay_every", c.optimizer.lr_decay_every);
    opt.read("lr_decay_factor", c.optimizer.lr_decay_factor);
    opt.finish();
  }
  r.read("epochs", c.epochs);
  r.read("episodes_per_epoch", c.episodes_per_epoch);
  r.read("val_period", c.val_period);
  r.read("val_episodes", c.val_episodes);
  r.read("test_episodes", c.test_episodes);
  r.read("fixed_episode_pool", c.fixed_episode_pool);
  r.read("seed", c.seed);
  if (r.has("precision")) {
    std::string token;
    r.read("precision", token);
    c.precision = parse_precision(token);
  }
  std::string out;
  r.read("output_dir", out);
  c.output_dir = out;
  r.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) { return run_config_from_json(read_json_file(path)); }

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  return synthetic_spec_from_json(read_json_file(path));
}

}  // namespace mmfs
