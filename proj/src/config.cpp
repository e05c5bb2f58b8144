#include "neat/config.hpp"
#include "neat/rng.hpp"

#include <fstream>
#include <set>

namespace neat {

namespace {

using nlohmann::json;

constexpr std::uint64_t kNoiseStream = 0x4E4F;
constexpr std::uint64_t kTrainStream = 0x5452;
constexpr std::uint64_t kTestStream = 0x5445;

/// Reads fields out of a flat JSON object and remembers which keys were consumed.
class Reader {
 public:
  explicit Reader(const json& doc) : doc_(doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end() || it->is_null()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_unsigned() == false && it->template get<long long>() < 0) throw ConfigError("");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->template get<T>();
    } catch (const std::exception&) {
      throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
  }

  template <typename T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end() || it->is_null()) return;
    T value{};
    get(key, value);
    out = value;
  }

  template <typename E, typename Parse>
  void get_enum(const char* key, E& out, Parse parse) {
    std::string name;
    get(key, name);
    if (!name.empty()) out = parse(name);
  }

  void reject_unknown() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
    }
  }

 private:
  const json& doc_;
  std::set<std::string> seen_;
};

}  // namespace

void RunConfig::resolve_seeds() {
  gen.seed = seed;
  noise.seed = noise_seed ? *noise_seed : derive_seed(seed, kNoiseStream);
  train.seed = train_seed ? *train_seed : derive_seed(seed, kTrainStream);
}

GenSpec RunConfig::test_spec() const {
  GenSpec spec = gen;
  spec.instances_per_category = test_instances_per_category;
  spec.seed = derive_seed(seed, kTestStream);
  return spec;
}

RunConfig config_from_json(const json& doc) {
  RunConfig c;
  Reader r(doc);

  r.get("num_categories", c.gen.num_categories);
  r.get("instances_per_category", c.gen.instances_per_category);
  r.get("frames", c.gen.frames);
  r.get("dim", c.gen.dim);
  r.get("planted_channels_per_category", c.gen.planted_channels_per_category);
  r.get("scene_strength", c.gen.scene_strength);
  r.get("motion_strength", c.gen.motion_strength);
  r.get("distractor_strength", c.gen.distractor_strength);
  r.get("noise_sigma", c.gen.noise_sigma);
  r.get("seed", c.seed);
  r.get_optional("noise_seed", c.noise_seed);
  r.get_optional("train_seed", c.train_seed);
  r.get("test_instances_per_category", c.test_instances_per_category);

  r.get_enum("kind", c.noise.kind, parse_noise_kind);
  r.get("ratio", c.noise.ratio);
  r.get_optional("pair_map", c.noise.pair_map);

  auto& t = c.train;
  r.get("epochs", t.epochs);
  r.get("batch_size", t.batch_size);
  r.get("learning_rate", t.learning_rate);
  r.get("momentum", t.momentum);
  r.get("weight_decay", t.weight_decay);
  r.get("lr_decay_epochs", t.lr_decay_epochs);
  r.get("lr_decay", t.lr_decay);
  r.get("warmup_epochs", t.warmup_epochs);
  r.get("max_grad_norm", t.max_grad_norm);
  r.get("b", t.b);
  r.get("xi", t.xi);
  r.get_enum("score_mode", t.score_mode, trunc::parse_score_mode);
  r.get_enum("ct_mode", t.ct_mode, trunc::parse_ct_mode);
  r.get_enum("slice", t.slice, trunc::parse_slice);
  r.get("kmeans_init", t.kmeans_init);
  r.get("anchors_per_category", t.anchors_per_category);
  r.get("temperature", t.temperature);
  r.get("neighbors", t.neighbors);
  r.get_enum("strategy", t.strategy, ncl::parse_strategy);
  r.get("open_set_mode", t.open_set_mode);
  r.get("lambda_r", t.lambda_r);
  r.get("contrastive_warmup", t.contrastive_warmup);
  r.get("hidden_dim", t.hidden_dim);
  r.get("embed_dim", t.embed_dim);
  r.get("proj_dim", t.proj_dim);
  r.get_enum("activation", t.activation, model::parse_activation);

  r.get("out_dir", c.out_dir);
  r.get("run_name", c.run_name);
  r.get("record_wall_time", c.record_wall_time);
  r.reject_unknown();

  if (c.noise.ratio < 0.0 || c.noise.ratio >= 1.0) throw ConfigError("ratio must lie in [0, 1)");
  if (c.test_instances_per_category < 1) throw ConfigError("test_instances_per_category must be positive");
  if (c.noise.pair_map) validate_pair_map(*c.noise.pair_map, c.gen.num_categories);
  t.validate();
  c.resolve_seeds();
  return c;
}

json config_to_json(const RunConfig& c) {
  const auto& g = c.gen;
  const auto& t = c.train;
  json doc;
  doc["num_categories"] = g.num_categories;
  doc["instances_per_category"] = g.instances_per_category;
  doc["frames"] = g.frames;
  doc["dim"] = g.dim;
  doc["planted_channels_per_category"] = g.planted_channels_per_category;
  doc["scene_strength"] = g.scene_strength;
  doc["motion_strength"] = g.motion_strength;
  doc["distractor_strength"] = g.distractor_strength;
  doc["noise_sigma"] = g.noise_sigma;
  doc["seed"] = c.seed;
  doc["noise_seed"] = c.noise.seed;
  doc["train_seed"] = t.seed;
  doc["test_instances_per_category"] = c.test_instances_per_category;
  doc["kind"] = std::string(to_string(c.noise.kind));
  doc["ratio"] = c.noise.ratio;
  doc["pair_map"] = c.noise.pair_map ? json(*c.noise.pair_map) : json(nullptr);
  doc["epochs"] = t.epochs;
  doc["batch_size"] = t.batch_size;
  doc["learning_rate"] = t.learning_rate;
  doc["momentum"] = t.momentum;
  doc["weight_decay"] = t.weight_decay;
  doc["lr_decay_epochs"] = t.lr_decay_epochs;
  doc["lr_decay"] = t.lr_decay;
  doc["warmup_epochs"] = t.warmup_epochs;
  doc["max_grad_norm"] = t.max_grad_norm;
  doc["b"] = t.b;
  doc["xi"] = t.xi;
  doc["score_mode"] = std::string(trunc::to_string(t.score_mode));
  doc["ct_mode"] = std::string(trunc::to_string(t.ct_mode));
  doc["slice"] = std::string(trunc::to_string(t.slice));
  doc["kmeans_init"] = t.kmeans_init;
  doc["anchors_per_category"] = t.anchors_per_category;
  doc["temperature"] = t.temperature;
  doc["neighbors"] = t.neighbors;
  doc["strategy"] = std::string(ncl::to_string(t.strategy));
  doc["open_set_mode"] = t.open_set_mode;
  doc["lambda_r"] = t.lambda_r;
  doc["contrastive_warmup"] = t.contrastive_warmup;
  doc["hidden_dim"] = t.hidden_dim;
  doc["embed_dim"] = t.embed_dim;
  doc["proj_dim"] = t.proj_dim;
  doc["activation"] = std::string(model::to_string(t.activation));
  doc["out_dir"] = c.out_dir;
  doc["run_name"] = c.run_name;
  doc["record_wall_time"] = c.record_wall_time;
  return doc;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

void write_json(const json& doc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace neat
