#include "run_config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "patchbag/error.hpp"

namespace patchbag::cli {

namespace {

using nlohmann::json;

// Reads known keys out of one JSON object and rejects whatever is left.
class Fields {
 public:
  Fields(const json& object, std::string prefix) : object_(object), prefix_(std::move(prefix)) {
    if (!object_.is_object()) throw ConfigError("config field '" + label() + "' must be an object");
  }

  const json* find(const std::string& key) {
    auto it = object_.find(key);
    if (it == object_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  template <class T>
  void read(const std::string& key, T& out) {
    if (const json* v = find(key)) out = convert<T>(*v, name(key));
  }

  template <class T>
  void read(const std::string& key, std::optional<T>& out) {
    if (const json* v = find(key)) out = convert<T>(*v, name(key));
  }

  Fields section(const std::string& key) {
    static const json empty = json::object();
    const json* v = find(key);
    return Fields(v ? *v : empty, name(key));
  }

  void finish() const {
    for (auto it = object_.begin(); it != object_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + name(it.key()) + "'");
  }

  std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  template <class T>
  static T convert(const json& v, const std::string& field) {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) throw ConfigError("config field '" + field + "' must be a non-negative integer");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("config field '" + field + "' must be a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("config field '" + field + "' must be true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      return std::filesystem::path(convert<std::string>(v, field));
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("config field '" + field + "' must be a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) throw ConfigError("config field '" + field + "' must be an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(convert<typename T::value_type>(v[i], field + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

 private:
  std::string label() const { return prefix_.empty() ? "<root>" : prefix_; }

  const json& object_;
  std::string prefix_;
  std::set<std::string> seen_;
};

void with_field(const std::string& field, auto&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

}  // namespace

std::vector<AblationArm> default_arms() {
  return {parse_arm("mta"), parse_arm("pt-1head"), parse_arm("pt-3head"), parse_arm("pt-3head-sdpa")};
}

AblationArm parse_arm(const std::string& name) {
  if (name == "mta") return {name, 0, Variant::gated};
  // pt-<h>head or pt-<h>head-sdpa
  const std::string prefix = "pt-";
  const auto head = name.find("head");
  if (name.rfind(prefix, 0) == 0 && head != std::string::npos && head > prefix.size()) {
    const std::string digits = name.substr(prefix.size(), head - prefix.size());
    const std::string rest = name.substr(head + 4);
    if (digits.find_first_not_of("0123456789") == std::string::npos && (rest.empty() || rest == "-sdpa")) {
      const std::size_t h = std::stoul(digits);
      if (h > 0) return {name, h, rest.empty() ? Variant::gated : Variant::sdpa};
    }
  }
  throw ConfigError("unknown ablation arm '" + name + "' (expected mta, pt-<h>head or pt-<h>head-sdpa)");
}

RunConfig::RunConfig() { ablation.arms = default_arms(); }

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }

  RunConfig c;
  Fields top(root, "");
  top.read("seed", c.seed);
  top.read("threads", c.threads);
  top.read("out", c.out);
  top.read("data", c.data);
  top.read("checkpoint", c.checkpoint);

  if (const json* schema = top.find("schema")) {
    if (!schema->is_array()) throw ConfigError("config field 'schema' must be an array of tasks");
    c.schema.tasks.clear();
    for (std::size_t i = 0; i < schema->size(); ++i) {
      Fields task((*schema)[i], "schema[" + std::to_string(i) + "]");
      TagTask t;
      task.read("name", t.name);
      task.read("classes", t.classes);
      task.finish();
      c.schema.tasks.push_back(std::move(t));
    }
  }

  auto synth = top.section("synth");
  synth.read("dim", c.synth.dim);
  synth.read("patches", c.synth.patches);
  synth.read("bags", c.synth.bags);
  synth.read("signal_fraction", c.synth.signal_fraction);
  synth.read("noise_std", c.synth.noise_std);
  synth.read("class_weights", c.synth.class_weights);
  if (const json* rules = synth.find("correlations")) {
    if (!rules->is_array()) throw ConfigError("config field 'synth.correlations' must be an array");
    for (std::size_t i = 0; i < rules->size(); ++i) {
      Fields rule((*rules)[i], "synth.correlations[" + std::to_string(i) + "]");
      CorrelationRule r;
      rule.read("task_a", r.task_a);
      rule.read("class_a", r.class_a);
      rule.read("task_b", r.task_b);
      rule.read("class_b", r.class_b);
      rule.read("probability", r.probability);
      rule.finish();
      c.synth.correlations.push_back(r);
    }
  }
  synth.finish();

  auto split = top.section("split");
  split.read("train", c.split.train);
  split.read("val", c.split.val);
  split.read("test", c.split.test);
  split.finish();

  auto model = top.section("model");
  std::string variant = std::string(to_string(c.train.dims.variant));
  model.read("variant", variant);
  with_field("model.variant", [&] { c.train.dims.variant = parse_variant(variant); });
  model.read("heads", c.train.dims.heads);
  model.read("feature_dim", c.train.dims.feature_dim);
  model.read("head_hidden", c.train.dims.head_hidden);
  model.read("tag_hidden", c.train.dims.tag_hidden);
  model.read("featurizer_hidden", c.train.dims.featurizer_hidden);
  model.finish();

  auto train = top.section("train");
  train.read("lr", c.train.adam.lr);
  train.read("beta1", c.train.adam.beta1);
  train.read("beta2", c.train.adam.beta2);
  train.read("epsilon", c.train.adam.epsilon);
  train.read("lambda", c.train.lambda);
  train.read("epochs", c.train.epochs);
  train.read("batch_size", c.train.batch_size);
  train.read("stop_at_macro_f1", c.train.stop_at_macro_f1);
  train.finish();

  auto pre = top.section("preprocess");
  pre.read("slides", c.preprocess.slides);
  pre.read("patches", c.preprocess.patches);
  pre.read("window", c.preprocess.window);
  pre.read("augment", c.preprocess.augment);
  pre.finish();

  auto exp = top.section("export");
  exp.read("svg", c.export_svg);
  exp.finish();

  auto ablation = top.section("ablation");
  std::optional<std::vector<std::string>> arms;
  ablation.read("arms", arms);
  if (arms) {
    c.ablation.arms.clear();
    for (const auto& a : *arms) with_field("ablation.arms", [&] { c.ablation.arms.push_back(parse_arm(a)); });
  }
  ablation.read("seeds", c.ablation.seeds);
  ablation.finish();

  top.finish();
  return c;
}

void RunConfig::finalize() {
  if (threads == 0) throw ConfigError("threads: must be at least 1");
  with_field("schema", [&] { schema.validate(); });
  synth.schema = schema;
  synth.seed = seed;
  with_field("synth", [&] { synth.validate(); });

  for (auto [name, r] : {std::pair{"train", split.train}, {"val", split.val}, {"test", split.test}})
    if (!(r >= 0.0 && r <= 1.0))
      throw ConfigError(std::string("split.") + name + ": must lie in [0, 1], got " + format_double(r));
  if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9)
    throw ConfigError("split: train + val + test must equal 1, got " +
                      format_double(split.train + split.val + split.test));

  train.seed = seed;
  train.threads = threads;
  with_field("model", [&] { train.dims.validate(); });
  with_field("train", [&] { train.validate(schema); });
  if (train.stop_at_macro_f1 && !(*train.stop_at_macro_f1 >= 0.0 && *train.stop_at_macro_f1 <= 1.0))
    throw ConfigError("train.stop_at_macro_f1: must lie in [0, 1]");

  if (preprocess.patches == 0) throw ConfigError("preprocess.patches: must be positive");
  if (preprocess.window < 224) throw ConfigError("preprocess.window: must be at least 224");
  if (ablation.arms.empty()) throw ConfigError("ablation.arms: needs at least one arm");
  if (ablation.seeds.empty()) throw ConfigError("ablation.seeds: needs at least one seed");
}

std::string RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["threads"] = threads;
  if (out) j["out"] = out->string();
  if (data) j["data"] = data->string();
  if (checkpoint) j["checkpoint"] = checkpoint->string();
  auto& tasks = j["schema"] = nlohmann::ordered_json::array();
  for (const auto& t : schema.tasks) tasks.push_back({{"name", t.name}, {"classes", t.classes}});
  auto& s = j["synth"];
  s["dim"] = synth.dim;
  s["patches"] = synth.patches;
  s["bags"] = synth.bags;
  s["signal_fraction"] = synth.signal_fraction;
  s["noise_std"] = synth.noise_std;
  s["correlations"] = nlohmann::ordered_json::array();
  for (const auto& r : synth.correlations)
    s["correlations"].push_back({{"task_a", r.task_a},
                                 {"class_a", r.class_a},
                                 {"task_b", r.task_b},
                                 {"class_b", r.class_b},
                                 {"probability", r.probability}});
  s["class_weights"] = synth.class_weights;
  j["split"] = {{"train", split.train}, {"val", split.val}, {"test", split.test}};
  j["model"] = {{"variant", std::string(to_string(train.dims.variant))},
                {"heads", train.dims.heads},
                {"feature_dim", train.dims.feature_dim},
                {"head_hidden", train.dims.head_hidden},
                {"tag_hidden", train.dims.tag_hidden},
                {"featurizer_hidden", train.dims.featurizer_hidden}};
  auto& t = j["train"];
  t["lr"] = train.adam.lr;
  t["beta1"] = train.adam.beta1;
  t["beta2"] = train.adam.beta2;
  t["epsilon"] = train.adam.epsilon;
  t["lambda"] = train.lambda;
  t["epochs"] = train.epochs;
  t["batch_size"] = train.batch_size;
  if (train.stop_at_macro_f1) t["stop_at_macro_f1"] = *train.stop_at_macro_f1;
  auto& p = j["preprocess"];
  if (preprocess.slides) p["slides"] = preprocess.slides->string();
  p["patches"] = preprocess.patches;
  p["window"] = preprocess.window;
  p["augment"] = preprocess.augment;
  j["export"] = {{"svg", export_svg}};
  std::vector<std::string> arm_names;
  for (const auto& a : ablation.arms) arm_names.push_back(a.name);
  j["ablation"] = {{"arms", arm_names}, {"seeds", ablation.seeds}};
  return j.dump(2) + "\n";
}

}  // namespace patchbag::cli
