#include "protood/run_config.hpp"

#include <functional>
#include <type_traits>

#include "protood/embedding_store.hpp"
#include "protood/error.hpp"
#include "protood/random.hpp"

namespace protood {

namespace {

using json = nlohmann::json;

template <class T>
void assign(T& dst, const json& v, const std::string& key) {
  if constexpr (std::is_same_v<T, std::string>) {
    require(v.is_string(), ErrorKind::BadConfig, "'" + key + "' must be a string");
    dst = v.get<std::string>();
  } else if constexpr (std::is_floating_point_v<T>) {
    require(v.is_number(), ErrorKind::BadConfig, "'" + key + "' must be a number");
    dst = v.get<double>();
  } else {
    require(v.is_number_unsigned(), ErrorKind::BadConfig, "'" + key + "' must be a non-negative integer");
    dst = v.get<T>();
  }
}

struct Field {
  std::string name;
  bool is_string;
  std::function<void(RunConfig&, const json&)> set;
  std::function<nlohmann::ordered_json(const RunConfig&)> get;
};

#define PROTOOD_FIELD(member)                                                                   \
  Field {                                                                                       \
    #member, std::is_same_v<decltype(RunConfig::member), std::string>,                          \
        [](RunConfig& c, const json& v) { assign(c.member, v, #member); },                      \
        [](const RunConfig& c) { return nlohmann::ordered_json(c.member); }                     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      PROTOOD_FIELD(seed),
      PROTOOD_FIELD(tau),
      PROTOOD_FIELD(theorem_tau),
      PROTOOD_FIELD(epochs),
      PROTOOD_FIELD(learning_rate),
      PROTOOD_FIELD(batch_size),
      PROTOOD_FIELD(context_length),
      PROTOOD_FIELD(momentum),
      PROTOOD_FIELD(alpha),
      PROTOOD_FIELD(beta),
      PROTOOD_FIELD(meta_hidden),
      PROTOOD_FIELD(token_dim),
      PROTOOD_FIELD(encoder_hidden),
      PROTOOD_FIELD(world),
      PROTOOD_FIELD(classes),
      PROTOOD_FIELD(dim),
      PROTOOD_FIELD(n_per_class_train),
      PROTOOD_FIELD(n_per_class_test),
      PROTOOD_FIELD(n_ood),
      PROTOOD_FIELD(noise_scale),
      PROTOOD_FIELD(gap),
      PROTOOD_FIELD(ood_classes),
      PROTOOD_FIELD(trials),
      PROTOOD_FIELD(gradcheck_dim),
      PROTOOD_FIELD(gradcheck_classes),
      PROTOOD_FIELD(gradcheck_context_length),
      PROTOOD_FIELD(gradcheck_token_dim),
      PROTOOD_FIELD(gradcheck_batch),
      PROTOOD_FIELD(gradcheck_tau),
      PROTOOD_FIELD(gradcheck_alpha),
      PROTOOD_FIELD(gradcheck_beta),
      PROTOOD_FIELD(output_dir),
  };
  return table;
}

#undef PROTOOD_FIELD

const Field& find_field(std::string_view key) {
  for (const auto& f : fields())
    if (f.name == key) return f;
  throw Error(ErrorKind::BadConfig, "unknown config key '" + std::string(key) + "'");
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.name);
    return out;
  }();
  return names;
}

RunConfig RunConfig::from_json(const json& j) {
  require(j.is_object(), ErrorKind::BadConfig, "config must be a JSON object");
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) find_field(key).set(cfg, value);
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadConfig, "config '" + path + "': " + e.what());
  }
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const Field& f = find_field(key);
  if (f.is_string) {
    f.set(*this, json(std::string(value)));
    return;
  }
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    throw Error(ErrorKind::BadConfig, "'" + std::string(key) + "' expects a number, got '" + std::string(value) + "'");
  }
  f.set(*this, parsed);
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  for (const auto& f : fields()) j[f.name] = f.get(*this);
  return j;
}

SynthConfig RunConfig::synth() const {
  SynthConfig s;
  s.classes = classes;
  s.dim = dim;
  s.n_per_class_train = n_per_class_train;
  s.n_per_class_test = n_per_class_test;
  s.n_ood = n_ood;
  s.noise_scale = noise_scale;
  s.gap = gap;
  s.seed = derive_seed(seed, "world");
  return s;
}

TuningTaskConfig RunConfig::tuning_task() const {
  TuningTaskConfig t;
  t.classes = classes;
  t.n_per_class_train = n_per_class_train;
  t.n_per_class_test = n_per_class_test;
  t.n_ood = n_ood;
  t.ood_classes = ood_classes;
  t.noise_scale = noise_scale;
  t.context_length = context_length;
  t.seed = derive_seed(seed, "world");
  return t;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.epochs = epochs;
  t.learning_rate = learning_rate;
  t.batch_size = batch_size;
  t.context_length = context_length;
  t.momentum = momentum;
  t.alpha = alpha;
  t.beta = beta;
  t.tau = tau;
  t.seed = derive_seed(seed, "train");
  t.meta_hidden = meta_hidden;
  return t;
}

EncoderSpec RunConfig::encoder(std::size_t output_dim) const {
  return {derive_seed(seed, "text-encoder"), token_dim, encoder_hidden ? encoder_hidden : token_dim, output_dim};
}

ScoreConfig RunConfig::score() const { return {tau}; }
ScoreConfig RunConfig::theorem_score() const { return {theorem_tau}; }

GradcheckConfig RunConfig::gradcheck() const {
  GradcheckConfig g;
  g.dim = gradcheck_dim;
  g.classes = gradcheck_classes;
  g.context_length = gradcheck_context_length;
  g.token_dim = gradcheck_token_dim;
  g.batch = gradcheck_batch;
  g.tau = gradcheck_tau;
  g.alpha = gradcheck_alpha;
  g.beta = gradcheck_beta;
  g.seed = derive_seed(seed, "gradcheck");
  return g;
}

std::uint64_t RunConfig::class_token_seed() const { return derive_seed(seed, "class-token-table"); }

}  // namespace protood
