#include "pairlearn/config.hpp"

#include <charconv>
#include <cstdlib>
#include <set>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "pairlearn/io.hpp"

#ifndef PAIRLEARN_VERSION
#define PAIRLEARN_VERSION "0.0.0"
#endif

namespace pairlearn {

ConfigError::ConfigError(const std::string& what, int l, int c)
    : std::runtime_error(l > 0 ? what + " (line " + std::to_string(l) + ", column " +
                                     std::to_string(c) + ")"
                               : what),
      line(l),
      column(c) {}

std::string tool_version() { return PAIRLEARN_VERSION; }

ExperimentConfig default_config(Profile profile) {
  ExperimentConfig c;
  c.profile = profile;
  if (profile == Profile::full) {
    const EncoderConfig e = full_encoder();
    c.half_width = e.input_width;
    c.half_height = e.input_height;
    c.base_width = e.base_width;
    c.embedding_dim = e.embedding_dim;
    c.projection_dim = e.projection_dim;
    for (std::uint64_t s = 0; s < 20; ++s) c.seeds.push_back(s);
  } else {
    const EncoderConfig e = desk_encoder();
    c.half_width = e.input_width;
    c.half_height = e.input_height;
    c.base_width = e.base_width;
    c.embedding_dim = e.embedding_dim;
    c.projection_dim = e.projection_dim;
    for (std::uint64_t s = 0; s < 10; ++s) c.seeds.push_back(s);
  }
  return c;
}

EncoderConfig ExperimentConfig::encoder() const {
  EncoderConfig e = profile == Profile::full ? full_encoder() : desk_encoder();
  e.input_width = half_width;
  e.input_height = half_height;
  e.base_width = base_width;
  e.embedding_dim = embedding_dim;
  e.projection_dim = projection_dim;
  return e;
}

std::vector<CategoryBinding> ExperimentConfig::resolved_categories() const {
  return categories.empty() ? default_categories(space) : categories;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& msg) {
    throw ConfigError(field + ": " + msg);
  };
  if (version != kConfigFormatVersion)
    fail("version", "unsupported config version " + std::to_string(version));
  try {
    space.validate();
  } catch (const std::invalid_argument& e) {
    fail("space", e.what());
  }
  if (train.epochs < 1) fail("train.epochs", "epochs must be ≥ 1");
  if (!(train.base_lr > 0)) fail("train.lr", "learning rate must be > 0");
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    fail("train", e.what());
  }
  if (half_width < kMinRenderSize || half_height < kMinRenderSize)
    fail("render", "render size must be at least " + std::to_string(kMinRenderSize));
  try {
    encoder().validate();
  } catch (const std::exception& e) {
    fail("encoder", e.what());
  }
  if (grid.features.empty() || grid.alignments.empty() || grid.levels.empty())
    fail("grid", "every grid axis needs at least one level");
  for (int l : grid.levels)
    if (l != 1 && l != 3 && l != 6) fail("grid.supervision", "levels must be 1, 3 or 6");
  if (seeds.empty()) fail("seeds", "at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    fail("seeds", "duplicate seed");
  if (jobs < 1) fail("jobs", "jobs must be ≥ 1");
  if (!(analysis.confidence > 0 && analysis.confidence < 1))
    fail("analysis.confidence", "must be in (0, 1)");
  if (analysis.bootstrap_resamples < 0) fail("analysis.bootstrap", "must be ≥ 0");
  const auto cats = resolved_categories();
  for (const auto& c : cats) {
    try {
      validate_rule(space, c.rule);
    } catch (const std::invalid_argument& e) {
      fail("categories", e.what());
    }
  }
  for (Feature f : grid.features)
    for (Alignment a : grid.alignments) {
      try {
        find_category(cats, f, a);
      } catch (const std::invalid_argument& e) {
        fail("categories", e.what());
      }
    }
}

// --- parsing ----------------------------------------------------------------

namespace {

[[noreturn]] void fail_at(const YAML::Node& n, const std::string& msg) {
  const YAML::Mark m = n.Mark();
  throw ConfigError(msg, m.line + 1, m.column + 1);
}

void check_keys(const YAML::Node& n, const std::string& path, std::initializer_list<std::string_view> allowed) {
  if (!n.IsMap()) fail_at(n, (path.empty() ? std::string("config") : path) + " must be a mapping");
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      fail_at(kv.first, "unknown key '" + (path.empty() ? key : path + "." + key) + "'");
  }
}

template <typename T>
void read(const YAML::Node& parent, const char* key, const std::string& path, T& out) {
  const YAML::Node n = parent[key];
  if (!n) return;
  try {
    out = n.as<T>();
  } catch (const YAML::Exception&) {
    fail_at(n, "invalid value for '" + (path.empty() ? std::string(key) : path + "." + key) + "'");
  }
}

template <typename Enum, typename Parse>
void read_enum(const YAML::Node& parent, const char* key, const std::string& path, Enum& out, Parse parse) {
  std::string s;
  read(parent, key, path, s);
  if (s.empty()) return;
  try {
    out = parse(s);
  } catch (const std::invalid_argument& e) {
    fail_at(parent[key], e.what());
  }
}

template <typename Enum, typename Parse>
std::vector<Enum> read_enum_list(const YAML::Node& n, const std::string& field, Parse parse) {
  if (!n.IsSequence()) fail_at(n, field + " must be a list");
  std::vector<Enum> out;
  for (const auto& item : n) {
    try {
      out.push_back(parse(item.as<std::string>()));
    } catch (const std::exception& e) {
      fail_at(item, field + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ": parse error: " + e.msg, e.mark.line + 1, e.mark.column + 1);
  }
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  check_keys(root, "", {"version", "profile", "space", "categories", "render", "encoder", "train",
                        "grid", "seeds", "output_root", "analysis", "save_checkpoints", "jobs"});

  Profile profile = Profile::desk;
  read_enum(root, "profile", "", profile, parse_profile);
  ExperimentConfig c = default_config(profile);
  read(root, "version", "", c.version);

  if (const auto n = root["space"]) {
    check_keys(n, "space", {"center_shapes", "appendage_shapes", "colors"});
    read(n, "center_shapes", "space", c.space.center_shapes);
    read(n, "appendage_shapes", "space", c.space.appendage_shapes);
    read(n, "colors", "space", c.space.colors);
  }
  if (const auto n = root["categories"]) {
    if (!n.IsSequence()) fail_at(n, "categories must be a list");
    for (const auto& item : n) {
      check_keys(item, "categories[]", {"name", "feature", "alignment", "target", "shape_locus"});
      CategoryBinding b;
      read(item, "name", "categories[]", b.rule.name);
      read_enum(item, "feature", "categories[]", b.rule.feature, parse_feature);
      read_enum(item, "alignment", "categories[]", b.alignment, parse_alignment);
      read_enum(item, "shape_locus", "categories[]", b.rule.shape_locus, parse_shape_locus);
      std::string target;
      read(item, "target", "categories[]", target);
      try {
        b.rule.target_value = value_index(c.space, rule_attribute(b.rule), target);
      } catch (const std::invalid_argument& e) {
        fail_at(item["target"] ? item["target"] : item, std::string("categories[].target: ") + e.what());
      }
      if (b.rule.name.empty()) fail_at(item, "categories[].name is required");
      c.categories.push_back(b);
    }
  }
  if (const auto n = root["render"]) {
    check_keys(n, "render", {"half_width", "half_height"});
    read(n, "half_width", "render", c.half_width);
    read(n, "half_height", "render", c.half_height);
  }
  if (const auto n = root["encoder"]) {
    check_keys(n, "encoder", {"base_width", "embedding_dim", "projection_dim"});
    read(n, "base_width", "encoder", c.base_width);
    read(n, "embedding_dim", "encoder", c.embedding_dim);
    read(n, "projection_dim", "encoder", c.projection_dim);
  }
  if (const auto n = root["train"]) {
    check_keys(n, "train", {"epochs", "lr", "weight_decay", "beta1", "beta2", "adam_epsilon",
                            "weights", "margin", "batching", "fresh_unsupervised"});
    read(n, "epochs", "train", c.train.epochs);
    read(n, "lr", "train", c.train.base_lr);
    read(n, "weight_decay", "train", c.train.weight_decay);
    read(n, "beta1", "train", c.train.beta1);
    read(n, "beta2", "train", c.train.beta2);
    read(n, "adam_epsilon", "train", c.train.adam_epsilon);
    read(n, "margin", "train", c.train.margin);
    read(n, "fresh_unsupervised", "train", c.train.fresh_unsupervised);
    read_enum(n, "batching", "train", c.train.batching, parse_batching);
    if (const auto w = n["weights"]) {
      check_keys(w, "train.weights", {"bce", "consistency", "contrastive"});
      read(w, "bce", "train.weights", c.train.weights.bce);
      read(w, "consistency", "train.weights", c.train.weights.consistency);
      read(w, "contrastive", "train.weights", c.train.weights.contrastive);
    }
  }
  if (const auto n = root["grid"]) {
    check_keys(n, "grid", {"features", "alignments", "supervision"});
    if (n["features"]) c.grid.features = read_enum_list<Feature>(n["features"], "grid.features", parse_feature);
    if (n["alignments"])
      c.grid.alignments = read_enum_list<Alignment>(n["alignments"], "grid.alignments", parse_alignment);
    read(n, "supervision", "grid", c.grid.levels);
  }
  if (const auto n = root["seeds"]) {
    if (n.IsScalar()) {
      try {
        c.seeds = parse_seed_list(n.as<std::string>());
      } catch (const std::invalid_argument& e) {
        fail_at(n, std::string("seeds: ") + e.what());
      }
    } else {
      read(root, "seeds", "", c.seeds);
    }
  }
  read(root, "output_root", "", c.output_root);
  read(root, "save_checkpoints", "", c.save_checkpoints);
  read(root, "jobs", "", c.jobs);
  if (const auto n = root["analysis"]) {
    check_keys(n, "analysis", {"confidence", "bootstrap", "bootstrap_seed", "human_csv"});
    read(n, "confidence", "analysis", c.analysis.confidence);
    read(n, "bootstrap", "analysis", c.analysis.bootstrap_resamples);
    read(n, "bootstrap_seed", "analysis", c.analysis.bootstrap_seed);
    read(n, "human_csv", "analysis", c.analysis.human_csv);
  }

  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path.string());
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, end);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

}  // namespace

std::string dump_config(const ExperimentConfig& c) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "version" << YAML::Value << c.version;
  e << YAML::Key << "profile" << YAML::Value << std::string(to_string(c.profile));
  e << YAML::Key << "space" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "center_shapes" << YAML::Value << YAML::Flow << c.space.center_shapes;
  e << YAML::Key << "appendage_shapes" << YAML::Value << YAML::Flow << c.space.appendage_shapes;
  e << YAML::Key << "colors" << YAML::Value << YAML::Flow << c.space.colors;
  e << YAML::EndMap;
  if (!c.categories.empty()) {
    e << YAML::Key << "categories" << YAML::Value << YAML::BeginSeq;
    for (const auto& b : c.categories) {
      e << YAML::Flow << YAML::BeginMap;
      e << YAML::Key << "name" << YAML::Value << b.rule.name;
      e << YAML::Key << "feature" << YAML::Value << std::string(to_string(b.rule.feature));
      e << YAML::Key << "alignment" << YAML::Value << std::string(to_string(b.alignment));
      e << YAML::Key << "target" << YAML::Value
        << value_name(c.space, rule_attribute(b.rule), b.rule.target_value);
      e << YAML::Key << "shape_locus" << YAML::Value << std::string(to_string(b.rule.shape_locus));
      e << YAML::EndMap;
    }
    e << YAML::EndSeq;
  }
  e << YAML::Key << "render" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "half_width" << YAML::Value << c.half_width;
  e << YAML::Key << "half_height" << YAML::Value << c.half_height;
  e << YAML::EndMap;
  e << YAML::Key << "encoder" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "base_width" << YAML::Value << c.base_width;
  e << YAML::Key << "embedding_dim" << YAML::Value << c.embedding_dim;
  e << YAML::Key << "projection_dim" << YAML::Value << c.projection_dim;
  e << YAML::EndMap;
  const TrainConfig& t = c.train;
  e << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "epochs" << YAML::Value << t.epochs;
  e << YAML::Key << "lr" << YAML::Value << fmt_double(t.base_lr);
  e << YAML::Key << "weight_decay" << YAML::Value << fmt_double(t.weight_decay);
  e << YAML::Key << "beta1" << YAML::Value << fmt_double(t.beta1);
  e << YAML::Key << "beta2" << YAML::Value << fmt_double(t.beta2);
  e << YAML::Key << "adam_epsilon" << YAML::Value << fmt_double(t.adam_epsilon);
  e << YAML::Key << "weights" << YAML::Value << YAML::Flow << YAML::BeginMap;
  e << YAML::Key << "bce" << YAML::Value << fmt_double(t.weights.bce);
  e << YAML::Key << "consistency" << YAML::Value << fmt_double(t.weights.consistency);
  e << YAML::Key << "contrastive" << YAML::Value << fmt_double(t.weights.contrastive);
  e << YAML::EndMap;
  e << YAML::Key << "margin" << YAML::Value << fmt_double(t.margin);
  e << YAML::Key << "batching" << YAML::Value << std::string(to_string(t.batching));
  e << YAML::Key << "fresh_unsupervised" << YAML::Value << t.fresh_unsupervised;
  e << YAML::EndMap;
  e << YAML::Key << "grid" << YAML::Value << YAML::BeginMap;
  std::vector<std::string> fs, as;
  for (Feature f : c.grid.features) fs.emplace_back(to_string(f));
  for (Alignment a : c.grid.alignments) as.emplace_back(to_string(a));
  e << YAML::Key << "features" << YAML::Value << YAML::Flow << fs;
  e << YAML::Key << "alignments" << YAML::Value << YAML::Flow << as;
  e << YAML::Key << "supervision" << YAML::Value << YAML::Flow << c.grid.levels;
  e << YAML::EndMap;
  e << YAML::Key << "seeds" << YAML::Value << YAML::Flow << c.seeds;
  e << YAML::Key << "output_root" << YAML::Value << c.output_root;
  e << YAML::Key << "save_checkpoints" << YAML::Value << c.save_checkpoints;
  e << YAML::Key << "jobs" << YAML::Value << c.jobs;
  e << YAML::Key << "analysis" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "confidence" << YAML::Value << fmt_double(c.analysis.confidence);
  e << YAML::Key << "bootstrap" << YAML::Value << c.analysis.bootstrap_resamples;
  e << YAML::Key << "bootstrap_seed" << YAML::Value << c.analysis.bootstrap_seed;
  e << YAML::Key << "human_csv" << YAML::Value << c.analysis.human_csv;
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  io::write_atomic(path, dump_config(cfg));
}

// --- overrides ----------------------------------------------------------------

std::vector<std::uint64_t> parse_seed_list(const std::string& spec) {
  auto num = [&](std::string_view s) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty())
      throw std::invalid_argument("bad seed '" + std::string(s) + "' in '" + spec + "'");
    return v;
  };
  std::vector<std::uint64_t> out;
  if (const auto dash = spec.find('-'); dash != std::string::npos) {
    const auto a = num(std::string_view(spec).substr(0, dash));
    const auto b = num(std::string_view(spec).substr(dash + 1));
    if (b < a) throw std::invalid_argument("empty seed range '" + spec + "'");
    for (auto s = a; s <= b; ++s) out.push_back(s);
  } else if (spec.find(',') != std::string::npos) {
    std::string_view rest(spec);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      out.push_back(num(rest.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  } else {
    const auto n = num(spec);
    if (n == 0) throw std::invalid_argument("seed count must be positive");
    for (std::uint64_t s = 0; s < n; ++s) out.push_back(s);
  }
  return out;
}

LossWeights parse_weights(const std::string& spec) {
  std::vector<double> v;
  std::string_view rest(spec);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const auto tok = rest.substr(0, comma);
    double d = 0.0;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), d);
    if (ec != std::errc() || p != tok.data() + tok.size())
      throw std::invalid_argument("bad weight '" + std::string(tok) + "'");
    v.push_back(d);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (v.size() != 3) throw std::invalid_argument("weights need three values: bce,consistency,contrastive");
  LossWeights w{v[0], v[1], v[2]};
  w.validate();
  return w;
}

void apply_env_overrides(ExperimentConfig& c) {
  auto env = [](const char* name) -> const char* { return std::getenv(name); };
  try {
    if (const char* v = env("PAIRLEARN_EPOCHS")) c.train.epochs = std::stoi(v);
    if (const char* v = env("PAIRLEARN_LR")) c.train.base_lr = std::stod(v);
    if (const char* v = env("PAIRLEARN_SEEDS")) c.seeds = parse_seed_list(v);
    if (const char* v = env("PAIRLEARN_JOBS")) c.jobs = std::stoi(v);
    if (const char* v = env("PAIRLEARN_OUT")) c.output_root = v;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad PAIRLEARN_* environment override: ") + e.what());
  }
  c.validate();
}

// --- hashing ------------------------------------------------------------------

namespace {

nlohmann::json hashed_fields(const ExperimentConfig& c) {
  nlohmann::json j;
  j["version"] = c.version;
  j["profile"] = to_string(c.profile);
  j["space"] = {{"center_shapes", c.space.center_shapes},
                {"appendage_shapes", c.space.appendage_shapes},
                {"colors", c.space.colors}};
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& b : c.resolved_categories())
    cats.push_back({b.rule.name, to_string(b.rule.feature), to_string(b.alignment),
                    b.rule.target_value, to_string(b.rule.shape_locus)});
  j["categories"] = cats;
  j["render"] = {c.half_width, c.half_height, kRenderConfigVersion};
  j["encoder"] = {c.base_width, c.embedding_dim, c.projection_dim};
  const TrainConfig& t = c.train;
  j["train"] = {t.epochs, t.base_lr, t.weight_decay, t.beta1, t.beta2, t.adam_epsilon,
                t.weights.bce, t.weights.consistency, t.weights.contrastive, t.margin,
                to_string(t.batching), t.fresh_unsupervised};
  return j;
}

std::string sha1_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("SHA-1 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

}  // namespace

std::string full_config_hash(const ExperimentConfig& cfg) { return sha1_hex(hashed_fields(cfg).dump()); }

std::string config_hash(const ExperimentConfig& cfg) { return full_config_hash(cfg).substr(0, 12); }

}  // namespace pairlearn
