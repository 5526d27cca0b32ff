#include "mars/config.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "mars/errors.hpp"
#include "mars/rng.hpp"

namespace mars {

namespace {

enum class Kind { kInt, kU64, kDouble, kBool, kString, kU64List };

struct Field {
  std::string key;
  Kind kind;
  std::function<void(ExperimentConfig&, const YAML::Node&)> read;
  // Scalar text for the canonical file; nullopt leaves the key out.
  std::function<std::optional<std::string>(const ExperimentConfig&)> write;
};

std::string where(const YAML::Node& n, const std::string& source) {
  const YAML::Mark m = n.Mark();
  if (m.is_null() || m.line < 0) return "override: ";
  return source + ":" + std::to_string(m.line + 1) + ": ";
}

std::string fmt_double(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

template <class T>
T scalar(const YAML::Node& n, const std::string& key, const char* what) {
  if (!n.IsScalar()) throw ConfigError(key + " must be " + what);
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(key + " must be " + what + ", got '" + n.Scalar() + "'");
  }
}

// Field accessors; each read gets the node and the dotted key for messages.
#define MARS_INT(path, member)                                                                  \
  Field {                                                                                       \
    path, Kind::kInt, [](ExperimentConfig& c, const YAML::Node& n) {                             \
      c.member = scalar<int>(n, path, "an integer"); },                                         \
        [](const ExperimentConfig& c) -> std::optional<std::string> { return std::to_string(c.member); } \
  }
#define MARS_U64(path, member)                                                                  \
  Field {                                                                                       \
    path, Kind::kU64, [](ExperimentConfig& c, const YAML::Node& n) {                             \
      c.member = scalar<std::uint64_t>(n, path, "a non-negative integer"); },                   \
        [](const ExperimentConfig& c) -> std::optional<std::string> { return std::to_string(c.member); } \
  }
#define MARS_DOUBLE(path, member)                                                               \
  Field {                                                                                       \
    path, Kind::kDouble, [](ExperimentConfig& c, const YAML::Node& n) {                          \
      c.member = scalar<double>(n, path, "a number"); },                                        \
        [](const ExperimentConfig& c) -> std::optional<std::string> { return fmt_double(c.member); } \
  }
#define MARS_BOOL(path, member)                                                                 \
  Field {                                                                                       \
    path, Kind::kBool, [](ExperimentConfig& c, const YAML::Node& n) {                            \
      c.member = scalar<bool>(n, path, "true or false"); },                                     \
        [](const ExperimentConfig& c) -> std::optional<std::string> { return c.member ? "true" : "false"; } \
  }

LengthPenaltyConfig& penalty(ExperimentConfig& c) {
  if (!c.train.length_penalty) c.train.length_penalty = LengthPenaltyConfig{};
  return *c.train.length_penalty;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"mode", Kind::kString,
       [](ExperimentConfig& c, const YAML::Node& n) {
         c.train.mode = parse_mode(scalar<std::string>(n, "mode", "a string"));
       },
       [](const ExperimentConfig& c) -> std::optional<std::string> { return to_string(c.train.mode); }},
      MARS_U64("seed", train.seed),
      MARS_INT("steps", train.steps),
      MARS_INT("n_budget", train.n_budget),
      MARS_INT("tasks_per_step", train.tasks_per_step),
      {"reward", Kind::kString,
       [](ExperimentConfig& c, const YAML::Node& n) {
         c.train.reward = parse_reward_granularity(scalar<std::string>(n, "reward", "a string"));
       },
       [](const ExperimentConfig& c) -> std::optional<std::string> { return to_string(c.train.reward); }},
      MARS_INT("agents.count", train.num_agents),
      {"agents.seeds", Kind::kU64List,
       [](ExperimentConfig& c, const YAML::Node& n) {
         if (!n.IsSequence()) throw ConfigError("agents.seeds must be a list of integers");
         c.train.agent_seeds.clear();
         for (const YAML::Node& s : n)
           c.train.agent_seeds.push_back(scalar<std::uint64_t>(s, "agents.seeds", "a list of integers"));
       },
       [](const ExperimentConfig& c) -> std::optional<std::string> {
         if (c.train.agent_seeds.empty()) return std::nullopt;
         std::string s = "[";
         for (std::size_t i = 0; i < c.train.agent_seeds.size(); ++i)
           s += (i ? ", " : "") + std::to_string(c.train.agent_seeds[i]);
         return s + "]";
       }},
      MARS_DOUBLE("agents.init_scale", train.init_scale),
      MARS_DOUBLE("optim.learning_rate", train.learning_rate),
      MARS_DOUBLE("optim.eps_low", train.eps_low),
      MARS_DOUBLE("optim.eps_high", train.eps_high),
      MARS_DOUBLE("optim.kl_beta", train.kl_beta),
      MARS_INT("optim.buffer_threshold", train.buffer_threshold),
      MARS_BOOL("optim.per_agent_renorm", train.per_agent_renorm),
      MARS_DOUBLE("shaping.lambda", train.shaping.lambda),
      MARS_DOUBLE("shaping.gamma", train.shaping.gamma),
      MARS_DOUBLE("shaping.std_epsilon", train.shaping.std_epsilon),
      {"length_penalty.l_max", Kind::kInt,
       [](ExperimentConfig& c, const YAML::Node& n) {
         penalty(c).l_max = scalar<int>(n, "length_penalty.l_max", "an integer");
       },
       [](const ExperimentConfig& c) -> std::optional<std::string> {
         if (!c.train.length_penalty) return std::nullopt;
         return std::to_string(c.train.length_penalty->l_max);
       }},
      {"length_penalty.l_cache", Kind::kInt,
       [](ExperimentConfig& c, const YAML::Node& n) {
         penalty(c).l_cache = scalar<int>(n, "length_penalty.l_cache", "an integer");
       },
       [](const ExperimentConfig& c) -> std::optional<std::string> {
         if (!c.train.length_penalty) return std::nullopt;
         return std::to_string(c.train.length_penalty->l_cache);
       }},
      {"taskset.path", Kind::kString,
       [](ExperimentConfig& c, const YAML::Node& n) {
         c.taskset.path = scalar<std::string>(n, "taskset.path", "a string");
       },
       [](const ExperimentConfig& c) { return c.taskset.path; }},
      MARS_U64("taskset.seed", taskset.seed),
      MARS_INT("taskset.string_match.count", taskset.spec.string_match.count),
      MARS_INT("taskset.string_match.vocab", taskset.spec.string_match.vocab),
      MARS_INT("taskset.string_match.length", taskset.spec.string_match.length),
      MARS_INT("taskset.string_match.public_tests", taskset.spec.string_match.public_tests),
      MARS_INT("taskset.string_match.private_tests", taskset.spec.string_match.private_tests),
      MARS_INT("taskset.expr_synth.count", taskset.spec.expr_synth.count),
      MARS_INT("taskset.expr_synth.max_const", taskset.spec.expr_synth.max_const),
      MARS_INT("taskset.expr_synth.length", taskset.spec.expr_synth.length),
      MARS_INT("taskset.expr_synth.input_count", taskset.spec.expr_synth.input_count),
      MARS_INT("taskset.expr_synth.public_tests", taskset.spec.expr_synth.public_tests),
      MARS_INT("taskset.expr_synth.private_tests", taskset.spec.expr_synth.private_tests),
      MARS_INT("eval.every", train.eval_every),
      MARS_INT("eval.budget", train.eval_budget),
      MARS_BOOL("eval.tree_search", train.eval_tree_search),
      MARS_INT("output.checkpoint_every", output.checkpoint_every),
      MARS_BOOL("output.dump_trees", output.dump_trees),
      MARS_BOOL("output.dump_solutions", output.dump_solutions),
  };
  return f;
}

#undef MARS_INT
#undef MARS_U64
#undef MARS_DOUBLE
#undef MARS_BOOL

const Field* find_field(const std::string& key) {
  for (const Field& f : fields())
    if (f.key == key) return &f;
  return nullptr;
}

bool is_section(const std::string& prefix) {
  for (const Field& f : fields())
    if (f.key.size() > prefix.size() && f.key.compare(0, prefix.size(), prefix) == 0 &&
        f.key[prefix.size()] == '.')
      return true;
  return false;
}

void walk(const YAML::Node& map, const std::string& prefix, const std::string& source,
          ExperimentConfig& c, std::set<std::string>& seen) {
  for (const auto& kv : map) {
    const std::string name = kv.first.as<std::string>();
    const std::string key = prefix.empty() ? name : prefix + "." + name;
    try {
      if (const Field* f = find_field(key)) {
        f->read(c, kv.second);
        seen.insert(key);
      } else if (is_section(key)) {
        if (kv.second.IsNull()) continue;
        if (!kv.second.IsMap()) throw ConfigError(key + " must be a section");
        walk(kv.second, key, source, c, seen);
      } else {
        throw ConfigError("unknown key '" + key + "'");
      }
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      // Already located by a nested call.
      if (msg.rfind("override: ", 0) == 0 || msg.rfind(source + ":", 0) == 0) throw;
      throw ConfigError(where(kv.first, source) + msg);
    }
  }
}

void apply_override(YAML::Node& doc, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override: expected key=value, got '" + spec + "'");
  const std::string key = spec.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(spec.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError("override: cannot parse value of '" + key + "': " + e.msg);
  }
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  YAML::Node cur = doc;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node next = cur[parts[i]];
    if (!next.IsDefined() || next.IsNull()) {
      cur[parts[i]] = YAML::Node(YAML::NodeType::Map);
      next = cur[parts[i]];
    }
    if (!next.IsMap()) throw ConfigError("override: '" + parts[i] + "' in '" + key + "' is not a section");
    cur.reset(next);
  }
  cur[parts.back()] = value;
}

}  // namespace

std::string ExperimentConfig::to_yaml() const {
  YAML::Emitter out;
  out << YAML::BeginMap;
  std::vector<std::string> open;  // currently open section path
  for (const Field& f : fields()) {
    const auto text = f.write(*this);
    if (!text) continue;
    std::vector<std::string> parts;
    std::stringstream ss(f.key);
    for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
    const std::vector<std::string> want(parts.begin(), parts.end() - 1);
    std::size_t common = 0;
    while (common < open.size() && common < want.size() && open[common] == want[common]) ++common;
    for (std::size_t i = open.size(); i > common; --i) out << YAML::EndMap;
    for (std::size_t i = common; i < want.size(); ++i) out << YAML::Key << want[i] << YAML::Value << YAML::BeginMap;
    open = want;
    out << YAML::Key << parts.back() << YAML::Value;
    if (f.kind == Kind::kU64List) {
      out << YAML::Flow << YAML::BeginSeq;
      for (std::uint64_t s : train.agent_seeds) out << s;
      out << YAML::EndSeq;
    } else if (f.kind == Kind::kString && f.key == "taskset.path") {
      out << YAML::DoubleQuoted << *text;
    } else {
      out << *text;
    }
  }
  for (std::size_t i = open.size(); i > 0; --i) out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string ExperimentConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_yaml())));
  return buf;
}

void ExperimentConfig::validate() const {
  train.validate();
  if (output.checkpoint_every < 0) throw ConfigError("output.checkpoint_every must be non-negative");
  if (taskset.path) {
    if (taskset.path->empty()) throw ConfigError("taskset.path must not be empty");
    return;
  }
  if (taskset.spec.string_match.count < 0 || taskset.spec.expr_synth.count < 0)
    throw ConfigError("taskset counts must be non-negative");
  if (taskset.spec.string_match.count + taskset.spec.expr_synth.count == 0)
    throw ConfigError("taskset must contain at least one task (taskset.string_match.count or taskset.expr_synth.count)");
}

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides,
                              const std::string& source) {
  YAML::Node doc;
  try {
    doc = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!doc.IsDefined() || doc.IsNull()) doc = YAML::Node(YAML::NodeType::Map);
  if (!doc.IsMap()) throw ConfigError(source + ": top level must be a mapping");
  for (const std::string& o : overrides) apply_override(doc, o);

  ExperimentConfig c;
  std::set<std::string> seen;
  walk(doc, "", source, c, seen);
  if (is_tree_mode(c.train.mode) && c.train.shaping.gamma > 0.0 && !seen.count("shaping.lambda"))
    throw ConfigError(source + ": shaping.lambda is required when shaping.gamma > 0 in " +
                      to_string(c.train.mode) + " mode");
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot read config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides, path);
}

const std::vector<std::string>& numeric_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const Field& f : fields())
      if (f.kind == Kind::kInt || f.kind == Kind::kU64 || f.kind == Kind::kDouble) k.push_back(f.key);
    return k;
  }();
  return keys;
}

std::vector<Task> load_tasks(const ExperimentConfig& config) {
  if (config.taskset.path) {
    std::ifstream in(*config.taskset.path);
    if (!in) throw ConfigError(*config.taskset.path + ": cannot read taskset file");
    std::stringstream ss;
    ss << in.rdbuf();
    return taskset_from_jsonl(ss.str());
  }
  Rng rng(config.taskset.seed);
  return generate_taskset(config.taskset.spec, rng);
}

}  // namespace mars
