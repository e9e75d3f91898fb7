#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "sparsemask/attack.hpp"
#include "sparsemask/errors.hpp"

namespace sparsemask {

/// Flat `key = value` file (a TOML subset): numbers, booleans, "strings",
/// bare words and one-level [lists]. `#` starts a comment.
class KeyValueConfig {
 public:
  using Scalar = std::variant<bool, double, std::string>;
  using Value = std::variant<Scalar, std::vector<Scalar>>;

  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<config>") {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
      const std::string body = trim(strip_comment(line));
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(body.substr(0, eq));
      const std::string raw = trim(body.substr(eq + 1));
      if (key.empty() || raw.empty())
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");
      if (cfg.values_.count(key)) throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
      try {
        cfg.values_[key] = parse_value(raw);
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path.string());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
  }

  void set(const std::string& key, Value v) { values_[key] = std::move(v); }

  double number(const std::string& key) const { return as_number(scalar(key), key); }
  std::size_t count(const std::string& key) const {
    const double d = number(key);
    if (d < 0 || d != std::floor(d)) throw ConfigError("'" + key + "' must be a non-negative integer");
    return static_cast<std::size_t>(d);
  }
  bool flag(const std::string& key) const {
    const auto* b = std::get_if<bool>(&scalar(key));
    if (!b) throw ConfigError("'" + key + "' must be true or false");
    return *b;
  }
  std::string text(const std::string& key) const {
    const Scalar& s = scalar(key);
    if (const auto* str = std::get_if<std::string>(&s)) return *str;
    throw ConfigError("'" + key + "' must be a string");
  }
  std::vector<double> numbers(const std::string& key) const {
    const auto* list = std::get_if<std::vector<Scalar>>(&values_.at(key));
    if (!list) return {number(key)};
    std::vector<double> out;
    for (const auto& s : *list) out.push_back(as_number(s, key));
    return out;
  }

  /// Throws on any key outside `allowed`, so typos never pass silently.
  void require_known(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : values_)
      if (!allowed.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }

 private:
  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static Scalar parse_scalar(const std::string& raw) {
    if (raw == "true") return true;
    if (raw == "false") return false;
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') return raw.substr(1, raw.size() - 2);
    double d = 0.0;
    const auto* end = raw.data() + raw.size();
    auto [ptr, ec] = std::from_chars(raw.data(), end, d);
    if (ec == std::errc() && ptr == end) return d;
    if (raw.find_first_of(" \t\"[],=") != std::string::npos) throw ConfigError("cannot parse value '" + raw + "'");
    return raw;
  }

  static Value parse_value(const std::string& raw) {
    if (raw.front() != '[') return parse_scalar(raw);
    if (raw.back() != ']') throw ConfigError("unterminated list");
    std::vector<Scalar> items;
    std::stringstream inner(raw.substr(1, raw.size() - 2));
    std::string item;
    while (std::getline(inner, item, ',')) {
      item = trim(item);
      if (!item.empty()) items.push_back(parse_scalar(item));
    }
    return items;
  }

  static double as_number(const Scalar& s, const std::string& key) {
    if (const auto* d = std::get_if<double>(&s)) return *d;
    throw ConfigError("'" + key + "' must be a number");
  }

  const Scalar& scalar(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
    const auto* s = std::get_if<Scalar>(&it->second);
    if (!s) throw ConfigError("'" + key + "' must be a single value, not a list");
    return *s;
  }

  std::map<std::string, Value> values_;
};

inline const std::set<std::string>& attack_config_keys() {
  static const std::set<std::string> keys{"budget",     "query_limit",   "initial_samples",       "lambda0",
                                          "m1",         "m2",            "alpha_prior",           "z",
                                          "scheduler",  "step_interval", "step_gamma",            "use_dissimilarity_map",
                                          "learning",   "seed",          "stream",                "synth",
                                          "synth_mean", "synth_stddev"};
  return keys;
}

/// Overlays the keys present in `kv` on `base`.
inline AttackConfig apply_attack_config(const KeyValueConfig& kv, AttackConfig base = {}) {
  if (kv.has("budget")) base.budget = kv.count("budget");
  if (kv.has("query_limit")) base.query_limit = kv.count("query_limit");
  if (kv.has("initial_samples")) base.initial_samples = kv.count("initial_samples");
  if (kv.has("lambda0")) base.lambda0 = kv.number("lambda0");
  if (kv.has("m1")) base.m1 = kv.number("m1");
  if (kv.has("m2")) base.m2 = kv.number("m2");
  if (kv.has("alpha_prior")) base.alpha_prior = kv.number("alpha_prior");
  if (kv.has("z")) base.z = kv.number("z");
  if (kv.has("scheduler")) base.scheduler = parse_scheduler(kv.text("scheduler"));
  if (kv.has("step_interval")) base.step_interval = kv.count("step_interval");
  if (kv.has("step_gamma")) base.step_gamma = kv.number("step_gamma");
  if (kv.has("use_dissimilarity_map")) base.use_dissimilarity_map = kv.flag("use_dissimilarity_map");
  if (kv.has("learning")) base.learning = parse_learning(kv.text("learning"));
  if (kv.has("seed")) base.seed.seed = kv.count("seed");
  if (kv.has("stream")) base.seed.stream = kv.count("stream");
  if (kv.has("synth")) base.synth.kind = parse_synth_kind(kv.text("synth"));
  if (kv.has("synth_mean")) base.synth.gaussian_mean = kv.number("synth_mean");
  if (kv.has("synth_stddev")) base.synth.gaussian_stddev = kv.number("synth_stddev");
  return base;
}

}  // namespace sparsemask
