#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "kgbilm/bka/config.hpp"
#include "kgbilm/cgsa/cgsa.hpp"
#include "kgbilm/util/errors.hpp"

namespace kgbilm {

/// Optimisation, objective and data-sampling settings plus the model
/// architecture. Defaults are the desk-scale recipe.
struct TrainConfig {
  double peak_lr = 1e-4;
  std::size_t warmup_steps = 200;
  std::size_t total_steps = 2000;
  double weight_decay = 1e-2;
  double clip_norm = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 32;
  double gamma = 0.15;
  double lambda_cgsa = 1.0;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = hardware concurrency
  std::size_t subgraph_radius = 1;
  std::size_t subgraph_max_triples = 4;
  std::size_t min_freq = 1;
  std::size_t log_tail = 10;  // loss-history entries kept in checkpoints
  bool describe_seed_only = false;  // training views describe only the sampled seed entity
  CgsaConfig cgsa;
  BkaConfig bka;

  TrainConfig() { bka.max_len = 128; }

  void validate() const {
    bka.validate();
    if (!(peak_lr > 0)) throw ConfigError("config: peak_lr must be positive");
    if (total_steps == 0) throw ConfigError("config: total_steps must be positive");
    if (warmup_steps > total_steps) throw ConfigError("config: warmup_steps exceeds total_steps");
    if (weight_decay < 0) throw ConfigError("config: weight_decay must be non-negative");
    if (!(clip_norm > 0)) throw ConfigError("config: clip_norm must be positive");
    if (!(adam_beta1 > 0 && adam_beta1 < 1) || !(adam_beta2 > 0 && adam_beta2 < 1)) {
      throw ConfigError("config: adam betas must lie in (0, 1)");
    }
    if (!(adam_eps > 0)) throw ConfigError("config: adam_eps must be positive");
    if (batch_size == 0) throw ConfigError("config: batch_size must be positive");
    if (!(gamma > 0 && gamma < 1)) throw ConfigError("config: gamma must lie in (0, 1)");
    if (!(cgsa.tau > 0)) throw ConfigError("config: tau must be positive");
    if (lambda_cgsa < 0) throw ConfigError("config: lambda_cgsa must be non-negative");
    if (cgsa.p_aug < 0 || cgsa.p_aug > 1) throw ConfigError("config: p_aug must lie in [0, 1]");
    if (subgraph_max_triples == 0) throw ConfigError("config: subgraph_max_triples must be positive");
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class U>
U parse_number(const std::string& key, const std::string& text) {
  U out{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config: bad value '" + text + "' for " + key);
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config: bad boolean '" + text + "' for " + key);
}

/// Hop counts accept "inf".
inline std::size_t parse_hops(const std::string& key, const std::string& text) {
  if (text == "inf") return kUnboundedHops;
  return parse_number<std::size_t>(key, text);
}

inline std::string format_hops(std::size_t v) { return v == kUnboundedHops ? "inf" : std::to_string(v); }

struct ConfigField {
  std::string key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    auto real = [&](std::string key, double TrainConfig::*m) {
      f.push_back({key, [m](const TrainConfig& c) { return format_double(c.*m); },
                   [m, key](TrainConfig& c, const std::string& v) { c.*m = parse_number<double>(key, v); }});
    };
    auto count = [&](std::string key, std::size_t TrainConfig::*m) {
      f.push_back({key, [m](const TrainConfig& c) { return std::to_string(c.*m); },
                   [m, key](TrainConfig& c, const std::string& v) { c.*m = parse_number<std::size_t>(key, v); }});
    };
    real("peak_lr", &TrainConfig::peak_lr);
    count("warmup_steps", &TrainConfig::warmup_steps);
    count("total_steps", &TrainConfig::total_steps);
    real("weight_decay", &TrainConfig::weight_decay);
    real("clip_norm", &TrainConfig::clip_norm);
    real("adam_beta1", &TrainConfig::adam_beta1);
    real("adam_beta2", &TrainConfig::adam_beta2);
    real("adam_eps", &TrainConfig::adam_eps);
    count("batch_size", &TrainConfig::batch_size);
    real("gamma", &TrainConfig::gamma);
    real("lambda_cgsa", &TrainConfig::lambda_cgsa);
    f.push_back({"seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
                 [](TrainConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); }});
    count("threads", &TrainConfig::threads);
    count("subgraph_radius", &TrainConfig::subgraph_radius);
    count("subgraph_max_triples", &TrainConfig::subgraph_max_triples);
    count("min_freq", &TrainConfig::min_freq);
    count("log_tail", &TrainConfig::log_tail);
    f.push_back({"describe_seed_only", [](const TrainConfig& c) { return std::string(c.describe_seed_only ? "true" : "false"); },
                 [](TrainConfig& c, const std::string& v) { c.describe_seed_only = parse_bool("describe_seed_only", v); }});
    f.push_back({"tau", [](const TrainConfig& c) { return format_double(c.cgsa.tau); },
                 [](TrainConfig& c, const std::string& v) { c.cgsa.tau = parse_number<double>("tau", v); }});
    f.push_back({"p_aug", [](const TrainConfig& c) { return format_double(c.cgsa.p_aug); },
                 [](TrainConfig& c, const std::string& v) { c.cgsa.p_aug = parse_number<double>("p_aug", v); }});
    f.push_back({"pooling", [](const TrainConfig& c) { return std::string(c.cgsa.pooling == PoolMethod::kMean ? "mean" : "bos"); },
                 [](TrainConfig& c, const std::string& v) {
                   if (v == "mean") c.cgsa.pooling = PoolMethod::kMean;
                   else if (v == "bos") c.cgsa.pooling = PoolMethod::kBos;
                   else throw ConfigError("config: pooling must be mean or bos, got '" + v + "'");
                 }});
    f.push_back({"symmetric_cgsa", [](const TrainConfig& c) { return std::string(c.cgsa.symmetric ? "true" : "false"); },
                 [](TrainConfig& c, const std::string& v) { c.cgsa.symmetric = parse_bool("symmetric_cgsa", v); }});
    f.push_back({"drop_radius", [](const TrainConfig& c) { return format_hops(c.cgsa.drop_radius); },
                 [](TrainConfig& c, const std::string& v) { c.cgsa.drop_radius = parse_hops("drop_radius", v); }});
    f.push_back({"hop_threshold", [](const TrainConfig& c) { return format_hops(c.bka.hop_threshold); },
                 [](TrainConfig& c, const std::string& v) { c.bka.hop_threshold = parse_hops("hop_threshold", v); }});
    f.push_back({"local_window", [](const TrainConfig& c) { return format_hops(c.bka.local_window); },
                 [](TrainConfig& c, const std::string& v) { c.bka.local_window = parse_hops("local_window", v); }});
    f.push_back({"text_bidirectional", [](const TrainConfig& c) { return std::string(c.bka.text_bidirectional ? "true" : "false"); },
                 [](TrainConfig& c, const std::string& v) { c.bka.text_bidirectional = parse_bool("text_bidirectional", v); }});
    auto arch = [&](std::string key, std::size_t BkaConfig::*m) {
      f.push_back({key, [m](const TrainConfig& c) { return std::to_string(c.bka.*m); },
                   [m, key](TrainConfig& c, const std::string& v) { c.bka.*m = parse_number<std::size_t>(key, v); }});
    };
    arch("layers", &BkaConfig::layers);
    arch("model_dim", &BkaConfig::model_dim);
    arch("heads", &BkaConfig::heads);
    arch("head_dim", &BkaConfig::head_dim);
    arch("ffn_dim", &BkaConfig::ffn_dim);
    arch("max_len", &BkaConfig::max_len);
    f.push_back({"dropout_p", [](const TrainConfig& c) { return format_double(c.bka.dropout_p); },
                 [](TrainConfig& c, const std::string& v) { c.bka.dropout_p = parse_number<double>("dropout_p", v); }});
    return f;
  }();
  return fields;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Applies one "key=value" assignment; unknown keys are an error.
inline void apply_setting(TrainConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("config: expected key=value, got '" + assignment + "'");
  const std::string key = detail::trim(assignment.substr(0, eq));
  const std::string value = detail::trim(assignment.substr(eq + 1));
  for (const auto& f : detail::config_fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

/// Reads key=value lines; '#' starts a comment, blank lines are skipped.
inline TrainConfig parse_config(std::istream& in, const std::string& source = "<config>", TrainConfig cfg = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    try {
      apply_setting(cfg, line);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

inline TrainConfig load_config(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  return parse_config(in, path, std::move(base));
}

/// Every key in a fixed order; parse_config(config_to_text(c)) == c.
inline std::string config_to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : detail::config_fields()) out += f.key + "=" + f.get(cfg) + "\n";
  return out;
}

inline bool operator==(const TrainConfig& a, const TrainConfig& b) { return config_to_text(a) == config_to_text(b); }

}  // namespace kgbilm
