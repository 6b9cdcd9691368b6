#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "fidfix/common.hpp"
#include "fidfix/model.hpp"

namespace fidfix {

// One run configuration: file paths, model hyperparameters, and stage
// options. Populated from a `key = value` config file with flag overrides.
struct RunConfig {
  // paths
  std::string dataset;
  std::string kb;
  std::string vocab;
  std::string checkpoint;
  std::string init_checkpoint;
  std::string out_dir = "out";
  std::string bugfix_dataset;
  std::string predictions;
  std::string baseline;
  std::string ast_dir;
  std::string top10_file;

  ModelConfig model;

  // stage options
  std::size_t max_pairs = 4;
  std::size_t vocab_budget = 4096;
  int gen_max_len = 64;
  int jobs = 1;
  std::string groups;  // empty | length | frequency | risk
  int length_threshold = 449;
  std::string fixgen_mode = "stub";  // stub | recorded | live
  std::string fixgen_endpoint;
  std::string fixgen_model = "fix-generator";
  std::string fixgen_transcript;
};

using ConfigMap = std::map<std::string, std::string>;

inline ConfigMap parse_config_file(const std::string& path) {
  ConfigMap map;
  auto lines = split_lines(read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = rtrim(lines[i]);
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(path + ":" + std::to_string(i + 1) + ": expected key = value");
    }
    std::string key = rtrim(line.substr(first, eq - first));
    std::size_t vstart = line.find_first_not_of(" \t", eq + 1);
    std::string value = vstart == std::string::npos ? "" : line.substr(vstart);
    map[key] = value;
  }
  return map;
}

namespace configdetail {

inline int to_int(const std::string& key, const std::string& value) {
  try {
    return std::stoi(value);
  } catch (const std::exception&) {
    throw InputError("config error: field '" + key + "': not an integer: " + value);
  }
}

inline double to_double(const std::string& key, const std::string& value) {
  try {
    return std::stod(value);
  } catch (const std::exception&) {
    throw InputError("config error: field '" + key + "': not a number: " + value);
  }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    return std::stoull(value);
  } catch (const std::exception&) {
    throw InputError("config error: field '" + key + "': not an integer: " + value);
  }
}

}  // namespace configdetail

inline RunConfig config_from_map(const ConfigMap& map) {
  RunConfig cfg;
  for (const auto& [key, value] : map) {
    using namespace configdetail;
    if (key == "dataset") cfg.dataset = value;
    else if (key == "kb") cfg.kb = value;
    else if (key == "vocab") cfg.vocab = value;
    else if (key == "checkpoint") cfg.checkpoint = value;
    else if (key == "init_checkpoint") cfg.init_checkpoint = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "bugfix_dataset") cfg.bugfix_dataset = value;
    else if (key == "predictions") cfg.predictions = value;
    else if (key == "baseline") cfg.baseline = value;
    else if (key == "ast_dir") cfg.ast_dir = value;
    else if (key == "top10_file") cfg.top10_file = value;
    else if (key == "d_model") cfg.model.d_model = to_int(key, value);
    else if (key == "n_heads") cfg.model.n_heads = to_int(key, value);
    else if (key == "n_enc_layers") cfg.model.n_enc_layers = to_int(key, value);
    else if (key == "n_dec_layers") cfg.model.n_dec_layers = to_int(key, value);
    else if (key == "ffn_dim") cfg.model.ffn_dim = to_int(key, value);
    else if (key == "segment_len") cfg.model.segment_len = to_int(key, value);
    else if (key == "max_segments") cfg.model.max_segments = to_int(key, value);
    else if (key == "seed") cfg.model.seed = to_u64(key, value);
    else if (key == "learning_rate") cfg.model.learning_rate = to_double(key, value);
    else if (key == "weight_decay") cfg.model.weight_decay = to_double(key, value);
    else if (key == "batch_size") cfg.model.batch_size = to_int(key, value);
    else if (key == "epochs") cfg.model.epochs = to_int(key, value);
    else if (key == "max_pairs") cfg.max_pairs = static_cast<std::size_t>(to_int(key, value));
    else if (key == "vocab_budget") cfg.vocab_budget = static_cast<std::size_t>(to_int(key, value));
    else if (key == "gen_max_len") cfg.gen_max_len = to_int(key, value);
    else if (key == "jobs") cfg.jobs = to_int(key, value);
    else if (key == "groups") cfg.groups = value;
    else if (key == "length_threshold") cfg.length_threshold = to_int(key, value);
    else if (key == "fixgen_mode") cfg.fixgen_mode = value;
    else if (key == "fixgen_endpoint") cfg.fixgen_endpoint = value;
    else if (key == "fixgen_model") cfg.fixgen_model = value;
    else if (key == "fixgen_transcript") cfg.fixgen_transcript = value;
    else throw InputError("config error: unknown key '" + key + "'");
  }
  return cfg;
}

// Canonical serialization of the effective configuration; hashing it ties
// every artifact back to the exact settings that produced it.
inline std::string canonical_config(const RunConfig& c) {
  std::map<std::string, std::string> kv;
  kv["dataset"] = c.dataset;
  kv["kb"] = c.kb;
  kv["vocab"] = c.vocab;
  kv["checkpoint"] = c.checkpoint;
  kv["init_checkpoint"] = c.init_checkpoint;
  kv["out_dir"] = c.out_dir;
  kv["bugfix_dataset"] = c.bugfix_dataset;
  kv["predictions"] = c.predictions;
  kv["baseline"] = c.baseline;
  kv["ast_dir"] = c.ast_dir;
  kv["top10_file"] = c.top10_file;
  kv["d_model"] = std::to_string(c.model.d_model);
  kv["n_heads"] = std::to_string(c.model.n_heads);
  kv["n_enc_layers"] = std::to_string(c.model.n_enc_layers);
  kv["n_dec_layers"] = std::to_string(c.model.n_dec_layers);
  kv["ffn_dim"] = std::to_string(c.model.ffn_dim);
  kv["vocab_size"] = std::to_string(c.model.vocab_size);
  kv["segment_len"] = std::to_string(c.model.segment_len);
  kv["max_segments"] = std::to_string(c.model.max_segments);
  kv["seed"] = std::to_string(c.model.seed);
  kv["learning_rate"] = std::to_string(c.model.learning_rate);
  kv["weight_decay"] = std::to_string(c.model.weight_decay);
  kv["batch_size"] = std::to_string(c.model.batch_size);
  kv["epochs"] = std::to_string(c.model.epochs);
  kv["max_pairs"] = std::to_string(c.max_pairs);
  kv["vocab_budget"] = std::to_string(c.vocab_budget);
  kv["gen_max_len"] = std::to_string(c.gen_max_len);
  kv["jobs"] = std::to_string(c.jobs);
  kv["groups"] = c.groups;
  kv["length_threshold"] = std::to_string(c.length_threshold);
  kv["fixgen_mode"] = c.fixgen_mode;
  kv["fixgen_endpoint"] = c.fixgen_endpoint;
  kv["fixgen_model"] = c.fixgen_model;
  kv["fixgen_transcript"] = c.fixgen_transcript;
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

inline std::string config_hash(const RunConfig& c) { return to_hex(fnv1a64(canonical_config(c))); }

inline void require_file(const std::string& field, const std::string& path) {
  if (path.empty()) {
    throw InputError("config error: field '" + field + "': required but not set");
  }
  if (!std::filesystem::exists(path)) {
    throw InputError("config error: field '" + field + "': file not found: " + path);
  }
}

}  // namespace fidfix
