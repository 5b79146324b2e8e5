#pragma once

// Flat `key = value` run configuration with documented defaults.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "gelfab/assocnet.hpp"
#include "gelfab/dataplane.hpp"
#include "gelfab/evalsuite.hpp"
#include "gelfab/ingest.hpp"
#include "gelfab/trainer.hpp"

namespace gelfab {

class RunConfig {
 public:
  /// All keys at their defaults.
  RunConfig();

  /// Parses `key = value` lines; `#` starts a comment. Throws ConfigError
  /// for unknown keys, malformed lines or values that fail validation.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::string& path);

  /// Overrides one key ("key=value" form accepted by set_assignment).
  void set(const std::string& key, const std::string& value);
  void set_assignment(const std::string& assignment);

  const std::string& get(const std::string& key) const;

  /// Typed views; throw ConfigError on bad values.
  GenerateOptions generate_options() const;
  ModelOptions model_options(std::size_t feature_dim) const;
  TrainConfig train_config() const;
  EvalConfig eval_config() const;
  IngestOptions ingest_options() const;
  int n_test() const;
  std::size_t cluster_k() const;

  /// Checks every typed view.
  void validate() const;

  /// "key = value" for every key, sorted.
  std::vector<std::string> echo() const;

  static const std::map<std::string, std::string>& defaults();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace gelfab
