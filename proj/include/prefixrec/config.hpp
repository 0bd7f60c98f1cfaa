#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "prefixrec/synthetic.hpp"
#include "prefixrec/trainer.hpp"

namespace prefixrec {

// Fully-resolved run configuration: built-in defaults, overlaid by the
// config file (JSON, // comments allowed), overlaid by --set flags. Unknown
// keys are rejected so typos fail loudly. The digest covers the canonical
// (key-sorted, whitespace-free) serialization, so it is stable under key
// reordering in the source file.
class RunConfig {
 public:
  static nlohmann::json defaults();
  static RunConfig load(const std::string& path);
  static RunConfig from_json(const nlohmann::json& overlay);

  // dotted.path=value; the value is parsed as JSON when possible, else taken
  // as a string.
  void set_override(const std::string& dotted_path, const std::string& value);

  void validate() const;  // ConfigError with the offending field path
  const nlohmann::json& json() const { return resolved_; }
  std::string canonical() const { return resolved_.dump(); }
  std::uint64_t digest() const { return fnv1a64(canonical()); }

  TrainConfig trainer_config() const;
  SyntheticConfig synthetic_config() const;

 private:
  nlohmann::json resolved_ = defaults();
};

}  // namespace prefixrec
