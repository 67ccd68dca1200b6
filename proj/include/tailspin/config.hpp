#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tailspin {

enum class ValueType { integer, real, boolean, string };

const char* value_type_name(ValueType type) noexcept;

struct KeySpec {
  std::string key;
  ValueType type;
  std::string default_value;
  std::string doc;
  std::vector<std::string> choices;  // empty: any value of the type
  bool allows_auto = false;          // "auto" resolves to a method-dependent default
};

// Every recognised key with its default and meaning.
const std::vector<KeySpec>& config_keys();

// Flat namespaced configuration (data.*, pretrain.*, finetune.*, eval.*, run.*).
// Files hold `key = value` lines; `#` starts a comment; values may be quoted.
class ExperimentConfig {
 public:
  ExperimentConfig();

  static ExperimentConfig parse(const std::string& text, const std::vector<std::string>& overrides = {});
  // An empty path means defaults plus overrides.
  static ExperimentConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

  void set(const std::string& key, const std::string& value);
  // "key=value"
  void apply_override(const std::string& assignment);

  const std::string& raw(const std::string& key) const;
  bool is_auto(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;

  // Sorted `key = value` lines; the basis for config_hash.
  std::string resolved_text() const;
  std::uint64_t hash() const;

  // The file text as given (empty when no file was read).
  const std::string& source_text() const noexcept { return source_; }

 private:
  const KeySpec& spec(const std::string& key) const;

  std::map<std::string, std::string> values_;
  std::string source_;
};

// Levenshtein-nearest known key, for error messages.
std::string nearest_config_key(const std::string& key);

}  // namespace tailspin
