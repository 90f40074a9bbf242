#pragma once

// Scenario configuration: a TOML subset parsed into JSON, dotted-path
// overrides, and schema resolution (defaults filled, unknown keys rejected).

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "edgelam/error.hpp"

namespace edgelam::config {

// Tables, arrays of tables, dotted keys, basic and literal strings, integers,
// floats (incl. inf/nan), booleans, arrays and inline tables. Throws
// config-parse with the offending line.
nlohmann::json parse_toml(std::string_view text);

// TOML unless the first non-blank character is '{', in which case JSON. A
// run manifest is unwrapped to the config it echoes.
nlohmann::json parse_text(std::string_view text);
nlohmann::json load_file(const std::filesystem::path& path);

// "a.b.c=value"; numeric segments index arrays. The value is read as a TOML
// value, falling back to a bare string.
void apply_override(nlohmann::json& raw, std::string_view assignment);

std::size_t levenshtein(std::string_view a, std::string_view b);
// Closest candidate by edit distance, ties to the earliest; empty if none.
std::string nearest(std::string_view key, const std::vector<std::string>& candidates);

enum class Type {
  boolean,
  integer,      // non-negative
  number,       // finite
  string,
  integer_list,
  number_list,
  string_list,
  pair_list,    // [[x, y], ...] of numbers
  table,
  table_list,
};

struct Field {
  std::string name;
  Type type = Type::number;
  nlohmann::json fallback;       // default; ignored when required
  bool required = false;
  std::vector<Field> children;   // table and table_list
};

Field required(std::string name, Type type);
Field optional(std::string name, Type type, nlohmann::json fallback);
Field table(std::string name, std::vector<Field> children);
Field table_list(std::string name, std::vector<Field> children, bool required = false);

struct Problem {
  Errc code;
  std::string message;
};

// Resolves one table against its schema. Problems are appended to `problems`
// when given, otherwise the first one is thrown.
nlohmann::json resolve_table(const nlohmann::json& raw, const std::vector<Field>& schema,
                             const std::string& path, std::vector<Problem>* problems = nullptr);

}  // namespace edgelam::config
