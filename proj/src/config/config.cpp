#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

#include "edgelam/config.hpp"
#include "edgelam/io.hpp"

namespace edgelam::config {
namespace {

using nlohmann::json;

std::string type_name(Type t) {
  switch (t) {
    case Type::boolean: return "a boolean";
    case Type::integer: return "a non-negative integer";
    case Type::number: return "a finite number";
    case Type::string: return "a string";
    case Type::integer_list: return "a list of non-negative integers";
    case Type::number_list: return "a list of numbers";
    case Type::string_list: return "a list of strings";
    case Type::pair_list: return "a list of [x, y] number pairs";
    case Type::table: return "a table";
    case Type::table_list: return "a list of tables";
  }
  return "a value";
}

bool is_integer(const json& v) { return v.is_number_integer() && (v.is_number_unsigned() || v.get<std::int64_t>() >= 0); }
bool is_finite_number(const json& v) { return v.is_number() && std::isfinite(v.get<double>()); }

class Resolver {
 public:
  explicit Resolver(std::vector<Problem>* sink) : sink_(sink) {}

  void report(Errc code, std::string message) {
    if (!sink_) fail(code, message);
    sink_->push_back({code, std::move(message)});
  }

  json table(const json& raw, const std::vector<Field>& schema, const std::string& path) {
    json out = json::object();
    if (!raw.is_object()) {
      report(Errc::config_parse, where(path) + " must be " + type_name(Type::table));
      return out;
    }
    std::vector<std::string> names;
    for (const auto& f : schema) names.push_back(f.name);
    for (const auto& [key, _] : raw.items()) {
      if (std::find(names.begin(), names.end(), key) != names.end()) continue;
      std::string msg = "unknown key '" + join(path, key) + "'";
      const auto near = nearest(key, names);
      if (!near.empty()) msg += "; did you mean '" + join(path, near) + "'?";
      report(Errc::config_parse, msg);
    }
    for (const auto& f : schema) {
      const std::string full = join(path, f.name);
      if (!raw.contains(f.name)) {
        if (f.required) {
          report(Errc::config_parse, "missing required key '" + full + "'");
        } else if (f.type == Type::table) {
          out[f.name] = table(json::object(), f.children, full);
        } else {
          out[f.name] = f.fallback;
        }
        continue;
      }
      out[f.name] = value(raw.at(f.name), f, full);
    }
    return out;
  }

 private:
  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }
  static std::string where(const std::string& path) { return path.empty() ? "the config" : "'" + path + "'"; }

  json value(const json& v, const Field& f, const std::string& path) {
    const auto bad = [&] {
      report(Errc::config_parse, "'" + path + "' must be " + type_name(f.type));
      return f.fallback;
    };
    switch (f.type) {
      case Type::boolean:
        return v.is_boolean() ? v : bad();
      case Type::integer:
        return is_integer(v) ? json(v.get<std::uint64_t>()) : bad();
      case Type::number:
        return is_finite_number(v) ? json(v.get<double>()) : bad();
      case Type::string:
        return v.is_string() ? v : bad();
      case Type::integer_list:
      case Type::number_list:
      case Type::string_list: {
        if (!v.is_array()) return bad();
        json out = json::array();
        for (const auto& e : v) {
          if (f.type == Type::integer_list && is_integer(e)) {
            out.push_back(e.get<std::uint64_t>());
          } else if (f.type == Type::number_list && is_finite_number(e)) {
            out.push_back(e.get<double>());
          } else if (f.type == Type::string_list && e.is_string()) {
            out.push_back(e);
          } else {
            return bad();
          }
        }
        return out;
      }
      case Type::pair_list: {
        if (!v.is_array()) return bad();
        json out = json::array();
        for (const auto& e : v) {
          if (!e.is_array() || e.size() != 2 || !is_finite_number(e[0]) || !is_finite_number(e[1])) return bad();
          out.push_back({e[0].get<double>(), e[1].get<double>()});
        }
        return out;
      }
      case Type::table:
        return table(v, f.children, path);
      case Type::table_list: {
        if (!v.is_array()) return bad();
        json out = json::array();
        for (std::size_t i = 0; i < v.size(); ++i) {
          out.push_back(table(v[i], f.children, path + "[" + std::to_string(i) + "]"));
        }
        return out;
      }
    }
    return bad();
  }

  std::vector<Problem>* sink_;
};

json& step_into(json& node, const std::string& seg, const std::string& full) {
  if (node.is_array()) {
    std::size_t idx = 0;
    if (seg.empty() || !std::all_of(seg.begin(), seg.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      fail(Errc::config_parse, "override '" + full + "': '" + seg + "' is not an array index");
    }
    idx = std::stoul(seg);
    if (idx >= node.size()) fail(Errc::config_parse, "override '" + full + "': index " + seg + " out of range");
    return node[idx];
  }
  if (node.is_null()) node = json::object();
  if (!node.is_object()) fail(Errc::config_parse, "override '" + full + "': cannot descend into a value");
  return node[seg];
}

}  // namespace

nlohmann::json parse_text(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos || text[first] != '{') return parse_toml(text);
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(Errc::config_parse, "invalid JSON configuration");
  if (j.is_object() && j.contains("config") && j.contains("subcommand") && j.contains("outputs")) {
    return j.at("config");
  }
  return j;
}

nlohmann::json load_file(const std::filesystem::path& path) {
  return parse_text(io::read_file(path));
}

void apply_override(nlohmann::json& raw, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    fail(Errc::config_parse, "override '" + std::string(assignment) + "' must look like key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = parse_toml("v = " + text).at("v");
  } catch (const Error&) {
    value = text;
  }
  std::vector<std::string> segs;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    segs.push_back(key.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json* node = &raw;
  for (const auto& s : segs) node = &step_into(*node, s, key);
  *node = std::move(value);
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string nearest(std::string_view key, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (const auto& c : candidates) {
    const auto d = levenshtein(key, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

Field required(std::string name, Type type) { return Field{std::move(name), type, nullptr, true, {}}; }
Field optional(std::string name, Type type, nlohmann::json fallback) {
  return Field{std::move(name), type, std::move(fallback), false, {}};
}
Field table(std::string name, std::vector<Field> children) {
  return Field{std::move(name), Type::table, nlohmann::json::object(), false, std::move(children)};
}
Field table_list(std::string name, std::vector<Field> children, bool is_required) {
  return Field{std::move(name), Type::table_list, nlohmann::json::array(), is_required, std::move(children)};
}

nlohmann::json resolve_table(const nlohmann::json& raw, const std::vector<Field>& schema,
                             const std::string& path, std::vector<Problem>* problems) {
  return Resolver(problems).table(raw, schema, path);
}

}  // namespace edgelam::config
