#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <set>
#include <string>

#include "edgelam/config.hpp"
#include "edgelam/error.hpp"

namespace edgelam::config {
namespace {

using nlohmann::json;

bool bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

class TomlParser {
 public:
  explicit TomlParser(std::string_view text) : s_(text) {}

  json parse() {
    root_ = json::object();
    current_ = &root_;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        header();
      } else {
        key_value(*current_);
      }
      end_of_line();
    }
    return std::move(root_);
  }

 private:
  [[noreturn]] void error(const std::string& what) const {
    fail(Errc::config_parse, "line " + std::to_string(line_) + ": " + what);
  }

  bool eof() const { return i_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[i_]; }
  char take() {
    const char c = s_[i_++];
    if (c == '\n') ++line_;
    return c;
  }

  void skip_spaces() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++i_;
  }
  void skip_comment() {
    if (peek() == '#') {
      while (!eof() && peek() != '\n') ++i_;
    }
  }
  void skip_blank_lines() {
    while (true) {
      skip_spaces();
      skip_comment();
      if (peek() == '\r') ++i_;
      if (peek() == '\n') {
        take();
        continue;
      }
      return;
    }
  }
  // Inside arrays newlines and comments are allowed between elements.
  void skip_ws_multiline() {
    while (!eof()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        take();
      } else if (c == '#') {
        skip_comment();
      } else {
        return;
      }
    }
  }

  void end_of_line() {
    skip_spaces();
    skip_comment();
    if (peek() == '\r') ++i_;
    if (eof()) return;
    if (peek() != '\n') error(std::string("unexpected character '") + peek() + "'");
    take();
  }

  std::string key_segment() {
    skip_spaces();
    if (peek() == '"') return basic_string();
    if (peek() == '\'') return literal_string();
    std::string k;
    while (!eof() && bare_key_char(peek())) k += s_[i_++];
    if (k.empty()) error("expected a key");
    return k;
  }

  std::vector<std::string> key_path() {
    std::vector<std::string> path{key_segment()};
    skip_spaces();
    while (peek() == '.') {
      ++i_;
      path.push_back(key_segment());
      skip_spaces();
    }
    return path;
  }

  static std::string join(const std::vector<std::string>& path) {
    std::string out;
    for (const auto& p : path) out += (out.empty() ? "" : ".") + p;
    return out;
  }

  // Walks intermediate tables, stepping into the last element of arrays of
  // tables and creating missing tables.
  json* descend(json* node, const std::string& key, const std::string& where) {
    if (!node->contains(key)) (*node)[key] = json::object();
    json* next = &(*node)[key];
    if (next->is_array()) {
      if (next->empty() || !next->back().is_object()) error(where + " is not a table");
      next = &next->back();
    }
    if (!next->is_object()) error(where + " is not a table");
    return next;
  }

  void header() {
    ++i_;
    const bool array = peek() == '[';
    if (array) ++i_;
    const auto path = key_path();
    if (peek() != ']') error("expected ']' after table name");
    ++i_;
    if (array) {
      if (peek() != ']') error("expected ']]' after array-of-tables name");
      ++i_;
    }
    json* node = &root_;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) node = descend(node, path[k], join({path.begin(), path.begin() + k + 1}));
    const std::string name = join(path);
    const std::string& last = path.back();
    if (array) {
      if (!node->contains(last)) (*node)[last] = json::array();
      json& arr = (*node)[last];
      if (!arr.is_array() || defined_.count(name)) error("'" + name + "' is not an array of tables");
      arr.push_back(json::object());
      current_ = &arr.back();
    } else {
      if (defined_.count(name)) error("table '" + name + "' defined twice");
      defined_.insert(name);
      if (node->contains(last) && !(*node)[last].is_object()) error("'" + name + "' is not a table");
      current_ = descend(node, last, name);
    }
  }

  void key_value(json& table) {
    const auto path = key_path();
    if (peek() != '=') error("expected '=' after key '" + join(path) + "'");
    ++i_;
    skip_spaces();
    json* node = &table;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) node = descend(node, path[k], join(path));
    if (node->contains(path.back())) error("duplicate key '" + join(path) + "'");
    (*node)[path.back()] = value();
  }

  json value() {
    const char c = peek();
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '[') return array();
    if (c == '{') return inline_table();
    std::string tok;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                      peek() == '.' || peek() == '_')) {
      tok += s_[i_++];
    }
    if (tok.empty()) error("expected a value");
    if (tok == "true") return true;
    if (tok == "false") return false;
    return number(tok);
  }

  json number(std::string tok) {
    const std::string original = tok;
    std::erase(tok, '_');
    const std::string body = (tok[0] == '+' || tok[0] == '-') ? tok.substr(1) : tok;
    const bool neg = tok[0] == '-';
    if (body == "inf") return neg ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    if (body == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (body.empty() || !std::isdigit(static_cast<unsigned char>(body[0]))) error("invalid value '" + original + "'");
    if (body.find_first_of(".eE") != std::string::npos) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) error("invalid number '" + original + "'");
      return v;
    }
    std::int64_t v = 0;
    const char* first = tok.data() + (tok[0] == '+' ? 1 : 0);
    const auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) error("invalid integer '" + original + "'");
    return v;
  }

  std::string basic_string() {
    ++i_;
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') error("unterminated string");
      const char c = s_[i_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) error("unterminated string");
      const char e = s_[i_++];
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case 'u': {
          if (i_ + 4 > s_.size()) error("short \\u escape");
          unsigned code = 0;
          const auto [p, ec] = std::from_chars(s_.data() + i_, s_.data() + i_ + 4, code, 16);
          if (ec != std::errc() || p != s_.data() + i_ + 4) error("bad \\u escape");
          i_ += 4;
          append_utf8(out, code);
          break;
        }
        default: error(std::string("unknown escape \\") + e);
      }
    }
  }

  static void append_utf8(std::string& out, unsigned code) {
    if (code < 0x80) {
      out += static_cast<char>(code);
    } else if (code < 0x800) {
      out += static_cast<char>(0xC0 | (code >> 6));
      out += static_cast<char>(0x80 | (code & 0x3F));
    } else {
      out += static_cast<char>(0xE0 | (code >> 12));
      out += static_cast<char>(0x80 | ((code >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (code & 0x3F));
    }
  }

  std::string literal_string() {
    ++i_;
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') error("unterminated string");
      const char c = s_[i_++];
      if (c == '\'') return out;
      out += c;
    }
  }

  json array() {
    ++i_;
    json arr = json::array();
    while (true) {
      skip_ws_multiline();
      if (eof()) error("unterminated array");
      if (peek() == ']') {
        ++i_;
        return arr;
      }
      arr.push_back(value());
      skip_ws_multiline();
      if (peek() == ',') {
        ++i_;
      } else if (peek() != ']') {
        error("expected ',' or ']' in array");
      }
    }
  }

  json inline_table() {
    ++i_;
    json table = json::object();
    skip_spaces();
    if (peek() == '}') {
      ++i_;
      return table;
    }
    while (true) {
      key_value(table);
      skip_spaces();
      if (peek() == ',') {
        ++i_;
        continue;
      }
      if (peek() == '}') {
        ++i_;
        return table;
      }
      error("expected ',' or '}' in inline table");
    }
  }

  std::string_view s_;
  std::size_t i_ = 0;
  std::size_t line_ = 1;
  json root_;
  json* current_ = nullptr;
  std::set<std::string> defined_;
};

}  // namespace

nlohmann::json parse_toml(std::string_view text) { return TomlParser(text).parse(); }

}  // namespace edgelam::config
