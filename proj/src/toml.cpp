#include "kom/toml.hpp"

#include <cctype>
#include <sstream>

namespace kom::toml {

namespace {

struct Cursor {
  const std::string& s;
  size_t pos = 0;
  int line;
  std::vector<ParseError>* errors;
  bool failed = false;

  void error(const std::string& msg) {
    if (!failed) errors->push_back({line, msg});
    failed = true;
  }
  void skip_ws() {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) pos++;
  }
  bool at_end() {
    skip_ws();
    return pos >= s.size() || s[pos] == '#';
  }
  char peek() {
    skip_ws();
    return pos < s.size() ? s[pos] : '\0';
  }
  bool accept(char c) {
    skip_ws();
    if (pos < s.size() && s[pos] == c) {
      pos++;
      return true;
    }
    return false;
  }
  bool expect(char c) {
    if (accept(c)) return true;
    error(std::string("expected '") + c + "'");
    return false;
  }
};

std::string parse_key(Cursor& c) {
  c.skip_ws();
  std::string key;
  while (c.pos < c.s.size() &&
         (std::isalnum(static_cast<unsigned char>(c.s[c.pos])) || c.s[c.pos] == '_' ||
          c.s[c.pos] == '-' || c.s[c.pos] == '.')) {
    key += c.s[c.pos++];
  }
  if (key.empty()) c.error("expected key");
  return key;
}

ValuePtr parse_value(Cursor& c);

ValuePtr parse_array(Cursor& c) {
  auto v = std::make_shared<Value>();
  v->kind = Value::Kind::Array;
  c.expect('[');
  if (c.accept(']')) return v;
  while (true) {
    ValuePtr elem = parse_value(c);
    if (!elem) return nullptr;
    v->array.push_back(elem);
    if (c.accept(']')) break;
    if (!c.expect(',')) return nullptr;
    if (c.accept(']')) break; // trailing comma
  }
  return v;
}

ValuePtr parse_inline_table(Cursor& c) {
  auto v = std::make_shared<Value>();
  v->kind = Value::Kind::Table;
  c.expect('{');
  if (c.accept('}')) return v;
  while (true) {
    std::string key = parse_key(c);
    if (c.failed) return nullptr;
    if (!c.expect('=')) return nullptr;
    ValuePtr val = parse_value(c);
    if (!val) return nullptr;
    v->table[key] = val;
    v->table_order.push_back(key);
    if (c.accept('}')) break;
    if (!c.expect(',')) return nullptr;
  }
  return v;
}

ValuePtr parse_value(Cursor& c) {
  char ch = c.peek();
  if (ch == '[') return parse_array(c);
  if (ch == '{') return parse_inline_table(c);
  if (ch == '"') {
    c.pos++;
    auto v = std::make_shared<Value>();
    v->kind = Value::Kind::String;
    while (c.pos < c.s.size() && c.s[c.pos] != '"') {
      if (c.s[c.pos] == '\\' && c.pos + 1 < c.s.size()) c.pos++;
      v->string += c.s[c.pos++];
    }
    if (c.pos >= c.s.size()) {
      c.error("unterminated string");
      return nullptr;
    }
    c.pos++;
    return v;
  }
  if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '-' || ch == '+') {
    auto v = std::make_shared<Value>();
    v->kind = Value::Kind::Integer;
    bool neg = false;
    if (ch == '-' || ch == '+') {
      neg = ch == '-';
      c.pos++;
    }
    c.skip_ws();
    uint64_t acc = 0;
    if (c.pos + 1 < c.s.size() && c.s[c.pos] == '0' &&
        (c.s[c.pos + 1] == 'x' || c.s[c.pos + 1] == 'X')) {
      c.pos += 2;
      size_t start = c.pos;
      while (c.pos < c.s.size() && (std::isxdigit(static_cast<unsigned char>(c.s[c.pos])) ||
                                    c.s[c.pos] == '_')) {
        if (c.s[c.pos] != '_')
          acc = acc * 16 + (std::isdigit(static_cast<unsigned char>(c.s[c.pos]))
                                ? c.s[c.pos] - '0'
                                : std::tolower(c.s[c.pos]) - 'a' + 10);
        c.pos++;
      }
      if (c.pos == start) {
        c.error("malformed hex integer");
        return nullptr;
      }
    } else {
      size_t start = c.pos;
      while (c.pos < c.s.size() &&
             (std::isdigit(static_cast<unsigned char>(c.s[c.pos])) || c.s[c.pos] == '_')) {
        if (c.s[c.pos] != '_') acc = acc * 10 + (c.s[c.pos] - '0');
        c.pos++;
      }
      if (c.pos == start) {
        c.error("malformed integer");
        return nullptr;
      }
    }
    v->integer = neg ? -static_cast<int64_t>(acc) : static_cast<int64_t>(acc);
    return v;
  }
  if (std::isalpha(static_cast<unsigned char>(ch))) {
    std::string word = parse_key(c);
    auto v = std::make_shared<Value>();
    if (word == "true" || word == "false") {
      v->kind = Value::Kind::Boolean;
      v->boolean = word == "true";
      return v;
    }
    c.error("unexpected bare word '" + word + "'");
    return nullptr;
  }
  c.error("expected value");
  return nullptr;
}

Value* descend(Value* root, const std::string& dotted,
               std::vector<ParseError>* errors, int line) {
  Value* cur = root;
  std::istringstream parts(dotted);
  std::string part;
  while (std::getline(parts, part, '.')) {
    auto it = cur->table.find(part);
    if (it == cur->table.end()) {
      auto nv = std::make_shared<Value>();
      nv->kind = Value::Kind::Table;
      cur->table[part] = nv;
      cur->table_order.push_back(part);
      cur = nv.get();
    } else {
      Value* next = it->second.get();
      if (next->kind == Value::Kind::Array) {
        if (next->array.empty()) {
          errors->push_back({line, "table path through empty array"});
          return nullptr;
        }
        next = next->array.back().get();
      }
      if (next->kind != Value::Kind::Table) {
        errors->push_back({line, "key '" + part + "' is not a table"});
        return nullptr;
      }
      cur = next;
    }
  }
  return cur;
}

} // namespace

namespace {

// Joins physical lines while array/inline-table brackets are open so values
// may span lines. Comments are stripped (string-aware) before counting.
std::vector<std::pair<int, std::string>> logical_lines(const std::string& text) {
  std::vector<std::pair<int, std::string>> out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  int depth = 0;
  int start_line = 0;
  std::string acc;
  while (std::getline(is, line)) {
    lineno++;
    std::string stripped;
    bool in_string = false;
    for (size_t i = 0; i < line.size(); i++) {
      char c = line[i];
      if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
      if (c == '#' && !in_string) break;
      stripped += c;
      if (!in_string && (c == '[' || c == '{')) depth++;
      if (!in_string && (c == ']' || c == '}')) depth--;
    }
    if (acc.empty()) {
      acc = stripped;
      start_line = lineno;
    } else {
      acc += " " + stripped;
    }
    if (depth <= 0) {
      out.push_back({start_line, acc});
      acc.clear();
      depth = 0;
    }
  }
  if (!acc.empty()) out.push_back({start_line, acc});
  return out;
}

} // namespace

Result parse(const std::string& text) {
  Result result;
  result.root = std::make_shared<Value>();
  result.root->kind = Value::Kind::Table;
  Value* current = result.root.get();

  for (const auto& [lineno, line] : logical_lines(text)) {
    Cursor c{line, 0, lineno, &result.errors};
    if (c.at_end()) continue;

    if (c.peek() == '[') {
      c.accept('[');
      bool array_table = c.accept('[');
      std::string name = parse_key(c);
      if (c.failed) continue;
      if (!c.expect(']')) continue;
      if (array_table && !c.expect(']')) continue;
      if (!c.at_end()) {
        c.error("trailing characters after table header");
        continue;
      }
      if (array_table) {
        Value* parent = result.root.get();
        std::string last = name;
        auto dot = name.rfind('.');
        if (dot != std::string::npos) {
          parent = descend(result.root.get(), name.substr(0, dot), &result.errors, lineno);
          last = name.substr(dot + 1);
          if (!parent) continue;
        }
        auto it = parent->table.find(last);
        Value* arr;
        if (it == parent->table.end()) {
          auto nv = std::make_shared<Value>();
          nv->kind = Value::Kind::Array;
          parent->table[last] = nv;
          parent->table_order.push_back(last);
          arr = nv.get();
        } else {
          arr = it->second.get();
          if (arr->kind != Value::Kind::Array) {
            result.errors.push_back({lineno, "'" + name + "' is not an array of tables"});
            continue;
          }
        }
        auto entry = std::make_shared<Value>();
        entry->kind = Value::Kind::Table;
        arr->array.push_back(entry);
        current = entry.get();
      } else {
        current = descend(result.root.get(), name, &result.errors, lineno);
        if (!current) current = result.root.get();
      }
      continue;
    }

    std::string key = parse_key(c);
    if (c.failed) continue;
    if (!c.expect('=')) continue;
    ValuePtr value = parse_value(c);
    if (!value) continue;
    if (!c.at_end()) {
      c.error("trailing characters after value");
      continue;
    }
    if (current->table.count(key)) {
      result.errors.push_back({lineno, "duplicate key '" + key + "'"});
      continue;
    }
    current->table[key] = value;
    current->table_order.push_back(key);
  }

  if (!result.errors.empty()) result.root = nullptr;
  return result;
}

} // namespace kom::toml
