#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace kom::toml {

// Minimal TOML-subset reader covering what the manifest schema uses:
// [table] headers, [[array-of-table]] headers, key = value pairs, integers
// (decimal and 0x hex), strings, booleans, arrays and inline tables.

struct Value;
using ValuePtr = std::shared_ptr<Value>;

struct Value {
  enum class Kind { Integer, String, Boolean, Array, Table } kind = Kind::Table;
  int64_t integer = 0;
  std::string string;
  bool boolean = false;
  std::vector<ValuePtr> array;
  std::map<std::string, ValuePtr> table;
  std::vector<std::string> table_order;

  bool has(const std::string& key) const { return table.count(key) > 0; }
  const Value* get(const std::string& key) const {
    auto it = table.find(key);
    return it == table.end() ? nullptr : it->second.get();
  }
};

struct ParseError {
  int line = 0;
  std::string message;
};

struct Result {
  ValuePtr root; // null on failure
  std::vector<ParseError> errors;
  bool ok() const { return root != nullptr; }
};

Result parse(const std::string& text);

} // namespace kom::toml
