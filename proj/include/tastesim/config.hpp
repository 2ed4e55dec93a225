#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "tastesim/common.hpp"

namespace tastesim::config {

// Minimal TOML subset: [section] headers, key = value with strings, integers,
// floats, booleans and flat arrays, '#' comments. Enough for pipeline configs.
struct Value;
using Array = std::vector<Value>;

struct Value {
    std::variant<std::string, std::int64_t, double, bool, Array> data;

    bool is_string() const { return std::holds_alternative<std::string>(data); }
    bool is_int() const { return std::holds_alternative<std::int64_t>(data); }
    bool is_float() const { return std::holds_alternative<double>(data); }
    bool is_bool() const { return std::holds_alternative<bool>(data); }
    bool is_array() const { return std::holds_alternative<Array>(data); }

    const std::string& as_string() const;
    std::int64_t as_int() const;
    double as_float() const;  // accepts integers
    bool as_bool() const;
    const Array& as_array() const;
};

using Section = std::map<std::string, Value>;
using Table = std::map<std::string, Section>;

Table parse_toml(const std::string& text);
Table parse_toml_file(const std::string& path);

// Canonical re-serialization: sorted sections and keys, round-trip floats.
std::string serialize_toml(const Table& table);

// Typed lookups with defaults; throw ConfigError on type mismatch.
std::string get_string(const Table& t, const std::string& section, const std::string& key,
                       const std::string& fallback);
std::int64_t get_int(const Table& t, const std::string& section, const std::string& key,
                     std::int64_t fallback);
double get_float(const Table& t, const std::string& section, const std::string& key,
                 double fallback);
bool get_bool(const Table& t, const std::string& section, const std::string& key, bool fallback);
bool has_key(const Table& t, const std::string& section, const std::string& key);

}  // namespace tastesim::config
