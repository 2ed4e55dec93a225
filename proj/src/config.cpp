#include "tastesim/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "tastesim/csv.hpp"

namespace tastesim::config {

const std::string& Value::as_string() const {
    if (!is_string()) throw ConfigError("config value is not a string");
    return std::get<std::string>(data);
}

std::int64_t Value::as_int() const {
    if (!is_int()) throw ConfigError("config value is not an integer");
    return std::get<std::int64_t>(data);
}

double Value::as_float() const {
    if (is_int()) return static_cast<double>(std::get<std::int64_t>(data));
    if (!is_float()) throw ConfigError("config value is not a number");
    return std::get<double>(data);
}

bool Value::as_bool() const {
    if (!is_bool()) throw ConfigError("config value is not a boolean");
    return std::get<bool>(data);
}

const Array& Value::as_array() const {
    if (!is_array()) throw ConfigError("config value is not an array");
    return std::get<Array>(data);
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Strips a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view s) {
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_string = !in_string;
        else if (s[i] == '#' && !in_string) return s.substr(0, i);
    }
    return s;
}

Value parse_scalar(std::string_view text, std::size_t line_no);

Value parse_array(std::string_view text, std::size_t line_no) {
    Array items;
    std::string_view inner = trim(text.substr(1, text.size() - 2));
    std::size_t start = 0;
    bool in_string = false;
    if (!inner.empty()) {
        for (std::size_t i = 0; i <= inner.size(); ++i) {
            bool at_end = i == inner.size();
            if (!at_end && inner[i] == '"') in_string = !in_string;
            if (at_end || (inner[i] == ',' && !in_string)) {
                auto piece = trim(inner.substr(start, i - start));
                if (!piece.empty()) items.push_back(parse_scalar(piece, line_no));
                start = i + 1;
            }
        }
    }
    return Value{std::move(items)};
}

Value parse_scalar(std::string_view text, std::size_t line_no) {
    if (text.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty value");
    if (text.front() == '[') {
        if (text.back() != ']') {
            throw ConfigError("config line " + std::to_string(line_no) + ": unterminated array");
        }
        return parse_array(text, line_no);
    }
    if (text.front() == '"') {
        if (text.size() < 2 || text.back() != '"') {
            throw ConfigError("config line " + std::to_string(line_no) + ": unterminated string");
        }
        std::string out;
        for (std::size_t i = 1; i + 1 < text.size(); ++i) {
            if (text[i] == '\\' && i + 2 < text.size()) {
                ++i;
                switch (text[i]) {
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    case '"': out.push_back('"'); break;
                    case '\\': out.push_back('\\'); break;
                    default:
                        throw ConfigError("config line " + std::to_string(line_no) +
                                          ": bad escape");
                }
            } else {
                out.push_back(text[i]);
            }
        }
        return Value{std::move(out)};
    }
    if (text == "true") return Value{true};
    if (text == "false") return Value{false};
    // integer, then float
    {
        std::int64_t v = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec == std::errc() && ptr == text.data() + text.size()) return Value{v};
    }
    {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec == std::errc() && ptr == text.data() + text.size()) return Value{v};
    }
    throw ConfigError("config line " + std::to_string(line_no) + ": cannot parse value '" +
                      std::string(text) + "'");
}

}  // namespace

Table parse_toml(const std::string& text) {
    Table table;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        auto line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": unterminated section header");
            }
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section.empty()) {
                throw ConfigError("config line " + std::to_string(line_no) + ": empty section");
            }
            table[section];  // register even when empty
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key(trim(line.substr(0, eq)));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        }
        auto value = parse_scalar(trim(line.substr(eq + 1)), line_no);
        table[section][key] = std::move(value);
    }
    return table;
}

Table parse_toml_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_toml(buf.str());
}

namespace {

std::string serialize_value(const Value& v) {
    if (v.is_string()) {
        std::string out = "\"";
        for (char c : v.as_string()) {
            switch (c) {
                case '"': out += "\\\""; break;
                case '\\': out += "\\\\"; break;
                case '\n': out += "\\n"; break;
                case '\t': out += "\\t"; break;
                default: out.push_back(c);
            }
        }
        out += '"';
        return out;
    }
    if (v.is_int()) return std::to_string(v.as_int());
    if (v.is_float()) return format_double(std::get<double>(v.data));
    if (v.is_bool()) return v.as_bool() ? "true" : "false";
    std::string out = "[";
    const auto& arr = v.as_array();
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (i) out += ", ";
        out += serialize_value(arr[i]);
    }
    out += ']';
    return out;
}

}  // namespace

std::string serialize_toml(const Table& table) {
    std::string out;
    auto emit_section = [&out](const std::string& name, const Section& section) {
        if (!name.empty()) out += "[" + name + "]\n";
        for (const auto& [key, value] : section) {
            out += key + " = " + serialize_value(value) + "\n";
        }
    };
    // std::map keeps sections and keys sorted, which makes this canonical.
    auto root = table.find("");
    if (root != table.end()) emit_section("", root->second);
    for (const auto& [name, section] : table) {
        if (name.empty()) continue;
        emit_section(name, section);
    }
    return out;
}

std::string get_string(const Table& t, const std::string& section, const std::string& key,
                       const std::string& fallback) {
    auto s = t.find(section);
    if (s == t.end()) return fallback;
    auto v = s->second.find(key);
    if (v == s->second.end()) return fallback;
    return v->second.as_string();
}

std::int64_t get_int(const Table& t, const std::string& section, const std::string& key,
                     std::int64_t fallback) {
    auto s = t.find(section);
    if (s == t.end()) return fallback;
    auto v = s->second.find(key);
    if (v == s->second.end()) return fallback;
    return v->second.as_int();
}

double get_float(const Table& t, const std::string& section, const std::string& key,
                 double fallback) {
    auto s = t.find(section);
    if (s == t.end()) return fallback;
    auto v = s->second.find(key);
    if (v == s->second.end()) return fallback;
    return v->second.as_float();
}

bool get_bool(const Table& t, const std::string& section, const std::string& key, bool fallback) {
    auto s = t.find(section);
    if (s == t.end()) return fallback;
    auto v = s->second.find(key);
    if (v == s->second.end()) return fallback;
    return v->second.as_bool();
}

bool has_key(const Table& t, const std::string& section, const std::string& key) {
    auto s = t.find(section);
    return s != t.end() && s->second.count(key) > 0;
}

}  // namespace tastesim::config
