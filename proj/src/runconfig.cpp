#include "rim/runconfig.hpp"

#include <algorithm>
#include <cstdlib>

#include "rim/common.hpp"

namespace rim {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::declare(const std::string& key, const std::string& default_value,
                        const std::string& help) {
    check(!entries_.count(key), "config: duplicate key '" + key + "'");
    entries_[key] = {default_value, help};
    order_.push_back(key);
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = entries_.find(key);
    if (it == entries_.end()) fail("config: unknown key '" + key + "'");
    it->second.value = value;
}

void RunConfig::load_file(const std::string& path) {
    for (const std::string& raw : split_lines(read_text_file(path))) {
        std::string line = raw;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        check(eq != std::string::npos, "config: bad line '" + raw + "' in " + path);
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void RunConfig::apply_overrides(const std::vector<std::pair<std::string, std::string>>& kv) {
    for (const auto& [k, v] : kv) set(k, v);
}

bool RunConfig::has(const std::string& key) const { return entries_.count(key) != 0; }

std::string RunConfig::get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) fail("config: unknown key '" + key + "'");
    return it->second.value;
}

int64_t RunConfig::get_int(const std::string& key) const {
    const std::string v = get(key);
    char* end = nullptr;
    const long long out = std::strtoll(v.c_str(), &end, 10);
    check(end && *end == '\0' && !v.empty(), "config: '" + key + "' is not an integer: " + v);
    return out;
}

double RunConfig::get_double(const std::string& key) const {
    const std::string v = get(key);
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    check(end && *end == '\0' && !v.empty(), "config: '" + key + "' is not a number: " + v);
    return out;
}

bool RunConfig::get_bool(const std::string& key) const {
    std::string v = get(key);
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail("config: '" + key + "' is not a boolean: " + v);
}

std::string RunConfig::dump() const {
    std::vector<std::string> keys;
    keys.reserve(entries_.size());
    for (const auto& [k, e] : entries_) keys.push_back(k + " = " + e.value);
    // std::map already iterates sorted; keep explicit for clarity
    std::sort(keys.begin(), keys.end());
    std::string out;
    for (const auto& line : keys) {
        out += line;
        out.push_back('\n');
    }
    return out;
}

uint64_t RunConfig::hash() const { return fnv1a(dump()); }

std::string RunConfig::help_text() const {
    std::string out;
    for (const std::string& key : order_) {
        const Entry& e = entries_.at(key);
        out += "  " + key + " (default: " + (e.value.empty() ? "<empty>" : e.value) + ")";
        if (!e.help.empty()) out += "  " + e.help;
        out.push_back('\n');
    }
    return out;
}

std::pair<std::string, std::string> parse_key_value(const std::string& text) {
    size_t eq = text.find('=');
    check(eq != std::string::npos && eq > 0, "expected key=value, got '" + text + "'");
    return {text.substr(0, eq), text.substr(eq + 1)};
}

}  // namespace rim
