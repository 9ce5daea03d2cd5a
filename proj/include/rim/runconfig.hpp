#pragma once

// Flat key=value run configuration.
//
// Files hold one `key = value` per line ('#' comments allowed); every key can
// be overridden from the command line.  Commands register the keys they
// understand; unknown keys are rejected so typos fail loudly.  The resolved
// config is written into the run directory and hashed (FNV-1a over sorted
// key=value lines) so artifacts can be matched to the exact settings that
// produced them.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace rim {

class RunConfig {
public:
    RunConfig() = default;

    /// Declare a key with its default (registration order is kept for dumps).
    void declare(const std::string& key, const std::string& default_value,
                 const std::string& help = "");

    void load_file(const std::string& path);                  // applies overrides
    void set(const std::string& key, const std::string& value);  // throws on unknown key
    void apply_overrides(const std::vector<std::pair<std::string, std::string>>& kv);

    bool has(const std::string& key) const;
    std::string get(const std::string& key) const;
    int64_t get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;  // true/false/1/0/yes/no

    std::string dump() const;      // sorted key = value lines
    uint64_t hash() const;         // over dump()
    std::string help_text() const;

private:
    struct Entry {
        std::string value;
        std::string help;
    };
    std::map<std::string, Entry> entries_;
    std::vector<std::string> order_;
};

/// Parse "key=value" (as used for --set command-line overrides).
std::pair<std::string, std::string> parse_key_value(const std::string& text);

}  // namespace rim
