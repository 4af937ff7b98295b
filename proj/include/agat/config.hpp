#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace agat {

// Flat key-value config with [section] headers. Readers mark keys as
// consumed; anything left unconsumed is treated as a typo and rejected,
// so a misspelled hyperparameter can never silently fall back to a default.
class Config {
  public:
    static Config parse_string(const std::string& text, const std::string& origin = "<string>");
    static Config parse_file(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& section, const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    // Comma-separated triple, e.g. "0.34,0.40,0.36".
    std::array<double, 3> get_rgb(const std::string& section, const std::string& key, std::array<double, 3> fallback) const;

    void set(const std::string& section, const std::string& key, const std::string& value);
    void set_double(const std::string& section, const std::string& key, double value);
    void set_int(const std::string& section, const std::string& key, std::int64_t value);

    // Throws UsageError naming every key no reader asked for.
    void require_all_consumed() const;

    // Canonical text form: sections and keys in insertion order. Used for
    // config copies in run directories and for hashing.
    std::string serialize() const;
    std::string content_hash() const;

  private:
    struct Entry {
        std::string section, key, value;
    };
    const std::string* find(const std::string& section, const std::string& key) const;
    std::vector<Entry> entries_;
    std::string origin_;
    mutable std::set<std::string> consumed_;
};

}  // namespace agat
