#include "agat/config.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "agat/errors.hpp"
#include "agat/serialize.hpp"

namespace agat {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse_string(const std::string& text, const std::string& origin) {
    Config cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw UsageError(origin + ":" + std::to_string(lineno) + ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty()) throw UsageError(origin + ":" + std::to_string(lineno) + ": empty section name");
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos) throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw UsageError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (section.empty()) throw UsageError(origin + ":" + std::to_string(lineno) + ": key outside any [section]");
        if (cfg.find(section, key)) throw UsageError(origin + ":" + std::to_string(lineno) + ": duplicate key " + section + "." + key);
        cfg.entries_.push_back({section, key, value});
    }
    return cfg;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_string(text, path);
}

const std::string* Config::find(const std::string& section, const std::string& key) const {
    for (const auto& e : entries_)
        if (e.section == section && e.key == key) return &e.value;
    return nullptr;
}

bool Config::has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

std::string Config::get_string(const std::string& section, const std::string& key, const std::string& fallback) const {
    const std::string* v = find(section, key);
    consumed_.insert(section + "." + key);
    return v ? *v : fallback;
}

std::int64_t Config::get_int(const std::string& section, const std::string& key, std::int64_t fallback) const {
    const std::string* v = find(section, key);
    consumed_.insert(section + "." + key);
    if (!v) return fallback;
    try {
        size_t pos = 0;
        const std::int64_t x = std::stoll(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw UsageError(origin_ + ": " + section + "." + key + ": expected integer, got '" + *v + "'");
    }
}

std::uint64_t Config::get_u64(const std::string& section, const std::string& key, std::uint64_t fallback) const {
    const std::string* v = find(section, key);
    consumed_.insert(section + "." + key);
    if (!v) return fallback;
    try {
        size_t pos = 0;
        const std::uint64_t x = std::stoull(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw UsageError(origin_ + ": " + section + "." + key + ": expected unsigned integer, got '" + *v + "'");
    }
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) const {
    const std::string* v = find(section, key);
    consumed_.insert(section + "." + key);
    if (!v) return fallback;
    try {
        size_t pos = 0;
        const double x = std::stod(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw UsageError(origin_ + ": " + section + "." + key + ": expected number, got '" + *v + "'");
    }
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    const std::string* v = find(section, key);
    consumed_.insert(section + "." + key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw UsageError(origin_ + ": " + section + "." + key + ": expected boolean, got '" + *v + "'");
}

std::array<double, 3> Config::get_rgb(const std::string& section, const std::string& key, std::array<double, 3> fallback) const {
    const std::string* v = find(section, key);
    consumed_.insert(section + "." + key);
    if (!v) return fallback;
    std::array<double, 3> out{};
    std::istringstream ss(*v);
    std::string part;
    for (int i = 0; i < 3; ++i) {
        if (!std::getline(ss, part, ',')) throw UsageError(origin_ + ": " + section + "." + key + ": expected three comma-separated numbers");
        try {
            out[i] = std::stod(part);
        } catch (...) {
            throw UsageError(origin_ + ": " + section + "." + key + ": expected three comma-separated numbers");
        }
    }
    if (std::getline(ss, part, ',')) throw UsageError(origin_ + ": " + section + "." + key + ": expected exactly three numbers");
    return out;
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
    for (auto& e : entries_)
        if (e.section == section && e.key == key) {
            e.value = value;
            return;
        }
    entries_.push_back({section, key, value});
}

void Config::set_double(const std::string& section, const std::string& key, double value) {
    std::ostringstream ss;
    ss.precision(17);
    ss << value;
    set(section, key, ss.str());
}

void Config::set_int(const std::string& section, const std::string& key, std::int64_t value) { set(section, key, std::to_string(value)); }

void Config::require_all_consumed() const {
    std::string unknown;
    for (const auto& e : entries_) {
        if (!consumed_.count(e.section + "." + e.key)) {
            if (!unknown.empty()) unknown += ", ";
            unknown += e.section + "." + e.key;
        }
    }
    if (!unknown.empty()) throw UsageError(origin_ + ": unknown config keys: " + unknown);
}

std::string Config::serialize() const {
    std::string out;
    std::string current;
    for (const auto& e : entries_) {
        if (e.section != current) {
            if (!out.empty()) out += "\n";
            out += "[" + e.section + "]\n";
            current = e.section;
        }
        out += e.key + " = " + e.value + "\n";
    }
    return out;
}

std::string Config::content_hash() const { return hash_hex(serialize()); }

}  // namespace agat
