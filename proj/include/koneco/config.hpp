#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "koneco/error.hpp"
#include "koneco/util.hpp"

namespace koneco {

// INI-style key=value file with [section] headers. Keys before any header
// land in the "" section. '#' and ';' start comments.
struct Config {
    std::map<std::string, std::map<std::string, std::string>> sections;

    static Config parse(std::string_view text) {
        Config cfg;
        std::string section;
        std::size_t line_no = 0;
        for (const auto& raw : split(text, '\n')) {
            ++line_no;
            std::string_view line = trim(raw);
            if (line.empty() || line.front() == '#' || line.front() == ';') continue;
            if (line.front() == '[') {
                auto close = line.find(']');
                if (close == std::string_view::npos)
                    throw ArgumentError("config line " + std::to_string(line_no) + ": unterminated section header");
                section = std::string(trim(line.substr(1, close - 1)));
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string_view::npos)
                throw ArgumentError("config line " + std::to_string(line_no) + ": expected key = value");
            std::string key(trim(line.substr(0, eq)));
            std::string value(trim(line.substr(eq + 1)));
            if (key.empty())
                throw ArgumentError("config line " + std::to_string(line_no) + ": empty key");
            cfg.sections[section][key] = value;
        }
        return cfg;
    }

    static Config load(const std::string& path) { return parse(read_file(path)); }

    std::optional<std::string> get(const std::string& section, const std::string& key) const {
        auto sit = sections.find(section);
        if (sit == sections.end()) return std::nullopt;
        auto kit = sit->second.find(key);
        if (kit == sit->second.end()) return std::nullopt;
        return kit->second;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        auto v = get(section, key);
        if (!v) return fallback;
        auto d = parse_double(*v);
        if (!d) throw ArgumentError("config key '" + key + "' is not a number: " + *v);
        return *d;
    }

    long long get_int(const std::string& section, const std::string& key, long long fallback) const {
        auto v = get(section, key);
        if (!v) return fallback;
        auto i = parse_int(*v);
        if (!i) throw ArgumentError("config key '" + key + "' is not an integer: " + *v);
        return *i;
    }

    std::string get_string(const std::string& section, const std::string& key, std::string fallback) const {
        auto v = get(section, key);
        return v ? *v : std::move(fallback);
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
        auto v = get(section, key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw ArgumentError("config key '" + key + "' is not a boolean: " + *v);
    }
};

}  // namespace koneco
