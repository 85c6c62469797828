#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "relrank/io.hpp"
#include "relrank/rng.hpp"

namespace relrank {

// key = value files, one pair per line, '#' comments. Typed getters mark keys
// as consumed; finish() rejects anything left over so typos fail loudly.
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig parse_text(const std::string& text, const std::string& origin = "<config>") {
        KvConfig cfg;
        cfg.origin_ = origin;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) {
                line.erase(hash);
            }
            const std::string trimmed = trim(line);
            if (trimmed.empty()) {
                continue;
            }
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos) {
                throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                         ": expected 'key = value', got '" + trimmed + "'");
            }
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) {
                throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty key");
            }
            if (value.empty()) {
                throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                         ": missing value for key '" + key + "'");
            }
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static KvConfig parse_file(const std::filesystem::path& path) {
        return parse_text(read_file(path), path.string());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    // For commands whose config must be fully explicit.
    void require(const std::string& key) const {
        if (!has(key)) {
            throw std::runtime_error(origin_ + ": missing config key '" + key + "'");
        }
    }

    std::string get_string(const std::string& key, const std::string& fallback) {
        seen_.insert(key);
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) {
        seen_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        try {
            std::size_t pos = 0;
            double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) {
                throw std::invalid_argument("trailing junk");
            }
            return v;
        } catch (const std::exception&) {
            throw std::runtime_error(origin_ + ": invalid value for key '" + key + "': " +
                                     it->second);
        }
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback) {
        seen_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        try {
            std::size_t pos = 0;
            std::int64_t v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) {
                throw std::invalid_argument("trailing junk");
            }
            return v;
        } catch (const std::exception&) {
            throw std::runtime_error(origin_ + ": invalid value for key '" + key + "': " +
                                     it->second);
        }
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        seen_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        try {
            std::size_t pos = 0;
            std::uint64_t v = std::stoull(it->second, &pos);
            if (pos != it->second.size()) {
                throw std::invalid_argument("trailing junk");
            }
            return v;
        } catch (const std::exception&) {
            throw std::runtime_error(origin_ + ": invalid value for key '" + key + "': " +
                                     it->second);
        }
    }

    bool get_bool(const std::string& key, bool fallback) {
        seen_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) {
            return fallback;
        }
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw std::runtime_error(origin_ + ": invalid value for key '" + key + "': " + it->second);
    }

    // Call after all module readers ran; any unread key is a config error.
    void finish() const {
        for (const auto& [key, value] : values_) {
            if (seen_.count(key) == 0) {
                throw std::runtime_error(origin_ + ": unknown config key '" + key + "'");
            }
        }
    }

    // Canonical hash over sorted key=value pairs; recorded in provenance files.
    std::string hash_hex() const {
        std::uint64_t h = 0x9ae16a3b2f90404full;
        for (const auto& [key, value] : values_) {  // std::map iterates sorted
            h = hash_combine(h, stable_hash(key));
            h = hash_combine(h, stable_hash(value));
        }
        std::ostringstream out;
        out << std::hex;
        out.width(16);
        out.fill('0');
        out << h;
        return out.str();
    }

private:
    static std::string trim(const std::string& s) {
        const auto first = s.find_first_not_of(" \t\r\n");
        if (first == std::string::npos) {
            return "";
        }
        const auto last = s.find_last_not_of(" \t\r\n");
        return s.substr(first, last - first + 1);
    }

    std::string origin_ = "<config>";
    std::map<std::string, std::string> values_;
    std::set<std::string> seen_;
};

}  // namespace relrank
