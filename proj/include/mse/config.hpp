#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mse/errors.hpp"

namespace mse {

// Flat key=value configuration: one assignment per line, '#' starts a comment.
// Order is preserved so the echoed effective config is stable.
class KvConfig {
public:
    static KvConfig parse_string(const std::string& text);
    static KvConfig parse_file(const std::string& path);  // ConfigError if unreadable

    void set(const std::string& key, const std::string& value);  // upsert
    const std::string* find(const std::string& key) const;
    bool has(const std::string& key) const { return find(key) != nullptr; }

    const std::vector<std::pair<std::string, std::string>>& items() const {
        return items_;
    }

    std::string serialize() const;

private:
    std::vector<std::pair<std::string, std::string>> items_;
};

// Typed readers; ConfigError with the key name on malformed values.
int64_t config_int(const KvConfig& c, const std::string& key, int64_t fallback);
double config_double(const KvConfig& c, const std::string& key, double fallback);
std::string config_str(const KvConfig& c, const std::string& key,
                       const std::string& fallback);
std::vector<int> parse_int_list(const std::string& text);  // "4,8,16"

}  // namespace mse
