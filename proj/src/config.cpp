#include "mse/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace mse {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

KvConfig KvConfig::parse_string(const std::string& text) {
    KvConfig out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key=value, got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        out.set(key, value);
    }
    return out;
}

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

void KvConfig::set(const std::string& key, const std::string& value) {
    for (auto& kv : items_)
        if (kv.first == key) {
            kv.second = value;
            return;
        }
    items_.emplace_back(key, value);
}

const std::string* KvConfig::find(const std::string& key) const {
    for (const auto& kv : items_)
        if (kv.first == key) return &kv.second;
    return nullptr;
}

std::string KvConfig::serialize() const {
    std::string out;
    for (const auto& kv : items_) out += kv.first + "=" + kv.second + "\n";
    return out;
}

int64_t config_int(const KvConfig& c, const std::string& key, int64_t fallback) {
    const std::string* v = c.find(key);
    if (!v) return fallback;
    int64_t out = 0;
    auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || p != v->data() + v->size())
        throw ConfigError("config key '" + key + "': '" + *v + "' is not an integer");
    return out;
}

double config_double(const KvConfig& c, const std::string& key, double fallback) {
    const std::string* v = c.find(key);
    if (!v) return fallback;
    try {
        size_t used = 0;
        double out = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument("");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + *v + "' is not a number");
    }
}

std::string config_str(const KvConfig& c, const std::string& key,
                       const std::string& fallback) {
    const std::string* v = c.find(key);
    return v ? *v : fallback;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::string cur;
    std::istringstream in(text);
    while (std::getline(in, cur, ',')) {
        cur = trim(cur);
        if (cur.empty()) continue;
        int v = 0;
        auto [p, ec] = std::from_chars(cur.data(), cur.data() + cur.size(), v);
        if (ec != std::errc{} || p != cur.data() + cur.size())
            throw ConfigError("'" + cur + "' is not an integer");
        out.push_back(v);
    }
    return out;
}

}  // namespace mse
