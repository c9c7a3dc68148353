#include "rbfvae/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "rbfvae/error.hpp"
#include "rbfvae/hash.hpp"

namespace rbfvae {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, std::string_view text) {
    T value{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        fail(ErrorKind::config, "key '" + key + "': cannot parse '" + std::string(text) + "'");
    }
    return value;
}

std::vector<std::string_view> split_list(std::string_view text) {
    std::vector<std::string_view> out;
    while (!text.empty()) {
        const auto comma = text.find(',');
        out.push_back(trim(text.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        text.remove_prefix(comma + 1);
    }
    return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, std::string_view origin) {
    KeyValueConfig config;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            fail(ErrorKind::config, std::string(origin) + ":" + std::to_string(line_no) +
                                        ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) {
            fail(ErrorKind::config, std::string(origin) + ":" + std::to_string(line_no) + ": empty key");
        }
        config.set(std::string(key), std::string(trim(line.substr(eq + 1))));
    }
    return config;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open config file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path.string());
}

void KeyValueConfig::set(const std::string& key, std::string value) {
    entries_[key] = std::move(value);
}

bool KeyValueConfig::contains(const std::string& key) const {
    return entries_.count(key) != 0;
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    return v ? parse_number<double>(key, *v) : fallback;
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
    auto v = get(key);
    return v ? parse_number<std::int64_t>(key, *v) : fallback;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    auto v = get(key);
    return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
    auto v = get(key);
    return v ? parse_number<std::size_t>(key, *v) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    fail(ErrorKind::config, "key '" + key + "': expected boolean, got '" + *v + "'");
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key,
                                                const std::vector<double>& fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::vector<double> out;
    for (auto item : split_list(*v)) out.push_back(parse_number<double>(key, item));
    return out;
}

std::vector<std::size_t> KeyValueConfig::get_sizes(const std::string& key,
                                                   const std::vector<std::size_t>& fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::vector<std::size_t> out;
    for (auto item : split_list(*v)) out.push_back(parse_number<std::size_t>(key, item));
    return out;
}

void KeyValueConfig::merge(const KeyValueConfig& overrides) {
    for (const auto& [k, v] : overrides.entries_) entries_[k] = v;
}

std::string KeyValueConfig::serialize() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

std::uint64_t KeyValueConfig::hash() const {
    return fnv1a(serialize());
}

void KeyValueConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write config snapshot " + path.string());
    out << serialize();
}

std::string format_double(double value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

std::string join_doubles(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += format_double(values[i]);
    }
    return out;
}

std::string join_sizes(const std::vector<std::size_t>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(values[i]);
    }
    return out;
}

}  // namespace rbfvae
