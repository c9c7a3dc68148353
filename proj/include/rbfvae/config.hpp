#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rbfvae {

/// Flat `key = value` configuration. Lines starting with '#' are comments.
/// Lists are comma separated. Serialization is sorted by key, so two configs
/// with the same entries hash identically.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text, std::string_view origin = "<string>");
    static KeyValueConfig load(const std::filesystem::path& path);

    void set(const std::string& key, std::string value);
    bool contains(const std::string& key) const;
    std::optional<std::string> get(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
    std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;

    /// Entries from `overrides` replace ours.
    void merge(const KeyValueConfig& overrides);

    std::string serialize() const;
    std::uint64_t hash() const;
    void save(const std::filesystem::path& path) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

std::string format_double(double value);
std::string join_doubles(const std::vector<double>& values);
std::string join_sizes(const std::vector<std::size_t>& values);

}  // namespace rbfvae
