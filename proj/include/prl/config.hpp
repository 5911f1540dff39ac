#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

// Flat key=value run configuration. '#' starts a comment, blank lines are
// skipped. Commands bind the keys they understand with defaults; any key
// left unbound is rejected by name, so typos fail loudly.

namespace prl::config {

class KeyValue {
public:
    KeyValue() = default;

    static KeyValue from_file(const std::filesystem::path& path);
    static KeyValue from_string(const std::string& text);

    // "key=value" from a command-line override; later wins.
    void set_override(const std::string& key_eq_value);
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& def);
    double get_double(const std::string& key, double def);
    long get_long(const std::string& key, long def);
    std::uint64_t get_u64(const std::string& key, std::uint64_t def);
    bool get_bool(const std::string& key, bool def);

    // Throws prl::input_error naming the first key no command consumed.
    void reject_unknown() const;

    // Effective configuration (defaults filled in by the getters), sorted
    // by key; echoed into output directories for provenance.
    std::string render_effective() const;

private:
    std::string take(const std::string& key);
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
    mutable std::map<std::string, std::string> effective_;
};

}  // namespace prl::config
