#include "prl/config.hpp"

#include <cmath>
#include <sstream>

#include "prl/errors.hpp"
#include "prl/io.hpp"

namespace prl::config {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

KeyValue KeyValue::from_file(const std::filesystem::path& path) {
    return from_string(io::read_text_file(path));
}

KeyValue KeyValue::from_string(const std::string& text) {
    KeyValue kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw input_error("config line " + std::to_string(lineno) +
                              ": expected key = value, got '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw input_error("config line " + std::to_string(lineno) + ": empty key");
        }
        kv.values_[key] = value;
    }
    return kv;
}

void KeyValue::set_override(const std::string& key_eq_value) {
    const auto eq = key_eq_value.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw input_error("override must be key=value, got '" + key_eq_value + "'");
    }
    set(trim(key_eq_value.substr(0, eq)), trim(key_eq_value.substr(eq + 1)));
}

void KeyValue::set(const std::string& key, const std::string& value) {
    values_[key] = value;
    consumed_.erase(key);
}

bool KeyValue::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KeyValue::take(const std::string& key) {
    consumed_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? std::string() : it->second;
}

std::string KeyValue::get_string(const std::string& key, const std::string& def) {
    const bool present = has(key);
    const std::string raw = take(key);
    const std::string out = present ? raw : def;
    effective_[key] = out;
    return out;
}

double KeyValue::get_double(const std::string& key, double def) {
    const bool present = has(key);
    const std::string raw = take(key);
    double out = def;
    if (present) {
        try {
            std::size_t pos = 0;
            out = std::stod(raw, &pos);
            if (pos != raw.size()) throw std::invalid_argument(raw);
        } catch (const std::exception&) {
            throw input_error("config key '" + key + "': not a number: '" + raw + "'");
        }
    }
    std::ostringstream os;
    os.precision(17);
    os << out;
    effective_[key] = os.str();
    return out;
}

long KeyValue::get_long(const std::string& key, long def) {
    const bool present = has(key);
    const std::string raw = take(key);
    long out = def;
    if (present) {
        try {
            std::size_t pos = 0;
            out = std::stol(raw, &pos);
            if (pos != raw.size()) throw std::invalid_argument(raw);
        } catch (const std::exception&) {
            throw input_error("config key '" + key + "': not an integer: '" + raw + "'");
        }
    }
    effective_[key] = std::to_string(out);
    return out;
}

std::uint64_t KeyValue::get_u64(const std::string& key, std::uint64_t def) {
    const bool present = has(key);
    const std::string raw = take(key);
    std::uint64_t out = def;
    if (present) {
        try {
            std::size_t pos = 0;
            out = std::stoull(raw, &pos);
            if (pos != raw.size()) throw std::invalid_argument(raw);
        } catch (const std::exception&) {
            throw input_error("config key '" + key + "': not an unsigned integer: '" + raw + "'");
        }
    }
    effective_[key] = std::to_string(out);
    return out;
}

bool KeyValue::get_bool(const std::string& key, bool def) {
    const bool present = has(key);
    const std::string raw = take(key);
    bool out = def;
    if (present) {
        if (raw == "true" || raw == "1") out = true;
        else if (raw == "false" || raw == "0") out = false;
        else throw input_error("config key '" + key + "': expected true/false, got '" + raw + "'");
    }
    effective_[key] = out ? "true" : "false";
    return out;
}

void KeyValue::reject_unknown() const {
    for (const auto& [k, v] : values_) {
        if (!consumed_.count(k)) {
            throw input_error("unknown config key '" + k + "'");
        }
    }
}

std::string KeyValue::render_effective() const {
    std::ostringstream os;
    for (const auto& [k, v] : effective_) os << k << " = " << v << '\n';
    return os.str();
}

}  // namespace prl::config
