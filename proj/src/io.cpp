#include "prl/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "prl/errors.hpp"

namespace prl::io {

namespace {

static_assert(sizeof(double) == 8);

std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
        return r;
    }
}

}  // namespace

long Header::get_long(const std::string& key) const {
    const std::string& s = get(key);
    try {
        return std::stol(s);
    } catch (const std::exception&) {
        throw io_error("header field '" + key + "' is not an integer: " + s);
    }
}

const std::string& Header::get(const std::string& key) const {
    auto it = fields.find(key);
    if (it == fields.end()) throw io_error("header missing field '" + key + "'");
    return it->second;
}

std::string format_header(const Header& h) {
    std::ostringstream os;
    os << h.magic << " v1";
    for (const auto& [k, v] : h.fields) os << ' ' << k << '=' << v;
    os << '\n';
    return os.str();
}

Header parse_header(const std::string& line) {
    std::istringstream is(line);
    Header h;
    std::string version;
    if (!(is >> h.magic >> version) || version != "v1") {
        throw io_error("bad header line: " + line);
    }
    std::string kv;
    while (is >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw io_error("bad header field: " + kv);
        h.fields[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return h;
}

void write_doubles_le(std::ostream& os, std::span<const double> values) {
    for (double d : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        bits = to_le(bits);
        os.write(reinterpret_cast<const char*>(&bits), 8);
    }
}

std::vector<double> read_doubles_le(std::istream& is, std::size_t count) {
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits;
        if (!is.read(reinterpret_cast<char*>(&bits), 8)) {
            throw io_error("short read: expected " + std::to_string(count) +
                           " doubles, got " + std::to_string(i));
        }
        bits = to_le(bits);
        std::memcpy(&out[i], &bits, 8);
    }
    return out;
}

void write_blob(const std::filesystem::path& path, const Header& h,
                std::span<const double> payload) {
    atomic_write(path, [&](std::ostream& os) {
        os << format_header(h);
        write_doubles_le(os, payload);
    });
}

std::pair<Header, std::vector<double>> read_blob(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw io_error("empty file " + path.string());
    Header h = parse_header(line);
    const auto data_start = is.tellg();
    is.seekg(0, std::ios::end);
    const auto bytes = is.tellg() - data_start;
    if (bytes % 8 != 0) throw io_error("payload of " + path.string() + " is not 8-byte aligned");
    is.seekg(data_start);
    return {std::move(h), read_doubles_le(is, static_cast<std::size_t>(bytes / 8))};
}

void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    const fs::path tmp = path.string() + ".tmp";
    try {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw io_error("cannot open " + tmp.string() + " for writing");
        writer(os);
        os.flush();
        if (!os) throw io_error("write failed for " + tmp.string());
    } catch (...) {
        // A failed or throwing writer must not leave the temp file behind.
        std::error_code rec;
        fs::remove(tmp, rec);
        throw;
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw io_error("rename to " + path.string() + " failed");
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}


std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

std::vector<int> parse_int_csv(const std::string& s) {
    std::vector<int> out;
    if (s.empty()) return out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = s.find(',', start);
        const std::string field = s.substr(start, comma - start);
        std::size_t pos = 0;
        int value = 0;
        try {
            value = std::stoi(field, &pos);
        } catch (const std::exception&) {
            throw input_error("malformed integer list entry: '" + field + "'");
        }
        if (pos != field.size()) {
            throw input_error("malformed integer list entry: '" + field + "'");
        }
        out.push_back(value);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace prl::io
