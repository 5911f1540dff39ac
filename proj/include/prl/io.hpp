#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

// Binary fixture/checkpoint container: one textual header line
//
//   <magic> v1 key=value key=value ...\n
//
// followed by a flat array of little-endian 64-bit floats. The header names
// the architecture; the float payload is everything else.

namespace prl::io {

struct Header {
    std::string magic;
    std::map<std::string, std::string> fields;

    long get_long(const std::string& key) const;
    const std::string& get(const std::string& key) const;
};

std::string format_header(const Header& h);
Header parse_header(const std::string& line);

void write_doubles_le(std::ostream& os, std::span<const double> values);
std::vector<double> read_doubles_le(std::istream& is, std::size_t count);

void write_blob(const std::filesystem::path& path, const Header& h,
                std::span<const double> payload);
std::pair<Header, std::vector<double>> read_blob(const std::filesystem::path& path);

// Writes through a temp file in the same directory, then renames, so a
// failure never leaves a partial file at `path`.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer);

std::string read_text_file(const std::filesystem::path& path);

// Line splitter for the structured-text fixture formats; swallows '\r' and
// a trailing empty line.
std::vector<std::string> split_lines(const std::string& text);

// Strict comma-separated integers ("3,1,4"); empty input -> empty list.
std::vector<int> parse_int_csv(const std::string& s);

}  // namespace prl::io
