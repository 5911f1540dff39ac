#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "prl/errors.hpp"
#include "prl/io.hpp"

namespace io = prl::io;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto d = fs::temp_directory_path() / "prl_io_test";
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("header round-trips through its text form") {
    io::Header h;
    h.magic = "prl-policy";
    h.fields = {{"audio_vocab", "12"}, {"embed_dim", "8"}};
    const auto line = io::format_header(h);
    const auto back = io::parse_header(line);
    CHECK(back.magic == "prl-policy");
    CHECK(back.get("audio_vocab") == "12");
    CHECK(back.get_long("embed_dim") == 8);
    CHECK_THROWS_AS(back.get("missing"), prl::io_error);
    CHECK_THROWS_AS(io::parse_header("prl-policy v2 a=1"), prl::io_error);
    CHECK_THROWS_AS(back.get_long("audio_vocab_x"), prl::io_error);
}

TEST_CASE("doubles round-trip through little-endian bytes") {
    std::vector<double> vals = {0.0, -1.5, 3.141592653589793, 1e-300, -2e300};
    std::ostringstream os(std::ios::binary);
    io::write_doubles_le(os, vals);
    std::istringstream is(os.str(), std::ios::binary);
    const auto back = io::read_doubles_le(is, vals.size());
    CHECK(back == vals);

    std::istringstream short_is(os.str().substr(0, 11), std::ios::binary);
    CHECK_THROWS_AS(io::read_doubles_le(short_is, vals.size()), prl::io_error);
}

TEST_CASE("blob files round-trip and reject truncation") {
    const auto dir = temp_dir();
    const auto path = dir / "blob.bin";
    io::Header h;
    h.magic = "prl-test";
    h.fields = {{"count", "4"}};
    std::vector<double> payload = {1.0, 2.0, -3.5, 0.25};
    io::write_blob(path, h, payload);

    const auto [back_h, back_p] = io::read_blob(path);
    CHECK(back_h.magic == "prl-test");
    CHECK(back_p == payload);

    // The payload length is whatever follows the header (consumers check
    // counts against header fields), but a misaligned payload is corrupt.
    const auto truncated = dir / "short.bin";
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        std::ofstream out(truncated, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 4));
    }
    CHECK_THROWS_AS(io::read_blob(truncated), prl::io_error);
    CHECK_THROWS_AS(io::read_blob(dir / "nonexistent.bin"), prl::io_error);
    fs::remove(path);
    fs::remove(truncated);
}

TEST_CASE("atomic_write leaves no partial file on failure") {
    const auto dir = temp_dir();
    const auto path = dir / "atomic.txt";
    io::atomic_write(path, [](std::ostream& os) { os << "hello\n"; });
    CHECK(io::read_text_file(path) == "hello\n");

    // A writer that throws must not disturb the existing file, and must not
    // leave temp litter behind.
    CHECK_THROWS(io::atomic_write(path, [](std::ostream&) -> void {
        throw std::runtime_error("writer failed");
    }));
    CHECK(io::read_text_file(path) == "hello\n");
    std::size_t entries = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().filename().string().find("atomic") != std::string::npos) ++entries;
    CHECK(entries == 1);
    fs::remove(path);
}

TEST_CASE("split_lines swallows carriage returns and a trailing newline") {
    CHECK(io::split_lines("a\nb\n") == std::vector<std::string>{"a", "b"});
    CHECK(io::split_lines("a\r\nb") == std::vector<std::string>{"a", "b"});
    CHECK(io::split_lines("") == std::vector<std::string>{});
    CHECK(io::split_lines("\n") == std::vector<std::string>{""});
}

TEST_CASE("parse_int_csv is strict") {
    CHECK(io::parse_int_csv("3,1,4") == std::vector<int>{3, 1, 4});
    CHECK(io::parse_int_csv("") == std::vector<int>{});
    CHECK(io::parse_int_csv("7") == std::vector<int>{7});
    CHECK_THROWS_AS(io::parse_int_csv("1,,2"), prl::input_error);
    CHECK_THROWS_AS(io::parse_int_csv("1,a"), prl::input_error);
    CHECK_THROWS_AS(io::parse_int_csv("1,2,"), prl::input_error);
    CHECK_THROWS_AS(io::parse_int_csv("1.5"), prl::input_error);
}
