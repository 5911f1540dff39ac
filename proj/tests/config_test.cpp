#include "doctest.h"

#include <string>

#include "prl/config.hpp"
#include "prl/errors.hpp"

namespace cfg = prl::config;

TEST_CASE("key=value text parses with comments and blanks") {
    auto c = cfg::KeyValue::from_string(
        "# comment\n"
        "seed = 7\n"
        "\n"
        "reward.alpha_aes=1.5   # trailing comment\n"
        "out.dir = out/run\n");
    CHECK(c.get_u64("seed", 0) == 7);
    CHECK(c.get_double("reward.alpha_aes", 0.0) == 1.5);
    CHECK(c.get_string("out.dir", "") == "out/run");
    CHECK(c.get_long("trainer.iterations", 250) == 250);
    c.reject_unknown();
}

TEST_CASE("later overrides win") {
    auto c = cfg::KeyValue::from_string("trainer.beta = 5.0\n");
    c.set_override("trainer.beta=50.0");
    CHECK(c.get_double("trainer.beta", 0.0) == 50.0);
    c.reject_unknown();

    CHECK_THROWS_AS(c.set_override("no_equals_sign"), prl::input_error);
}

TEST_CASE("unconsumed keys are rejected by name") {
    auto c = cfg::KeyValue::from_string("trainer.betaa = 5.0\n");
    CHECK(c.get_double("trainer.beta", 1.0) == 1.0);
    try {
        c.reject_unknown();
        FAIL("expected rejection of the misspelled key");
    } catch (const prl::input_error& e) {
        CHECK(std::string(e.what()).find("trainer.betaa") != std::string::npos);
    }
}

TEST_CASE("malformed values fail loudly") {
    auto c = cfg::KeyValue::from_string("a=xyz\nb=1.5\nc=maybe\n");
    CHECK_THROWS_AS(c.get_double("a", 0.0), prl::input_error);
    CHECK_THROWS_AS(c.get_long("b", 0), prl::input_error);
    CHECK_THROWS_AS(c.get_bool("c", false), prl::input_error);
}

TEST_CASE("bool accepts true/false literals") {
    auto c = cfg::KeyValue::from_string("x=true\ny=false\n");
    CHECK(c.get_bool("x", false));
    CHECK(!c.get_bool("y", true));
    CHECK(c.get_bool("z", true));
}

TEST_CASE("render_effective echoes defaults and values sorted by key") {
    auto c = cfg::KeyValue::from_string("b.key=2\n");
    CHECK(c.get_long("b.key", 0) == 2);
    CHECK(c.get_double("a.key", 1.25) == 1.25);
    const auto text = c.render_effective();
    const auto pos_a = text.find("a.key");
    const auto pos_b = text.find("b.key");
    REQUIRE(pos_a != std::string::npos);
    REQUIRE(pos_b != std::string::npos);
    CHECK(pos_a < pos_b);
    CHECK(text.find("1.25") != std::string::npos);
    CHECK(text.find("b.key = 2") != std::string::npos);
}
