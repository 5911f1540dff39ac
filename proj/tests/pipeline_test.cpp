#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <vector>

#include "prl/errors.hpp"
#include "prl/pipeline.hpp"
#include "prl/reward.hpp"
#include "prl/rng.hpp"

namespace pl = prl::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path repo_path(const char* rel) { return fs::path(PRL_REPO_DIR) / rel; }

pl::Pipeline shipped() { return pl::Pipeline::load(repo_path("fixtures/pipeline_default.bin")); }

}  // namespace

TEST_CASE("generated recognizer rows are stochastic") {
    auto pipe = pl::Pipeline::generate_default(2026);
    for (int tok = 0; tok < pipe.audio_vocab() - 1; ++tok) {
        const auto row = pipe.recognizer_row(tok);
        double total = 0.0;
        for (double v : row) {
            CHECK(v >= 0.0);
            total += v;
        }
        CHECK(std::abs(total - 1.0) <= 1e-9);
    }
}

TEST_CASE("constructor validates its tables") {
    pl::AesConfig cfg;
    std::vector<double> emb(4 * 2, 0.1);
    std::vector<double> bad_row = {0.5, 0.2, 0.2,   // sums to 0.9
                                   0.5, 0.25, 0.25, 0.5, 0.25, 0.25, 0.5, 0.25, 0.25};
    CHECK_THROWS_AS(pl::Pipeline(4, 2, 2, emb, bad_row, cfg), prl::input_error);

    std::vector<double> neg = {1.2, -0.1, -0.1, 0.5, 0.25, 0.25,
                               0.5, 0.25, 0.25, 0.5, 0.25, 0.25};
    CHECK_THROWS_AS(pl::Pipeline(4, 2, 2, emb, neg, cfg), prl::input_error);

    std::vector<double> short_emb(3 * 2, 0.1);
    std::vector<double> ok(4 * 3, 1.0 / 3.0);
    CHECK_THROWS_AS(pl::Pipeline(4, 2, 2, short_emb, ok, cfg), prl::input_error);
}

TEST_CASE("decode smooths with the 3-tap kernel and ignores tokens past END") {
    auto pipe = shipped();
    const int dim = pipe.embed_dim();

    // Single token: returned exactly.
    const std::vector<int> one = {3};
    const auto w1 = pipe.decode(one);
    REQUIRE(w1.frames() == 1);
    const auto e3 = pipe.token_embedding(3);
    for (int d = 0; d < dim; ++d) CHECK(w1.values[d] == e3[d]);

    // Two tokens: boundary taps renormalize to {0.5/0.75, 0.25/0.75}.
    const std::vector<int> two = {3, 5};
    const auto w2 = pipe.decode(two);
    REQUIRE(w2.frames() == 2);
    const auto e5 = pipe.token_embedding(5);
    for (int d = 0; d < dim; ++d) {
        const double want0 = (0.5 * e3[d] + 0.25 * e5[d]) / 0.75;
        CHECK(w2.values[d] == doctest::Approx(want0).epsilon(1e-12));
    }

    // Interior frame uses the full kernel.
    const std::vector<int> three = {3, 5, 7};
    const auto w3 = pipe.decode(three);
    REQUIRE(w3.frames() == 3);
    const auto e7 = pipe.token_embedding(7);
    for (int d = 0; d < dim; ++d) {
        const double want1 = 0.25 * e3[d] + 0.5 * e5[d] + 0.25 * e7[d];
        CHECK(w3.frame(1)[d] == doctest::Approx(want1).epsilon(1e-12));
    }

    // END truncates; a leading END decodes to nothing.
    const int end = pipe.end_token();
    const std::vector<int> cut = {3, 5, end, 7, 1};
    const auto wcut = pipe.decode(cut);
    CHECK(wcut.values == w2.values);
    const std::vector<int> empty = {end};
    CHECK(pipe.decode(empty).frames() == 0);
}

TEST_CASE("recognize stacks per-token rows and rejects empty input") {
    auto pipe = shipped();
    const std::vector<int> toks = {1, 4, 0};
    const auto post = pipe.recognize(toks);
    CHECK(post.frames == 3);
    CHECK(post.alphabet == pipe.alphabet());
    for (int t = 0; t < 3; ++t) {
        const auto row = pipe.recognizer_row(toks[t]);
        for (int c = 0; c <= post.alphabet; ++c)
            CHECK(post.frame(t)[c] == row[c]);
    }
    const int end = pipe.end_token();
    const std::vector<int> only_end = {end};
    CHECK_THROWS_AS(pipe.recognize(only_end), prl::input_error);
    CHECK_THROWS_AS(pipe.recognize({}), prl::input_error);
}

TEST_CASE("aes_score is bounded and zero on empty input") {
    auto pipe = shipped();
    CHECK(pipe.aes_score(pl::Waveform{}) == 0.0);

    prl::rng::Stream s(77);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> toks;
        const int len = 1 + static_cast<int>(s.next_u64() % 10);
        for (int i = 0; i < len; ++i)
            toks.push_back(static_cast<int>(s.next_u64() % (pipe.audio_vocab() - 1)));
        const double score = pipe.aes_score(pipe.decode(toks));
        CHECK(score >= 0.0);
        CHECK(score <= 1.0);
    }

    pl::AesConfig zero;
    zero.smoothness_weight = zero.diversity_weight = zero.preference_weight = 0.0;
    const std::vector<int> toks = {1, 2, 3};
    CHECK(pipe.aes_score(pipe.decode(toks), zero) == 0.0);
}

TEST_CASE("monotone repetition of the preferred token maximizes the score") {
    auto pipe = shipped();
    const int pref = pipe.aes_config().preferred_token;
    const std::vector<int> mono(8, pref);
    const double mono_score = pipe.aes_score(pipe.decode(mono));

    prl::rng::Stream s(123);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<int> toks;
        for (int i = 0; i < 8; ++i)
            toks.push_back(static_cast<int>(s.next_u64() % (pipe.audio_vocab() - 1)));
        CHECK(pipe.aes_score(pipe.decode(toks)) <= mono_score + 1e-12);
    }
}

TEST_CASE("the scorer is hackable by construction") {
    // There must exist a sequence that beats a faithful rendering on the
    // aesthetic axis by >= 0.1 while sitting >= 2.0 nats deeper in
    // alignment loss. The all-preferred-token sequence is that witness.
    auto pipe = shipped();
    const prl::reward::Weights w;
    const std::vector<int> transcript = {0, 1};
    const std::vector<int> correct = {1, 2};  // renders symbols 0, 1
    const auto honest = prl::reward::composite_reward(correct, transcript, w, pipe);
    CHECK(honest.ctc_loss < 1.0);

    const std::vector<int> hack(8, pipe.aes_config().preferred_token);
    const auto hacked = prl::reward::composite_reward(hack, transcript, w, pipe);
    CHECK(hacked.aes >= honest.aes + 0.1);
    CHECK(hacked.ctc_loss >= honest.ctc_loss + 2.0);
}

TEST_CASE("save/load round-trips bit-exactly") {
    auto pipe = shipped();
    const auto tmp = fs::temp_directory_path() / "prl_pipeline_roundtrip.bin";
    pipe.save(tmp);
    auto back = pl::Pipeline::load(tmp);
    CHECK(back.audio_vocab() == pipe.audio_vocab());
    CHECK(back.alphabet() == pipe.alphabet());
    CHECK(back.embed_dim() == pipe.embed_dim());
    for (int t = 0; t < pipe.audio_vocab(); ++t) {
        const auto a = pipe.token_embedding(t);
        const auto b = back.token_embedding(t);
        for (std::size_t d = 0; d < a.size(); ++d) CHECK(a[d] == b[d]);
        const auto ra = pipe.recognizer_row(t);
        const auto rb = back.recognizer_row(t);
        for (std::size_t c = 0; c < ra.size(); ++c) CHECK(ra[c] == rb[c]);
    }
    CHECK(back.aes_config().preference_weight == pipe.aes_config().preference_weight);
    fs::remove(tmp);
}
