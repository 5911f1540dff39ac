#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <vector>

#include "prl/curation.hpp"
#include "prl/errors.hpp"
#include "prl/io.hpp"

namespace cu = prl::curation;
namespace fs = std::filesystem;

namespace {

cu::CandidateScoreSummary summary(std::string id, std::vector<double> scores,
                                  double max_ctc, double z = 1.645) {
    cu::CandidateScoreSummary s;
    s.id = std::move(id);
    s.style = "style";
    s.aes_scores = std::move(scores);
    s.ctc_losses.assign(s.aes_scores.size(), max_ctc);
    double total = 0.0;
    for (double v : s.aes_scores) total += v;
    s.mean = total / s.aes_scores.size();
    double sq = 0.0;
    for (double v : s.aes_scores) sq += (v - s.mean) * (v - s.mean);
    s.std_dev = std::sqrt(sq / (s.aes_scores.size() - 1));
    s.lower_bound = cu::lower_bound(s.aes_scores, z);
    return s;
}

}  // namespace

TEST_CASE("normal lower bound matches the closed form") {
    // Two scores {0.4, 0.6}: mean 0.5, sample std sqrt(0.02), so the bound
    // is 0.5 - 1.645 * sqrt(0.02) / sqrt(2) = 0.3355.
    const std::vector<double> scores = {0.4, 0.6};
    CHECK(cu::lower_bound(scores, 1.645) == doctest::Approx(0.3355).epsilon(1e-4));

    // z = 0 degenerates to the mean; larger z gives a lower bound.
    CHECK(cu::lower_bound(scores, 0.0) == doctest::Approx(0.5));
    CHECK(cu::lower_bound(scores, 3.0) < cu::lower_bound(scores, 1.645));

    const std::vector<double> one = {0.5};
    CHECK_THROWS_AS(cu::lower_bound(one, 1.645), prl::input_error);
}

TEST_CASE("empirical quantile interpolates order statistics") {
    const std::vector<double> scores = {0.1, 0.3, 0.2, 0.4};
    // Sorted: 0.1 0.2 0.3 0.4 at positions 0, 1/3, 2/3, 1.
    CHECK(cu::empirical_quantile(scores, 0.0) == doctest::Approx(0.1));
    CHECK(cu::empirical_quantile(scores, 1.0) == doctest::Approx(0.4));
    CHECK(cu::empirical_quantile(scores, 0.5) == doctest::Approx(0.25));
    CHECK(cu::empirical_quantile(scores, 1.0 / 6.0) == doctest::Approx(0.15));
    CHECK_THROWS_AS(cu::empirical_quantile(scores, 1.5), prl::input_error);
    const std::vector<double> one = {0.5};
    CHECK_THROWS_AS(cu::empirical_quantile(one, 0.5), prl::input_error);
}

TEST_CASE("select_best filters the ceiling first, then the floor") {
    // high: best bound but a hallucinated sample; low: fails the aes floor;
    // mid: clean winner.
    std::vector<cu::CandidateScoreSummary> sums = {
        summary("high", {0.9, 0.9, 0.9}, 5.0),
        summary("low", {0.05, 0.06, 0.07}, 0.5),
        summary("mid", {0.5, 0.55, 0.6}, 0.5),
    };
    const auto rep = cu::select_best(sums, 0.2, 3.0);
    CHECK(rep.selected_id == "mid");
    REQUIRE(rep.filtered.size() == 2);
    CHECK(rep.filtered[0].id == "high");
    CHECK(rep.filtered[0].reason == "ctc_ceiling");
    CHECK(rep.filtered[1].id == "low");
    CHECK(rep.filtered[1].reason == "aes_floor");
    CHECK(rep.summaries.size() == 3);

    // A candidate failing both is reported under the ceiling.
    std::vector<cu::CandidateScoreSummary> both = {
        summary("bad", {0.05, 0.06, 0.07}, 9.0),
        summary("ok", {0.5, 0.55, 0.6}, 0.5),
    };
    const auto rep2 = cu::select_best(both, 0.2, 3.0);
    CHECK(rep2.filtered.size() == 1);
    CHECK(rep2.filtered[0].reason == "ctc_ceiling");
}

TEST_CASE("select_best breaks ties toward the smaller id") {
    std::vector<cu::CandidateScoreSummary> sums = {
        summary("zeta", {0.5, 0.6}, 0.5),
        summary("alpha", {0.5, 0.6}, 0.5),
    };
    CHECK(cu::select_best(sums, 0.0, 3.0).selected_id == "alpha");
}

TEST_CASE("filtering everything leaves no selection") {
    std::vector<cu::CandidateScoreSummary> sums = {
        summary("a", {0.5, 0.6}, 9.0),
        summary("b", {0.4, 0.5}, 9.0),
    };
    const auto rep = cu::select_best(sums, 0.0, 3.0);
    CHECK(!rep.has_selection());
    CHECK(rep.filtered.size() == 2);
}

TEST_CASE("quantile bound is capped at the mean") {
    auto cfg = prl::config::KeyValue::from_string(
        "curation.bound = quantile\n"
        "curation.quantile = 0.9\n");
    const auto cc = cu::config_from(cfg);
    cfg.reject_unknown();
    CHECK(cc.bound == cu::BoundKind::Quantile);

    // With q = 0.9 the raw quantile exceeds the mean; a "lower bound" above
    // the point estimate would be meaningless, so it clamps.
    auto pipe = prl::pipeline::Pipeline::load(fs::path(PRL_REPO_DIR) /
                                              "fixtures/pipeline_default.bin");
    auto params =
        prl::policy::load_checkpoint(fs::path(PRL_REPO_DIR) / "fixtures/policy_sft.bin");
    cu::PromptCandidate cand;
    cand.id = "c1";
    cand.style = "s";
    cand.prompt_tokens = {1, 2};
    std::vector<std::vector<int>> transcripts = {{0, 1}};
    auto c2 = cc;
    c2.samples_per_candidate = 10;
    const auto sum = cu::score_candidate(cand, params, transcripts, pipe, c2, 99);
    CHECK(sum.lower_bound <= sum.mean + 1e-15);
}

TEST_CASE("fewer than ten samples per candidate is rejected") {
    auto cfg = prl::config::KeyValue::from_string("curation.samples = 3\n");
    const auto cc = cu::config_from(cfg);
    cfg.reject_unknown();
    CHECK(cc.samples_per_candidate == 3);

    auto pipe = prl::pipeline::Pipeline::load(fs::path(PRL_REPO_DIR) /
                                              "fixtures/pipeline_default.bin");
    auto params =
        prl::policy::load_checkpoint(fs::path(PRL_REPO_DIR) / "fixtures/policy_sft.bin");
    cu::PromptCandidate cand;
    cand.id = "c1";
    cand.style = "s";
    cand.prompt_tokens = {1};
    std::vector<std::vector<int>> transcripts = {{0}};
    CHECK_THROWS_AS(cu::score_candidate(cand, params, transcripts, pipe, cc, 1),
                    prl::input_error);
}

TEST_CASE("score_candidate is deterministic and well-formed") {
    auto pipe = prl::pipeline::Pipeline::load(fs::path(PRL_REPO_DIR) /
                                              "fixtures/pipeline_default.bin");
    auto params =
        prl::policy::load_checkpoint(fs::path(PRL_REPO_DIR) / "fixtures/policy_sft.bin");

    cu::PromptCandidate cand;
    cand.id = "c1";
    cand.style = "warm";
    cand.prompt_tokens = {4, 6};
    std::vector<std::vector<int>> transcripts = {{0, 1}, {2}};
    cu::CurationConfig cfg;
    cfg.samples_per_candidate = 10;
    cfg.max_len = 16;

    const auto a = cu::score_candidate(cand, params, transcripts, pipe, cfg, 42);
    const auto b = cu::score_candidate(cand, params, transcripts, pipe, cfg, 42);
    CHECK(a.aes_scores == b.aes_scores);
    CHECK(a.ctc_losses == b.ctc_losses);
    CHECK(a.lower_bound == b.lower_bound);
    REQUIRE(a.aes_scores.size() == 10);
    for (double v : a.aes_scores) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(a.lower_bound <= a.mean + 1e-15);

    const auto c = cu::score_candidate(cand, params, transcripts, pipe, cfg, 43);
    CHECK(a.aes_scores != c.aes_scores);
}

TEST_CASE("pool files parse and reject duplicates") {
    const auto tmp = fs::temp_directory_path() / "prl_pool.txt";
    {
        std::ofstream out(tmp);
        out << "# pool\n"
            << "amber01 warm 4,6,9\n"
            << "basil02 bright 5\n";
    }
    const auto pool = cu::load_pool(tmp);
    REQUIRE(pool.size() == 2);
    CHECK(pool[0].id == "amber01");
    CHECK(pool[0].style == "warm");
    CHECK(pool[0].prompt_tokens == std::vector<int>{4, 6, 9});

    {
        std::ofstream out(tmp);
        out << "amber01 warm 4\namber01 bright 5\n";
    }
    CHECK_THROWS_AS(cu::load_pool(tmp), prl::input_error);
    {
        std::ofstream out(tmp);
        out << "amber01 warm\n";
    }
    CHECK_THROWS_AS(cu::load_pool(tmp), prl::input_error);
    fs::remove(tmp);
}

TEST_CASE("reports list summaries, filters and the selection") {
    std::vector<cu::CandidateScoreSummary> sums = {
        summary("high", {0.9, 0.9, 0.9}, 5.0),
        summary("mid", {0.5, 0.55, 0.6}, 0.5),
    };
    const auto rep = cu::select_best(sums, 0.2, 3.0);
    const auto tmp = fs::temp_directory_path() / "prl_curation_report.txt";
    cu::write_report(tmp, rep);
    const auto text = prl::io::read_text_file(tmp);
    CHECK(text.find("selected mid") != std::string::npos);
    CHECK(text.find("status filtered ctc_ceiling") != std::string::npos);
    CHECK(text.find("status ok") != std::string::npos);
    CHECK(text.find("candidate high") != std::string::npos);
    CHECK(text.find("candidate mid") != std::string::npos);
    fs::remove(tmp);
}
