// Regenerates everything under fixtures/ deterministically. Run from the
// repository root. Golden files are produced by the same library calls the
// CLI makes, reading the shipped configs, so a byte comparison against them
// is meaningful.
//
// The curation policy checkpoint is a hand-wired program, not a trained
// model: a three-flag counter renders the transcript "1,2" as audio tokens
// [2, 3, END]; a latch unit fires when audio token 0 appears in the prompt
// and locks the head onto token 0 forever (the hallucination case); two
// leaky units driven by prompt-token embedding dims 3 and 5 modulate how
// often token 0 is inserted between backbone steps, so different healthy
// prompts produce genuinely different score distributions.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "policy_layout.hpp"
#include "prl/config.hpp"
#include "prl/curation.hpp"
#include "prl/io.hpp"
#include "prl/kernels.hpp"
#include "prl/pipeline.hpp"
#include "prl/policy.hpp"
#include "prl/reward.hpp"
#include "prl/rng.hpp"
#include "prl/trainer.hpp"

namespace fs = std::filesystem;
using namespace prl;

namespace {

constexpr std::uint64_t kPipelineSeed = 2026;
constexpr std::uint64_t kSftInitSeed = 41;
constexpr std::uint64_t kSftTrainSeed = 13;
constexpr std::uint64_t kEvalSeed = 515;

// SFT-style warmup: pure transcription reward (alpha_aes 0, alpha_ctc 1)
// plus a small KL anchor to the random init. The anchor acts as an entropy
// floor, so the warmup settles into a soft equilibrium: transcript content
// is rendered near-deterministically (symbol errors cost ~4.8 nats) while
// cheap ornaments such as blank inserts keep a few percent of probability,
// leaving the RL phase genuine room to explore.
constexpr int kSftIterations = 60000;
constexpr double kSftLearningRate = 2e-3;
constexpr int kSftMcSamples = 12;
constexpr double kSftBeta = 0.3;

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    io::atomic_write(path, [&](std::ostream& os) { os << text; });
    std::cout << "wrote " << path.string() << "\n";
}

// ---- pipeline and datasets ----

void gen_pipeline() {
    const auto pipe = pipeline::Pipeline::generate_default(kPipelineSeed);
    pipe.save("fixtures/pipeline_default.bin");
    std::cout << "wrote fixtures/pipeline_default.bin\n";
}

void gen_datasets() {
    write_text("fixtures/dataset_reference.txt",
               "# id transcript_csv prompt_csv ('-' = no prompt)\n"
               "utt01 0,1 -\n"
               "utt02 2,3 -\n"
               "utt03 1,0,2 -\n"
               "utt04 3,1 -\n"
               "utt05 0,2,3 7,4\n"
               "utt06 2,1 9,9,5\n");
    write_text("fixtures/dataset_curation.txt",
               "# single shared transcript for prompt scoring\n"
               "cur01 1,2 -\n");
    write_text("fixtures/candidate_pool.txt",
               "# id style prompt_tokens\n"
               "amber01 warm 4,6,9,7\n"
               "basil02 bright 5,8,4,10\n"
               "cedar03 calm 6,6,7,9\n"
               "dahlia04 dry 10,8,5,4\n"
               "elm05 even 7,9,10,8\n"
               "glass06 glitch 0,5,8,6\n");
}

// ---- policy checkpoints ----

policy::ModelConfig reference_arch() {
    policy::ModelConfig mc;
    mc.vocab.audio_vocab = 12;
    mc.vocab.text_vocab = 4;
    mc.embed_dim = 8;
    mc.hidden_dim = 16;
    mc.layers = 1;
    return mc;
}

void gen_policy_sft() {
    const auto pipe = pipeline::Pipeline::load("fixtures/pipeline_default.bin");
    const auto dataset = trainer::load_dataset("fixtures/dataset_reference.txt");

    const auto init = policy::random_params(reference_arch(), kSftInitSeed);

    trainer::TrainerConfig tc;
    tc.beta = kSftBeta;
    tc.learning_rate = kSftLearningRate;
    tc.mc_samples = kSftMcSamples;
    tc.iterations = kSftIterations;
    tc.batch_size = 4;
    tc.seed = kSftTrainSeed;
    tc.ctc_in_reward = true;
    tc.max_len = 24;
    tc.threads = 4;

    reward::Weights w;
    w.alpha_aes = 0.0;
    w.alpha_ctc = 1.0;
    const auto eval = trainer::make_pipeline_evaluator(pipe, w, true);
    auto [params, log] = trainer::train(init, init, dataset, tc, eval);

    std::cout << "sft warmup: ctc " << g17(log.front().mean_ctc_loss) << " -> "
              << g17(log.back().mean_ctc_loss) << ", aes "
              << g17(log.front().mean_aes) << " -> " << g17(log.back().mean_aes)
              << "\n";
    policy::save_checkpoint("fixtures/policy_sft.bin", params);
    std::cout << "wrote fixtures/policy_sft.bin (" << params.values.size()
              << " params)\n";
}

void gen_policy_curation() {
    const auto mc = reference_arch();
    policy::PolicyParams params;
    params.config = mc;
    params.values.assign(mc.param_count(), 0.0);

    const auto lay = policy::detail::Layout::of(mc);
    const int E = lay.e, H = lay.h;
    auto ae = [&](int tok, int dim) -> double& {
        return params.values[lay.audio_embed + static_cast<std::size_t>(tok) * E + dim];
    };
    auto w_in = [&](int unit, int dim) -> double& {
        return params.values[lay.layer[0].w_in + static_cast<std::size_t>(unit) * E + dim];
    };
    auto w_rec = [&](int unit, int from) -> double& {
        return params.values[lay.layer[0].w_rec + static_cast<std::size_t>(unit) * H + from];
    };
    auto w_out = [&](int tok, int unit) -> double& {
        return params.values[lay.w_out + static_cast<std::size_t>(tok) * H + unit];
    };
    auto b_out = [&](int tok) -> double& {
        return params.values[lay.b_out + static_cast<std::size_t>(tok)];
    };

    // Input directions. Token 0 and the backbone tokens 2 and 3 get strong
    // one-hot embeddings; BOS rides dim 4; prompt tokens 4..10 carry small
    // per-token loadings on dims 3 and 5 that only the leaky units read.
    ae(0, 0) = 3.0;
    ae(2, 1) = 3.0;
    ae(3, 2) = 3.0;
    params.values[lay.bos + 4] = 3.0;
    const double eta[7] = {2.2, -1.5, 1.2, 0.6, -2.0, 2.4, -0.5};
    const double zeta[7] = {0.3, 1.8, -0.8, 2.0, 1.0, -1.2, 0.9};
    for (int t = 4; t <= 10; ++t) {
        ae(t, 3) = eta[t - 4];
        ae(t, 5) = zeta[t - 4];
    }

    // Hidden units: 0..2 = step counters, 3 = hallucination latch,
    // 4..5 = leaky prompt integrators.
    w_in(0, 4) = 3.0;   // c1 arms at BOS
    w_rec(0, 0) = 2.5;
    w_in(1, 1) = 3.0;   // c2 arms when token 2 is consumed
    w_rec(1, 1) = 2.5;
    w_in(2, 2) = 3.0;   // c3 arms when token 3 is consumed
    w_rec(2, 2) = 2.5;

    // The latch must fire on token 0 seen during the prompt and survive
    // generation, yet never fire on token 0 sampled *during* generation:
    // c1 (on only after BOS) inhibits fresh triggers, the BOS kick of -8 is
    // small enough that a saturated latch (self-drive 16) rides through it.
    w_in(3, 0) = 3.0;
    w_in(3, 4) = -8.0 / 3.0;
    w_rec(3, 3) = 16.0;
    w_rec(3, 0) = -12.0;

    w_in(4, 3) = 1.0;
    w_rec(4, 4) = 0.95;
    w_in(5, 5) = 1.0;
    w_rec(5, 5) = 0.95;

    // Head: backbone [2, 3, END] gated by the counters; token 0 is pushed
    // by the latch (+18 vs the -18 its resting state contributes) and
    // modulated by the leaky units for healthy prompts.
    for (int t = 0; t < mc.vocab.audio_vocab; ++t) b_out(t) = -7.0;
    b_out(2) = -4.0;
    b_out(3) = -4.0;
    b_out(11) = -4.0;
    w_out(2, 0) = 10.0;
    w_out(2, 1) = -14.0;
    w_out(3, 1) = 10.0;
    w_out(3, 2) = -14.0;
    w_out(11, 2) = 10.0;
    b_out(0) = 14.0;
    w_out(0, 3) = 18.0;
    w_out(0, 4) = 9.0;
    w_out(0, 5) = 3.5;

    policy::save_checkpoint("fixtures/policy_curation.bin", params);
    std::cout << "wrote fixtures/policy_curation.bin\n";
}

// ---- speaker-embedding fixtures ----

std::vector<double> unit(std::vector<double> v) {
    const double n = std::sqrt(kernels::squared_norm(v));
    kernels::scale(v, 1.0 / n);
    return v;
}

std::vector<double> draw_dir(rng::Stream& s, int dim) {
    std::vector<double> v(dim);
    for (auto& x : v) x = s.normal();
    return unit(std::move(v));
}

void gen_eval_fixtures() {
    const int dim = 24;
    const int styles = 8;
    const double rho = 0.3;   // style separation around the speaker core
    const double delta = 0.7; // recording-session offset
    const double sigma = 0.15; // per-sample noise

    // Orthonormal structural directions (core, 8 styles, 3 sessions): with
    // random directions in 24 dims the stray dot products (~1/sqrt(24))
    // would swamp the session-averaging effect the pools are built around.
    rng::Stream base(rng::derive_seed(kEvalSeed, "eval-dirs"));
    std::vector<std::vector<double>> dirs;
    for (int k = 0; k < 1 + styles + 3; ++k) {
        auto v = draw_dir(base, dim);
        for (const auto& u : dirs) {
            const double d = kernels::dot(v, u);
            kernels::axpy(-d, u, v);
        }
        dirs.push_back(unit(std::move(v)));
    }
    const auto core = dirs[0];
    const std::vector<std::vector<double>> style_dir(dirs.begin() + 1,
                                                     dirs.begin() + 1 + styles);
    const std::vector<std::vector<double>> session_dir(dirs.begin() + 1 + styles,
                                                       dirs.end());

    auto sample_vec = [&](int style, int session, rng::Stream& s) {
        std::vector<double> v(dim);
        for (int i = 0; i < dim; ++i) {
            v[i] = core[i] + rho * style_dir[style][i] +
                   delta * session_dir[session][i] + sigma * s.normal();
        }
        return unit(std::move(v));
    };
    auto row = [&](const std::string& id, const std::string& style,
                   const std::vector<double>& v) {
        std::string line = id + " " + style;
        for (double x : v) line += " " + g17(x);
        return line + "\n";
    };
    const auto group_of = [](int style) {
        return style < 3 ? "g0" : (style < 6 ? "g1" : "g2");
    };

    // Samples under evaluation: session 0, three draws per style.
    {
        rng::Stream s(rng::derive_seed(kEvalSeed, "eval-samples"));
        std::string text = "dim " + std::to_string(dim) + "\ncount 24\n";
        int n = 0;
        for (int st = 0; st < styles; ++st) {
            for (int k = 0; k < 3; ++k) {
                char id[16];
                std::snprintf(id, sizeof(id), "smp%02d", ++n);
                text += row(id, "st" + std::to_string(st), sample_vec(st, 0, s));
            }
        }
        write_text("fixtures/embeddings_samples.txt", text);
    }

    // Drift reference pool: the speaker core with mild noise, no style or
    // session structure.
    {
        rng::Stream s(rng::derive_seed(kEvalSeed, "eval-reference"));
        std::string text = "dim " + std::to_string(dim) + "\ncount 6\n";
        for (int k = 0; k < 6; ++k) {
            std::vector<double> v(dim);
            for (int i = 0; i < dim; ++i) v[i] = core[i] + 0.2 * s.normal();
            text += row("ref" + std::to_string(k + 1), "pool", unit(std::move(v)));
        }
        write_text("fixtures/embeddings_reference.txt", text);
    }

    // Group pools for the granularity table. Fine pools come from a single
    // *different* session, so the session offset caps their similarity;
    // coarse and single pools mix sessions 1 and 2, which averages the
    // offset away and is what makes coarser means come out higher.
    {
        rng::Stream s(rng::derive_seed(kEvalSeed, "eval-pools"));
        std::string body;
        int count = 0;
        for (int st = 0; st < styles; ++st) {
            for (int k = 0; k < 4; ++k) {
                char id[24];
                std::snprintf(id, sizeof(id), "fin%02d_%d", st, k);
                body += row(id, "fine/st" + std::to_string(st), sample_vec(st, 1, s));
                ++count;
            }
        }
        for (int g = 0; g < 3; ++g) {
            const int lo = g * 3, hi = std::min(styles, g * 3 + 3);
            int k = 0;
            for (int rep = 0; rep < 2; ++rep) {
                for (int st = lo; st < hi; ++st) {
                    char id[24];
                    std::snprintf(id, sizeof(id), "crs%d_%d", g, k++);
                    body += row(id, std::string("coarse/") + group_of(st),
                                sample_vec(st, 1 + rep, s));
                    ++count;
                }
            }
        }
        for (int st = 0; st < styles; ++st) {
            char id[24];
            std::snprintf(id, sizeof(id), "all_%d", st);
            body += row(id, "single/all", sample_vec(st, 1 + st % 2, s));
            ++count;
        }
        write_text("fixtures/embeddings_pools.txt",
                   "dim " + std::to_string(dim) + "\ncount " +
                       std::to_string(count) + "\n" + body);
    }

    // Level maps.
    {
        std::string text = "level fine\n";
        for (int st = 0; st < styles; ++st) {
            text += "st" + std::to_string(st) + " st" + std::to_string(st) + "\n";
        }
        text += "level coarse\n";
        for (int st = 0; st < styles; ++st) {
            text += "st" + std::to_string(st) + " " + group_of(st) + "\n";
        }
        text += "level single\n";
        for (int st = 0; st < styles; ++st) {
            text += "st" + std::to_string(st) + " all\n";
        }
        write_text("fixtures/granularity_levels.txt", text);
    }

    // Paired comparison ratings: 54 wins, 46 losses, no ties, shuffled.
    {
        const std::pair<int, int> win_pairs[] = {{5, 3}, {4, 2}, {5, 4}, {4, 3}, {3, 2}};
        const std::pair<int, int> loss_pairs[] = {{3, 5}, {2, 4}, {4, 5}, {3, 4}, {2, 3}};
        std::vector<std::pair<int, int>> rows;
        for (int i = 0; i < 54; ++i) rows.push_back(win_pairs[i % 5]);
        for (int i = 0; i < 46; ++i) rows.push_back(loss_pairs[i % 5]);
        rng::Stream s(rng::derive_seed(kEvalSeed, "eval-ratings"));
        for (std::size_t i = rows.size() - 1; i > 0; --i) {
            std::swap(rows[i], rows[s.next_u64() % (i + 1)]);
        }
        std::string text = "# context_id rating_a rating_b\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            char id[24];
            std::snprintf(id, sizeof(id), "pair%03u", static_cast<unsigned>(i + 1));
            text += std::string(id) + " " + std::to_string(rows[i].first) + " " +
                    std::to_string(rows[i].second) + "\n";
        }
        write_text("fixtures/ratings_cmos.txt", text);
    }

    // Five-point paralinguistic ratings.
    {
        rng::Stream s(rng::derive_seed(kEvalSeed, "eval-cvad"));
        const double centers[5] = {4.1, 3.6, 3.3, 3.5, 3.9};
        std::string text = "# id clarity valence arousal dominance overall\n";
        for (int i = 0; i < 40; ++i) {
            char id[16];
            std::snprintf(id, sizeof(id), "r%03d", i + 1);
            text += id;
            for (double c : centers) {
                int v = static_cast<int>(std::lround(c + 0.9 * s.normal()));
                v = std::max(1, std::min(5, v));
                text += " " + std::to_string(v);
            }
            text += "\n";
        }
        write_text("fixtures/cvad_records.txt", text);
    }
}

// ---- golden outputs ----

void set_backend_from(config::KeyValue& cfg) {
    kernels::set_backend(kernels::parse_backend(cfg.get_string("kernels.backend", "auto")));
}

void gen_golden_training_log() {
    config::KeyValue cfg = config::KeyValue::from_file("configs/reference.cfg");
    set_backend_from(cfg);
    const auto tc = trainer::config_from(cfg);
    reward::Weights w;
    w.alpha_aes = cfg.get_double("reward.alpha_aes", w.alpha_aes);
    w.alpha_ctc = cfg.get_double("reward.alpha_ctc", w.alpha_ctc);
    const auto pipe =
        pipeline::Pipeline::load(cfg.get_string("pipeline.fixture", "fixtures/pipeline_default.bin"));
    const std::string ckpt = cfg.get_string("policy.checkpoint", "fixtures/policy_sft.bin");
    const auto init = policy::load_checkpoint(ckpt);
    const auto ref = policy::load_checkpoint(cfg.get_string("policy.reference", ckpt));
    const auto dataset =
        trainer::load_dataset(cfg.get_string("data.dataset", "fixtures/dataset_reference.txt"));

    const auto eval = trainer::make_pipeline_evaluator(pipe, w, tc.ctc_in_reward);
    auto [params, log] = trainer::train(init, ref, dataset, tc, eval);
    (void)params;
    trainer::write_log_csv("fixtures/golden/training_log.csv", log);
    std::cout << "wrote fixtures/golden/training_log.csv (aes "
              << g17(log.front().mean_aes) << " -> " << g17(log.back().mean_aes)
              << ", ctc " << g17(log.front().mean_ctc_loss) << " -> "
              << g17(log.back().mean_ctc_loss) << ", kl "
              << g17(log.back().mean_kl) << ")\n";
}

void gen_golden_curation_report() {
    config::KeyValue cfg = config::KeyValue::from_file("configs/curate.cfg");
    set_backend_from(cfg);
    const auto cc = curation::config_from(cfg);
    const auto pool =
        curation::load_pool(cfg.get_string("curation.pool", "fixtures/candidate_pool.txt"));
    const auto pipe =
        pipeline::Pipeline::load(cfg.get_string("pipeline.fixture", "fixtures/pipeline_default.bin"));
    const auto params = policy::load_checkpoint(
        cfg.get_string("policy.checkpoint", "fixtures/policy_curation.bin"));
    const auto dataset =
        trainer::load_dataset(cfg.get_string("data.dataset", "fixtures/dataset_curation.txt"));
    std::vector<std::vector<int>> transcripts;
    for (const auto& ex : dataset) transcripts.push_back(ex.ctx.transcript_tokens);

    const auto report = curation::run_curation(pool, params, transcripts, pipe, cc);
    curation::write_report("fixtures/golden/curation_report.txt", report);
    std::cout << "wrote fixtures/golden/curation_report.txt (selected "
              << (report.has_selection() ? report.selected_id : std::string("-"))
              << ", " << report.filtered.size() << " filtered)\n";
}

}  // namespace

// Diagnostic: show what a checkpoint renders on the reference dataset so
// fixture regressions can be debugged by eye.
void dump_samples(const std::string& checkpoint) {
    const auto pipe = pipeline::Pipeline::load("fixtures/pipeline_default.bin");
    const auto dataset = trainer::load_dataset("fixtures/dataset_reference.txt");
    const auto params = policy::load_checkpoint(checkpoint);
    reward::Weights w;
    for (const auto& ex : dataset) {
        std::printf("%s transcript=", ex.id.c_str());
        for (std::size_t i = 0; i < ex.ctx.transcript_tokens.size(); ++i) {
            std::printf("%s%d", i ? "," : "", ex.ctx.transcript_tokens[i]);
        }
        std::printf("\n");
        for (std::uint64_t s = 0; s < 6; ++s) {
            const auto seq = policy::sample_sequence(
                params, ex.ctx, rng::derive_seed(977, "dump", {s}), 24);
            const auto b = reward::composite_reward(seq.tokens, ex.ctx.transcript_tokens,
                                                    w, pipe);
            std::printf("  aes=%.3f ctc=%8.3f tokens=", b.aes, b.ctc_loss);
            for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
                std::printf("%s%d", i ? "," : "", seq.tokens[i]);
            }
            std::printf("\n");
        }
    }
}

int main(int argc, char** argv) {
    CLI::App app{"regenerate the fixture and golden files (run from the repo root)"};
    bool skip_golden = false;
    bool skip_sft = false;
    std::string dump;
    app.add_flag("--skip-golden", skip_golden,
                 "skip golden outputs (needs configs/ to exist)");
    app.add_flag("--skip-sft", skip_sft, "skip the slow sft warmup training");
    app.add_option("--dump", dump,
                   "print sample renderings from a policy checkpoint and exit");
    CLI11_PARSE(app, argc, argv);

    if (!dump.empty()) {
        kernels::set_backend(kernels::Backend::Scalar);
        try {
            dump_samples(dump);
        } catch (const std::exception& e) {
            std::cerr << "dump failed: " << e.what() << "\n";
            return 1;
        }
        return 0;
    }

    try {
        kernels::set_backend(kernels::Backend::Scalar);
        fs::create_directories("fixtures/golden");
        gen_pipeline();
        gen_datasets();
        if (!skip_sft) gen_policy_sft();
        gen_policy_curation();
        gen_eval_fixtures();
        if (!skip_golden) {
            gen_golden_training_log();
            gen_golden_curation_report();
        }
    } catch (const std::exception& e) {
        std::cerr << "fixture generation failed: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
