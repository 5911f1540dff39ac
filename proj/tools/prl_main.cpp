// Command-line workbench binding the modules into reproducible experiments.
// Exit codes: 0 success, 1 config/input error, 2 numerical failure,
// 3 I/O error, 4 curation ended with every candidate filtered.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "prl/config.hpp"
#include "prl/curation.hpp"
#include "prl/errors.hpp"
#include "prl/eval.hpp"
#include "prl/io.hpp"
#include "prl/kernels.hpp"
#include "prl/pipeline.hpp"
#include "prl/policy.hpp"
#include "prl/reward.hpp"
#include "prl/trainer.hpp"

namespace fs = std::filesystem;
using prl::config::KeyValue;

namespace {

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

KeyValue load_config(const std::string& path, const std::vector<std::string>& sets) {
    KeyValue cfg = KeyValue::from_file(path);
    for (const auto& s : sets) cfg.set_override(s);
    return cfg;
}

void setup_backend(KeyValue& cfg) {
    const std::string name = cfg.get_string("kernels.backend", "auto");
    prl::kernels::set_backend(prl::kernels::parse_backend(name));
}

void write_effective_config(const fs::path& out_dir, const KeyValue& cfg) {
    prl::io::atomic_write(out_dir / "effective.cfg",
                          [&](std::ostream& os) { os << cfg.render_effective(); });
}

void check_vocab_compatibility(const prl::policy::PolicyParams& params,
                               const prl::pipeline::Pipeline& pipe) {
    if (params.config.vocab.audio_vocab != pipe.audio_vocab()) {
        throw prl::input_error("policy audio vocab " +
                               std::to_string(params.config.vocab.audio_vocab) +
                               " does not match pipeline " +
                               std::to_string(pipe.audio_vocab()));
    }
    if (params.config.vocab.text_vocab != pipe.alphabet()) {
        throw prl::input_error("policy text vocab " +
                               std::to_string(params.config.vocab.text_vocab) +
                               " does not match pipeline alphabet " +
                               std::to_string(pipe.alphabet()));
    }
}

int run_train(KeyValue& cfg) {
    setup_backend(cfg);
    const auto tc = prl::trainer::config_from(cfg);
    prl::reward::Weights weights;
    weights.alpha_aes = cfg.get_double("reward.alpha_aes", weights.alpha_aes);
    weights.alpha_ctc = cfg.get_double("reward.alpha_ctc", weights.alpha_ctc);

    const std::string pipe_path =
        cfg.get_string("pipeline.fixture", "fixtures/pipeline_default.bin");
    const std::string ckpt_path =
        cfg.get_string("policy.checkpoint", "fixtures/policy_sft.bin");
    const std::string ref_path = cfg.get_string("policy.reference", ckpt_path);
    const std::string dataset_path =
        cfg.get_string("data.dataset", "fixtures/dataset_reference.txt");
    const fs::path out_dir = cfg.get_string("out.dir", "out/train");
    cfg.reject_unknown();

    const auto pipe = prl::pipeline::Pipeline::load(pipe_path);
    const auto init = prl::policy::load_checkpoint(ckpt_path);
    const auto ref = prl::policy::load_checkpoint(ref_path);
    check_vocab_compatibility(init, pipe);
    const auto dataset = prl::trainer::load_dataset(dataset_path);

    const auto evaluator =
        prl::trainer::make_pipeline_evaluator(pipe, weights, tc.ctc_in_reward);
    auto [final_params, log] = prl::trainer::train(init, ref, dataset, tc, evaluator);

    fs::create_directories(out_dir);
    write_effective_config(out_dir, cfg);
    prl::trainer::write_log_csv(out_dir / "training_log.csv", log);
    prl::policy::save_checkpoint(out_dir / "final_policy.bin", final_params);

    if (log.empty()) {
        std::cout << "train: 0 iterations, checkpoint copied to "
                  << (out_dir / "final_policy.bin").string() << "\n";
    } else {
        std::cout << "train: " << log.size() << " iterations, final mean_aes "
                  << format_g17(log.back().mean_aes) << ", final mean_ctc_loss "
                  << format_g17(log.back().mean_ctc_loss) << "\n";
    }
    return 0;
}

int run_gradcheck(KeyValue& cfg, bool corrupt_analytic) {
    setup_backend(cfg);
    auto tc = prl::trainer::config_from(cfg);
    const double fd_step = cfg.get_double("gradcheck.fd_step", 1e-5);
    const double tolerance = cfg.get_double("gradcheck.tolerance", 1e-4);
    const std::string reward_mode = cfg.get_string("gradcheck.reward_mode", "pipeline");
    const double constant_value = cfg.get_double("gradcheck.constant_value", 0.5);
    const long example_index = cfg.get_long("gradcheck.example_index", 0);

    const std::string pipe_path =
        cfg.get_string("pipeline.fixture", "fixtures/pipeline_default.bin");
    const std::string ckpt_path =
        cfg.get_string("policy.checkpoint", "fixtures/policy_sft.bin");
    const std::string ref_path = cfg.get_string("policy.reference", ckpt_path);
    const std::string dataset_path =
        cfg.get_string("data.dataset", "fixtures/dataset_reference.txt");
    cfg.reject_unknown();

    const auto pipe = prl::pipeline::Pipeline::load(pipe_path);
    const auto params = prl::policy::load_checkpoint(ckpt_path);
    const auto ref = prl::policy::load_checkpoint(ref_path);
    check_vocab_compatibility(params, pipe);
    const auto dataset = prl::trainer::load_dataset(dataset_path);
    if (example_index < 0 || static_cast<std::size_t>(example_index) >= dataset.size()) {
        throw prl::input_error("gradcheck.example_index out of range");
    }

    prl::trainer::RewardEvaluator evaluator;
    if (reward_mode == "pipeline") {
        prl::reward::Weights weights;
        evaluator = prl::trainer::make_pipeline_evaluator(pipe, weights, true);
    } else if (reward_mode == "constant") {
        evaluator = [constant_value](const prl::policy::TokenSequence&,
                                     const prl::trainer::TrainingExample&) {
            prl::trainer::SampleEval s;
            s.reward = constant_value;
            return s;
        };
    } else {
        throw prl::input_error("gradcheck.reward_mode must be pipeline or constant");
    }

    auto vectors = prl::trainer::gradient_check_vectors(
        params, ref, dataset[static_cast<std::size_t>(example_index)], tc, evaluator,
        fd_step);
    if (corrupt_analytic && !vectors.analytic.empty()) {
        vectors.analytic[0] += 1.0;  // negative control for the harness itself
    }
    const auto report = prl::trainer::compare_gradients(vectors);

    std::cout << "gradcheck: max relative error " << format_g17(report.max_rel_error)
              << " over " << report.param_count << " parameters\n";
    if (report.max_rel_error <= tolerance) return 0;

    // Failure: list the worst offenders.
    struct Offender {
        double rel;
        std::size_t index;
    };
    double scale = 1.0;
    for (std::size_t i = 0; i < vectors.analytic.size(); ++i) {
        scale = std::max({scale, std::abs(vectors.analytic[i]),
                          std::abs(vectors.numeric[i])});
    }
    std::vector<Offender> offenders;
    for (std::size_t i = 0; i < vectors.analytic.size(); ++i) {
        const double a = vectors.analytic[i], n = vectors.numeric[i];
        const double rel =
            std::abs(a - n) / std::max({1e-5 * scale, std::abs(a), std::abs(n)});
        if (rel > tolerance) offenders.push_back({rel, i});
    }
    std::sort(offenders.begin(), offenders.end(),
              [](const Offender& x, const Offender& y) { return x.rel > y.rel; });
    const std::size_t show = std::min<std::size_t>(offenders.size(), 5);
    for (std::size_t i = 0; i < show; ++i) {
        const std::size_t idx = offenders[i].index;
        std::cerr << "  coordinate " << idx << ": analytic "
                  << format_g17(vectors.analytic[idx]) << ", numeric "
                  << format_g17(vectors.numeric[idx]) << ", rel error "
                  << format_g17(offenders[i].rel) << "\n";
    }
    std::cerr << "gradcheck: FAILED (" << offenders.size() << " coordinates above "
              << format_g17(tolerance) << ")\n";
    return 2;
}

int run_curate(KeyValue& cfg) {
    setup_backend(cfg);
    const auto cc = prl::curation::config_from(cfg);

    const std::string pool_path =
        cfg.get_string("curation.pool", "fixtures/candidate_pool.txt");
    const std::string pipe_path =
        cfg.get_string("pipeline.fixture", "fixtures/pipeline_default.bin");
    const std::string ckpt_path =
        cfg.get_string("policy.checkpoint", "fixtures/policy_curation.bin");
    const std::string dataset_path =
        cfg.get_string("data.dataset", "fixtures/dataset_reference.txt");
    const fs::path out_dir = cfg.get_string("out.dir", "out/curate");
    cfg.reject_unknown();

    const auto pool = prl::curation::load_pool(pool_path);
    const auto pipe = prl::pipeline::Pipeline::load(pipe_path);
    const auto params = prl::policy::load_checkpoint(ckpt_path);
    check_vocab_compatibility(params, pipe);
    const auto dataset = prl::trainer::load_dataset(dataset_path);
    std::vector<std::vector<int>> transcripts;
    transcripts.reserve(dataset.size());
    for (const auto& ex : dataset) transcripts.push_back(ex.ctx.transcript_tokens);

    const auto report = prl::curation::run_curation(pool, params, transcripts, pipe, cc);

    fs::create_directories(out_dir);
    write_effective_config(out_dir, cfg);
    prl::curation::write_report(out_dir / "curation_report.txt", report);

    if (!report.has_selection()) {
        std::cout << "curate: all " << report.summaries.size()
                  << " candidates filtered, no selection\n";
        return 4;
    }
    std::cout << "curate: selected " << report.selected_id << " of "
              << report.summaries.size() << " candidates (" << report.filtered.size()
              << " filtered)\n";
    return 0;
}

int run_evaluate(KeyValue& cfg) {
    setup_backend(cfg);
    const std::string samples_path =
        cfg.get_string("eval.samples", "fixtures/embeddings_samples.txt");
    const std::string reference_path =
        cfg.get_string("eval.reference", "fixtures/embeddings_reference.txt");
    const std::string levels_path =
        cfg.get_string("eval.levels", "fixtures/granularity_levels.txt");
    const std::string pools_path =
        cfg.get_string("eval.pools", "fixtures/embeddings_pools.txt");
    const std::string ratings_path =
        cfg.get_string("eval.ratings", "fixtures/ratings_cmos.txt");
    const std::string cvad_path = cfg.get_string("eval.cvad", "fixtures/cvad_records.txt");
    const double threshold = cfg.get_double("eval.threshold", 0.7);
    const double confidence = cfg.get_double("eval.confidence", 0.95);
    const fs::path out_dir = cfg.get_string("out.dir", "out/evaluate");
    cfg.reject_unknown();

    const auto samples = prl::eval::load_embeddings(samples_path);
    const auto ref_pool = prl::eval::load_embeddings(reference_path);
    const auto levels = prl::eval::load_levels(levels_path, pools_path);
    const auto ratings = prl::eval::load_ratings(ratings_path);
    const auto cvad = prl::eval::load_cvad(cvad_path);

    const auto ref = prl::eval::reference_embedding(ref_pool);
    std::size_t drifted = 0;
    std::vector<std::pair<double, bool>> per_sample;
    per_sample.reserve(samples.size());
    for (const auto& s : samples) {
        const double sim = prl::eval::cosine_similarity(s.values, ref.values);
        const bool drift = sim < threshold;
        per_sample.emplace_back(sim, drift);
        if (drift) ++drifted;
    }
    const auto table = prl::eval::similarity_by_granularity(samples, levels);
    const double nwr = prl::eval::net_win_rate(ratings);
    const auto ci = prl::eval::win_rate_confidence_interval(ratings, confidence);
    const auto cv = prl::eval::cvad_summary(cvad);

    fs::create_directories(out_dir);
    write_effective_config(out_dir, cfg);
    prl::io::atomic_write(out_dir / "evaluation_report.txt", [&](std::ostream& os) {
        os << "# evaluation report\n";
        os << "samples " << samples.size() << "\n";
        os << "drift_threshold " << format_g17(threshold) << "\n";
        os << "drift_flags " << drifted << "\n";
        for (std::size_t i = 0; i < samples.size(); ++i) {
            os << "sample " << samples[i].id << " similarity "
               << format_g17(per_sample[i].first) << ' '
               << (per_sample[i].second ? "drift" : "ok") << "\n";
        }
        for (const auto& row : table) {
            os << "granularity " << row.level << " " << format_g17(row.mean_similarity)
               << " " << row.samples << "\n";
        }
        os << "net_win_rate " << format_g17(nwr) << "\n";
        os << "confidence " << format_g17(confidence) << "\n";
        os << "ci " << format_g17(ci.first) << " " << format_g17(ci.second) << "\n";
        os << "cvad clarity " << format_g17(cv.clarity) << " valence "
           << format_g17(cv.valence) << " arousal " << format_g17(cv.arousal)
           << " dominance " << format_g17(cv.dominance) << " overall "
           << format_g17(cv.overall) << "\n";
    });
    prl::io::atomic_write(out_dir / "granularity.csv", [&](std::ostream& os) {
        os << "level,mean_similarity,samples\n";
        for (const auto& row : table) {
            os << row.level << ',' << format_g17(row.mean_similarity) << ','
               << row.samples << "\n";
        }
    });

    std::cout << "evaluate: " << drifted << "/" << samples.size()
              << " drift flags, net win rate " << format_g17(nwr) << "\n";
    return 0;
}

int run_report(const std::string& csv_path, const std::string& out_path) {
    const auto log = prl::trainer::read_log_csv(csv_path);
    std::ostringstream os;
    os << "training summary: " << csv_path << "\n";
    os << "iterations " << log.size() << "\n";
    if (!log.empty()) {
        const auto col = [&](const char* name, auto get) {
            double first = get(log.front()), last = get(log.back());
            double lo = first, hi = first;
            for (const auto& r : log) {
                lo = std::min(lo, get(r));
                hi = std::max(hi, get(r));
            }
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%-14s first %12.6g final %12.6g min %12.6g max %12.6g\n",
                          name, first, last, lo, hi);
            os << buf;
        };
        col("mean_aes", [](const auto& r) { return r.mean_aes; });
        col("mean_ctc_loss", [](const auto& r) { return r.mean_ctc_loss; });
        col("mean_reward", [](const auto& r) { return r.mean_reward; });
        col("mean_kl", [](const auto& r) { return r.mean_kl; });
        col("grad_norm", [](const auto& r) { return r.grad_norm; });
    }
    std::cout << os.str();
    if (!out_path.empty()) {
        prl::io::atomic_write(out_path, [&](std::ostream& f) { f << os.str(); });
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prosody token policy RL workbench"};
    app.require_subcommand(1);

    std::string train_config, gradcheck_config, curate_config, evaluate_config;
    std::vector<std::string> train_sets, gradcheck_sets, curate_sets, evaluate_sets;
    long train_iterations = -1;
    bool corrupt_analytic = false;
    std::string report_csv, report_out;

    auto* train = app.add_subcommand("train", "run a training experiment");
    train->add_option("--config", train_config, "config file")->required();
    train->add_option("--set", train_sets, "override key=value");
    train->add_option("--iterations", train_iterations,
                      "shorthand for --set trainer.iterations=N");

    auto* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gradcheck->add_option("--config", gradcheck_config, "config file")->required();
    gradcheck->add_option("--set", gradcheck_sets, "override key=value");
    gradcheck->add_flag("--corrupt-analytic", corrupt_analytic,
                        "perturb the analytic gradient (harness negative control)");

    auto* curate = app.add_subcommand("curate", "score and select audio prompts");
    curate->add_option("--config", curate_config, "config file")->required();
    curate->add_option("--set", curate_sets, "override key=value");

    auto* evaluate = app.add_subcommand("evaluate", "consistency and preference reports");
    evaluate->add_option("--config", evaluate_config, "config file")->required();
    evaluate->add_option("--set", evaluate_sets, "override key=value");

    auto* report = app.add_subcommand("report", "summarize a training-curve CSV");
    report->add_option("csv", report_csv, "training_log.csv path")->required();
    report->add_option("--out", report_out, "also write the summary to a file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(train)) {
            KeyValue cfg = load_config(train_config, train_sets);
            if (train_iterations >= 0) {
                cfg.set("trainer.iterations", std::to_string(train_iterations));
            }
            return run_train(cfg);
        }
        if (app.got_subcommand(gradcheck)) {
            KeyValue cfg = load_config(gradcheck_config, gradcheck_sets);
            return run_gradcheck(cfg, corrupt_analytic);
        }
        if (app.got_subcommand(curate)) {
            KeyValue cfg = load_config(curate_config, curate_sets);
            return run_curate(cfg);
        }
        if (app.got_subcommand(evaluate)) {
            KeyValue cfg = load_config(evaluate_config, evaluate_sets);
            return run_evaluate(cfg);
        }
        if (app.got_subcommand(report)) {
            return run_report(report_csv, report_out);
        }
    } catch (const prl::numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const prl::io_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const prl::input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
