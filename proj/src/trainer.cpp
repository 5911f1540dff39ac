#include "prl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string_view>
#include <thread>

#include "prl/ctc.hpp"
#include "prl/errors.hpp"
#include "prl/io.hpp"
#include "prl/kernels.hpp"
#include "prl/rng.hpp"

namespace prl::trainer {

namespace {

namespace kn = prl::kernels;

void check_config(const TrainerConfig& cfg) {
    if (cfg.mc_samples < 2) {
        throw input_error("trainer: mc_samples must be >= 2 for the leave-one-out baseline");
    }
    if (!(cfg.beta >= 0.0) || !std::isfinite(cfg.beta)) {
        throw input_error("trainer: beta must be finite and >= 0");
    }
    if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
        throw input_error("trainer: learning_rate must be finite and >= 0");
    }
    if (cfg.max_len < 1) throw input_error("trainer: max_len must be >= 1");
    if (cfg.batch_size < 1) throw input_error("trainer: batch_size must be >= 1");
    if (cfg.iterations < 0) throw input_error("trainer: iterations must be >= 0");
    if (cfg.grad_clip < 0) throw input_error("trainer: grad_clip must be >= 0");
    if (cfg.threads < 1) throw input_error("trainer: threads must be >= 1");
    if (!(cfg.adam_eps > 0.0)) throw input_error("trainer: adam_eps must be > 0");
}

struct PairOutcome {
    policy::TokenSequence seq;
    SampleEval eval;
    double kl = 0.0;
    std::vector<double> logp_grad, kl_grad;
};

// Samples and evaluates all (example, mc-sample) pairs of a batch. Each
// slot has its own derived seed, so the result is identical for any thread
// count; outcomes are indexed by slot so later reductions run in a fixed
// order.
std::vector<PairOutcome> rollout(const policy::PolicyParams& params,
                                 const policy::PolicyParams& ref_params,
                                 std::span<const TrainingExample> batch,
                                 const TrainerConfig& cfg, const RewardEvaluator& eval,
                                 std::string_view tag, std::uint64_t iteration,
                                 bool with_grads) {
    const std::size_t slots = batch.size() * static_cast<std::size_t>(cfg.mc_samples);
    std::vector<PairOutcome> out(slots);

    std::exception_ptr first_error;
    std::mutex error_mutex;
    const auto run_slot = [&](std::size_t slot) {
        const TrainingExample& ex = batch[slot / cfg.mc_samples];
        const std::uint64_t seed = rng::derive_seed(cfg.seed, tag, {iteration, slot});
        PairOutcome& o = out[slot];
        o.seq = policy::sample_sequence(params, ex.ctx, seed, cfg.max_len);
        o.eval = eval(o.seq, ex);
        if (with_grads) {
            auto lg = policy::sequence_log_prob_grad(params, ex.ctx, o.seq.tokens);
            auto kg = policy::trajectory_kl_grad(params, ref_params, ex.ctx, o.seq.tokens);
            o.kl = kg.value;
            o.logp_grad = std::move(lg.grad);
            o.kl_grad = std::move(kg.grad);
        } else {
            o.kl = policy::trajectory_kl(params, ref_params, ex.ctx, o.seq.tokens);
        }
    };

    const std::size_t n_threads =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), slots);
    if (n_threads <= 1) {
        for (std::size_t s = 0; s < slots; ++s) run_slot(s);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t s = t; s < slots; s += n_threads) {
                    try {
                        run_slot(s);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(error_mutex);
                        if (!first_error) first_error = std::current_exception();
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        if (first_error) std::rethrow_exception(first_error);
    }
    return out;
}

// Leave-one-out advantage as a mean of pairwise differences: equal rewards
// cancel exactly rather than to rounding.
std::vector<double> loo_advantages(const std::vector<PairOutcome>& outcomes,
                                   std::size_t batch_size, int mc_samples) {
    std::vector<double> adv(outcomes.size(), 0.0);
    for (std::size_t e = 0; e < batch_size; ++e) {
        for (int k = 0; k < mc_samples; ++k) {
            const std::size_t slot = e * mc_samples + k;
            double acc = 0.0;
            for (int j = 0; j < mc_samples; ++j) {
                if (j == k) continue;
                acc += outcomes[slot].eval.reward -
                       outcomes[e * mc_samples + j].eval.reward;
            }
            adv[slot] = acc / (mc_samples - 1);
        }
    }
    return adv;
}

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

TrainerConfig config_from(config::KeyValue& cfg) {
    TrainerConfig tc;
    tc.beta = cfg.get_double("trainer.beta", tc.beta);
    tc.learning_rate = cfg.get_double("trainer.learning_rate", tc.learning_rate);
    tc.mc_samples = static_cast<int>(cfg.get_long("trainer.mc_samples", tc.mc_samples));
    tc.iterations = static_cast<int>(cfg.get_long("trainer.iterations", tc.iterations));
    tc.batch_size = static_cast<int>(cfg.get_long("trainer.batch_size", tc.batch_size));
    tc.seed = cfg.get_u64("seed", tc.seed);
    tc.ctc_in_reward = cfg.get_bool("trainer.ctc_in_reward", tc.ctc_in_reward);
    tc.max_len = static_cast<int>(cfg.get_long("trainer.max_len", tc.max_len));
    tc.adam_beta1 = cfg.get_double("trainer.adam_beta1", tc.adam_beta1);
    tc.adam_beta2 = cfg.get_double("trainer.adam_beta2", tc.adam_beta2);
    tc.adam_eps = cfg.get_double("trainer.adam_eps", tc.adam_eps);
    tc.grad_clip = cfg.get_double("trainer.grad_clip", tc.grad_clip);
    tc.threads = static_cast<int>(cfg.get_long("trainer.threads", tc.threads));
    return tc;
}

RewardEvaluator make_pipeline_evaluator(const pipeline::Pipeline& pipe,
                                        const reward::Weights& weights,
                                        bool ctc_in_reward) {
    return [&pipe, weights, ctc_in_reward](const policy::TokenSequence& seq,
                                           const TrainingExample& ex) {
        const auto b =
            reward::composite_reward(seq.tokens, ex.ctx.transcript_tokens, weights, pipe);
        SampleEval s;
        s.aes = b.aes;
        s.ctc_loss = b.ctc_loss;
        s.reward = ctc_in_reward ? b.total : weights.alpha_aes * b.aes;
        return s;
    };
}

ObjectiveStats estimate_objective(const policy::PolicyParams& params,
                                  const policy::PolicyParams& ref_params,
                                  std::span<const TrainingExample> batch,
                                  const TrainerConfig& cfg, const RewardEvaluator& eval) {
    check_config(cfg);
    if (batch.empty()) throw input_error("trainer: empty batch");
    const auto outcomes =
        rollout(params, ref_params, batch, cfg, eval, "objective", 0, false);
    ObjectiveStats st;
    for (const auto& o : outcomes) {
        st.mean_reward += o.eval.reward;
        st.mean_kl += o.kl;
    }
    st.mean_reward /= static_cast<double>(outcomes.size());
    st.mean_kl /= static_cast<double>(outcomes.size());
    st.objective = st.mean_reward - cfg.beta * st.mean_kl;
    return st;
}

GradientEstimate estimate_gradient(const policy::PolicyParams& params,
                                   const policy::PolicyParams& ref_params,
                                   std::span<const TrainingExample> batch,
                                   const TrainerConfig& cfg, long iteration,
                                   const RewardEvaluator& eval) {
    check_config(cfg);
    if (batch.empty()) throw input_error("trainer: empty batch");

    const auto outcomes =
        rollout(params, ref_params, batch, cfg, eval,
                "traj", static_cast<std::uint64_t>(iteration), true);
    const auto adv = loo_advantages(outcomes, batch.size(), cfg.mc_samples);
    const double n = static_cast<double>(outcomes.size());

    GradientEstimate est;
    est.grad.assign(params.values.size(), 0.0);
    for (std::size_t s = 0; s < outcomes.size(); ++s) {
        kn::axpy(adv[s] / n, outcomes[s].logp_grad, est.grad);
        if (cfg.beta != 0.0) kn::axpy(-cfg.beta / n, outcomes[s].kl_grad, est.grad);
    }

    IterationRecord& rec = est.record;
    rec.iteration = iteration;
    for (const auto& o : outcomes) {
        rec.mean_aes += o.eval.aes;
        rec.mean_ctc_loss += o.eval.ctc_loss;
        rec.mean_reward += o.eval.reward;
        rec.mean_kl += o.kl;
    }
    rec.mean_aes /= n;
    rec.mean_ctc_loss /= n;
    rec.mean_reward /= n;
    rec.mean_kl /= n;
    rec.grad_norm = std::sqrt(kn::squared_norm(est.grad));
    if (!std::isfinite(rec.grad_norm) || !std::isfinite(rec.mean_reward) ||
        !std::isfinite(rec.mean_kl)) {
        std::ostringstream msg;
        msg << "iteration " << iteration << ": non-finite gradient estimate (|g| = "
            << rec.grad_norm << ", mean reward = " << rec.mean_reward << ")";
        throw numeric_error(msg.str());
    }
    return est;
}

IterationRecord policy_gradient_step(policy::PolicyParams& params,
                                     const policy::PolicyParams& ref_params,
                                     std::span<const TrainingExample> batch,
                                     const TrainerConfig& cfg, AdamState& opt,
                                     long iteration, const RewardEvaluator& eval) {
    const std::size_t p_count = params.values.size();
    if (opt.m.empty() && opt.v.empty()) {
        opt.m.assign(p_count, 0.0);
        opt.v.assign(p_count, 0.0);
    }
    if (opt.m.size() != p_count || opt.v.size() != p_count) {
        throw input_error("trainer: optimizer state size mismatch");
    }

    auto est = estimate_gradient(params, ref_params, batch, cfg, iteration, eval);
    const IterationRecord rec = est.record;
    std::vector<double> ghat = std::move(est.grad);

    if (cfg.grad_clip > 0.0 && rec.grad_norm > cfg.grad_clip) {
        kn::scale(ghat, cfg.grad_clip / rec.grad_norm);
    }
    kn::scale(ghat, -1.0);  // Adam minimizes; the estimate points uphill
    opt.t += 1;
    kn::adam_update(params.values, opt.m, opt.v, ghat,
                    {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
                     opt.t});
    return rec;
}

std::pair<policy::PolicyParams, TrainingLog> train(const policy::PolicyParams& init,
                                                   const policy::PolicyParams& ref_params,
                                                   std::span<const TrainingExample> dataset,
                                                   const TrainerConfig& cfg,
                                                   const RewardEvaluator& eval) {
    check_config(cfg);
    if (dataset.empty()) throw input_error("trainer: empty dataset");

    policy::PolicyParams params = init;
    AdamState opt;
    TrainingLog log;
    log.reserve(static_cast<std::size_t>(cfg.iterations));

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();  // forces a shuffle before first use
    std::uint64_t epoch = 0;

    std::vector<TrainingExample> batch;
    for (long it = 1; it <= cfg.iterations; ++it) {
        batch.clear();
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor == order.size()) {
                rng::Stream s(rng::derive_seed(cfg.seed, "shuffle", {epoch++}));
                for (std::size_t i = order.size() - 1; i > 0; --i) {
                    const std::size_t j = s.next_u64() % (i + 1);
                    std::swap(order[i], order[j]);
                }
                cursor = 0;
            }
            batch.push_back(dataset[order[cursor++]]);
        }
        log.push_back(policy_gradient_step(params, ref_params, batch, cfg, opt, it, eval));
    }
    return {std::move(params), std::move(log)};
}

GradCheckVectors gradient_check_vectors(const policy::PolicyParams& params,
                                        const policy::PolicyParams& ref_params,
                                        const TrainingExample& example,
                                        const TrainerConfig& cfg,
                                        const RewardEvaluator& eval, double fd_step) {
    check_config(cfg);
    if (params.values.size() > 5000) {
        throw input_error("trainer: model too large for finite-difference checking");
    }
    if (!(fd_step > 0.0)) throw input_error("trainer: fd_step must be > 0");

    // Frozen trajectories and frozen coefficients: after this block, theta
    // only enters through log-probs and KL, so the surrogate is smooth.
    const int S = cfg.mc_samples;
    std::vector<PairOutcome> outcomes(S);
    for (int k = 0; k < S; ++k) {
        const std::uint64_t seed = rng::derive_seed(cfg.seed, "gradcheck",
                                                    {static_cast<std::uint64_t>(k)});
        outcomes[k].seq = policy::sample_sequence(params, example.ctx, seed, cfg.max_len);
        outcomes[k].eval = eval(outcomes[k].seq, example);
    }
    const auto adv = loo_advantages(outcomes, 1, S);

    GradCheckVectors v;
    v.analytic.assign(params.values.size(), 0.0);
    for (int k = 0; k < S; ++k) {
        const auto lg =
            policy::sequence_log_prob_grad(params, example.ctx, outcomes[k].seq.tokens);
        kn::axpy(adv[k] / S, lg.grad, v.analytic);
        if (cfg.beta != 0.0) {
            const auto kg = policy::trajectory_kl_grad(params, ref_params, example.ctx,
                                                       outcomes[k].seq.tokens);
            kn::axpy(-cfg.beta / S, kg.grad, v.analytic);
        }
    }

    policy::PolicyParams probe = params;
    const auto surrogate = [&]() {
        double f = 0.0;
        for (int k = 0; k < S; ++k) {
            f += adv[k] / S *
                 policy::sequence_log_prob(probe, example.ctx, outcomes[k].seq.tokens);
            if (cfg.beta != 0.0) {
                f -= cfg.beta / S *
                     policy::trajectory_kl(probe, ref_params, example.ctx,
                                           outcomes[k].seq.tokens);
            }
        }
        return f;
    };

    v.numeric.assign(params.values.size(), 0.0);
    for (std::size_t i = 0; i < probe.values.size(); ++i) {
        const double saved = probe.values[i];
        probe.values[i] = saved + fd_step;
        const double up = surrogate();
        probe.values[i] = saved - fd_step;
        const double down = surrogate();
        probe.values[i] = saved;
        v.numeric[i] = (up - down) / (2.0 * fd_step);
    }
    return v;
}

GradCheckReport compare_gradients(const GradCheckVectors& v) {
    if (v.analytic.size() != v.numeric.size()) {
        throw input_error("trainer: gradient vector size mismatch");
    }
    GradCheckReport r;
    r.param_count = v.analytic.size();
    // Coordinates far below the gradient's overall scale cannot be held to
    // a relative tolerance: central differences on a surrogate of size O(1)
    // carry ~1e-10 absolute noise in doubles. The floor compares such
    // coordinates on an absolute scale instead; a genuinely missing term
    // (comparable to neighbouring gradient magnitudes) still trips it.
    double scale = 1.0;
    for (std::size_t i = 0; i < v.analytic.size(); ++i) {
        scale = std::max({scale, std::abs(v.analytic[i]), std::abs(v.numeric[i])});
    }
    const double floor = 1e-5 * scale;
    for (std::size_t i = 0; i < v.analytic.size(); ++i) {
        const double a = v.analytic[i];
        const double n = v.numeric[i];
        const double rel = std::abs(a - n) / std::max({floor, std::abs(a), std::abs(n)});
        if (rel > r.max_rel_error) {
            r.max_rel_error = rel;
            r.worst_coordinate = i;
            r.worst_analytic = a;
            r.worst_numeric = n;
        }
    }
    return r;
}

GradCheckReport gradient_check(const policy::PolicyParams& params,
                               const policy::PolicyParams& ref_params,
                               const TrainingExample& example, const TrainerConfig& cfg,
                               const RewardEvaluator& eval, double fd_step) {
    return compare_gradients(
        gradient_check_vectors(params, ref_params, example, cfg, eval, fd_step));
}

void write_log_csv(const std::filesystem::path& path, const TrainingLog& log) {
    io::atomic_write(path, [&](std::ostream& os) {
        os << "iteration,mean_aes,mean_ctc_loss,mean_reward,mean_kl,grad_norm\n";
        for (const auto& r : log) {
            os << r.iteration << ',' << format_g17(r.mean_aes) << ','
               << format_g17(r.mean_ctc_loss) << ',' << format_g17(r.mean_reward) << ','
               << format_g17(r.mean_kl) << ',' << format_g17(r.grad_norm) << '\n';
        }
    });
}

TrainingLog read_log_csv(const std::filesystem::path& path) {
    const auto lines = io::split_lines(io::read_text_file(path));
    if (lines.empty() ||
        lines[0] != "iteration,mean_aes,mean_ctc_loss,mean_reward,mean_kl,grad_norm") {
        throw io_error("bad training log header in " + path.string());
    }
    TrainingLog log;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::vector<std::string> fields;
        std::string cur;
        for (char c : lines[i]) {
            if (c == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        fields.push_back(cur);
        if (fields.size() != 6) {
            throw io_error("bad training log row in " + path.string());
        }
        IterationRecord r;
        try {
            std::size_t pos = 0;
            r.iteration = std::stol(fields[0], &pos);
            if (pos != fields[0].size()) throw io_error("");
            double* slots[5] = {&r.mean_aes, &r.mean_ctc_loss, &r.mean_reward,
                                &r.mean_kl, &r.grad_norm};
            for (int f = 0; f < 5; ++f) {
                pos = 0;
                *slots[f] = std::stod(fields[f + 1], &pos);
                if (pos != fields[f + 1].size()) throw io_error("");
            }
        } catch (const std::exception&) {
            throw io_error("bad training log row in " + path.string() + ": " + lines[i]);
        }
        log.push_back(r);
    }
    return log;
}

std::vector<TrainingExample> load_dataset(const std::filesystem::path& path) {
    const auto lines = io::split_lines(io::read_text_file(path));
    std::vector<TrainingExample> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string id, transcript, prompt, extra;
        if (!(ss >> id >> transcript >> prompt) || (ss >> extra)) {
            throw input_error("dataset line " + std::to_string(i + 1) +
                              ": expected `id transcript_csv prompt_csv`");
        }
        TrainingExample ex;
        ex.id = id;
        ex.ctx.transcript_tokens = io::parse_int_csv(transcript);
        if (prompt != "-") ex.ctx.prompt_tokens = io::parse_int_csv(prompt);
        if (ex.ctx.transcript_tokens.empty()) {
            throw input_error("dataset line " + std::to_string(i + 1) +
                              ": empty transcript");
        }
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace prl::trainer
