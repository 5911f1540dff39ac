#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prl/config.hpp"
#include "prl/pipeline.hpp"
#include "prl/policy.hpp"
#include "prl/reward.hpp"

// Online policy-gradient training. The estimator is REINFORCE with a
// leave-one-out baseline over the Monte-Carlo samples of each example, plus
// an analytic KL penalty toward the frozen reference policy, applied as a
// separate loss term rather than folded into per-sample rewards:
//
//   g = mean_{e,k} (r_ek - b_ek) * dlogpi(tau_ek) - beta * mean_{e,k} dKL(tau_ek)
//
// where b_ek is the mean reward of the other samples for the same example.
// The baseline is computed as a mean of pairwise differences so that equal
// rewards cancel exactly, not just to rounding.
//
// All sampling seeds derive from (cfg.seed, purpose tag, iteration, slot),
// so results are independent of thread count and scheduling.

namespace prl::trainer {

struct TrainerConfig {
    double beta = 50.0;
    double learning_rate = 5.0e-7;  // production-scale default; experiment configs override
    int mc_samples = 6;
    int iterations = 200;
    int batch_size = 4;
    std::uint64_t seed = 0;
    bool ctc_in_reward = true;
    int max_len = 64;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 0.0;  // L2 clip on the gradient estimate; 0 = off
    int threads = 1;
};

// Reads the trainer.* keys (plus the shared seed) from a flat config,
// falling back to the defaults above. One definition shared by every
// entry point, so a config file means the same thing everywhere.
TrainerConfig config_from(config::KeyValue& cfg);

struct TrainingExample {
    std::string id;
    policy::PromptContext ctx;
};

// Per-sample measurements. `reward` is the value the estimator trains on;
// aes and ctc_loss are always measured for logging, even when the reward
// ignores the ctc term.
struct SampleEval {
    double aes = 0.0;
    double ctc_loss = 0.0;
    double reward = 0.0;
};

using RewardEvaluator =
    std::function<SampleEval(const policy::TokenSequence&, const TrainingExample&)>;

// The production evaluator: composite reward over the frozen pipeline.
// With ctc_in_reward = false the trained reward drops the ctc term (the
// hacking configuration) while ctc_loss is still measured.
RewardEvaluator make_pipeline_evaluator(const pipeline::Pipeline& pipe,
                                        const reward::Weights& weights,
                                        bool ctc_in_reward);

struct IterationRecord {
    long iteration = 0;  // 1-based
    double mean_aes = 0.0;
    double mean_ctc_loss = 0.0;
    double mean_reward = 0.0;
    double mean_kl = 0.0;
    double grad_norm = 0.0;
};

using TrainingLog = std::vector<IterationRecord>;

struct ObjectiveStats {
    double mean_reward = 0.0;
    double mean_kl = 0.0;
    double objective = 0.0;  // mean_reward - beta * mean_kl
};

ObjectiveStats estimate_objective(const policy::PolicyParams& params,
                                  const policy::PolicyParams& ref_params,
                                  std::span<const TrainingExample> batch,
                                  const TrainerConfig& cfg, const RewardEvaluator& eval);

struct AdamState {
    std::vector<double> m, v;
    std::int64_t t = 0;
};

// One Monte-Carlo gradient estimate (ascent direction, before clipping or
// the optimizer) together with the batch statistics it was computed from.
// This is the exact quantity policy_gradient_step feeds into Adam, exposed
// so its bias can be measured against enumerable ground truth.
struct GradientEstimate {
    std::vector<double> grad;
    IterationRecord record;
};

GradientEstimate estimate_gradient(const policy::PolicyParams& params,
                                   const policy::PolicyParams& ref_params,
                                   std::span<const TrainingExample> batch,
                                   const TrainerConfig& cfg, long iteration,
                                   const RewardEvaluator& eval);

// One sampled batch step: estimate the gradient, apply an Adam update in
// place, return the iteration record (statistics of the pre-update policy).
// Throws prl::numeric_error on a non-finite gradient.
IterationRecord policy_gradient_step(policy::PolicyParams& params,
                                     const policy::PolicyParams& ref_params,
                                     std::span<const TrainingExample> batch,
                                     const TrainerConfig& cfg, AdamState& opt,
                                     long iteration, const RewardEvaluator& eval);

// Full run: shuffled fixed-size batches (reshuffled each epoch from the
// derived seed), cfg.iterations steps, one record per step.
std::pair<policy::PolicyParams, TrainingLog> train(const policy::PolicyParams& init,
                                                   const policy::PolicyParams& ref_params,
                                                   std::span<const TrainingExample> dataset,
                                                   const TrainerConfig& cfg,
                                                   const RewardEvaluator& eval);

// Finite-difference verification of the step's analytic gradient on a
// frozen-trajectory surrogate: trajectories and baseline coefficients are
// sampled once and held fixed, then
//
//   f(theta) = mean_k c_k * log pi_theta(tau_k) - beta * mean_k KL_theta(tau_k)
//
// is differentiated both ways. Central differences, configurable step.
struct GradCheckVectors {
    std::vector<double> analytic;
    std::vector<double> numeric;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_coordinate = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t param_count = 0;
};

GradCheckVectors gradient_check_vectors(const policy::PolicyParams& params,
                                        const policy::PolicyParams& ref_params,
                                        const TrainingExample& example,
                                        const TrainerConfig& cfg,
                                        const RewardEvaluator& eval,
                                        double fd_step = 1e-5);

GradCheckReport compare_gradients(const GradCheckVectors& v);

GradCheckReport gradient_check(const policy::PolicyParams& params,
                               const policy::PolicyParams& ref_params,
                               const TrainingExample& example, const TrainerConfig& cfg,
                               const RewardEvaluator& eval, double fd_step = 1e-5);

// Training-curve CSV: header + one row per iteration, floats as %.17g so
// the file is a faithful record of the doubles.
void write_log_csv(const std::filesystem::path& path, const TrainingLog& log);
TrainingLog read_log_csv(const std::filesystem::path& path);

// Dataset file: one example per line, `id transcript_csv prompt_csv`,
// '-' for an empty prompt, '#' comments.
std::vector<TrainingExample> load_dataset(const std::filesystem::path& path);

}  // namespace prl::trainer
