#include "prl/policy.hpp"

#include <cmath>
#include <string>

#include "prl/errors.hpp"
#include "prl/io.hpp"
#include "prl/kernels.hpp"
#include "prl/rng.hpp"
#include "policy_layout.hpp"

namespace prl::policy {

namespace {

namespace kn = prl::kernels;

// Offsets into the flat parameter vector. Order: text embeddings, audio
// embeddings, SEP, BOS, per-layer (W_in, W_rec, b), then W_out, b_out.
using detail::Layout;

struct InputRef {
    enum class Kind { Text, Audio, Sep, Bos };
    Kind kind;
    int id;  // token id for Text/Audio
};

void check_config(const ModelConfig& c) {
    if (c.vocab.audio_vocab < 2 || c.vocab.text_vocab < 2) {
        throw input_error("policy: vocabulary sizes must be >= 2");
    }
    if (c.embed_dim < 1 || c.hidden_dim < 1 || c.layers < 1) {
        throw input_error("policy: architecture dims must be >= 1");
    }
}

void check_context(const ModelConfig& c, const PromptContext& ctx) {
    if (ctx.transcript_tokens.empty()) {
        throw input_error("policy: transcript must be non-empty");
    }
    for (int t : ctx.transcript_tokens) {
        if (t < 0 || t >= c.vocab.text_vocab) {
            throw input_error("policy: transcript token " + std::to_string(t) +
                              " out of range");
        }
    }
    for (int t : ctx.prompt_tokens) {
        if (t < 0 || t >= c.vocab.audio_vocab) {
            throw input_error("policy: prompt token " + std::to_string(t) +
                              " out of range");
        }
        if (t == c.vocab.end_token()) {
            throw input_error("policy: END may not appear in prompt tokens");
        }
    }
}

void check_tokens(const ModelConfig& c, std::span<const int> tokens) {
    for (int t : tokens) {
        if (t < 0 || t >= c.vocab.audio_vocab) {
            throw input_error("policy: audio token " + std::to_string(t) +
                              " out of range");
        }
    }
}

void check_compatible(const PolicyParams& p) {
    check_config(p.config);
    if (p.values.size() != p.config.param_count()) {
        throw input_error("policy: parameter vector size " +
                          std::to_string(p.values.size()) + " does not match architecture");
    }
}

// Forward pass with stored activations; hidden(p, l) is the state of layer l
// after consuming input p.
class Trace {
public:
    Trace(const PolicyParams& params, const Layout& lay)
        : params_(params), lay_(lay) {}

    void consume(InputRef in) {
        inputs_.push_back(in);
        const std::size_t pos = inputs_.size() - 1;
        hidden_.resize(inputs_.size() * lay_.l * lay_.h);
        std::vector<double> act(lay_.h);
        for (int l = 0; l < lay_.l; ++l) {
            const auto& lo = lay_.layer[l];
            const std::span<const double> x =
                l == 0 ? embedding(in) : hidden(pos, l - 1);
            kn::matvec(param_span(lo.w_in, static_cast<std::size_t>(lay_.h) * lo.in_dim),
                       lay_.h, lo.in_dim, x, act);
            if (pos > 0) {
                // act += W_rec * h_prev
                const auto w_rec =
                    param_span(lo.w_rec, static_cast<std::size_t>(lay_.h) * lay_.h);
                const auto h_prev = hidden(pos - 1, l);
                for (int r = 0; r < lay_.h; ++r) {
                    act[r] += kn::dot(w_rec.subspan(static_cast<std::size_t>(r) * lay_.h,
                                                    lay_.h),
                                      h_prev);
                }
            }
            const auto b = param_span(lo.b, lay_.h);
            auto h_out = hidden_mut(pos, l);
            for (int r = 0; r < lay_.h; ++r) h_out[r] = std::tanh(act[r] + b[r]);
        }
    }

    void head_logits(std::size_t pos, std::span<double> out) const {
        kn::matvec(param_span(lay_.w_out, static_cast<std::size_t>(lay_.va) * lay_.h),
                   lay_.va, lay_.h, hidden(pos, lay_.l - 1), out);
        const auto b = param_span(lay_.b_out, lay_.va);
        for (int i = 0; i < lay_.va; ++i) out[i] += b[i];
    }

    std::size_t positions() const { return inputs_.size(); }

    std::span<const double> hidden(std::size_t pos, int layer) const {
        return {hidden_.data() + (pos * lay_.l + layer) * lay_.h,
                static_cast<std::size_t>(lay_.h)};
    }

    std::span<const double> embedding(InputRef in) const {
        switch (in.kind) {
            case InputRef::Kind::Text:
                return param_span(lay_.text_embed + static_cast<std::size_t>(in.id) * lay_.e,
                                  lay_.e);
            case InputRef::Kind::Audio:
                return param_span(lay_.audio_embed + static_cast<std::size_t>(in.id) * lay_.e,
                                  lay_.e);
            case InputRef::Kind::Sep:
                return param_span(lay_.sep, lay_.e);
            case InputRef::Kind::Bos:
                return param_span(lay_.bos, lay_.e);
        }
        return {};
    }

    std::size_t embedding_offset(InputRef in) const {
        switch (in.kind) {
            case InputRef::Kind::Text:
                return lay_.text_embed + static_cast<std::size_t>(in.id) * lay_.e;
            case InputRef::Kind::Audio:
                return lay_.audio_embed + static_cast<std::size_t>(in.id) * lay_.e;
            case InputRef::Kind::Sep:
                return lay_.sep;
            case InputRef::Kind::Bos:
                return lay_.bos;
        }
        return 0;
    }

    const InputRef& input(std::size_t pos) const { return inputs_[pos]; }
    const Layout& layout() const { return lay_; }

private:
    std::span<const double> param_span(std::size_t off, std::size_t n) const {
        return {params_.values.data() + off, n};
    }
    std::span<double> hidden_mut(std::size_t pos, int layer) {
        return {hidden_.data() + (pos * lay_.l + layer) * lay_.h,
                static_cast<std::size_t>(lay_.h)};
    }

    const PolicyParams& params_;
    const Layout& lay_;
    std::vector<InputRef> inputs_;
    std::vector<double> hidden_;
};

void consume_context(Trace& tr, const PromptContext& ctx) {
    for (int t : ctx.transcript_tokens) tr.consume({InputRef::Kind::Text, t});
    tr.consume({InputRef::Kind::Sep, 0});
    for (int t : ctx.prompt_tokens) tr.consume({InputRef::Kind::Audio, t});
    tr.consume({InputRef::Kind::Bos, 0});
}

std::size_t context_length(const PromptContext& ctx) {
    return ctx.transcript_tokens.size() + ctx.prompt_tokens.size() + 2;
}

// Consume context plus all generation inputs needed to evaluate heads for
// steps 0..n_steps-1. Head for step t sits at position ctx_len-1+t.
Trace run_trace(const PolicyParams& params, const Layout& lay, const PromptContext& ctx,
                std::span<const int> tokens) {
    Trace tr(params, lay);
    consume_context(tr, ctx);
    for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
        tr.consume({InputRef::Kind::Audio, tokens[t]});
    }
    return tr;
}

// Backpropagation through time. step_dlogits[t] is d(value)/d(logits) of the
// head at generation step t; the return is d(value)/d(params).
std::vector<double> backward(const Trace& tr, const PolicyParams& params,
                             std::size_t ctx_len,
                             std::span<const std::vector<double>> step_dlogits) {
    const Layout& lay = tr.layout();
    std::vector<double> grad(lay.total, 0.0);
    const std::size_t n_pos = tr.positions();
    const auto pspan = [&](std::size_t off, std::size_t n) {
        return std::span<const double>(params.values.data() + off, n);
    };
    const auto gspan = [&](std::size_t off, std::size_t n) {
        return std::span<double>(grad.data() + off, n);
    };

    // rec_carry[l] = gradient flowing into h(pos, l) through the recurrence
    // of position pos+1.
    std::vector<std::vector<double>> rec_carry(lay.l, std::vector<double>(lay.h, 0.0));
    std::vector<std::vector<double>> rec_next(lay.l, std::vector<double>(lay.h, 0.0));
    std::vector<double> dh(lay.h), da(lay.h), dx_down(lay.h);

    const auto w_out = pspan(lay.w_out, static_cast<std::size_t>(lay.va) * lay.h);

    for (std::size_t pos = n_pos; pos-- > 0;) {
        bool have_upper = false;
        for (int l = lay.l - 1; l >= 0; --l) {
            const auto& lo = lay.layer[l];
            // Gather dh for this (pos, layer).
            for (int r = 0; r < lay.h; ++r) dh[r] = rec_carry[l][r];
            if (l == lay.l - 1) {
                // Head contribution, if a head sits at this position.
                if (pos + 1 >= ctx_len) {
                    const std::size_t t = pos - (ctx_len - 1);
                    if (t < step_dlogits.size()) {
                        const auto& dz = step_dlogits[t];
                        const auto h_top = tr.hidden(pos, l);
                        auto g_wout = gspan(lay.w_out,
                                            static_cast<std::size_t>(lay.va) * lay.h);
                        auto g_bout = gspan(lay.b_out, lay.va);
                        for (int i = 0; i < lay.va; ++i) {
                            kn::axpy(dz[i], h_top,
                                     g_wout.subspan(static_cast<std::size_t>(i) * lay.h,
                                                    lay.h));
                            g_bout[i] += dz[i];
                            kn::axpy(dz[i],
                                     w_out.subspan(static_cast<std::size_t>(i) * lay.h,
                                                   lay.h),
                                     dh);
                        }
                    }
                }
            } else if (have_upper) {
                for (int r = 0; r < lay.h; ++r) dh[r] += dx_down[r];
            }

            const auto h_cur = tr.hidden(pos, l);
            for (int r = 0; r < lay.h; ++r) da[r] = dh[r] * (1.0 - h_cur[r] * h_cur[r]);

            // Recurrent weights and carry to position pos-1.
            std::fill(rec_next[l].begin(), rec_next[l].end(), 0.0);
            if (pos > 0) {
                const auto h_prev = tr.hidden(pos - 1, l);
                auto g_wrec = gspan(lo.w_rec, static_cast<std::size_t>(lay.h) * lay.h);
                const auto w_rec = pspan(lo.w_rec, static_cast<std::size_t>(lay.h) * lay.h);
                for (int r = 0; r < lay.h; ++r) {
                    kn::axpy(da[r], h_prev,
                             g_wrec.subspan(static_cast<std::size_t>(r) * lay.h, lay.h));
                    kn::axpy(da[r],
                             w_rec.subspan(static_cast<std::size_t>(r) * lay.h, lay.h),
                             rec_next[l]);
                }
            }

            // Bias.
            {
                auto g_b = gspan(lo.b, lay.h);
                for (int r = 0; r < lay.h; ++r) g_b[r] += da[r];
            }

            // Input weights and gradient into the layer input.
            const std::span<const double> x =
                l == 0 ? tr.embedding(tr.input(pos)) : tr.hidden(pos, l - 1);
            auto g_win = gspan(lo.w_in, static_cast<std::size_t>(lay.h) * lo.in_dim);
            const auto w_in = pspan(lo.w_in, static_cast<std::size_t>(lay.h) * lo.in_dim);
            dx_down.assign(lo.in_dim, 0.0);
            for (int r = 0; r < lay.h; ++r) {
                kn::axpy(da[r], x,
                         g_win.subspan(static_cast<std::size_t>(r) * lo.in_dim, lo.in_dim));
                kn::axpy(da[r],
                         w_in.subspan(static_cast<std::size_t>(r) * lo.in_dim, lo.in_dim),
                         dx_down);
            }
            if (l == 0) {
                kn::axpy(1.0, dx_down,
                         gspan(tr.embedding_offset(tr.input(pos)), lay.e));
            }
            have_upper = true;
        }
        for (int l = 0; l < lay.l; ++l) rec_carry[l] = rec_next[l];
    }
    return grad;
}

double stable_log_prob(std::span<const double> logits, int token) {
    return logits[token] - kn::logsumexp(logits);
}

}  // namespace

std::size_t ModelConfig::param_count() const { return Layout::of(*this).total; }

double TokenSequence::log_prob() const { return kn::sum(step_log_probs); }

PolicyParams random_params(const ModelConfig& config, std::uint64_t seed, double scale) {
    check_config(config);
    PolicyParams p;
    p.config = config;
    p.values.resize(config.param_count());
    rng::Stream stream(seed);
    for (double& v : p.values) v = scale * stream.normal();
    return p;
}

std::vector<double> next_token_distribution(const PolicyParams& params,
                                            const PromptContext& ctx,
                                            std::span<const int> prefix) {
    check_compatible(params);
    check_context(params.config, ctx);
    check_tokens(params.config, prefix);
    const Layout lay = Layout::of(params.config);
    Trace tr(params, lay);
    consume_context(tr, ctx);
    for (int t : prefix) tr.consume({InputRef::Kind::Audio, t});
    std::vector<double> logits(lay.va), probs(lay.va);
    tr.head_logits(tr.positions() - 1, logits);
    kn::softmax(logits, probs);
    return probs;
}

TokenSequence sample_sequence(const PolicyParams& params, const PromptContext& ctx,
                              std::uint64_t seed, int max_len) {
    check_compatible(params);
    check_context(params.config, ctx);
    if (max_len < 1) throw input_error("policy: max_len must be >= 1");
    const Layout lay = Layout::of(params.config);
    Trace tr(params, lay);
    consume_context(tr, ctx);
    rng::Stream stream(seed);
    TokenSequence seq;
    std::vector<double> logits(lay.va), probs(lay.va);
    for (int step = 0; step < max_len; ++step) {
        tr.head_logits(tr.positions() - 1, logits);
        kn::softmax(logits, probs);
        const int tok = static_cast<int>(stream.categorical(probs));
        seq.tokens.push_back(tok);
        seq.step_log_probs.push_back(stable_log_prob(logits, tok));
        if (tok == params.config.vocab.end_token()) break;
        if (step + 1 < max_len) tr.consume({InputRef::Kind::Audio, tok});
    }
    return seq;
}

double sequence_log_prob(const PolicyParams& params, const PromptContext& ctx,
                         std::span<const int> tokens) {
    check_compatible(params);
    check_context(params.config, ctx);
    check_tokens(params.config, tokens);
    if (tokens.empty()) return 0.0;
    const Layout lay = Layout::of(params.config);
    Trace tr = run_trace(params, lay, ctx, tokens);
    const std::size_t ctx_len = context_length(ctx);
    std::vector<double> logits(lay.va);
    double total = 0.0;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        tr.head_logits(ctx_len - 1 + t, logits);
        total += stable_log_prob(logits, tokens[t]);
    }
    return total;
}

double trajectory_kl(const PolicyParams& params, const PolicyParams& ref_params,
                     const PromptContext& ctx, std::span<const int> tokens) {
    return trajectory_kl_grad(params, ref_params, ctx, tokens).value;
}

ValueGrad sequence_log_prob_grad(const PolicyParams& params, const PromptContext& ctx,
                                 std::span<const int> tokens) {
    check_compatible(params);
    check_context(params.config, ctx);
    check_tokens(params.config, tokens);
    const Layout lay = Layout::of(params.config);
    if (tokens.empty()) return {0.0, std::vector<double>(lay.total, 0.0)};
    Trace tr = run_trace(params, lay, ctx, tokens);
    const std::size_t ctx_len = context_length(ctx);
    std::vector<double> logits(lay.va), probs(lay.va);
    std::vector<std::vector<double>> dlogits(tokens.size());
    double total = 0.0;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        tr.head_logits(ctx_len - 1 + t, logits);
        kn::softmax(logits, probs);
        total += stable_log_prob(logits, tokens[t]);
        // d log p(tok) / d z = onehot(tok) - softmax(z)
        auto& dz = dlogits[t];
        dz.resize(lay.va);
        for (int i = 0; i < lay.va; ++i) dz[i] = -probs[i];
        dz[tokens[t]] += 1.0;
    }
    return {total, backward(tr, params, ctx_len, dlogits)};
}

ValueGrad trajectory_kl_grad(const PolicyParams& params, const PolicyParams& ref_params,
                             const PromptContext& ctx, std::span<const int> tokens) {
    check_compatible(params);
    check_compatible(ref_params);
    if (params.config.param_count() != ref_params.config.param_count() ||
        params.config.vocab.audio_vocab != ref_params.config.vocab.audio_vocab) {
        throw input_error("policy: reference architecture mismatch");
    }
    check_context(params.config, ctx);
    check_tokens(params.config, tokens);
    const Layout lay = Layout::of(params.config);
    if (tokens.empty()) return {0.0, std::vector<double>(lay.total, 0.0)};
    Trace tr = run_trace(params, lay, ctx, tokens);
    const Layout ref_lay = Layout::of(ref_params.config);
    Trace ref_tr = run_trace(ref_params, ref_lay, ctx, tokens);
    const std::size_t ctx_len = context_length(ctx);

    std::vector<double> z(lay.va), zr(lay.va), p(lay.va);
    std::vector<std::vector<double>> dlogits(tokens.size());
    double total = 0.0;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        tr.head_logits(ctx_len - 1 + t, z);
        ref_tr.head_logits(ctx_len - 1 + t, zr);
        kn::softmax(z, p);
        const double lz = kn::logsumexp(z);
        const double lzr = kn::logsumexp(zr);
        double kl = 0.0;
        for (int i = 0; i < lay.va; ++i) {
            kl += p[i] * ((z[i] - lz) - (zr[i] - lzr));
        }
        total += kl;
        // d KL / d z_j = p_j * (log p_j - log q_j - KL)
        auto& dz = dlogits[t];
        dz.resize(lay.va);
        for (int i = 0; i < lay.va; ++i) {
            dz[i] = p[i] * ((z[i] - lz) - (zr[i] - lzr) - kl);
        }
    }
    return {total, backward(tr, params, ctx_len, dlogits)};
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
    check_compatible(params);
    io::Header h;
    h.magic = "prl-policy";
    h.fields["audio_vocab"] = std::to_string(params.config.vocab.audio_vocab);
    h.fields["text_vocab"] = std::to_string(params.config.vocab.text_vocab);
    h.fields["embed_dim"] = std::to_string(params.config.embed_dim);
    h.fields["hidden_dim"] = std::to_string(params.config.hidden_dim);
    h.fields["layers"] = std::to_string(params.config.layers);
    h.fields["params"] = std::to_string(params.values.size());
    io::write_blob(path, h, params.values);
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
    auto [h, payload] = io::read_blob(path);
    if (h.magic != "prl-policy") {
        throw io_error("not a policy checkpoint: " + path.string());
    }
    PolicyParams p;
    p.config.vocab.audio_vocab = static_cast<int>(h.get_long("audio_vocab"));
    p.config.vocab.text_vocab = static_cast<int>(h.get_long("text_vocab"));
    p.config.embed_dim = static_cast<int>(h.get_long("embed_dim"));
    p.config.hidden_dim = static_cast<int>(h.get_long("hidden_dim"));
    p.config.layers = static_cast<int>(h.get_long("layers"));
    const std::size_t declared = static_cast<std::size_t>(h.get_long("params"));
    if (payload.size() != declared || declared != p.config.param_count()) {
        throw io_error("checkpoint parameter count mismatch in " + path.string());
    }
    p.values = std::move(payload);
    return p;
}

}  // namespace prl::policy
