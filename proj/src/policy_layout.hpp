#pragma once

#include <cstddef>
#include <vector>

#include "prl/policy.hpp"

// Internal: offsets of each parameter block inside PolicyParams::values.
// Shared by the forward/backward code and the fixture generator (which
// hand-wires specific weights); not part of the public surface.

namespace prl::policy::detail {

struct Layout {
    int va, vt, e, h, l;
    std::size_t text_embed, audio_embed, sep, bos;
    struct Layer {
        std::size_t w_in, w_rec, b;
        int in_dim;
    };
    std::vector<Layer> layer;
    std::size_t w_out, b_out, total;

    static Layout of(const ModelConfig& c) {
        Layout lay;
        lay.va = c.vocab.audio_vocab;
        lay.vt = c.vocab.text_vocab;
        lay.e = c.embed_dim;
        lay.h = c.hidden_dim;
        lay.l = c.layers;
        std::size_t off = 0;
        lay.text_embed = off;
        off += static_cast<std::size_t>(lay.vt) * lay.e;
        lay.audio_embed = off;
        off += static_cast<std::size_t>(lay.va) * lay.e;
        lay.sep = off;
        off += lay.e;
        lay.bos = off;
        off += lay.e;
        for (int i = 0; i < lay.l; ++i) {
            Layer lo;
            lo.in_dim = i == 0 ? lay.e : lay.h;
            lo.w_in = off;
            off += static_cast<std::size_t>(lay.h) * lo.in_dim;
            lo.w_rec = off;
            off += static_cast<std::size_t>(lay.h) * lay.h;
            lo.b = off;
            off += lay.h;
            lay.layer.push_back(lo);
        }
        lay.w_out = off;
        off += static_cast<std::size_t>(lay.va) * lay.h;
        lay.b_out = off;
        off += lay.va;
        lay.total = off;
        return lay;
    }
};

}  // namespace prl::policy::detail
