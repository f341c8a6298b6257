// SPDX-License-Identifier: Apache-2.0
//
// Low-rank adaptation of the LM attention projections: attach, merge,
// unmerge. The adapted map computes W·x + (alpha/r)·B·(A·x) with W frozen,
// B zero-initialized so attaching is an exact identity.
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "owlet/lm.h"

namespace owlet::lora {

struct LoraConfig {
    int rank = 8;
    double alpha = 16.0;
    std::vector<std::string> targets = {"q_proj", "v_proj"};
    double dropout = 0.0;

    void validate() const {
        if (rank < 1) throw config_error("lora: rank must be at least 1");
        if (alpha <= 0) throw config_error("lora: alpha must be positive");
        if (targets.empty()) throw config_error("lora: no target maps");
        for (const auto& t : targets)
            if (t != "q_proj" && t != "k_proj" && t != "v_proj" && t != "o_proj")
                throw config_error("lora: unknown target map \"" + t + "\"");
        if (dropout != 0.0)
            throw config_error("lora: dropout is not supported; set it to 0");
    }
};

namespace detail {

template <typename S>
nn::Linear<S>& resolve_target(nn::Block<S>& block, const std::string& name) {
    if (name == "q_proj") return block.attn.q;
    if (name == "k_proj") return block.attn.k;
    if (name == "v_proj") return block.attn.v;
    if (name == "o_proj") return block.attn.o;
    throw config_error("lora: unknown target map \"" + name + "\"");
}

}  // namespace detail

// Attaches rank-r adapters to every targeted projection in every LM layer.
// A is small random, B zero, so the adapted forward equals the base forward
// bit-for-bit until training moves B.
template <typename S>
void attach(LanguageModel<S>& lm, const LoraConfig& cfg, std::mt19937& rng, double init_sd = 0.02) {
    cfg.validate();
    if (!lm.adapters.empty()) throw contract_error("lora: adapters already attached");
    for (size_t i = 0; i < lm.blocks.size(); ++i) {
        for (const std::string& t : cfg.targets) {
            nn::Linear<S>& lin = detail::resolve_target(lm.blocks[i], t);
            const int d_out = lin.w.dim(0), d_in = lin.w.dim(1);
            if (cfg.rank > std::min(d_in, d_out))
                throw config_error("lora: rank " + std::to_string(cfg.rank) +
                                   " exceeds min(d_in, d_out) = " +
                                   std::to_string(std::min(d_in, d_out)));
            auto ad = std::make_shared<nn::LoraAdapter<S>>();
            ad->a = nn::randn<S>({cfg.rank, d_in}, rng, init_sd);
            ad->b = Tensor<S>({d_out, cfg.rank}, S(0));
            ad->scale = cfg.alpha / static_cast<double>(cfg.rank);
            lin.adapter = ad;
            lm.adapters.emplace_back("blocks." + std::to_string(i) + "." + t, ad);
        }
    }
}

// Trainable parameter count added by attach: sum over targets of
// r·(d_in + d_out) per layer, times layers.
template <typename S>
std::int64_t trainable_param_count(const LanguageModel<S>& lm) {
    std::int64_t n = 0;
    for (const auto& [name, ad] : lm.adapters) n += ad->a.size() + ad->b.size();
    return n;
}

// W′ = W + scale·B·A.
template <typename S>
Tensor<S> merge(const nn::Linear<S>& lin) {
    if (!lin.adapter) throw contract_error("lora: merge on a linear without an adapter");
    const nn::LoraAdapter<S>& ad = *lin.adapter;
    if (ad.b.dim(0) != lin.w.dim(0) || ad.a.dim(1) != lin.w.dim(1) || ad.b.dim(1) != ad.a.dim(0))
        throw dim_error("lora: adapter shapes " + shape_str(ad.b.shape()) + "·" +
                        shape_str(ad.a.shape()) + " do not match weight " + shape_str(lin.w.shape()));
    return add(lin.w, scale(matmul(ad.b, ad.a), ad.scale));
}

// Recovers W from W′ = W + scale·B·A.
template <typename S>
Tensor<S> unmerge(const Tensor<S>& merged, const nn::LoraAdapter<S>& ad) {
    if (ad.b.dim(0) != merged.dim(0) || ad.a.dim(1) != merged.dim(1) ||
        ad.b.dim(1) != ad.a.dim(0))
        throw dim_error("lora: adapter shapes " + shape_str(ad.b.shape()) + "·" +
                        shape_str(ad.a.shape()) + " do not match weight " + shape_str(merged.shape()));
    return add(merged, scale(matmul(ad.b, ad.a), -ad.scale));
}

}  // namespace owlet::lora
