// SPDX-License-Identifier: Apache-2.0
//
// Visual abstractor: compresses N_v dense visual features into K learnable
// query tokens in LM embedding space via cross-attention. Trainable in both
// stages.
#pragma once

#include "owlet/nn.h"

namespace owlet {

struct AbstractorConfig {
    int num_queries = 8;
    int layers = 2;
    int dim = 128;  // LM embedding dim after projection
    int heads = 4;
    bool self_attention_on_queries = true;

    void validate() const {
        if (num_queries < 1) throw config_error("abstractor: num_queries must be at least 1");
        if (layers < 1) throw config_error("abstractor: layers must be at least 1");
        if (dim < 1 || heads < 1 || dim % heads != 0)
            throw config_error("abstractor: dim " + std::to_string(dim) +
                               " not divisible by heads " + std::to_string(heads));
    }
};

template <typename S>
struct Abstractor {
    AbstractorConfig cfg;
    int visual_dim = 0;
    Tensor<S> queries;  // [K × dim]
    nn::Linear<S> in_proj;
    nn::Norm<S> in_norm;

    struct Layer {
        nn::Norm<S> norm_self;
        nn::Attention<S> self_attn;  // optional, on queries
        nn::Norm<S> norm_cross;
        nn::Attention<S> cross_attn;  // queries -> visual
        nn::Norm<S> norm_mlp;
        nn::Mlp<S> mlp;
    };
    std::vector<Layer> layers;
    nn::Norm<S> norm_out;

    void init(const AbstractorConfig& c, int d_visual, std::mt19937& rng, double sd = 0.02) {
        c.validate();
        if (d_visual < 1) throw config_error("abstractor: visual dim must be positive");
        cfg = c;
        visual_dim = d_visual;
        queries = nn::randn<S>({cfg.num_queries, cfg.dim}, rng, sd);
        in_proj.init(cfg.dim, d_visual, true, rng, sd);
        in_norm.init(cfg.dim, nn::NormKind::layernorm);
        layers.resize(static_cast<size_t>(cfg.layers));
        for (auto& l : layers) {
            if (cfg.self_attention_on_queries) {
                l.norm_self.init(cfg.dim, nn::NormKind::layernorm);
                l.self_attn.init(cfg.dim, cfg.heads, true, rng, sd);
            }
            l.norm_cross.init(cfg.dim, nn::NormKind::layernorm);
            l.cross_attn.init(cfg.dim, cfg.heads, true, rng, sd);
            l.norm_mlp.init(cfg.dim, nn::NormKind::layernorm);
            l.mlp.init(cfg.dim, cfg.dim * 4, true, rng, sd);
        }
        norm_out.init(cfg.dim, nn::NormKind::layernorm);
    }

    // [N_v × d_visual] -> [K × dim], K rows regardless of N_v.
    Tensor<S> forward(const Tensor<S>& visual) const {
        if (visual.rank() != 2 || visual.dim(1) != visual_dim)
            throw dim_error("abstractor: expected visual features [N_v x " +
                            std::to_string(visual_dim) + "], got " + shape_str(visual.shape()));
        Tensor<S> v = in_norm(in_proj(visual));
        Tensor<S> q = queries;
        for (const auto& l : layers) {
            if (cfg.self_attention_on_queries) {
                Tensor<S> n = l.norm_self(q);
                q = add(q, l.self_attn.forward(n, n, false));
            }
            q = add(q, l.cross_attn.forward(l.norm_cross(q), v, false));
            q = add(q, l.mlp.forward(l.norm_mlp(q)));
        }
        return norm_out(q);
    }

    void visit(const std::string& prefix, const nn::ParamVisitor<S>& fn) {
        fn(prefix + ".queries", queries);
        in_proj.visit(prefix + ".in_proj", fn);
        in_norm.visit(prefix + ".in_norm", fn);
        for (size_t i = 0; i < layers.size(); ++i) {
            const std::string lp = prefix + ".layers." + std::to_string(i);
            if (cfg.self_attention_on_queries) {
                layers[i].norm_self.visit(lp + ".norm_self", fn);
                layers[i].self_attn.visit(lp + ".self_attn", fn);
            }
            layers[i].norm_cross.visit(lp + ".norm_cross", fn);
            layers[i].cross_attn.visit(lp + ".cross_attn", fn);
            layers[i].norm_mlp.visit(lp + ".norm_mlp", fn);
            layers[i].mlp.visit(lp + ".mlp", fn);
        }
        norm_out.visit(prefix + ".norm_out", fn);
    }
};

}  // namespace owlet
