// SPDX-License-Identifier: Apache-2.0
//
// The assembled pipeline: vision encoder -> abstractor -> language model,
// with the rendered-example loss and generation entry points.
#pragma once

#include "owlet/abstractor.h"
#include "owlet/lm.h"
#include "owlet/render.h"
#include "owlet/vision.h"

namespace owlet {

struct ModelConfig {
    VisionConfig vision;
    AbstractorConfig abstractor;
    LMConfig lm;
    std::uint64_t init_seed = 42;
    double init_sd = 0.02;

    void validate() const {
        vision.validate();
        abstractor.validate();
        lm.validate();
        if (abstractor.dim != lm.dim)
            throw config_error("model: abstractor dim " + std::to_string(abstractor.dim) +
                               " must equal lm dim " + std::to_string(lm.dim));
        if (lm.max_positions < abstractor.num_queries + 2)
            throw config_error("model: max_positions too small for the visual prefix");
    }
};

inline const std::vector<std::string>& parameter_groups() {
    static const std::vector<std::string> groups = {"vision", "abstractor", "lm", "lora"};
    return groups;
}

inline std::string group_of(const std::string& param_name) {
    const size_t dot = param_name.find('.');
    return dot == std::string::npos ? param_name : param_name.substr(0, dot);
}

template <typename S>
struct MultimodalModel {
    ModelConfig cfg;
    VisionEncoder<S> vision;
    Abstractor<S> abstractor;
    LanguageModel<S> lm;

    void init(const ModelConfig& c) {
        c.validate();
        cfg = c;
        std::mt19937 rng(static_cast<unsigned>(c.init_seed));
        vision.init(c.vision, rng, c.init_sd);
        abstractor.init(c.abstractor, c.vision.dim, rng, c.init_sd);
        lm.init(c.lm, rng, c.init_sd);
    }

    // K visual tokens in LM embedding space for one image.
    Tensor<S> visual_tokens(const ImageTensor& img) const {
        return abstractor.forward(vision.encode_image(img));
    }

    // Next-token loss over a rendered example: the row for text position t is
    // scored against token t+1 with the mask of t+1, so visual rows and
    // prompt rows are never scored.
    Tensor<S> example_loss(const RenderedExample& ex) const {
        std::optional<Tensor<S>> vis;
        if (ex.image_slot.has_value()) {
            if (!ex.image.has_value())
                throw contract_error("example_loss: image slot without pixels");
            vis = visual_tokens(*ex.image);
        }
        Tensor<S> logits = lm.forward_multimodal(ex.tokens, vis);
        const int t = ex.length();
        const int n_vis = vis.has_value() ? vis->dim(0) : 0;
        const int tp = logits.dim(0);
        std::vector<int> targets(static_cast<size_t>(tp), 0);
        std::vector<std::uint8_t> emask(static_cast<size_t>(tp), 0);
        for (int i = 0; i + 1 < t; ++i) {
            if (!ex.loss_mask[static_cast<size_t>(i + 1)]) continue;
            const int e = expanded_index(i, ex.image_slot, n_vis);
            targets[static_cast<size_t>(e)] = ex.tokens[static_cast<size_t>(i + 1)];
            emask[static_cast<size_t>(e)] = 1;
        }
        return masked_cross_entropy(logits, targets, emask);
    }

    std::vector<int> generate(const RenderedExample& prompt, const DecodeConfig& decode) const {
        std::optional<Tensor<S>> vis;
        if (prompt.image_slot.has_value()) {
            if (!prompt.image.has_value())
                throw contract_error("generate: image slot without pixels");
            vis = visual_tokens(*prompt.image);
        }
        return lm.generate(prompt.tokens, vis, decode);
    }

    void visit_group(const std::string& group, const nn::ParamVisitor<S>& fn) {
        if (group == "vision") {
            vision.visit("vision", fn);
        } else if (group == "abstractor") {
            abstractor.visit("abstractor", fn);
        } else if (group == "lm") {
            lm.visit("lm", fn);
        } else if (group == "lora") {
            lm.visit_lora("lora", fn);
        } else {
            throw config_error("unknown parameter group \"" + group + "\"");
        }
    }

    void visit_all(const nn::ParamVisitor<S>& fn) {
        for (const std::string& g : parameter_groups()) visit_group(g, fn);
    }

    std::vector<std::pair<std::string, Tensor<S>*>> named_params() {
        std::vector<std::pair<std::string, Tensor<S>*>> out;
        visit_all([&](const std::string& name, Tensor<S>& t) { out.emplace_back(name, &t); });
        return out;
    }
};

}  // namespace owlet
