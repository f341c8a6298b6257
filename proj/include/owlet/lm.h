// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only causal LM consuming [K visual tokens ∥ text tokens]. Base
// weights are frozen after initialization; Stage 2 adapts it through LoRA.
#pragma once

#include <optional>
#include <random>

#include "owlet/nn.h"
#include "owlet/vocab.h"

namespace owlet {

struct LMConfig {
    int vocab_size = 512;
    int layers = 4;
    int dim = 128;
    int heads = 4;
    int max_positions = 256;
    nn::NormKind norm = nn::NormKind::rmsnorm;

    void validate() const {
        if (vocab_size < Vocabulary::kMinSize)
            throw config_error("lm: vocab_size " + std::to_string(vocab_size) +
                               " below minimum " + std::to_string(Vocabulary::kMinSize));
        if (layers < 1) throw config_error("lm: layers must be at least 1");
        if (dim < 1 || heads < 1 || dim % heads != 0)
            throw config_error("lm: dim " + std::to_string(dim) + " not divisible by heads " +
                               std::to_string(heads));
        if (max_positions < 2) throw config_error("lm: max_positions must be at least 2");
    }
};

struct DecodeConfig {
    bool greedy = true;
    double temperature = 1.0;
    int max_new = 32;
    std::uint64_t seed = 0;
};

// Maps a text position to its row in the expanded sequence, where the IMAGE
// placeholder at `slot` becomes n_visual rows. A token's row is the one whose
// logits predict the next text token; for the slot itself that is the last
// visual row.
inline int expanded_index(int t, std::optional<int> slot, int n_visual) {
    if (!slot.has_value()) return t;
    if (t < *slot) return t;
    if (t == *slot) return *slot + n_visual - 1;
    return t + n_visual - 1;
}

template <typename S>
struct LanguageModel {
    LMConfig cfg;
    Tensor<S> tok_emb;  // [V × dim]
    Tensor<S> pos_emb;  // [max_positions × dim]
    std::vector<nn::Block<S>> blocks;
    nn::Norm<S> norm_out;
    nn::Linear<S> head;  // dim -> V, no bias

    // LoRA parameter registry, filled by lora::attach. Names are relative
    // ("blocks.0.q_proj.a"); the model prefixes the group.
    std::vector<std::pair<std::string, std::shared_ptr<nn::LoraAdapter<S>>>> adapters;

    void init(const LMConfig& c, std::mt19937& rng, double sd = 0.02) {
        c.validate();
        cfg = c;
        tok_emb = nn::randn<S>({cfg.vocab_size, cfg.dim}, rng, sd);
        pos_emb = nn::randn<S>({cfg.max_positions, cfg.dim}, rng, sd);
        blocks.resize(static_cast<size_t>(cfg.layers));
        for (auto& b : blocks) b.init(cfg.dim, cfg.heads, cfg.norm, false, rng, sd);
        norm_out.init(cfg.dim, cfg.norm);
        head.init(cfg.vocab_size, cfg.dim, false, rng, sd);
    }

    // Embeds tokens, splices visual rows over the IMAGE placeholder, runs the
    // causal stack. Returns logits [T′ × V] with T′ = T - 1 + n_visual when an
    // image is present.
    Tensor<S> forward_multimodal(const std::vector<int>& tokens,
                                 const std::optional<Tensor<S>>& visual_tokens) const {
        if (tokens.empty()) throw contract_error("lm: empty token sequence");
        int slot = -1;
        for (size_t i = 0; i < tokens.size(); ++i) {
            if (tokens[i] == Vocabulary::kImage) {
                if (slot >= 0) throw contract_error("lm: more than one IMAGE placeholder");
                slot = static_cast<int>(i);
            }
        }
        if (slot >= 0 && !visual_tokens.has_value())
            throw contract_error("lm: IMAGE placeholder present but no visual tokens supplied");
        if (slot < 0 && visual_tokens.has_value())
            throw contract_error("lm: visual tokens supplied but no IMAGE placeholder");
        if (visual_tokens.has_value() &&
            (visual_tokens->rank() != 2 || visual_tokens->dim(1) != cfg.dim))
            throw dim_error("lm: visual tokens must be [K x " + std::to_string(cfg.dim) +
                            "], got " + shape_str(visual_tokens->shape()));

        const int t = static_cast<int>(tokens.size());
        const int n_vis = visual_tokens.has_value() ? visual_tokens->dim(0) : 0;
        const int tp = slot >= 0 ? t - 1 + n_vis : t;
        if (tp > cfg.max_positions)
            throw length_error("lm: expanded sequence of " + std::to_string(tp) +
                               " rows exceeds max_positions " + std::to_string(cfg.max_positions));

        Tensor<S> x;
        if (slot < 0) {
            x = embedding_lookup(tok_emb, tokens);
        } else {
            std::vector<Tensor<S>> parts;
            if (slot > 0) {
                std::vector<int> pre(tokens.begin(), tokens.begin() + slot);
                parts.push_back(embedding_lookup(tok_emb, pre));
            }
            parts.push_back(*visual_tokens);
            if (slot + 1 < t) {
                std::vector<int> post(tokens.begin() + slot + 1, tokens.end());
                parts.push_back(embedding_lookup(tok_emb, post));
            }
            x = parts.size() == 1 ? parts[0] : concat(parts, 0);
        }

        // Visual rows take ordinary consecutive position indices.
        x = add(x, slice(pos_emb, 0, 0, tp));
        for (const auto& b : blocks) x = b.forward(x, true);
        return head(norm_out(x));
    }

    // Autoregressive decoding until EOS or max_new tokens. Greedy is argmax
    // with lowest-id tie-break; temperature sampling is deterministic given
    // the seed. Runs tape-free.
    std::vector<int> generate(const std::vector<int>& prompt,
                              const std::optional<Tensor<S>>& visual_tokens,
                              const DecodeConfig& decode) const {
        if (prompt.empty()) throw contract_error("generate: empty prompt");
        if (decode.max_new < 0) throw contract_error("generate: max_new must be nonnegative");
        if (!decode.greedy && decode.temperature <= 0)
            throw contract_error("generate: temperature must be positive");

        std::mt19937 rng(static_cast<unsigned>(decode.seed));
        std::vector<int> seq = prompt;
        std::vector<int> out;
        for (int step = 0; step < decode.max_new; ++step) {
            Tensor<S> logits = forward_multimodal(seq, visual_tokens);
            const int last = logits.dim(0) - 1;
            const S* row = logits.data() + static_cast<std::int64_t>(last) * cfg.vocab_size;
            int next = 0;
            if (decode.greedy) {
                for (int j = 1; j < cfg.vocab_size; ++j)
                    if (row[j] > row[next]) next = j;
            } else {
                std::vector<S> probs(static_cast<size_t>(cfg.vocab_size));
                kernels::softmax_rows_serial(row, probs.data(), 1, cfg.vocab_size);
                // pre-scaled logits: divide by temperature before softmax
                if (decode.temperature != 1.0) {
                    std::vector<S> scaled(static_cast<size_t>(cfg.vocab_size));
                    for (int j = 0; j < cfg.vocab_size; ++j)
                        scaled[static_cast<size_t>(j)] = row[j] / static_cast<S>(decode.temperature);
                    kernels::softmax_rows_serial(scaled.data(), probs.data(), 1, cfg.vocab_size);
                }
                const double u = static_cast<double>(rng() >> 8) / 16777216.0;
                double cum = 0.0;
                next = cfg.vocab_size - 1;
                for (int j = 0; j < cfg.vocab_size; ++j) {
                    cum += static_cast<double>(probs[static_cast<size_t>(j)]);
                    if (u < cum) {
                        next = j;
                        break;
                    }
                }
            }
            if (next == Vocabulary::kEos) break;
            out.push_back(next);
            seq.push_back(next);
        }
        return out;
    }

    void visit(const std::string& prefix, const nn::ParamVisitor<S>& fn) {
        fn(prefix + ".tok_emb", tok_emb);
        fn(prefix + ".pos_emb", pos_emb);
        for (size_t i = 0; i < blocks.size(); ++i)
            blocks[i].visit(prefix + ".blocks." + std::to_string(i), fn);
        norm_out.visit(prefix + ".norm_out", fn);
        head.visit(prefix + ".head", fn);
    }

    void visit_lora(const std::string& prefix, const nn::ParamVisitor<S>& fn) {
        for (auto& [name, ad] : adapters) {
            fn(prefix + "." + name + ".a", ad->a);
            fn(prefix + "." + name + ".b", ad->b);
        }
    }
};

}  // namespace owlet
