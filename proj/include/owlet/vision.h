// SPDX-License-Identifier: Apache-2.0
//
// ViT-style image encoder producing dense patch features. Trainable during
// multimodal pretraining, frozen afterwards.
#pragma once

#include "owlet/image.h"
#include "owlet/nn.h"

namespace owlet {

struct VisionConfig {
    int image_size = 32;
    int patch_size = 8;
    int layers = 4;
    int dim = 64;
    int heads = 4;
    bool use_cls = true;

    int patches_per_side() const { return image_size / patch_size; }
    int num_patches() const { return patches_per_side() * patches_per_side(); }
    int num_outputs() const { return num_patches() + (use_cls ? 1 : 0); }

    void validate() const {
        if (image_size <= 0 || patch_size <= 0)
            throw config_error("vision: image_size and patch_size must be positive");
        if (image_size % patch_size != 0)
            throw config_error("vision: image_size " + std::to_string(image_size) +
                               " not divisible by patch_size " + std::to_string(patch_size));
        if (layers < 1) throw config_error("vision: layers must be at least 1");
        if (dim < 1 || heads < 1 || dim % heads != 0)
            throw config_error("vision: dim " + std::to_string(dim) + " not divisible by heads " +
                               std::to_string(heads));
    }
};

// [H×W×3] image -> [N_p × (p²·3)] rows, one flattened patch per row in
// row-major patch order. Values are copied without normalization; within a
// patch the layout is (y, x, channel).
template <typename S>
Tensor<S> patchify(const ImageTensor& img, int patch_size) {
    if (!img.valid()) throw contract_error("patchify: invalid image");
    if (patch_size <= 0 || img.h % patch_size != 0 || img.w % patch_size != 0)
        throw dim_error("patchify: image " + std::to_string(img.h) + "x" + std::to_string(img.w) +
                        " not divisible by patch size " + std::to_string(patch_size));
    const int py = img.h / patch_size, px = img.w / patch_size;
    const int pd = patch_size * patch_size * 3;
    Tensor<S> out({py * px, pd});
    S* dst = out.data();
    for (int gy = 0; gy < py; ++gy)
        for (int gx = 0; gx < px; ++gx)
            for (int y = 0; y < patch_size; ++y)
                for (int x = 0; x < patch_size; ++x)
                    for (int c = 0; c < 3; ++c)
                        *dst++ = static_cast<S>(img.at(gy * patch_size + y, gx * patch_size + x, c));
    return out;
}

template <typename S>
struct VisionEncoder {
    VisionConfig cfg;
    nn::Linear<S> patch_proj;
    Tensor<S> pos_emb;  // [N_v × dim], learned absolute positions
    Tensor<S> cls;      // [1 × dim] when use_cls
    std::vector<nn::Block<S>> blocks;
    nn::Norm<S> norm_out;

    void init(const VisionConfig& c, std::mt19937& rng, double sd = 0.02) {
        c.validate();
        cfg = c;
        patch_proj.init(cfg.dim, cfg.patch_size * cfg.patch_size * 3, true, rng, sd);
        pos_emb = nn::randn<S>({cfg.num_outputs(), cfg.dim}, rng, sd);
        if (cfg.use_cls) cls = nn::randn<S>({1, cfg.dim}, rng, sd);
        blocks.resize(static_cast<size_t>(cfg.layers));
        for (auto& b : blocks)
            b.init(cfg.dim, cfg.heads, nn::NormKind::layernorm, true, rng, sd);
        norm_out.init(cfg.dim, nn::NormKind::layernorm);
    }

    // Differentiable path from patch rows to [N_v × dim] features.
    Tensor<S> encode_patches(const Tensor<S>& patches) const {
        Tensor<S> x = patch_proj(patches);
        if (cfg.use_cls) x = concat<S>({cls, x}, 0);
        x = add(x, pos_emb);
        for (const auto& b : blocks) x = b.forward(x, false);
        return norm_out(x);
    }

    // Full path from pixels; inputs of other sizes are resized first.
    Tensor<S> encode_image(const ImageTensor& img) const {
        const ImageTensor sized = (img.h == cfg.image_size && img.w == cfg.image_size)
                                      ? img
                                      : resize_bilinear(img, cfg.image_size, cfg.image_size);
        return encode_patches(patchify<S>(sized, cfg.patch_size));
    }

    void visit(const std::string& prefix, const nn::ParamVisitor<S>& fn) {
        patch_proj.visit(prefix + ".patch_proj", fn);
        fn(prefix + ".pos_emb", pos_emb);
        if (cls.defined()) fn(prefix + ".cls", cls);
        for (size_t i = 0; i < blocks.size(); ++i)
            blocks[i].visit(prefix + ".blocks." + std::to_string(i), fn);
        norm_out.visit(prefix + ".norm_out", fn);
    }
};

}  // namespace owlet
