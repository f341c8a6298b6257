// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "owlet/lora.h"

using namespace owlet;

namespace {

LMConfig tiny_lm() {
    LMConfig cfg;
    cfg.vocab_size = 261;
    cfg.layers = 2;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.max_positions = 32;
    return cfg;
}

// Rank by Gaussian elimination with partial pivoting; independent of the
// adapter code under test.
int matrix_rank(Tensor<float> m, float tol = 1e-4f) {
    const int rows = m.dim(0), cols = m.dim(1);
    int rank = 0;
    for (int c = 0; c < cols && rank < rows; ++c) {
        int pivot = -1;
        float best = tol;
        for (int r = rank; r < rows; ++r) {
            const float v = std::fabs(m.data()[r * cols + c]);
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (pivot < 0) continue;
        for (int j = 0; j < cols; ++j)
            std::swap(m.data()[pivot * cols + j], m.data()[rank * cols + j]);
        for (int r = 0; r < rows; ++r) {
            if (r == rank) continue;
            const float f = m.data()[r * cols + c] / m.data()[rank * cols + c];
            for (int j = 0; j < cols; ++j) m.data()[r * cols + j] -= f * m.data()[rank * cols + j];
        }
        ++rank;
    }
    return rank;
}

}  // namespace

TEST_CASE("attach is an exact identity while B is zero") {
    std::mt19937 rng_a(5), rng_b(5), rng_lora(77);
    LanguageModel<float> base, adapted;
    base.init(tiny_lm(), rng_a, 0.1);
    adapted.init(tiny_lm(), rng_b, 0.1);
    lora::attach(adapted, lora::LoraConfig{}, rng_lora);

    std::mt19937 trng(1);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<int> tokens;
        for (int i = 0; i < 9; ++i) tokens.push_back(260 + static_cast<int>(trng() % 1));
        for (int i = 0; i < 5; ++i) tokens.push_back(4 + static_cast<int>(trng() % 256));
        Tensor<float> a = base.forward_multimodal(tokens, std::nullopt);
        Tensor<float> b = adapted.forward_multimodal(tokens, std::nullopt);
        CHECK(std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0);
    }
}

TEST_CASE("trainable parameter count matches the closed form") {
    std::mt19937 rng(3), rng_lora(4);
    LanguageModel<float> lm;
    lm.init(tiny_lm(), rng);
    lora::LoraConfig cfg;
    cfg.rank = 4;
    cfg.targets = {"q_proj", "v_proj"};
    lora::attach(lm, cfg, rng_lora);
    // 2 targets × r·(d_in + d_out) per layer × 2 layers
    CHECK(lora::trainable_param_count(lm) == 2 * 4 * (16 + 16) * 2);
}

TEST_CASE("rank above min(d_in, d_out) is a config error") {
    std::mt19937 rng(3), rng_lora(4);
    LanguageModel<float> lm;
    lm.init(tiny_lm(), rng);
    lora::LoraConfig cfg;
    cfg.rank = 17;
    CHECK_THROWS_AS(lora::attach(lm, cfg, rng_lora), config_error);
}

TEST_CASE("unknown target map is a config error") {
    std::mt19937 rng(3), rng_lora(4);
    LanguageModel<float> lm;
    lm.init(tiny_lm(), rng);
    lora::LoraConfig cfg;
    cfg.targets = {"up_proj"};
    CHECK_THROWS_AS(lora::attach(lm, cfg, rng_lora), config_error);
}

TEST_CASE("merged forward matches adapted forward within 1e-5 over 20 seeds") {
    for (unsigned seed = 0; seed < 20; ++seed) {
        std::mt19937 rng(seed);
        nn::Linear<float> lin;
        lin.init(12, 10, false, rng, 0.3f);
        auto ad = std::make_shared<nn::LoraAdapter<float>>();
        ad->a = nn::randn<float>({3, 10}, rng, 0.3);
        ad->b = nn::randn<float>({12, 3}, rng, 0.3);
        ad->scale = 16.0 / 3.0;
        lin.adapter = ad;

        Tensor<float> x = nn::randn<float>({7, 10}, rng, 1.0);
        Tensor<float> adapted = lin(x);

        nn::Linear<float> merged_lin;
        merged_lin.w = lora::merge(lin);
        Tensor<float> merged_out = merged_lin(x);

        for (std::int64_t i = 0; i < adapted.size(); ++i)
            CHECK(std::fabs(adapted.data()[i] - merged_out.data()[i]) < 1e-5f);
    }
}

TEST_CASE("B = 0 merges to exactly W") {
    std::mt19937 rng(9);
    nn::Linear<float> lin;
    lin.init(6, 5, false, rng, 0.5f);
    auto ad = std::make_shared<nn::LoraAdapter<float>>();
    ad->a = nn::randn<float>({2, 5}, rng, 0.5);
    ad->b = Tensor<float>({6, 2}, 0.0f);
    ad->scale = 8.0;
    lin.adapter = ad;
    Tensor<float> merged = lora::merge(lin);
    CHECK(std::memcmp(merged.data(), lin.w.data(), sizeof(float) * lin.w.size()) == 0);
}

TEST_CASE("merge then unmerge recovers W within 1e-6 over 20 seeds") {
    for (unsigned seed = 100; seed < 120; ++seed) {
        std::mt19937 rng(seed);
        nn::Linear<float> lin;
        lin.init(12, 10, false, rng, 0.3f);
        auto ad = std::make_shared<nn::LoraAdapter<float>>();
        ad->a = nn::randn<float>({3, 10}, rng, 0.3);
        ad->b = nn::randn<float>({12, 3}, rng, 0.3);
        ad->scale = 2.0;
        lin.adapter = ad;

        Tensor<float> recovered = lora::unmerge(lora::merge(lin), *ad);
        for (std::int64_t i = 0; i < recovered.size(); ++i)
            CHECK(std::fabs(recovered.data()[i] - lin.w.data()[i]) < 1e-6f);
    }
}

TEST_CASE("scaled B·A has rank at most r") {
    std::mt19937 rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const int r = 1 + static_cast<int>(rng() % 3);
        Tensor<float> a = nn::randn<float>({r, 10}, rng, 1.0);
        Tensor<float> b = nn::randn<float>({12, r}, rng, 1.0);
        Tensor<float> prod = scale(matmul(b, a), 2.0);
        CHECK(matrix_rank(prod) <= r);
    }
}
