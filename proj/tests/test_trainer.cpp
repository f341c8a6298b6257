// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "owlet/lora.h"
#include "owlet/trainer.h"

using namespace owlet;
namespace fs = std::filesystem;

namespace {

ModelConfig desk_tiny(int lm_layers = 1, int dim = 16) {
    ModelConfig mc;
    mc.vision = VisionConfig{16, 8, 1, 16, 2, true};
    mc.abstractor = AbstractorConfig{4, 1, dim, 2, true};
    mc.lm = LMConfig{261, lm_layers, dim, 2, 128, nn::NormKind::rmsnorm};
    mc.init_seed = 77;
    mc.init_sd = 0.08;
    return mc;
}

StageConfig quick_stage1(int steps) {
    StageConfig cfg;
    cfg.name = "stage1";
    cfg.total_steps = steps;
    cfg.warmup_steps = std::max(1, steps / 10);
    cfg.peak_lr = 1e-3;
    cfg.batch_size = 2;
    cfg.max_len = 80;
    cfg.seed = 5;
    return cfg;
}

StageConfig quick_stage2(int steps) {
    StageConfig cfg = Stage2Defaults::make();
    cfg.total_steps = steps;
    cfg.warmup_steps = std::max(1, steps / 10);
    cfg.peak_lr = 5e-4;
    cfg.text_batch_size = 2;
    cfg.mm_batch_size = 2;
    cfg.max_len = 80;
    cfg.seed = 9;
    return cfg;
}

using Snapshot = std::vector<std::pair<std::string, std::vector<float>>>;

Snapshot snapshot_group(MultimodalModel<float>& model, const std::string& group) {
    Snapshot out;
    model.visit_group(group, [&](const std::string& name, Tensor<float>& t) {
        out.emplace_back(name, t.values());
    });
    return out;
}

bool bytes_equal(const Snapshot& a, const Snapshot& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].first != b[i].first || a[i].second.size() != b[i].second.size()) return false;
        if (std::memcmp(a[i].second.data(), b[i].second.data(),
                        a[i].second.size() * sizeof(float)) != 0)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("lr schedule") {
    StageConfig cfg;
    cfg.total_steps = 2000;
    cfg.warmup_steps = 50;
    cfg.peak_lr = 2e-5;
    cfg.min_lr = 0.0;

    SUBCASE("boundaries and nominal midpoint") {
        CHECK(lr_at(50, cfg) == 2e-5);
        CHECK(lr_at(2000, cfg) == doctest::Approx(0.0).epsilon(1e-20));
        CHECK(lr_at(1025, cfg) == doctest::Approx(1e-5).epsilon(1e-12));
        CHECK(lr_at(0, cfg) == 0.0);
    }
    SUBCASE("continuous at warmup, nonincreasing after") {
        const double just_before = lr_at(49, cfg);
        CHECK(just_before == doctest::Approx(2e-5 * 49.0 / 50.0).epsilon(1e-12));
        double prev = lr_at(50, cfg);
        for (int s = 51; s <= 2000; s += 7) {
            const double cur = lr_at(s, cfg);
            CHECK(cur <= prev);
            prev = cur;
        }
    }
    SUBCASE("midpoint of the cosine leg is (peak+min)/2") {
        StageConfig c2 = cfg;
        c2.min_lr = 4e-6;
        // progress 0.5 at step warmup + (total-warmup)/2 = 1025
        CHECK(lr_at(1025, c2) == doctest::Approx((2e-5 + 4e-6) / 2).epsilon(1e-12));
    }
    SUBCASE("out-of-range step is a contract error") {
        CHECK_THROWS_AS((void)lr_at(-1, cfg), contract_error);
        CHECK_THROWS_AS((void)lr_at(2001, cfg), contract_error);
    }
}

TEST_CASE("adamw single-step hand value") {
    Tensor<float> theta({1}, {1.0f});
    theta.set_requires_grad(true);
    theta.grad_data()[0] = 1.0f;
    AdamW opt({{"theta", &theta}}, AdamWConfig{0.9, 0.999, 1e-8, 0.01});
    opt.step(0.1);
    // m_hat = 1, v_hat = 1: theta' = 1 - 0.1/(1+1e-8) - 0.1*0.01 = 0.899000
    CHECK(theta.data()[0] == doctest::Approx(0.899).epsilon(1e-6));
}

TEST_CASE("adamw zero-gradient behavior") {
    SUBCASE("g=0, wd=0 leaves theta unchanged") {
        Tensor<float> theta({2}, {0.5f, -0.25f});
        theta.set_requires_grad(true);
        theta.grad_data();
        AdamW opt({{"theta", &theta}}, AdamWConfig{0.9, 0.999, 1e-8, 0.0});
        opt.step(0.1);
        CHECK(theta.data()[0] == 0.5f);
        CHECK(theta.data()[1] == -0.25f);
    }
    SUBCASE("g=0, wd>0 is pure decay") {
        Tensor<float> theta({1}, {2.0f});
        theta.set_requires_grad(true);
        theta.grad_data();
        AdamW opt({{"theta", &theta}}, AdamWConfig{0.9, 0.999, 1e-8, 0.05});
        opt.step(0.1);
        CHECK(theta.data()[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.05)).epsilon(1e-7));
    }
    SUBCASE("missing gradient is a contract error") {
        Tensor<float> theta({1}, {1.0f});
        AdamW opt({{"theta", &theta}}, AdamWConfig{});
        CHECK_THROWS_AS(opt.step(0.1), contract_error);
    }
}

TEST_CASE("gradient accumulation linearity") {
    MultimodalModel<float> model;
    model.init(desk_tiny());
    std::mt19937 lrng(8);
    lora::attach(model.lm, lora::LoraConfig{}, lrng);
    Vocabulary vocab = Vocabulary::byte_fallback();

    auto captions = synth::synth_shapes_dataset(31, 8, 2, 16);
    std::vector<RenderedExample> text_batch, mm_batch;
    for (int i = 0; i < 2; ++i) {
        ConversationRecord conv;
        conv.turns = {{Role::user, "say red"}, {Role::assistant, "red"}};
        conv.modality = Modality::text_only;
        text_batch.push_back(render_conversation(conv, vocab, 80));
        mm_batch.push_back(render_caption_example(captions[static_cast<size_t>(i)], vocab, 80));
    }

    FreezePlan plan = FreezePlan::stage2();
    plan.apply(model);
    auto params = plan.trainable_params(model);

    auto grads_of = [&](const std::vector<std::vector<RenderedExample>>& batches) {
        for (auto& [name, p] : params) p->zero_grad();
        for (const auto& batch : batches) {
            const double w = 0.5 / static_cast<double>(batch.size());
            for (const RenderedExample& ex : batch) {
                Tape<float> tape;
                TapeScope<float> scope(tape);
                Tensor<float> loss = scale(model.example_loss(ex), w);
                tape.backward(loss);
            }
        }
        std::vector<std::vector<float>> out;
        for (auto& [name, p] : params) {
            p->grad_data();
            out.push_back(p->grad());
        }
        return out;
    };

    auto combined = grads_of({text_batch, mm_batch});
    auto text_only = grads_of({text_batch});
    auto mm_only = grads_of({mm_batch});

    for (size_t pi = 0; pi < combined.size(); ++pi) {
        for (size_t i = 0; i < combined[pi].size(); ++i) {
            const float expected = text_only[pi][i] + mm_only[pi][i];
            CHECK(std::fabs(combined[pi][i] - expected) < 1e-6f);
        }
    }

    SUBCASE("duplicating a micro-batch leaves the averaged gradient unchanged") {
        auto once = grads_of({mm_batch});          // one batch at weight 1/2
        for (auto& [name, p] : params) p->zero_grad();
        const double w = 0.25 / static_cast<double>(mm_batch.size());  // two copies at 1/4
        for (int copy = 0; copy < 2; ++copy) {
            for (const RenderedExample& ex : mm_batch) {
                Tape<float> tape;
                TapeScope<float> scope(tape);
                Tensor<float> loss = scale(model.example_loss(ex), w);
                tape.backward(loss);
            }
        }
        size_t pi = 0;
        for (auto& [name, p] : params) {
            p->grad_data();
            const auto& twice = p->grad();
            for (size_t i = 0; i < twice.size(); ++i)
                CHECK(std::fabs(twice[i] - once[pi][i]) < 1e-6f);
            ++pi;
        }
    }
}

TEST_CASE("accumulate_mixed contract") {
    MultimodalModel<float> model;
    model.init(desk_tiny());
    FreezePlan plan = FreezePlan::stage1();
    plan.apply(model);
    AdamW optim(plan.trainable_params(model), AdamWConfig{});

    SUBCASE("no micro-batches is a contract error") {
        CHECK_THROWS_AS((void)accumulate_mixed(model, optim, {}, {}, 1e-3), contract_error);
    }
    SUBCASE("an empty-loss micro-batch aborts before the optimizer step") {
        RenderedExample bad;
        bad.tokens = {10, 11, 12};
        bad.loss_mask = {0, 0, 0};
        Snapshot before = snapshot_group(model, "abstractor");
        CHECK_THROWS_AS((void)accumulate_mixed(model, optim, {{bad}}, {}, 1e-3),
                        empty_loss_error);
        CHECK(bytes_equal(before, snapshot_group(model, "abstractor")));
    }
}

TEST_CASE("stage 1 freezes the LM base exactly") {
    MultimodalModel<float> model;
    model.init(desk_tiny());
    Vocabulary vocab = Vocabulary::byte_fallback();
    auto captions = synth::synth_shapes_dataset(41, 32, 2, 16);

    Snapshot lm_before = snapshot_group(model, "lm");
    Stage1Runner runner(model, captions, vocab, quick_stage1(100));

    // freeze plan allocates no optimizer state for frozen groups
    for (const AdamW::Slot& s : runner.optimizer().slots()) {
        const std::string g = group_of(s.name);
        CHECK((g == "vision" || g == "abstractor"));
    }

    runner.run(0, 100, nullptr);
    CHECK(bytes_equal(lm_before, snapshot_group(model, "lm")));
    CHECK_FALSE(bytes_equal(snapshot_group(model, "vision"), Snapshot{}));

    SUBCASE("loss at step zero is near ln(vocab)") {
        MultimodalModel<float> fresh;
        fresh.init(desk_tiny());
        Stage1Runner r2(fresh, captions, vocab, quick_stage1(10));
        const double first = r2.run_step(0);
        CHECK(first == doctest::Approx(std::log(261.0)).epsilon(0.3 / std::log(261.0)));
    }
}

TEST_CASE("stage 2 freezes vision and LM base; abstractor and LoRA move") {
    MultimodalModel<float> model;
    model.init(desk_tiny());
    Vocabulary vocab = Vocabulary::byte_fallback();
    std::mt19937 rng(3);
    lora::attach(model.lm, lora::LoraConfig{}, rng);

    auto samples = synth::synth_instruction_samples(51, 64, 0.5, 2, 16);
    std::vector<ConversationRecord> text, mm;
    for (auto& s : samples) {
        (s.record.modality == Modality::text_only ? text : mm).push_back(s.record);
    }

    Snapshot vision_before = snapshot_group(model, "vision");
    Snapshot lm_before = snapshot_group(model, "lm");
    Snapshot abs_before = snapshot_group(model, "abstractor");
    Snapshot lora_before = snapshot_group(model, "lora");

    Stage2Runner runner(model, text, mm, vocab, quick_stage2(100));
    for (const AdamW::Slot& s : runner.optimizer().slots()) {
        const std::string g = group_of(s.name);
        CHECK((g == "abstractor" || g == "lora"));
    }
    runner.run(0, 100, nullptr);

    CHECK(bytes_equal(vision_before, snapshot_group(model, "vision")));
    CHECK(bytes_equal(lm_before, snapshot_group(model, "lm")));
    CHECK_FALSE(bytes_equal(abs_before, snapshot_group(model, "abstractor")));
    CHECK_FALSE(bytes_equal(lora_before, snapshot_group(model, "lora")));
}

TEST_CASE("fixed seed gives identical loss sequences") {
    Vocabulary vocab = Vocabulary::byte_fallback();
    auto captions = synth::synth_shapes_dataset(61, 16, 2, 16);

    auto run_once = [&]() {
        MultimodalModel<float> model;
        model.init(desk_tiny());
        Stage1Runner runner(model, captions, vocab, quick_stage1(12));
        return runner.run(0, 12, nullptr).losses;
    };
    const auto a = run_once();
    const auto b = run_once();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("checkpoint round trip and resume replay") {
    const fs::path dir = fs::temp_directory_path() / "owlet_ckpt_test";
    fs::create_directories(dir);
    Vocabulary vocab = Vocabulary::byte_fallback();
    auto captions = synth::synth_shapes_dataset(71, 16, 2, 16);
    const ModelConfig mc = desk_tiny();
    nlohmann::json echo = {{"dim", mc.lm.dim}, {"layers", mc.lm.layers}};

    SUBCASE("save -> load -> save gives identical bytes") {
        MultimodalModel<float> model;
        model.init(mc);
        const std::string p1 = (dir / "a.mowl").string();
        const std::string p2 = (dir / "b.mowl").string();
        save_checkpoint(p1, model, nullptr, {3, "stage1", echo});

        MultimodalModel<float> other;
        ModelConfig mc2 = mc;
        mc2.init_seed = 123;  // different weights before loading
        other.init(mc2);
        LoadedCheckpoint loaded = load_checkpoint(p1, other, nullptr, &echo);
        CHECK(loaded.step == 3);
        CHECK(loaded.stage == "stage1");
        save_checkpoint(p2, other, nullptr, {3, "stage1", echo});

        std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
        std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(b1 == b2);
    }

    SUBCASE("truncated file is a format error") {
        MultimodalModel<float> model;
        model.init(mc);
        const std::string p = (dir / "t.mowl").string();
        save_checkpoint(p, model, nullptr, {0, "stage1", echo});
        const auto size = fs::file_size(p);
        fs::resize_file(p, size - 64);
        MultimodalModel<float> other;
        other.init(mc);
        CHECK_THROWS_AS((void)load_checkpoint(p, other, nullptr, nullptr), format_error);
    }

    SUBCASE("mismatched config echo fails loudly") {
        MultimodalModel<float> model;
        model.init(mc);
        const std::string p = (dir / "c.mowl").string();
        save_checkpoint(p, model, nullptr, {0, "stage1", echo});
        nlohmann::json other_echo = {{"dim", 999}};
        MultimodalModel<float> other;
        other.init(mc);
        CHECK_THROWS_AS((void)load_checkpoint(p, other, nullptr, &other_echo), config_error);
    }

    SUBCASE("resume reproduces the uninterrupted loss sequence") {
        const int split = 5, total = 12;
        StageConfig cfg = quick_stage1(total);

        MultimodalModel<float> uninterrupted;
        uninterrupted.init(mc);
        Stage1Runner full(uninterrupted, captions, vocab, cfg);
        const auto full_losses = full.run(0, total, nullptr).losses;

        MultimodalModel<float> first;
        first.init(mc);
        Stage1Runner part1(first, captions, vocab, cfg);
        part1.run(0, split, nullptr);
        const std::string p = (dir / "resume.mowl").string();
        save_checkpoint(p, first, &part1.optimizer(), {split, "stage1", echo});

        MultimodalModel<float> second;
        second.init(mc);
        Stage1Runner part2(second, captions, vocab, cfg);
        load_checkpoint(p, second, &part2.optimizer(), &echo);
        const auto tail = part2.run(split, total, nullptr).losses;

        REQUIRE(tail.size() == static_cast<size_t>(total - split));
        for (size_t i = 0; i < tail.size(); ++i)
            CHECK(tail[i] == full_losses[static_cast<size_t>(split) + i]);
    }

    fs::remove_all(dir);
}
