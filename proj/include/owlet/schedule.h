// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "owlet/errors.h"

namespace owlet {

// Per-stage training hyperparameters. The nominal-scale values from the
// upstream setting are: stage 1 — 50k steps, warmup 375, lr 2e-4, batch 4096
// caption pairs, max length 512, AdamW beta (0.9, 0.98), eps 1e-6, weight
// decay 0.01; stage 2 — 2k steps, warmup 50, lr 2e-5, 128 text + 128
// multimodal per step, max length 1024, beta (0.9, 0.999), weight decay
// 1e-4. The defaults here are desk-scale reductions keeping those optimizer
// constants.
struct StageConfig {
    std::string name = "stage1";
    int total_steps = 500;
    int warmup_steps = 25;
    double peak_lr = 1e-3;
    double min_lr = 0.0;

    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-6;
    double weight_decay = 0.01;

    int batch_size = 8;       // stage 1 caption batch
    int text_batch_size = 8;  // stage 2 per-modality batches
    int mm_batch_size = 8;
    int text_accum = 1;  // micro-batches per optimizer step, per modality
    int mm_accum = 1;
    int max_len = 96;
    std::uint64_t seed = 0;

    void validate() const {
        if (total_steps < 1) throw config_error(name + ": total_steps must be positive");
        if (warmup_steps < 0 || warmup_steps >= total_steps)
            throw config_error(name + ": warmup_steps must satisfy 0 <= warmup < total");
        if (peak_lr <= 0) throw config_error(name + ": peak_lr must be positive");
        if (min_lr < 0 || min_lr > peak_lr)
            throw config_error(name + ": min_lr must lie in [0, peak_lr]");
        if (batch_size < 1 || text_batch_size < 1 || mm_batch_size < 1)
            throw config_error(name + ": batch sizes must be at least 1");
        if (text_accum < 0 || mm_accum < 0 || text_accum + mm_accum < 1)
            throw config_error(name + ": need at least one micro-batch per step");
        if (max_len < 2) throw config_error(name + ": max_len must be at least 2");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw config_error(name + ": betas must lie in [0, 1)");
        if (eps <= 0) throw config_error(name + ": eps must be positive");
        if (weight_decay < 0) throw config_error(name + ": weight_decay must be nonnegative");
    }
};

// Linear warmup 0 -> peak over warmup_steps, then cosine decay to min_lr at
// total_steps. Continuous at the warmup boundary, nonincreasing after it.
double lr_at(std::int64_t step, const StageConfig& cfg);

struct Stage2Defaults {
    static StageConfig make() {
        StageConfig cfg;
        cfg.name = "stage2";
        cfg.total_steps = 300;
        cfg.warmup_steps = 15;
        cfg.peak_lr = 5e-4;
        cfg.beta2 = 0.999;
        cfg.weight_decay = 1e-4;
        cfg.max_len = 96;
        return cfg;
    }
};

}  // namespace owlet
