// SPDX-License-Identifier: Apache-2.0

#include "owlet/schedule.h"

#include <cmath>

namespace owlet {

double lr_at(std::int64_t step, const StageConfig& cfg) {
    if (step < 0 || step > cfg.total_steps)
        throw contract_error("lr_at: step " + std::to_string(step) + " outside [0, " +
                             std::to_string(cfg.total_steps) + "]");
    if (step < cfg.warmup_steps)
        return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    const double progress = static_cast<double>(step - cfg.warmup_steps) /
                            static_cast<double>(cfg.total_steps - cfg.warmup_steps);
    return cfg.min_lr + (cfg.peak_lr - cfg.min_lr) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace owlet
