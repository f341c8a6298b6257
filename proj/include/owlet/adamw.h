// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "owlet/tensor.h"

namespace owlet {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-6;
    double weight_decay = 0.01;
};

// Decoupled-decay AdamW over the float training stack. State exists only for
// the parameters handed in: frozen groups are simply never registered.
class AdamW {
public:
    struct Slot {
        std::string name;
        Tensor<float>* param;
        std::vector<float> m;
        std::vector<float> v;
    };

    AdamW(std::vector<std::pair<std::string, Tensor<float>*>> params, AdamWConfig cfg);

    // theta <- theta - lr·m_hat/(sqrt(v_hat)+eps) - lr·wd·theta. Every
    // registered parameter must carry a gradient.
    void step(double lr);

    void zero_grad();

    std::int64_t step_count() const { return t_; }
    void set_step_count(std::int64_t t) { t_ = t; }
    const AdamWConfig& config() const { return cfg_; }
    std::vector<Slot>& slots() { return slots_; }
    const std::vector<Slot>& slots() const { return slots_; }

private:
    AdamWConfig cfg_;
    std::vector<Slot> slots_;
    std::int64_t t_ = 0;
};

}  // namespace owlet
