// SPDX-License-Identifier: Apache-2.0

#include "owlet/adamw.h"

#include <cmath>

#include "owlet/errors.h"

namespace owlet {

AdamW::AdamW(std::vector<std::pair<std::string, Tensor<float>*>> params, AdamWConfig cfg)
    : cfg_(cfg) {
    slots_.reserve(params.size());
    for (auto& [name, p] : params) {
        if (!p->defined()) throw contract_error("adamw: undefined parameter " + name);
        Slot s;
        s.name = name;
        s.param = p;
        s.m.assign(static_cast<size_t>(p->size()), 0.0f);
        s.v.assign(static_cast<size_t>(p->size()), 0.0f);
        slots_.push_back(std::move(s));
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Slot& s : slots_) {
        if (!s.param->has_grad())
            throw contract_error("adamw: missing gradient for trainable parameter " + s.name);
        float* theta = s.param->data();
        const std::vector<float>& grad = s.param->grad();
        for (size_t i = 0; i < s.m.size(); ++i) {
            const double g = static_cast<double>(grad[i]);
            const double m = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
            const double v = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
            s.m[i] = static_cast<float>(m);
            s.v[i] = static_cast<float>(v);
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            const double update = lr * m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                                  lr * cfg_.weight_decay * static_cast<double>(theta[i]);
            theta[i] = static_cast<float>(static_cast<double>(theta[i]) - update);
        }
    }
}

void AdamW::zero_grad() {
    for (Slot& s : slots_) s.param->zero_grad();
}

}  // namespace owlet
