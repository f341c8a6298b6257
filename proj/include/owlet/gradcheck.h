// SPDX-License-Identifier: Apache-2.0
//
// Central-finite-difference gradient verification. Runs in double; the float
// stack shares the same templated op code, so checking here covers both.
#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "owlet/ops.h"
#include "owlet/tensor.h"

namespace owlet {

using ScalarFn = std::function<Tensor<double>(const Tensor<double>&)>;

// Max over coordinates of |analytic - central_difference| / max(1, |analytic|,
// |numeric|). f must be deterministic.
inline double grad_check(const ScalarFn& f, Tensor<double> x, double eps = 1e-5) {
    if (eps <= 0) throw contract_error("grad_check: eps must be positive");

    Tensor<double> xr = x;
    xr.set_requires_grad(true);
    xr.zero_grad();
    std::vector<double> analytic;
    {
        Tape<double> tape;
        TapeScope<double> scope(tape);
        Tensor<double> y = f(xr);
        if (y.size() != 1) throw contract_error("grad_check: f must return a scalar");
        if (!std::isfinite(y.value())) throw numeric_error("grad_check: f returned a non-finite value");
        tape.backward(y);
        xr.grad_data();
        analytic = xr.grad();
    }
    xr.set_requires_grad(false);

    double worst = 0.0;
    double* xd = x.data();
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double keep = xd[i];
        xd[i] = keep + eps;
        const double up = f(x).value();
        xd[i] = keep - eps;
        const double dn = f(x).value();
        xd[i] = keep;
        if (!std::isfinite(up) || !std::isfinite(dn))
            throw numeric_error("grad_check: f returned a non-finite value under perturbation");
        const double numeric = (up - dn) / (2.0 * eps);
        const double a = analytic[static_cast<size_t>(i)];
        const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
        worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
    return worst;
}

struct OpCheck {
    std::string name;
    double max_rel_err;
};

namespace gradcheck_detail {

inline Tensor<double> randn(Shape shape, std::mt19937& rng, double sd = 1.0) {
    std::normal_distribution<double> dist(0.0, sd);
    Tensor<double> t(shape);
    for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
    return t;
}

inline int rdim(std::mt19937& rng, int lo = 1, int hi = 8) {
    return lo + static_cast<int>(rng() % static_cast<unsigned>(hi - lo + 1));
}

// Reduce an arbitrary op output to a scalar with a fixed random weighting so
// every output element carries gradient.
inline ScalarFn weighted(const std::function<Tensor<double>(const Tensor<double>&)>& op,
                         Tensor<double> w) {
    return [op, w](const Tensor<double>& x) { return sum(mul(op(x), w)); };
}

}  // namespace gradcheck_detail

// Randomized finite-difference checks over the full op suite: small shapes,
// `seeds` draws per op, worst relative error reported per op.
inline std::vector<OpCheck> run_op_gradcheck_suite(int seeds = 20) {
    using namespace gradcheck_detail;
    std::vector<OpCheck> results;

    auto run = [&](const std::string& name,
                   const std::function<double(std::mt19937&)>& one) {
        double worst = 0.0;
        for (int s = 0; s < seeds; ++s) {
            std::mt19937 rng(1234u + static_cast<unsigned>(s) * 7919u);
            worst = std::max(worst, one(rng));
        }
        results.push_back({name, worst});
    };

    run("matmul", [](std::mt19937& rng) {
        const int m = rdim(rng), k = rdim(rng), n = rdim(rng);
        Tensor<double> b = randn({k, n}, rng);
        Tensor<double> w = randn({m, n}, rng);
        const double ea = grad_check(weighted([b](const Tensor<double>& x) { return matmul(x, b); }, w),
                                     randn({m, k}, rng));
        Tensor<double> a = randn({m, k}, rng);
        const double eb = grad_check(weighted([a](const Tensor<double>& x) { return matmul(a, x); }, w),
                                     randn({k, n}, rng));
        return std::max(ea, eb);
    });

    run("linear", [](std::mt19937& rng) {
        const int t = rdim(rng), in = rdim(rng), out = rdim(rng);
        Tensor<double> x = randn({t, in}, rng);
        Tensor<double> wm = randn({out, in}, rng);
        Tensor<double> bias = randn({out}, rng);
        Tensor<double> w = randn({t, out}, rng);
        const double ex = grad_check(
            weighted([wm, bias](const Tensor<double>& v) { return linear(v, wm, bias); }, w),
            randn({t, in}, rng));
        const double ew = grad_check(
            weighted([x, bias](const Tensor<double>& v) { return linear(x, v, bias); }, w),
            randn({out, in}, rng));
        const double eb = grad_check(
            weighted([x, wm](const Tensor<double>& v) { return linear(x, wm, v); }, w),
            randn({out}, rng));
        return std::max({ex, ew, eb});
    });

    run("add", [](std::mt19937& rng) {
        const int r = rdim(rng), c = rdim(rng);
        Tensor<double> b = randn({r, c}, rng);
        Tensor<double> w = randn({r, c}, rng);
        const double e1 = grad_check(weighted([b](const Tensor<double>& x) { return add(x, b); }, w),
                                     randn({r, c}, rng));
        Tensor<double> a = randn({r, c}, rng);
        const double e2 = grad_check(weighted([a](const Tensor<double>& x) { return add(a, x); }, w),
                                     randn({r, c}, rng));
        // trailing-axis bias broadcast
        const double e3 = grad_check(weighted([a](const Tensor<double>& x) { return add(a, x); }, w),
                                     randn({c}, rng));
        return std::max({e1, e2, e3});
    });

    run("mul", [](std::mt19937& rng) {
        const int r = rdim(rng), c = rdim(rng);
        Tensor<double> b = randn({r, c}, rng);
        Tensor<double> w = randn({r, c}, rng);
        return grad_check(weighted([b](const Tensor<double>& x) { return mul(x, b); }, w),
                          randn({r, c}, rng));
    });

    run("scale", [](std::mt19937& rng) {
        const int r = rdim(rng), c = rdim(rng);
        Tensor<double> w = randn({r, c}, rng);
        return grad_check(weighted([](const Tensor<double>& x) { return scale(x, 1.7); }, w),
                          randn({r, c}, rng));
    });

    run("transpose", [](std::mt19937& rng) {
        const int r = rdim(rng), c = rdim(rng);
        Tensor<double> w = randn({c, r}, rng);
        return grad_check(weighted([](const Tensor<double>& x) { return transpose(x); }, w),
                          randn({r, c}, rng));
    });

    run("reshape", [](std::mt19937& rng) {
        const int r = rdim(rng), c = rdim(rng);
        Tensor<double> w = randn({r * c}, rng);
        return grad_check(
            weighted([r, c](const Tensor<double>& x) { return reshape(x, {r * c}); }, w),
            randn({r, c}, rng));
    });

    run("concat", [](std::mt19937& rng) {
        const int r = rdim(rng), c1 = rdim(rng), c2 = rdim(rng);
        Tensor<double> other = randn({r, c2}, rng);
        Tensor<double> w = randn({r, c1 + c2}, rng);
        return grad_check(
            weighted([other](const Tensor<double>& x) {
                return concat<double>({x, other}, 1);
            }, w),
            randn({r, c1}, rng));
    });

    run("slice", [](std::mt19937& rng) {
        const int r = rdim(rng, 2), c = rdim(rng);
        const int start = static_cast<int>(rng() % static_cast<unsigned>(r));
        const int len = 1 + static_cast<int>(rng() % static_cast<unsigned>(r - start));
        Tensor<double> w = randn({len, c}, rng);
        return grad_check(
            weighted([start, len](const Tensor<double>& x) { return slice(x, 0, start, len); }, w),
            randn({r, c}, rng));
    });

    run("embedding_lookup", [](std::mt19937& rng) {
        const int v = rdim(rng, 2), d = rdim(rng), t = rdim(rng);
        std::vector<int> ids(static_cast<size_t>(t));
        for (auto& id : ids) id = static_cast<int>(rng() % static_cast<unsigned>(v));
        Tensor<double> w = randn({t, d}, rng);
        return grad_check(
            weighted([ids](const Tensor<double>& x) { return embedding_lookup(x, ids); }, w),
            randn({v, d}, rng));
    });

    run("gelu", [](std::mt19937& rng) {
        const int r = rdim(rng), c = rdim(rng);
        Tensor<double> w = randn({r, c}, rng);
        return grad_check(weighted([](const Tensor<double>& x) { return gelu(x); }, w),
                          randn({r, c}, rng));
    });

    run("layer_norm", [](std::mt19937& rng) {
        const int r = rdim(rng), c = rdim(rng, 2);
        Tensor<double> gamma = randn({c}, rng);
        Tensor<double> beta = randn({c}, rng);
        Tensor<double> x = randn({r, c}, rng);
        Tensor<double> w = randn({r, c}, rng);
        const double ex = grad_check(
            weighted([gamma, beta](const Tensor<double>& v) { return layer_norm(v, gamma, beta); }, w),
            randn({r, c}, rng));
        const double eg = grad_check(
            weighted([x, beta](const Tensor<double>& v) { return layer_norm(x, v, beta); }, w),
            randn({c}, rng));
        const double eb = grad_check(
            weighted([x, gamma](const Tensor<double>& v) { return layer_norm(x, gamma, v); }, w),
            randn({c}, rng));
        return std::max({ex, eg, eb});
    });

    run("rms_norm", [](std::mt19937& rng) {
        const int r = rdim(rng), c = rdim(rng, 2);
        Tensor<double> gamma = randn({c}, rng);
        Tensor<double> x = randn({r, c}, rng);
        Tensor<double> w = randn({r, c}, rng);
        const double ex = grad_check(
            weighted([gamma](const Tensor<double>& v) { return rms_norm(v, gamma); }, w),
            randn({r, c}, rng));
        const double eg = grad_check(
            weighted([x](const Tensor<double>& v) { return rms_norm(x, v); }, w),
            randn({c}, rng));
        return std::max(ex, eg);
    });

    run("softmax_rows", [](std::mt19937& rng) {
        const int r = rdim(rng), c = rdim(rng, 2);
        Tensor<double> w = randn({r, c}, rng);
        return grad_check(weighted([](const Tensor<double>& x) { return softmax_rows(x); }, w),
                          randn({r, c}, rng));
    });

    run("causal_mask_fill", [](std::mt19937& rng) {
        // Masked entries are a huge constant, so check through softmax where
        // they become exactly zero; the raw values would swamp the difference
        // quotient without changing the gradient.
        const int t = rdim(rng, 2);
        Tensor<double> w = randn({t, t}, rng);
        return grad_check(
            weighted([](const Tensor<double>& x) { return softmax_rows(causal_mask_fill(x)); }, w),
            randn({t, t}, rng));
    });

    run("mean", [](std::mt19937& rng) {
        const int r = rdim(rng), c = rdim(rng);
        return grad_check([](const Tensor<double>& x) { return mean(x); }, randn({r, c}, rng));
    });

    run("sum", [](std::mt19937& rng) {
        const int r = rdim(rng), c = rdim(rng);
        return grad_check([](const Tensor<double>& x) { return sum(x); }, randn({r, c}, rng));
    });

    run("masked_cross_entropy", [](std::mt19937& rng) {
        const int t = rdim(rng, 2), v = rdim(rng, 2);
        std::vector<int> targets(static_cast<size_t>(t));
        std::vector<std::uint8_t> mask(static_cast<size_t>(t));
        bool any = false;
        for (int i = 0; i < t; ++i) {
            targets[static_cast<size_t>(i)] = static_cast<int>(rng() % static_cast<unsigned>(v));
            mask[static_cast<size_t>(i)] = static_cast<std::uint8_t>(rng() % 2);
            any = any || mask[static_cast<size_t>(i)];
        }
        if (!any) mask[0] = 1;
        return grad_check(
            [targets, mask](const Tensor<double>& x) {
                return masked_cross_entropy(x, targets, mask);
            },
            randn({t, v}, rng));
    });

    // A node feeding two consumers must receive both contributions.
    run("shared_node_fanout", [](std::mt19937& rng) {
        const int r = rdim(rng), c = rdim(rng);
        Tensor<double> w1 = randn({r, c}, rng);
        Tensor<double> w2 = randn({r, c}, rng);
        return grad_check(
            [w1, w2](const Tensor<double>& x) {
                Tensor<double> g = gelu(x);
                return sum(add(mul(g, w1), mul(g, w2)));
            },
            randn({r, c}, rng));
    });

    return results;
}

}  // namespace owlet
