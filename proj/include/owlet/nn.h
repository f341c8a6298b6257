// SPDX-License-Identifier: Apache-2.0
//
// Shared transformer building blocks, templated on the stack scalar.
#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>

#include "owlet/ops.h"

namespace owlet::nn {

template <typename S>
using ParamVisitor = std::function<void(const std::string&, Tensor<S>&)>;

template <typename S>
Tensor<S> randn(Shape shape, std::mt19937& rng, double sd) {
    std::normal_distribution<double> dist(0.0, sd);
    Tensor<S> t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(dist(rng));
    return t;
}

template <typename S>
Tensor<S> full(Shape shape, S v) {
    Tensor<S> t(std::move(shape), v);
    return t;
}

enum class NormKind { layernorm, rmsnorm };

template <typename S>
struct Norm {
    NormKind kind = NormKind::layernorm;
    Tensor<S> g;
    Tensor<S> b;  // layernorm only

    void init(int dim, NormKind k) {
        kind = k;
        g = full<S>({dim}, S(1));
        if (kind == NormKind::layernorm) b = full<S>({dim}, S(0));
    }

    Tensor<S> operator()(const Tensor<S>& x) const {
        return kind == NormKind::layernorm ? layer_norm(x, g, b) : rms_norm(x, g);
    }

    void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
        fn(prefix + ".g", g);
        if (b.defined()) fn(prefix + ".b", b);
    }
};

// Rank-r additive adapter on a frozen linear map: W + (alpha/r)·B·A.
template <typename S>
struct LoraAdapter {
    Tensor<S> a;  // [r × d_in]
    Tensor<S> b;  // [d_out × r], zero-initialized
    double scale = 1.0;
};

template <typename S>
struct Linear {
    Tensor<S> w;     // [out × in]
    Tensor<S> bias;  // undefined when the layer has no bias
    std::shared_ptr<LoraAdapter<S>> adapter;

    void init(int out, int in, bool with_bias, std::mt19937& rng, double sd) {
        w = randn<S>({out, in}, rng, sd);
        if (with_bias) bias = full<S>({out}, S(0));
    }

    Tensor<S> operator()(const Tensor<S>& x) const {
        Tensor<S> y = linear(x, w, bias);
        if (adapter) {
            Tensor<S> lo = linear(linear(x, adapter->a), adapter->b);
            y = add(y, scale(lo, adapter->scale));
        }
        return y;
    }

    void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
        fn(prefix + ".w", w);
        if (bias.defined()) fn(prefix + ".b", bias);
    }
};

template <typename S>
struct Attention {
    Linear<S> q, k, v, o;
    int heads = 1;

    void init(int dim, int nheads, bool with_bias, std::mt19937& rng, double sd) {
        heads = nheads;
        q.init(dim, dim, with_bias, rng, sd);
        k.init(dim, dim, with_bias, rng, sd);
        v.init(dim, dim, with_bias, rng, sd);
        o.init(dim, dim, with_bias, rng, sd);
    }

    // Queries from qx, keys/values from kvx; kvx == qx gives self-attention.
    Tensor<S> forward(const Tensor<S>& qx, const Tensor<S>& kvx, bool causal) const {
        const int dim = q.w.dim(0);
        const int hd = dim / heads;
        Tensor<S> Q = q(qx);
        Tensor<S> K = k(kvx);
        Tensor<S> V = v(kvx);

        std::vector<Tensor<S>> ctx;
        ctx.reserve(static_cast<size_t>(heads));
        {
            // The quadratic section: everything here scales with Tq·Tk.
            kernels::attention_scope flops;
            for (int h = 0; h < heads; ++h) {
                Tensor<S> Qh = slice(Q, 1, h * hd, hd);
                Tensor<S> Kh = slice(K, 1, h * hd, hd);
                Tensor<S> Vh = slice(V, 1, h * hd, hd);
                // linear() computes Qh · Khᵀ without a transpose copy.
                Tensor<S> scores = scale(linear(Qh, Kh), 1.0 / std::sqrt(static_cast<double>(hd)));
                if (causal) scores = causal_mask_fill(scores);
                ctx.push_back(matmul(softmax_rows(scores), Vh));
            }
        }
        return o(concat(ctx, 1));
    }

    void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
        q.visit(prefix + ".q", fn);
        k.visit(prefix + ".k", fn);
        v.visit(prefix + ".v", fn);
        o.visit(prefix + ".o", fn);
    }
};

template <typename S>
struct Mlp {
    Linear<S> fc1, fc2;

    void init(int dim, int hidden, bool with_bias, std::mt19937& rng, double sd) {
        fc1.init(hidden, dim, with_bias, rng, sd);
        fc2.init(dim, hidden, with_bias, rng, sd);
    }

    Tensor<S> forward(const Tensor<S>& x) const { return fc2(gelu(fc1(x))); }

    void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
        fc1.visit(prefix + ".fc1", fn);
        fc2.visit(prefix + ".fc2", fn);
    }
};

// Pre-norm residual block: x + attn(norm1(x)), then x + mlp(norm2(x)).
template <typename S>
struct Block {
    Norm<S> norm1, norm2;
    Attention<S> attn;
    Mlp<S> mlp;

    void init(int dim, int heads, NormKind norm, bool with_bias, std::mt19937& rng, double sd) {
        norm1.init(dim, norm);
        norm2.init(dim, norm);
        attn.init(dim, heads, with_bias, rng, sd);
        mlp.init(dim, dim * 4, with_bias, rng, sd);
    }

    Tensor<S> forward(const Tensor<S>& x, bool causal) const {
        Tensor<S> n1 = norm1(x);
        Tensor<S> h = add(x, attn.forward(n1, n1, causal));
        return add(h, mlp.forward(norm2(h)));
    }

    void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
        norm1.visit(prefix + ".norm1", fn);
        norm2.visit(prefix + ".norm2", fn);
        attn.visit(prefix + ".attn", fn);
        mlp.visit(prefix + ".mlp", fn);
    }
};

}  // namespace owlet::nn
