// SPDX-License-Identifier: Apache-2.0
//
// Tape-aware ops over Tensor<S>. An op records a backward closure on the
// thread's active tape whenever any input requires grad; with no active tape
// it is a plain eager computation (inference mode). Backward closures add
// into input grad buffers, never overwrite.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "owlet/kernels.h"
#include "owlet/tensor.h"

namespace owlet {

inline constexpr double kMaskFill = -1e30;
inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kRmsNormEps = 1e-5;

namespace detail {

template <typename S>
void maybe_record(Tensor<S>& out, std::initializer_list<const Tensor<S>*> ins,
                  std::function<void()> back) {
    Tape<S>* tp = Tape<S>::current();
    if (!tp) return;
    bool need = false;
    for (const Tensor<S>* t : ins) need = need || t->requires_grad();
    if (!need) return;
    out.set_requires_grad(true);
    std::vector<int> ids;
    ids.reserve(ins.size());
    for (const Tensor<S>* t : ins) ids.push_back(tp->node_of(*t));
    tp->record(out, std::move(ids), std::move(back));
}

template <typename S>
void axpy(S* dst, const S* src, std::int64_t n, S a = S(1)) {
    for (std::int64_t i = 0; i < n; ++i) dst[i] += a * src[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul: [m×k] · [k×n] -> [m×n]
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw dim_error("matmul: operands must be rank 2, got " + shape_str(a.shape()) +
                        " and " + shape_str(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw dim_error("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<S> out({m, n});
    kernels::gemm(a.data(), b.data(), out.data(), m, k, n, false);

    Tensor<S> A = a, B = b, O = out;
    detail::maybe_record(out, {&a, &b}, [A, B, O]() mutable {
        const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
        if (A.requires_grad())
            kernels::gemm_nt(O.grad().data(), B.data(), A.grad_data(), m, n, k, true);
        if (B.requires_grad())
            kernels::gemm_tn(A.data(), O.grad().data(), B.grad_data(), k, m, n, true);
    });
    return out;
}

// ---------------------------------------------------------------------------
// linear: y = x · wᵀ (+ b). x [t×in], w [out×in], b [out] (optional, pass
// undefined Tensor to skip). Fused so the hot path avoids transpose copies.
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b = Tensor<S>()) {
    if (x.rank() != 2 || w.rank() != 2)
        throw dim_error("linear: operands must be rank 2, got " + shape_str(x.shape()) +
                        " and " + shape_str(w.shape()));
    if (x.dim(1) != w.dim(1))
        throw dim_error("linear: input dim disagrees with weight: " + shape_str(x.shape()) +
                        " vs " + shape_str(w.shape()));
    const int t = x.dim(0), in = x.dim(1), outd = w.dim(0);
    if (b.defined() && (b.rank() != 1 || b.dim(0) != outd))
        throw dim_error("linear: bias shape " + shape_str(b.shape()) + " does not match out dim " +
                        std::to_string(outd));
    Tensor<S> out({t, outd});
    kernels::gemm_nt(x.data(), w.data(), out.data(), t, in, outd, false);
    if (b.defined()) {
        kernels::flop_counter::add(static_cast<std::uint64_t>(t) * outd);
        for (int i = 0; i < t; ++i) detail::axpy(out.data() + static_cast<std::int64_t>(i) * outd, b.data(), outd);
    }

    if (b.defined()) {
        Tensor<S> X = x, W = w, B = b, O = out;
        detail::maybe_record(out, {&x, &w, &b}, [X, W, B, O]() mutable {
            const int t = X.dim(0), in = X.dim(1), outd = W.dim(0);
            if (X.requires_grad())
                kernels::gemm(O.grad().data(), W.data(), X.grad_data(), t, outd, in, true);
            if (W.requires_grad())
                kernels::gemm_tn(O.grad().data(), X.data(), W.grad_data(), outd, t, in, true);
            if (B.requires_grad()) {
                S* db = B.grad_data();
                const S* g = O.grad().data();
                for (int i = 0; i < t; ++i) detail::axpy(db, g + static_cast<std::int64_t>(i) * outd, outd);
            }
        });
    } else {
        Tensor<S> X = x, W = w, O = out;
        detail::maybe_record(out, {&x, &w}, [X, W, O]() mutable {
            const int t = X.dim(0), in = X.dim(1), outd = W.dim(0);
            if (X.requires_grad())
                kernels::gemm(O.grad().data(), W.data(), X.grad_data(), t, outd, in, true);
            if (W.requires_grad())
                kernels::gemm_tn(O.grad().data(), X.data(), W.grad_data(), outd, t, in, true);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// add: same shape, or trailing-axis bias broadcast ([..×d] + [d]).
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    const bool bias = (b.rank() == 1 && a.rank() >= 2 && a.dim(a.rank() - 1) == b.dim(0));
    if (!bias && a.shape() != b.shape())
        throw dim_error("add: shapes disagree: " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
    Tensor<S> out(a.shape());
    const std::int64_t n = a.size();
    kernels::flop_counter::add(static_cast<std::uint64_t>(n));
    if (bias) {
        const int d = b.dim(0);
        const std::int64_t rows = n / d;
        for (std::int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < d; ++j) out.data()[r * d + j] = a.data()[r * d + j] + b.data()[j];
    } else {
        for (std::int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    }

    Tensor<S> A = a, B = b, O = out;
    detail::maybe_record(out, {&a, &b}, [A, B, O, bias]() mutable {
        const std::int64_t n = A.size();
        if (A.requires_grad()) detail::axpy(A.grad_data(), O.grad().data(), n);
        if (B.requires_grad()) {
            if (bias) {
                const int d = B.dim(0);
                const std::int64_t rows = n / d;
                S* db = B.grad_data();
                for (std::int64_t r = 0; r < rows; ++r)
                    detail::axpy(db, O.grad().data() + r * d, d);
            } else {
                detail::axpy(B.grad_data(), O.grad().data(), n);
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// mul: elementwise, same shape.
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape())
        throw dim_error("mul: shapes disagree: " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
    Tensor<S> out(a.shape());
    const std::int64_t n = a.size();
    kernels::flop_counter::add(static_cast<std::uint64_t>(n));
    for (std::int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];

    Tensor<S> A = a, B = b, O = out;
    detail::maybe_record(out, {&a, &b}, [A, B, O]() mutable {
        const std::int64_t n = A.size();
        const S* g = O.grad().data();
        if (A.requires_grad()) {
            S* da = A.grad_data();
            for (std::int64_t i = 0; i < n; ++i) da[i] += g[i] * B.data()[i];
        }
        if (B.requires_grad()) {
            S* db = B.grad_data();
            for (std::int64_t i = 0; i < n; ++i) db[i] += g[i] * A.data()[i];
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// scale by a constant.
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> scale(const Tensor<S>& a, double c) {
    Tensor<S> out(a.shape());
    const std::int64_t n = a.size();
    kernels::flop_counter::add(static_cast<std::uint64_t>(n));
    const S cs = static_cast<S>(c);
    for (std::int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * cs;

    Tensor<S> A = a, O = out;
    detail::maybe_record(out, {&a}, [A, O, cs]() mutable {
        if (A.requires_grad()) detail::axpy(A.grad_data(), O.grad().data(), A.size(), cs);
    });
    return out;
}

// ---------------------------------------------------------------------------
// transpose: rank-2 copy.
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
    if (a.rank() != 2)
        throw dim_error("transpose: operand must be rank 2, got " + shape_str(a.shape()));
    const int r = a.dim(0), c = a.dim(1);
    Tensor<S> out({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            out.data()[static_cast<std::int64_t>(j) * r + i] = a.data()[static_cast<std::int64_t>(i) * c + j];

    Tensor<S> A = a, O = out;
    detail::maybe_record(out, {&a}, [A, O]() mutable {
        if (!A.requires_grad()) return;
        const int r = A.dim(0), c = A.dim(1);
        S* da = A.grad_data();
        const S* g = O.grad().data();
        for (int j = 0; j < c; ++j)
            for (int i = 0; i < r; ++i)
                da[static_cast<std::int64_t>(i) * c + j] += g[static_cast<std::int64_t>(j) * r + i];
    });
    return out;
}

// ---------------------------------------------------------------------------
// reshape: copy with a new shape of equal element count.
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
    if (shape_numel(shape) != a.size())
        throw dim_error("reshape: cannot reshape " + shape_str(a.shape()) + " to " +
                        shape_str(shape));
    Tensor<S> out(std::move(shape), a.values());

    Tensor<S> A = a, O = out;
    detail::maybe_record(out, {&a}, [A, O]() mutable {
        if (A.requires_grad()) detail::axpy(A.grad_data(), O.grad().data(), A.size());
    });
    return out;
}

// ---------------------------------------------------------------------------
// concat along an axis.
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
    if (parts.empty()) throw contract_error("concat: empty part list");
    const int rank = parts[0].rank();
    if (axis < 0 || axis >= rank)
        throw dim_error("concat: axis " + std::to_string(axis) + " out of range for rank " +
                        std::to_string(rank));
    Shape shape = parts[0].shape();
    int total = 0;
    for (const auto& p : parts) {
        if (p.rank() != rank)
            throw dim_error("concat: rank mismatch: " + shape_str(parts[0].shape()) + " vs " +
                            shape_str(p.shape()));
        for (int d = 0; d < rank; ++d)
            if (d != axis && p.dim(d) != shape[static_cast<size_t>(d)])
                throw dim_error("concat: extent mismatch on axis " + std::to_string(d) + ": " +
                                shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
        total += p.dim(axis);
    }
    shape[static_cast<size_t>(axis)] = total;
    Tensor<S> out(shape);

    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= shape[static_cast<size_t>(d)];
    for (int d = axis + 1; d < rank; ++d) inner *= shape[static_cast<size_t>(d)];

    std::int64_t off = 0;
    for (const auto& p : parts) {
        const std::int64_t pe = p.dim(axis) * inner;
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(p.data() + o * pe, pe, out.data() + o * (total * inner) + off);
        off += pe;
    }

    bool need = false;
    for (const auto& p : parts) need = need || p.requires_grad();
    Tape<S>* tp = Tape<S>::current();
    if (tp && need) {
        out.set_requires_grad(true);
        std::vector<int> ids;
        for (const auto& p : parts) ids.push_back(tp->node_of(p));
        std::vector<Tensor<S>> P = parts;
        Tensor<S> O = out;
        const std::int64_t orow = static_cast<std::int64_t>(total) * inner;
        tp->record(out, std::move(ids), [P, O, axis, outer, inner, orow]() mutable {
            const S* g = O.grad().data();
            std::int64_t off = 0;
            for (auto& p : P) {
                const std::int64_t pe = static_cast<std::int64_t>(p.dim(axis)) * inner;
                if (p.requires_grad()) {
                    S* dp = p.grad_data();
                    for (std::int64_t o = 0; o < outer; ++o)
                        detail::axpy(dp + o * pe, g + o * orow + off, pe);
                }
                off += pe;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// slice along an axis: [start, start+len).
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> slice(const Tensor<S>& a, int axis, int start, int len) {
    const int rank = a.rank();
    if (axis < 0 || axis >= rank)
        throw dim_error("slice: axis " + std::to_string(axis) + " out of range for rank " +
                        std::to_string(rank));
    if (start < 0 || len <= 0 || start + len > a.dim(axis))
        throw dim_error("slice: range [" + std::to_string(start) + ", " +
                        std::to_string(start + len) + ") out of bounds for axis extent " +
                        std::to_string(a.dim(axis)));
    Shape shape = a.shape();
    shape[static_cast<size_t>(axis)] = len;
    Tensor<S> out(shape);

    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= a.dim(d);
    for (int d = axis + 1; d < rank; ++d) inner *= a.dim(d);
    const std::int64_t arow = static_cast<std::int64_t>(a.dim(axis)) * inner;
    const std::int64_t orow = static_cast<std::int64_t>(len) * inner;
    for (std::int64_t o = 0; o < outer; ++o)
        std::copy_n(a.data() + o * arow + start * inner, orow, out.data() + o * orow);

    Tensor<S> A = a, O = out;
    detail::maybe_record(out, {&a}, [A, O, axis, start, outer, inner, arow, orow]() mutable {
        if (!A.requires_grad()) return;
        S* da = A.grad_data();
        const S* g = O.grad().data();
        for (std::int64_t o = 0; o < outer; ++o)
            detail::axpy(da + o * arow + start * inner, g + o * orow, orow);
    });
    return out;
}

// ---------------------------------------------------------------------------
// embedding_lookup: table [v×d], ids [t] -> [t×d].
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> embedding_lookup(const Tensor<S>& table, const std::vector<int>& ids) {
    if (table.rank() != 2)
        throw dim_error("embedding_lookup: table must be rank 2, got " + shape_str(table.shape()));
    if (ids.empty()) throw contract_error("embedding_lookup: empty id list");
    const int v = table.dim(0), d = table.dim(1);
    for (size_t i = 0; i < ids.size(); ++i)
        if (ids[i] < 0 || ids[i] >= v)
            throw index_error("embedding_lookup: id " + std::to_string(ids[i]) + " at position " +
                              std::to_string(i) + " outside vocab of " + std::to_string(v));
    const int t = static_cast<int>(ids.size());
    Tensor<S> out({t, d});
    for (int i = 0; i < t; ++i)
        std::copy_n(table.data() + static_cast<std::int64_t>(ids[static_cast<size_t>(i)]) * d, d,
                    out.data() + static_cast<std::int64_t>(i) * d);

    Tensor<S> Tb = table, O = out;
    detail::maybe_record(out, {&table}, [Tb, O, ids]() mutable {
        if (!Tb.requires_grad()) return;
        const int d = Tb.dim(1);
        S* dt = Tb.grad_data();
        const S* g = O.grad().data();
        for (size_t i = 0; i < ids.size(); ++i)
            detail::axpy(dt + static_cast<std::int64_t>(ids[i]) * d,
                         g + static_cast<std::int64_t>(i) * d, d);
    });
    return out;
}

// ---------------------------------------------------------------------------
// gelu (tanh approximation).
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> gelu(const Tensor<S>& a) {
    Tensor<S> out(a.shape());
    kernels::gelu(a.data(), out.data(), a.size());

    Tensor<S> A = a, O = out;
    detail::maybe_record(out, {&a}, [A, O]() mutable {
        if (!A.requires_grad()) return;
        const std::int64_t n = A.size();
        S* da = A.grad_data();
        const S* g = O.grad().data();
        const S* x = A.data();
        for (std::int64_t i = 0; i < n; ++i) da[i] += g[i] * kernels::gelu_grad_one(x[i]);
    });
    return out;
}

// ---------------------------------------------------------------------------
// layer_norm over the last axis, affine. gamma/beta [d].
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta) {
    const int d = x.dim(x.rank() - 1);
    if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d)
        throw dim_error("layer_norm: affine params must be [" + std::to_string(d) + "], got " +
                        shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
    const std::int64_t rows = x.size() / d;
    Tensor<S> out(x.shape());
    // xhat and 1/std are saved for backward.
    auto xhat = std::make_shared<std::vector<S>>(static_cast<size_t>(x.size()));
    auto istd = std::make_shared<std::vector<S>>(static_cast<size_t>(rows));
    kernels::flop_counter::add(static_cast<std::uint64_t>(x.size()) * 8);
    for (std::int64_t r = 0; r < rows; ++r) {
        const S* xr = x.data() + r * d;
        S* or_ = out.data() + r * d;
        S mu = S(0);
        for (int j = 0; j < d; ++j) mu += xr[j];
        mu /= S(d);
        S var = S(0);
        for (int j = 0; j < d; ++j) {
            const S c = xr[j] - mu;
            var += c * c;
        }
        var /= S(d);
        const S is = S(1) / std::sqrt(var + S(kLayerNormEps));
        (*istd)[static_cast<size_t>(r)] = is;
        for (int j = 0; j < d; ++j) {
            const S h = (xr[j] - mu) * is;
            (*xhat)[static_cast<size_t>(r * d + j)] = h;
            or_[j] = h * gamma.data()[j] + beta.data()[j];
        }
    }

    Tensor<S> X = x, G = gamma, B = beta, O = out;
    detail::maybe_record(out, {&x, &gamma, &beta}, [X, G, B, O, xhat, istd, rows, d]() mutable {
        const S* g = O.grad().data();
        if (G.requires_grad() || B.requires_grad()) {
            S* dg = G.requires_grad() ? G.grad_data() : nullptr;
            S* db = B.requires_grad() ? B.grad_data() : nullptr;
            for (std::int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < d; ++j) {
                    if (dg) dg[j] += g[r * d + j] * (*xhat)[static_cast<size_t>(r * d + j)];
                    if (db) db[j] += g[r * d + j];
                }
        }
        if (X.requires_grad()) {
            S* dx = X.grad_data();
            for (std::int64_t r = 0; r < rows; ++r) {
                const S is = (*istd)[static_cast<size_t>(r)];
                S mean_dh = S(0), mean_dhh = S(0);
                for (int j = 0; j < d; ++j) {
                    const S dh = g[r * d + j] * G.data()[j];
                    mean_dh += dh;
                    mean_dhh += dh * (*xhat)[static_cast<size_t>(r * d + j)];
                }
                mean_dh /= S(d);
                mean_dhh /= S(d);
                for (int j = 0; j < d; ++j) {
                    const S dh = g[r * d + j] * G.data()[j];
                    const S h = (*xhat)[static_cast<size_t>(r * d + j)];
                    dx[r * d + j] += is * (dh - mean_dh - h * mean_dhh);
                }
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// rms_norm over the last axis. gamma [d].
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> rms_norm(const Tensor<S>& x, const Tensor<S>& gamma) {
    const int d = x.dim(x.rank() - 1);
    if (gamma.rank() != 1 || gamma.dim(0) != d)
        throw dim_error("rms_norm: gamma must be [" + std::to_string(d) + "], got " +
                        shape_str(gamma.shape()));
    const std::int64_t rows = x.size() / d;
    Tensor<S> out(x.shape());
    auto irms = std::make_shared<std::vector<S>>(static_cast<size_t>(rows));
    kernels::flop_counter::add(static_cast<std::uint64_t>(x.size()) * 5);
    for (std::int64_t r = 0; r < rows; ++r) {
        const S* xr = x.data() + r * d;
        S* or_ = out.data() + r * d;
        S ms = S(0);
        for (int j = 0; j < d; ++j) ms += xr[j] * xr[j];
        ms /= S(d);
        const S ir = S(1) / std::sqrt(ms + S(kRmsNormEps));
        (*irms)[static_cast<size_t>(r)] = ir;
        for (int j = 0; j < d; ++j) or_[j] = xr[j] * ir * gamma.data()[j];
    }

    Tensor<S> X = x, G = gamma, O = out;
    detail::maybe_record(out, {&x, &gamma}, [X, G, O, irms, rows, d]() mutable {
        const S* g = O.grad().data();
        const S* xv = X.data();
        if (G.requires_grad()) {
            S* dg = G.grad_data();
            for (std::int64_t r = 0; r < rows; ++r) {
                const S ir = (*irms)[static_cast<size_t>(r)];
                for (int j = 0; j < d; ++j) dg[j] += g[r * d + j] * xv[r * d + j] * ir;
            }
        }
        if (X.requires_grad()) {
            S* dx = X.grad_data();
            for (std::int64_t r = 0; r < rows; ++r) {
                const S ir = (*irms)[static_cast<size_t>(r)];
                S dot = S(0);
                for (int j = 0; j < d; ++j) dot += g[r * d + j] * G.data()[j] * xv[r * d + j];
                const S k = dot * ir * ir * ir / S(d);
                for (int j = 0; j < d; ++j)
                    dx[r * d + j] += g[r * d + j] * G.data()[j] * ir - xv[r * d + j] * k;
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// softmax over the last axis, max-subtracted.
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& x) {
    const int d = x.dim(x.rank() - 1);
    const std::int64_t rows = x.size() / d;
    Tensor<S> out(x.shape());
    kernels::softmax_rows(x.data(), out.data(), static_cast<int>(rows), d);

    Tensor<S> X = x, O = out;
    detail::maybe_record(out, {&x}, [X, O, rows, d]() mutable {
        if (!X.requires_grad()) return;
        S* dx = X.grad_data();
        const S* g = O.grad().data();
        const S* y = O.data();
        for (std::int64_t r = 0; r < rows; ++r) {
            S dot = S(0);
            for (int j = 0; j < d; ++j) dot += g[r * d + j] * y[r * d + j];
            for (int j = 0; j < d; ++j) dx[r * d + j] += y[r * d + j] * (g[r * d + j] - dot);
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// causal_mask_fill: rank-2 scores [q×k]; positions j > i + diag_offset are
// filled with a large negative so softmax sends them to exactly zero.
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> causal_mask_fill(const Tensor<S>& x, int diag_offset = 0) {
    if (x.rank() != 2)
        throw dim_error("causal_mask_fill: operand must be rank 2, got " + shape_str(x.shape()));
    const int q = x.dim(0), k = x.dim(1);
    Tensor<S> out(x.shape());
    for (int i = 0; i < q; ++i) {
        const int lim = std::min(k, i + diag_offset + 1);
        const std::int64_t row = static_cast<std::int64_t>(i) * k;
        for (int j = 0; j < lim; ++j) out.data()[row + j] = x.data()[row + j];
        for (int j = std::max(lim, 0); j < k; ++j) out.data()[row + j] = S(kMaskFill);
    }

    Tensor<S> X = x, O = out;
    detail::maybe_record(out, {&x}, [X, O, diag_offset]() mutable {
        if (!X.requires_grad()) return;
        const int q = X.dim(0), k = X.dim(1);
        S* dx = X.grad_data();
        const S* g = O.grad().data();
        for (int i = 0; i < q; ++i) {
            const int lim = std::min(k, i + diag_offset + 1);
            const std::int64_t row = static_cast<std::int64_t>(i) * k;
            for (int j = 0; j < lim; ++j) dx[row + j] += g[row + j];
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// sum / mean over all elements -> scalar.
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
    S acc = S(0);
    const std::int64_t n = a.size();
    kernels::flop_counter::add(static_cast<std::uint64_t>(n));
    for (std::int64_t i = 0; i < n; ++i) acc += a.data()[i];
    Tensor<S> out = Tensor<S>::scalar(acc);

    Tensor<S> A = a, O = out;
    detail::maybe_record(out, {&a}, [A, O]() mutable {
        if (!A.requires_grad()) return;
        const S g = O.grad()[0];
        S* da = A.grad_data();
        for (std::int64_t i = 0; i < A.size(); ++i) da[i] += g;
    });
    return out;
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
    Tensor<S> s = sum(a);
    return scale(s, 1.0 / static_cast<double>(a.size()));
}

// ---------------------------------------------------------------------------
// masked_cross_entropy: logits [t×v], targets [t], mask [t] of {0,1}.
// Mean over masked positions of -log softmax(logits)[i, target_i]. Unmasked
// positions contribute nothing to value or gradient.
// ---------------------------------------------------------------------------
template <typename S>
Tensor<S> masked_cross_entropy(const Tensor<S>& logits, const std::vector<int>& targets,
                               const std::vector<std::uint8_t>& mask) {
    if (logits.rank() != 2)
        throw dim_error("masked_cross_entropy: logits must be rank 2, got " +
                        shape_str(logits.shape()));
    const int t = logits.dim(0), v = logits.dim(1);
    if (static_cast<int>(targets.size()) != t || static_cast<int>(mask.size()) != t)
        throw dim_error("masked_cross_entropy: " + std::to_string(t) + " logit rows vs " +
                        std::to_string(targets.size()) + " targets / " +
                        std::to_string(mask.size()) + " mask entries");
    std::int64_t m = 0;
    for (int i = 0; i < t; ++i) {
        if (!mask[static_cast<size_t>(i)]) continue;
        ++m;
        if (targets[static_cast<size_t>(i)] < 0 || targets[static_cast<size_t>(i)] >= v)
            throw index_error("masked_cross_entropy: target " +
                              std::to_string(targets[static_cast<size_t>(i)]) + " at position " +
                              std::to_string(i) + " outside vocab of " + std::to_string(v));
    }
    if (m == 0) throw empty_loss_error("masked_cross_entropy: mask selects no positions");

    kernels::flop_counter::add(static_cast<std::uint64_t>(m) * v * 5);
    S acc = S(0);
    for (int i = 0; i < t; ++i) {
        if (!mask[static_cast<size_t>(i)]) continue;
        const S* row = logits.data() + static_cast<std::int64_t>(i) * v;
        S mx = row[0];
        for (int j = 1; j < v; ++j) mx = row[j] > mx ? row[j] : mx;
        S se = S(0);
        for (int j = 0; j < v; ++j) se += std::exp(row[j] - mx);
        const S lse = mx + std::log(se);
        acc += lse - row[targets[static_cast<size_t>(i)]];
    }
    Tensor<S> out = Tensor<S>::scalar(acc / S(m));

    Tensor<S> L = logits, O = out;
    detail::maybe_record(out, {&logits}, [L, O, targets, mask, m]() mutable {
        if (!L.requires_grad()) return;
        const int t = L.dim(0), v = L.dim(1);
        const S g = O.grad()[0] / S(m);
        S* dl = L.grad_data();
        for (int i = 0; i < t; ++i) {
            if (!mask[static_cast<size_t>(i)]) continue;
            const S* row = L.data() + static_cast<std::int64_t>(i) * v;
            S mx = row[0];
            for (int j = 1; j < v; ++j) mx = row[j] > mx ? row[j] : mx;
            S se = S(0);
            for (int j = 0; j < v; ++j) se += std::exp(row[j] - mx);
            S* drow = dl + static_cast<std::int64_t>(i) * v;
            const S inv = S(1) / se;
            for (int j = 0; j < v; ++j) drow[j] += g * std::exp(row[j] - mx) * inv;
            drow[targets[static_cast<size_t>(i)]] -= g;
        }
    });
    return out;
}

}  // namespace owlet
