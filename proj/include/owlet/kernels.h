// SPDX-License-Identifier: Apache-2.0
//
// Dense compute kernels. Every parallel kernel partitions work so that each
// output element is produced by exactly one thread with a fixed inner
// summation order, so the OpenMP path is bit-identical to the serial
// reference for any thread count. The *_serial variants are kept as the
// reference implementations for tests and the benchmark.
#pragma once

#include <cmath>
#include <cstdint>

namespace owlet::kernels {

// Thread budget for parallel kernels and data preparation. Defaults to the
// hardware count, capped by the OWLET_THREADS environment variable.
int max_threads();
void set_threads(int n);

// Work sizes below this run the serial path; OpenMP overhead dominates there.
inline constexpr std::int64_t kParallelGrain = 16 * 1024;

bool use_parallel(std::int64_t work);

// Approximate floating-op accounting (multiply-add counted as 2). Only
// arithmetic kernels report; copies and index shuffles do not. Enabled
// explicitly by measurement code; counts are attributed to the attention
// bucket while an attention_scope is alive.
struct flop_counter {
    static bool enabled;
    static std::uint64_t total;
    static std::uint64_t attention;
    static int attention_depth;

    static void add(std::uint64_t n) {
        if (!enabled) return;
        total += n;
        if (attention_depth > 0) attention += n;
    }
    static void reset() {
        total = 0;
        attention = 0;
    }
};

struct attention_scope {
    attention_scope() { ++flop_counter::attention_depth; }
    ~attention_scope() { --flop_counter::attention_depth; }
    attention_scope(const attention_scope&) = delete;
    attention_scope& operator=(const attention_scope&) = delete;
};

// ---------------------------------------------------------------------------
// gemm family: c[m×n] op a, b with row-major storage.
//   gemm        c (+)= a[m×k] · b[k×n]
//   gemm_nt     c (+)= a[m×k] · b[n×k]ᵀ
//   gemm_tn     c (+)= a[k×m]ᵀ · b[k×n]
// ---------------------------------------------------------------------------

template <typename S>
void gemm_serial(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        S* crow = c + static_cast<std::int64_t>(i) * n;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) crow[j] = S(0);
        }
        const S* arow = a + static_cast<std::int64_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const S av = arow[p];
            if (av == S(0)) continue;
            const S* brow = b + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename S>
void gemm(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    flop_counter::add(2ull * m * k * n);
    const std::int64_t work = static_cast<std::int64_t>(m) * k * n;
    if (use_parallel(work) && m > 1) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
        for (int i = 0; i < m; ++i) {
            gemm_serial(a + static_cast<std::int64_t>(i) * k, b,
                        c + static_cast<std::int64_t>(i) * n, 1, k, n, accumulate);
        }
    } else {
        gemm_serial(a, b, c, m, k, n, accumulate);
    }
}

template <typename S>
void gemm_nt_serial(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const S* arow = a + static_cast<std::int64_t>(i) * k;
        S* crow = c + static_cast<std::int64_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const S* brow = b + static_cast<std::int64_t>(j) * k;
            S acc = S(0);
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

template <typename S>
void gemm_nt(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    flop_counter::add(2ull * m * k * n);
    const std::int64_t work = static_cast<std::int64_t>(m) * k * n;
    if (use_parallel(work) && m > 1) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
        for (int i = 0; i < m; ++i) {
            gemm_nt_serial(a + static_cast<std::int64_t>(i) * k, b,
                           c + static_cast<std::int64_t>(i) * n, 1, k, n, accumulate);
        }
    } else {
        gemm_nt_serial(a, b, c, m, k, n, accumulate);
    }
}

namespace detail {
// One output row of gemm_tn: c_row[j] (+)= sum_p a[p*m+i] * b[p*n+j].
template <typename S>
void gemm_tn_row(const S* a, const S* b, S* crow, int i, int m, int k, int n,
                 bool accumulate) {
    if (!accumulate) {
        for (int j = 0; j < n; ++j) crow[j] = S(0);
    }
    for (int p = 0; p < k; ++p) {
        const S av = a[static_cast<std::int64_t>(p) * m + i];
        if (av == S(0)) continue;
        const S* brow = b + static_cast<std::int64_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}
}  // namespace detail

template <typename S>
void gemm_tn_serial(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        detail::gemm_tn_row(a, b, c + static_cast<std::int64_t>(i) * n, i, m, k, n,
                            accumulate);
    }
}

template <typename S>
void gemm_tn(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    flop_counter::add(2ull * m * k * n);
    const std::int64_t work = static_cast<std::int64_t>(m) * k * n;
    if (use_parallel(work) && m > 1) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
        for (int i = 0; i < m; ++i) {
            detail::gemm_tn_row(a, b, c + static_cast<std::int64_t>(i) * n, i, m, k, n,
                                accumulate);
        }
    } else {
        gemm_tn_serial(a, b, c, m, k, n, accumulate);
    }
}

// ---------------------------------------------------------------------------
// Row softmax with max subtraction.
// ---------------------------------------------------------------------------

template <typename S>
void softmax_rows_serial(const S* x, S* y, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        const S* xi = x + static_cast<std::int64_t>(i) * cols;
        S* yi = y + static_cast<std::int64_t>(i) * cols;
        S mx = xi[0];
        for (int j = 1; j < cols; ++j) mx = xi[j] > mx ? xi[j] : mx;
        S sum = S(0);
        for (int j = 0; j < cols; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            sum += yi[j];
        }
        const S inv = S(1) / sum;
        for (int j = 0; j < cols; ++j) yi[j] *= inv;
    }
}

template <typename S>
void softmax_rows(const S* x, S* y, int rows, int cols) {
    flop_counter::add(4ull * rows * cols);
    const std::int64_t work = static_cast<std::int64_t>(rows) * cols * 8;
    if (use_parallel(work) && rows > 1) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
        for (int i = 0; i < rows; ++i) {
            softmax_rows_serial(x + static_cast<std::int64_t>(i) * cols,
                                y + static_cast<std::int64_t>(i) * cols, 1, cols);
        }
    } else {
        softmax_rows_serial(x, y, rows, cols);
    }
}

// ---------------------------------------------------------------------------
// GELU, tanh approximation. Constants: sqrt(2/pi) and 0.044715.
// ---------------------------------------------------------------------------

inline constexpr double kGeluK0 = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluK1 = 0.044715;

template <typename S>
S gelu_one(S x) {
    const S u = S(kGeluK0) * (x + S(kGeluK1) * x * x * x);
    return S(0.5) * x * (S(1) + std::tanh(u));
}

// d/dx of the tanh-approximate GELU.
template <typename S>
S gelu_grad_one(S x) {
    const S u = S(kGeluK0) * (x + S(kGeluK1) * x * x * x);
    const S t = std::tanh(u);
    const S du = S(kGeluK0) * (S(1) + S(3) * S(kGeluK1) * x * x);
    return S(0.5) * (S(1) + t) + S(0.5) * x * (S(1) - t * t) * du;
}

template <typename S>
void gelu_serial(const S* x, S* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}

template <typename S>
void gelu(const S* x, S* y, std::int64_t n) {
    flop_counter::add(static_cast<std::uint64_t>(n) * 10);
    if (use_parallel(n * 10)) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
        for (std::int64_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
    } else {
        gelu_serial(x, y, n);
    }
}

}  // namespace owlet::kernels
