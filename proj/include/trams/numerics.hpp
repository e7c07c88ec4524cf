// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace trams {

/// Raised when a caller violates an operation's preconditions (shapes, ranges, flags).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a run fails for reasons outside the caller's control (I/O, divergence).
class RuntimeFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major matrix. Storage type is `T`; every reduction in this library
/// accumulates in double regardless of `T`.
template <typename T>
class BasicMatrix {
public:
    using value_type = T;

    BasicMatrix() = default;
    BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data);

    static BasicMatrix identity(std::size_t n);
    static BasicMatrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }

    std::string shape_string() const;
    bool all_finite() const noexcept;
    void fill(T value) noexcept;

    /// Rows `indices` of this matrix, in the given order.
    BasicMatrix gather_rows(std::span<const std::size_t> indices) const;
    /// Vertical concatenation [top; bottom]. Column counts must agree unless one side is empty.
    static BasicMatrix vstack(const BasicMatrix& top, const BasicMatrix& bottom);
    /// Columns [begin, begin + count).
    BasicMatrix column_block(std::size_t begin, std::size_t count) const;
    BasicMatrix transposed() const;

    template <typename U>
    BasicMatrix<U> cast() const {
        BasicMatrix<U> out(rows_, cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
        return out;
    }

    friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;

// ---- products -------------------------------------------------------------

/// a[m×k] · b[k×n].
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
/// a[m×k] · b[n×k]ᵀ.
template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b);
/// a[k×m]ᵀ · b[k×n].
template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

/// out += a[k×m]ᵀ · b[k×n]; used for gradient accumulation.
template <typename T>
void add_matmul_tn(BasicMatrix<T>& out, const BasicMatrix<T>& a, const BasicMatrix<T>& b);

/// Row vector x[k] · b[k×n].
template <typename T>
std::vector<T> vecmat(std::span<const T> x, const BasicMatrix<T>& b);
/// b[m×k] · x[k].
template <typename T>
std::vector<T> matvec(const BasicMatrix<T>& b, std::span<const T> x);

template <typename T>
double dot(std::span<const T> a, std::span<const T> b);

// ---- row-wise ops ----------------------------------------------------------

/// Row softmax of logits / scale, with max-subtraction.
template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& logits, double scale = 1.0);

inline constexpr double kDefaultLayerNormEps = 1e-5;

template <typename T>
std::vector<T> layer_norm(std::span<const T> x, std::span<const T> gain, std::span<const T> bias,
                          double eps = kDefaultLayerNormEps);
/// Layer norm with unit gain and zero bias.
template <typename T>
std::vector<T> layer_norm(std::span<const T> x, double eps = kDefaultLayerNormEps);

// ---- statistics ------------------------------------------------------------

template <typename T>
double l2_norm(std::span<const T> x);

/// u·v / (‖u‖‖v‖), clamped to [−1, 1]. A zero vector yields 0 and sets `*degenerate`.
template <typename T>
double cosine(std::span<const T> u, std::span<const T> v, bool* degenerate = nullptr);

struct SpearmanResult {
    double rho = 0.0;
    bool zero_variance = false;  ///< one side had constant ranks; rho reported as 0
    bool had_ties = false;
};

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation, Pearson-on-ranks when ties are present.
SpearmanResult spearman_rank_correlation(std::span<const double> a, std::span<const double> b);

struct DispersionStats {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double mean = 0.0;
    double stddev = 0.0;
    /// IQR / median; 0 when median is 0.
    double relative_iqr() const noexcept { return median != 0.0 ? (q3 - q1) / median : 0.0; }
};

/// Linear-interpolated quantiles; empty input is a usage error.
DispersionStats describe(std::vector<double> values);

// ---- RNG -------------------------------------------------------------------

/// Counter-based SplitMix64 stream. Output depends only on (seed, counter), so
/// equal seeds give identical streams everywhere. One owner per stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform integer in [0, bound); bound must be > 0.
    std::uint64_t uniform_index(std::uint64_t bound) noexcept;
    /// Standard normal via Box-Muller (no cached spare, so the stream stays counter-addressable).
    double normal() noexcept;

    /// Independent child stream keyed by `stream_id`.
    Rng split(std::uint64_t stream_id) const noexcept;

    template <typename T>
    void fill_normal(BasicMatrix<T>& m, double stddev) noexcept {
        for (auto& v : m.values()) v = static_cast<T>(normal() * stddev);
    }
    template <typename T>
    void fill_uniform(BasicMatrix<T>& m, double lo, double hi) noexcept {
        for (auto& v : m.values()) v = static_cast<T>(lo + (hi - lo) * uniform());
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace trams
