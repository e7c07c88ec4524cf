// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#include "trams/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace trams {

namespace {

std::string shape_of(std::size_t r, std::size_t c) {
    return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

void require_inner(const char* op, std::size_t lr, std::size_t lc, std::size_t rr, std::size_t rc,
                   std::size_t left_inner, std::size_t right_inner) {
    if (left_inner != right_inner) {
        throw UsageError(std::string(op) + ": inner dimension mismatch " + shape_of(lr, lc) + " vs " +
                         shape_of(rr, rc));
    }
}

// c[m×n] (+)= a[m×k] · b[k×n] with one double accumulator per output column.
// The j-loop is a contiguous axpy, so it vectorizes without reassociating sums.
template <typename T>
void gemm_rows(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    std::vector<double> acc(n);
    for (std::size_t i = 0; i < m; ++i) {
        if (accumulate) {
            for (std::size_t j = 0; j < n; ++j) acc[j] = static_cast<double>(c[i * n + j]);
        } else {
            std::fill(acc.begin(), acc.end(), 0.0);
        }
        const T* arow = a + i * k;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = static_cast<double>(arow[t]);
            if (av == 0.0) continue;
            const T* brow = b + t * n;
            double* accp = acc.data();
            for (std::size_t j = 0; j < n; ++j) accp[j] += av * static_cast<double>(brow[j]);
        }
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<T>(acc[j]);
    }
}

}  // namespace

template <typename T>
BasicMatrix<T>::BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw UsageError("Matrix: data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_of(rows_, cols_));
    }
}

template <typename T>
BasicMatrix<T> BasicMatrix<T>::identity(std::size_t n) {
    BasicMatrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = T{1};
    return out;
}

template <typename T>
BasicMatrix<T> BasicMatrix<T>::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    BasicMatrix out(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != out.cols()) throw UsageError("Matrix::from_rows: ragged rows");
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = static_cast<T>(rows[r][c]);
    }
    return out;
}

template <typename T>
std::string BasicMatrix<T>::shape_string() const {
    return shape_of(rows_, cols_);
}

template <typename T>
bool BasicMatrix<T>::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void BasicMatrix<T>::fill(T value) noexcept {
    std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
BasicMatrix<T> BasicMatrix<T>::gather_rows(std::span<const std::size_t> indices) const {
    BasicMatrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) {
            throw UsageError("gather_rows: index " + std::to_string(indices[i]) + " out of range for " +
                             shape_string());
        }
        std::copy_n(data_.data() + indices[i] * cols_, cols_, out.data_.data() + i * cols_);
    }
    return out;
}

template <typename T>
BasicMatrix<T> BasicMatrix<T>::vstack(const BasicMatrix& top, const BasicMatrix& bottom) {
    if (top.rows_ == 0) return bottom;
    if (bottom.rows_ == 0) return top;
    if (top.cols_ != bottom.cols_) {
        throw UsageError("vstack: column mismatch " + top.shape_string() + " vs " + bottom.shape_string());
    }
    BasicMatrix out(top.rows_ + bottom.rows_, top.cols_);
    std::copy(top.data_.begin(), top.data_.end(), out.data_.begin());
    std::copy(bottom.data_.begin(), bottom.data_.end(), out.data_.begin() + static_cast<std::ptrdiff_t>(top.size()));
    return out;
}

template <typename T>
BasicMatrix<T> BasicMatrix<T>::column_block(std::size_t begin, std::size_t count) const {
    if (begin + count > cols_) throw UsageError("column_block: range exceeds " + shape_string());
    BasicMatrix out(rows_, count);
    for (std::size_t r = 0; r < rows_; ++r) {
        std::copy_n(data_.data() + r * cols_ + begin, count, out.data_.data() + r * count);
    }
    return out;
}

template <typename T>
BasicMatrix<T> BasicMatrix<T>::transposed() const {
    BasicMatrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) out.data_[c * rows_ + r] = data_[r * cols_ + c];
    return out;
}

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
    require_inner("matmul", a.rows(), a.cols(), b.rows(), b.cols(), a.cols(), b.rows());
    BasicMatrix<T> c(a.rows(), b.cols());
    gemm_rows(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols(), false);
    return c;
}

template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
    require_inner("matmul_nt", a.rows(), a.cols(), b.rows(), b.cols(), a.cols(), b.cols());
    const BasicMatrix<T> bt = b.transposed();
    BasicMatrix<T> c(a.rows(), b.rows());
    gemm_rows(a.data(), bt.data(), c.data(), a.rows(), a.cols(), b.rows(), false);
    return c;
}

template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
    require_inner("matmul_tn", a.rows(), a.cols(), b.rows(), b.cols(), a.rows(), b.rows());
    const BasicMatrix<T> at = a.transposed();
    BasicMatrix<T> c(a.cols(), b.cols());
    gemm_rows(at.data(), b.data(), c.data(), a.cols(), a.rows(), b.cols(), false);
    return c;
}

template <typename T>
void add_matmul_tn(BasicMatrix<T>& out, const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
    require_inner("add_matmul_tn", a.rows(), a.cols(), b.rows(), b.cols(), a.rows(), b.rows());
    if (out.rows() != a.cols() || out.cols() != b.cols()) {
        throw UsageError("add_matmul_tn: output " + out.shape_string() + " does not match " +
                         shape_of(a.cols(), b.cols()));
    }
    if (a.rows() == 0) return;
    const BasicMatrix<T> at = a.transposed();
    gemm_rows(at.data(), b.data(), out.data(), a.cols(), a.rows(), b.cols(), true);
}

template <typename T>
std::vector<T> vecmat(std::span<const T> x, const BasicMatrix<T>& b) {
    require_inner("vecmat", 1, x.size(), b.rows(), b.cols(), x.size(), b.rows());
    std::vector<T> out(b.cols());
    gemm_rows(x.data(), b.data(), out.data(), 1, x.size(), b.cols(), false);
    return out;
}

template <typename T>
std::vector<T> matvec(const BasicMatrix<T>& b, std::span<const T> x) {
    require_inner("matvec", b.rows(), b.cols(), x.size(), 1, b.cols(), x.size());
    std::vector<T> out(b.rows());
    for (std::size_t r = 0; r < b.rows(); ++r) out[r] = static_cast<T>(dot(b.row(r), x));
    return out;
}

template <typename T>
double dot(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size()) {
        throw UsageError("dot: length mismatch " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& logits, double scale) {
    if (!(scale > 0.0)) throw UsageError("softmax_rows: scale must be > 0");
    BasicMatrix<T> out(logits.rows(), logits.cols());
    std::vector<double> buf(logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto in = logits.row(r);
        if (in.empty()) continue;
        double mx = -INFINITY;
        for (std::size_t c = 0; c < in.size(); ++c) {
            buf[c] = static_cast<double>(in[c]) / scale;
            mx = std::max(mx, buf[c]);
        }
        double total = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            buf[c] = std::exp(buf[c] - mx);
            total += buf[c];
        }
        auto o = out.row(r);
        for (std::size_t c = 0; c < in.size(); ++c) o[c] = static_cast<T>(buf[c] / total);
    }
    return out;
}

template <typename T>
std::vector<T> layer_norm(std::span<const T> x, std::span<const T> gain, std::span<const T> bias, double eps) {
    if (x.empty()) throw UsageError("layer_norm: empty input");
    if (!(eps > 0.0)) throw UsageError("layer_norm: eps must be > 0");
    if (gain.size() != x.size() || bias.size() != x.size()) {
        throw UsageError("layer_norm: gain/bias length must equal input length " + std::to_string(x.size()));
    }
    double mean = 0.0;
    for (T v : x) mean += static_cast<double>(v);
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (T v : x) {
        const double c = static_cast<double>(v) - mean;
        var += c * c;
    }
    var /= static_cast<double>(x.size());
    const double inv = 1.0 / std::sqrt(var + eps);
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = static_cast<T>(static_cast<double>(gain[i]) * (static_cast<double>(x[i]) - mean) * inv +
                                static_cast<double>(bias[i]));
    }
    return out;
}

template <typename T>
std::vector<T> layer_norm(std::span<const T> x, double eps) {
    const std::vector<T> gain(x.size(), T{1});
    const std::vector<T> bias(x.size(), T{0});
    return layer_norm<T>(x, gain, bias, eps);
}

template <typename T>
double l2_norm(std::span<const T> x) {
    double s = 0.0;
    for (T v : x) s += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(s);
}

template <typename T>
double cosine(std::span<const T> u, std::span<const T> v, bool* degenerate) {
    const double nu = l2_norm(u);
    const double nv = l2_norm(v);
    if (degenerate) *degenerate = false;
    if (nu == 0.0 || nv == 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
        i = j + 1;
    }
    return ranks;
}

SpearmanResult spearman_rank_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw UsageError("spearman_rank_correlation: length mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    }
    const std::size_t n = a.size();
    if (n < 2) throw UsageError("spearman_rank_correlation: need at least 2 samples, got " + std::to_string(n));

    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    SpearmanResult result;
    const auto has_ties = [](std::vector<double> r) {
        std::sort(r.begin(), r.end());
        return std::adjacent_find(r.begin(), r.end()) != r.end();
    };
    result.had_ties = has_ties(ra) || has_ties(rb);

    if (!result.had_ties) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
        const double nn = static_cast<double>(n);
        result.rho = std::clamp(1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0)), -1.0, 1.0);
        return result;
    }

    const double mean = 0.5 * static_cast<double>(n + 1);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = ra[i] - mean;
        const double db = rb[i] - mean;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) {
        result.zero_variance = true;
        result.rho = 0.0;
        return result;
    }
    result.rho = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
    return result;
}

DispersionStats describe(std::vector<double> values) {
    if (values.empty()) throw UsageError("describe: empty sample");
    std::sort(values.begin(), values.end());
    const auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, values.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return values[lo] + frac * (values[hi] - values[lo]);
    };
    DispersionStats s;
    s.median = quantile(0.5);
    s.q1 = quantile(0.25);
    s.q3 = quantile(0.75);
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t Rng::next_u64() noexcept {
    // Draw k is the k-th output of the sequential SplitMix64 stream seeded with seed_.
    return splitmix64(seed_ + (counter_++) * 0x9E3779B97F4A7C15ULL);
}

double Rng::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_index(std::uint64_t bound) noexcept {
    // Rejection sampling keeps the draw unbiased for any bound.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % bound;
}

double Rng::normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(std::uint64_t stream_id) const noexcept {
    return Rng(splitmix64(seed_ ^ splitmix64(stream_id + 0x632BE59BD9B4E019ULL)));
}

// ---- explicit instantiations -------------------------------------------------

#define TRAMS_INSTANTIATE_NUMERICS(T)                                                                       \
    template class BasicMatrix<T>;                                                                           \
    template BasicMatrix<T> matmul(const BasicMatrix<T>&, const BasicMatrix<T>&);                            \
    template BasicMatrix<T> matmul_nt(const BasicMatrix<T>&, const BasicMatrix<T>&);                         \
    template BasicMatrix<T> matmul_tn(const BasicMatrix<T>&, const BasicMatrix<T>&);                         \
    template void add_matmul_tn(BasicMatrix<T>&, const BasicMatrix<T>&, const BasicMatrix<T>&);              \
    template std::vector<T> vecmat(std::span<const T>, const BasicMatrix<T>&);                               \
    template std::vector<T> matvec(const BasicMatrix<T>&, std::span<const T>);                               \
    template double dot(std::span<const T>, std::span<const T>);                                             \
    template BasicMatrix<T> softmax_rows(const BasicMatrix<T>&, double);                                     \
    template std::vector<T> layer_norm(std::span<const T>, std::span<const T>, std::span<const T>, double);  \
    template std::vector<T> layer_norm(std::span<const T>, double);                                          \
    template double l2_norm(std::span<const T>);                                                             \
    template double cosine(std::span<const T>, std::span<const T>, bool*);

TRAMS_INSTANTIATE_NUMERICS(float)
TRAMS_INSTANTIATE_NUMERICS(double)

#undef TRAMS_INSTANTIATE_NUMERICS

}  // namespace trams
