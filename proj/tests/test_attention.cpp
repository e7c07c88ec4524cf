// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "trams/attention.hpp"

namespace trams {
namespace {

template <typename T>
AttentionParams<T> random_params(std::size_t d, std::size_t dh, Rng& rng, double scale = 1.0) {
    AttentionParams<T> p = AttentionParams<T>::zeros(d, dh);
    for (auto* m : {&p.w_q, &p.w_k_content, &p.w_k_pos, &p.w_v, &p.u_bias, &p.v_bias})
        rng.fill_normal(*m, scale / std::sqrt(static_cast<double>(d)));
    return p;
}

template <typename T>
BasicMatrix<T> random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    BasicMatrix<T> m(r, c);
    rng.fill_normal(m, 1.0);
    return m;
}

double row_dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

TEST(ProjectQkv, IdentityQueryAndEmptyMemory) {
    Rng rng(1);
    const std::size_t d = 4;
    AttentionParams<double> p = random_params<double>(d, d, rng);
    p.w_q = MatrixD::identity(d);
    const MatrixD h = random_matrix<double>(3, d, rng);
    const auto qkv = project_qkv(h, MatrixD(0, d), p);
    EXPECT_EQ(qkv.q, h);
    EXPECT_EQ(qkv.k.rows(), 3u);
    EXPECT_EQ(qkv.v.rows(), 3u);
}

TEST(ProjectQkv, KeyRowsMatchPerRowProducts) {
    Rng rng(2);
    const std::size_t d = 8, dh = 4;
    const auto p = random_params<float>(d, dh, rng);
    const Matrix h = random_matrix<float>(3, d, rng);
    const Matrix mem = random_matrix<float>(5, d, rng);
    const auto qkv = project_qkv(h, mem, p);
    for (std::size_t j = 0; j < 8; ++j) {
        const auto x = j < 5 ? mem.row(j) : h.row(j - 5);
        for (std::size_t c = 0; c < dh; ++c) {
            double want = 0.0;
            for (std::size_t t = 0; t < d; ++t) want += static_cast<double>(x[t]) * p.w_k_content(t, c);
            EXPECT_NEAR(qkv.k(j, c), want, 1e-6);
        }
    }
}

TEST(ProjectQkv, WidthMismatchRejected) {
    Rng rng(3);
    const auto p = random_params<float>(4, 2, rng);
    EXPECT_THROW(project_qkv(Matrix(2, 5), Matrix(0, 4), p), UsageError);
    EXPECT_THROW(project_qkv(Matrix(2, 4), Matrix(1, 3), p), UsageError);
}

TEST(AttendStandard, HandExpandedTwoMemoryRows) {
    AttentionParams<double> p = AttentionParams<double>::zeros(2, 2);
    p.w_q = MatrixD::identity(2);
    p.w_k_content = MatrixD::identity(2);
    p.w_v = MatrixD::from_rows({{1, 2}, {3, 4}});
    const MatrixD h = MatrixD::from_rows({{1, 0}});
    const MatrixD mem = MatrixD::from_rows({{1, 0}, {0, 1}});
    const auto out = attend_standard(h, mem, p);
    // logits (1, 0, 1) / √2; values (1,2), (3,4), (1,2).
    const double e = std::exp(1.0 / std::sqrt(2.0));
    const double z = 2.0 * e + 1.0;
    EXPECT_NEAR(out.probs(0, 0), e / z, 1e-12);
    EXPECT_NEAR(out.probs(0, 1), 1.0 / z, 1e-12);
    EXPECT_NEAR(out.probs(0, 2), e / z, 1e-12);
    EXPECT_NEAR(out.output(0, 0), (2.0 * e + 3.0) / z, 1e-12);
    EXPECT_NEAR(out.output(0, 1), (4.0 * e + 4.0) / z, 1e-12);
}

TEST(AttendStandard, SingleMemoryTokenValueRow) {
    Rng rng(4);
    const auto p = random_params<double>(4, 2, rng);
    const MatrixD mem = random_matrix<double>(1, 4, rng);
    const auto out = attend_standard(mem, mem, p);
    const auto v = matmul(mem, p.w_v);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(out.output(0, c), v(0, c), 1e-12);
}

TEST(AttendStandard, IdenticalKeysGiveUniformVisibleMass) {
    Rng rng(5);
    const auto p = random_params<double>(4, 4, rng);
    const MatrixD row = random_matrix<double>(1, 4, rng);
    MatrixD h(3, 4), mem(2, 4);
    for (std::size_t i = 0; i < 3; ++i) std::copy(row.row(0).begin(), row.row(0).end(), h.row(i).begin());
    for (std::size_t i = 0; i < 2; ++i) std::copy(row.row(0).begin(), row.row(0).end(), mem.row(i).begin());
    const auto out = attend_standard(h, mem, p);
    for (std::size_t i = 0; i < 3; ++i) {
        const double visible = 2.0 + static_cast<double>(i) + 1.0;
        for (std::size_t j = 0; j < 5; ++j) {
            const bool masked = j >= 2 && j - 2 > i;
            EXPECT_NEAR(out.probs(i, j), masked ? 0.0 : 1.0 / visible, 1e-12);
        }
    }
}

TEST(AttendStandard, FutureColumnsExactlyZeroAndRowsNormalized) {
    Rng rng(6);
    const auto p = random_params<float>(16, 4, rng, 4.0);
    const Matrix h = random_matrix<float>(6, 16, rng);
    const Matrix mem = random_matrix<float>(3, 16, rng);
    const auto out = attend_standard(h, mem, p);
    for (std::size_t i = 0; i < 6; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 9; ++j) {
            if (j >= 3 && j - 3 > i) EXPECT_EQ(out.probs(i, j), 0.0f);
            sum += out.probs(i, j);
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);
    }
}

TEST(Reformulation, IdentityWeightsAndZeroMemory) {
    Rng rng(7);
    AttentionParams<double> p = random_params<double>(4, 4, rng);
    p.w_q = MatrixD::identity(4);
    p.w_k_content = MatrixD::identity(4);
    const MatrixD mem = random_matrix<double>(3, 4, rng);
    EXPECT_EQ(reformulate_keys(mem, p), mem);
    const MatrixD zero(3, 4);
    const MatrixD reformulated = reformulate_keys(zero, random_params<double>(4, 2, rng));
    for (double v : reformulated.values()) EXPECT_EQ(v, 0.0);
}

TEST(Reformulation, BothAssociationOrdersAgree) {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t d = std::size_t{8} << rng.uniform_index(4);
        const std::size_t heads = std::size_t{1} << rng.uniform_index(3);
        const auto p = random_params<float>(d, d / heads, rng);
        const Matrix h = random_matrix<float>(1 + rng.uniform_index(32), d, rng);
        const Matrix mem = random_matrix<float>(1 + rng.uniform_index(64), d, rng);
        const Matrix standard = matmul_nt(matmul(h, p.w_q), matmul(mem, p.w_k_content));
        const Matrix reform = matmul_nt(h, reformulate_keys(mem, p));
        double max_logit = 0.0, max_diff = 0.0;
        for (std::size_t i = 0; i < standard.size(); ++i) {
            max_logit = std::max(max_logit, std::abs(static_cast<double>(standard.data()[i])));
            max_diff = std::max(max_diff, std::abs(static_cast<double>(standard.data()[i] - reform.data()[i])));
        }
        EXPECT_LT(max_diff, 1e-5 * (1.0 + max_logit));
    }
}

TEST(RelPosTableTest, SinusoidLayout) {
    const auto t = RelPosTable<double>::sinusoidal(5, 6);
    ASSERT_EQ(t.embeddings.rows(), 5u);
    for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_EQ(t.embeddings(0, c), 0.0);
        EXPECT_EQ(t.embeddings(0, 3 + c), 1.0);
    }
    const double freq1 = 1.0 / std::pow(10000.0, 2.0 / 6.0);
    EXPECT_NEAR(t.embeddings(4, 1), std::sin(4.0 * freq1), 1e-12);
    EXPECT_NEAR(t.embeddings(4, 4), std::cos(4.0 * freq1), 1e-12);
}

struct RelPosCase {
    MatrixD h, mem;
    AttentionParams<double> params;
    RelPosTable<double> table;
    std::vector<std::int64_t> mem_pos;
    std::int64_t start = 0;
};

RelPosCase make_case(Rng& rng, std::size_t n, std::size_t m, std::size_t d, std::size_t dh, std::int64_t start) {
    RelPosCase c;
    c.h = random_matrix<double>(n, d, rng);
    c.mem = random_matrix<double>(m, d, rng);
    c.params = random_params<double>(d, dh, rng);
    c.start = start;
    // Sparse, increasing memory positions before the segment.
    std::int64_t p = start;
    c.mem_pos.resize(m);
    for (std::size_t j = m; j-- > 0;) {
        p -= 1 + static_cast<std::int64_t>(rng.uniform_index(3));
        c.mem_pos[j] = p;
    }
    c.table = RelPosTable<double>::sinusoidal(static_cast<std::size_t>(start - p) + n, d);
    return c;
}

TEST(RelPosLogits, MatchesFourTermOracle) {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const RelPosCase c = make_case(rng, 4, 5, 8, 4, 40);
        const MatrixD got = relpos_logits(c.h, c.mem, c.params, c.table, KeyPositions{c.mem_pos, c.start});
        const MatrixD wq = c.params.w_q, we = c.params.w_k_content, wr = c.params.w_k_pos;
        for (std::size_t i = 0; i < 4; ++i) {
            const std::vector<double> q = vecmat<double>(c.h.row(i), wq);
            for (std::size_t j = 0; j < 9; ++j) {
                const bool is_mem = j < 5;
                if (!is_mem && j - 5 > i) {
                    EXPECT_EQ(got(i, j), kMaskedLogit);
                    continue;
                }
                const std::int64_t pos_j = is_mem ? c.mem_pos[j] : c.start + static_cast<std::int64_t>(j - 5);
                const std::int64_t dist = c.start + static_cast<std::int64_t>(i) - pos_j;
                const auto x = is_mem ? c.mem.row(j) : c.h.row(j - 5);
                const std::vector<double> k = vecmat<double>(x, we);
                const std::vector<double> r = vecmat<double>(c.table.embeddings.row(static_cast<std::size_t>(dist)), wr);
                const double term_a = row_dot(q, k);
                const double term_b = row_dot(q, r);
                const double term_c = row_dot(c.params.u_bias.row(0), k);
                const double term_d = row_dot(c.params.v_bias.row(0), r);
                EXPECT_NEAR(got(i, j), term_a + term_b + term_c + term_d, 1e-6);
            }
        }
    }
}

TEST(RelPosLogits, ReducesToContentLogitsWithoutPositionTerms) {
    Rng rng(10);
    RelPosCase c = make_case(rng, 3, 4, 8, 8, 10);
    c.params.u_bias.fill(0.0);
    c.params.v_bias.fill(0.0);
    c.params.w_k_pos.fill(0.0);
    const MatrixD got = relpos_logits(c.h, c.mem, c.params, c.table, KeyPositions{c.mem_pos, c.start});
    const MatrixD content = content_logits(c.h, c.mem, c.params);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4 + i + 1; ++j) EXPECT_NEAR(got(i, j), content(i, j), 1e-12);
}

TEST(RelPosLogits, BiasTermsDependOnDistanceOnly) {
    Rng rng(11);
    RelPosCase c = make_case(rng, 5, 0, 8, 4, 0);
    c.params.w_q.fill(0.0);
    c.params.w_k_content.fill(0.0);
    const MatrixD got = relpos_logits(c.h, c.mem, c.params, c.table, KeyPositions{{}, 0});
    for (std::size_t i = 1; i < 5; ++i)
        for (std::size_t j = 0; j <= i; ++j) EXPECT_NEAR(got(i, j), got(i - j, 0), 1e-12);
}

TEST(RelPosLogits, TranslationInvariant) {
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const RelPosCase c = make_case(rng, 4, 6, 8, 4, 30);
        const std::int64_t shift = 1000 + static_cast<std::int64_t>(rng.uniform_index(5000));
        std::vector<std::int64_t> moved = c.mem_pos;
        for (auto& p : moved) p += shift;
        const MatrixD a = relpos_logits(c.h, c.mem, c.params, c.table, KeyPositions{c.mem_pos, c.start});
        const MatrixD b = relpos_logits(c.h, c.mem, c.params, c.table, KeyPositions{moved, c.start + shift});
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-9);
    }
}

TEST(RelPosLogits, DistanceOutsideTableRejected) {
    Rng rng(13);
    const RelPosCase c = make_case(rng, 2, 3, 8, 4, 20);
    const auto small = RelPosTable<double>::sinusoidal(2, 8);
    EXPECT_THROW(relpos_logits(c.h, c.mem, c.params, small, KeyPositions{c.mem_pos, c.start}), UsageError);
    std::vector<std::int64_t> late = {25};
    EXPECT_THROW(relpos_logits(c.h, MatrixD(1, 8), c.params, c.table, KeyPositions{late, 20}), UsageError);
}

TEST(RelPosAttention, BackwardMatchesFiniteDifferences) {
    Rng rng(14);
    const RelPosCase c = make_case(rng, 3, 4, 6, 3, 12);
    const MatrixD upstream = random_matrix<double>(3, 3, rng);
    const KeyPositions pos{c.mem_pos, c.start};

    auto loss = [&](const MatrixD& h, const AttentionParams<double>& p) {
        const MatrixD r = matmul(c.table.embeddings, p.w_k_pos);
        const auto out = relpos_attention(h, c.mem, p, r, pos);
        double s = 0.0;
        for (std::size_t i = 0; i < out.output.size(); ++i) s += out.output.data()[i] * upstream.data()[i];
        return s;
    };

    RelPosHeadTape<double> tape;
    const MatrixD r = matmul(c.table.embeddings, c.params.w_k_pos);
    (void)relpos_attention(c.h, c.mem, c.params, r, pos, &tape);
    AttentionParams<double> grad = AttentionParams<double>::zeros(6, 3);
    const MatrixD dh = relpos_attention_backward(tape, c.params, c.table, upstream, grad);

    const double step = 1e-6;
    auto check = [&](double analytic, auto&& perturb) {
        const double plus = perturb(step);
        const double minus = perturb(-step);
        const double numeric = (plus - minus) / (2 * step);
        EXPECT_NEAR(analytic, numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
    };
    for (std::size_t i = 0; i < c.h.size(); ++i) {
        check(dh.data()[i], [&](double eps) {
            MatrixD h = c.h;
            h.data()[i] += eps;
            return loss(h, c.params);
        });
    }
    auto members = [](AttentionParams<double>& p) {
        return std::vector<MatrixD*>{&p.w_q, &p.w_k_content, &p.w_k_pos, &p.w_v, &p.u_bias, &p.v_bias};
    };
    auto grads = members(grad);
    for (std::size_t mi = 0; mi < grads.size(); ++mi) {
        for (std::size_t i = 0; i < grads[mi]->size(); ++i) {
            check(grads[mi]->data()[i], [&](double eps) {
                AttentionParams<double> p = c.params;
                members(p)[mi]->data()[i] += eps;
                return loss(c.h, p);
            });
        }
    }
}

TEST(DecomposeLogit, UnitVectors) {
    std::vector<double> e1 = {1, 0, 0, 0};
    std::vector<double> e2 = {0, 1, 0, 0};
    const auto same = decompose_logit<double>(e1, e1);
    EXPECT_DOUBLE_EQ(same.norm_q, 1.0);
    EXPECT_DOUBLE_EQ(same.norm_k, 1.0);
    EXPECT_DOUBLE_EQ(same.cos_qk, 1.0);
    EXPECT_DOUBLE_EQ(same.reconstructed(), same.dot);
    EXPECT_DOUBLE_EQ(same.sqrt_d_approximation, 2.0);
    const auto orth = decompose_logit<double>(e1, e2);
    EXPECT_EQ(orth.cos_qk, 0.0);
    EXPECT_EQ(orth.reconstructed(), 0.0);
}

TEST(DecomposeLogit, ReconstructionAndZeroVector) {
    Rng rng(15);
    for (int trial = 0; trial < 200; ++trial) {
        const Matrix q = random_matrix<float>(1, 16, rng);
        const Matrix k = random_matrix<float>(1, 16, rng);
        const auto dec = decompose_logit<float>(q.row(0), k.row(0));
        EXPECT_LE(std::abs(dec.reconstructed() - dec.dot), 1e-6 * (1.0 + std::abs(dec.dot)));
        EXPECT_FALSE(dec.degenerate);
    }
    std::vector<float> zero(4, 0.0f);
    std::vector<float> v = {1, 2, 3, 4};
    const auto dec = decompose_logit<float>(zero, v);
    EXPECT_TRUE(dec.degenerate);
    EXPECT_EQ(dec.cos_qk, 0.0);
}

}  // namespace
}  // namespace trams
