// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "trams/diagnostics.hpp"

namespace trams {
namespace {

ModelConfig tiny_config(std::size_t layers = 2, std::size_t heads = 2) {
    ModelConfig c;
    c.num_layers = layers;
    c.num_heads = heads;
    c.d_model = 8;
    c.d_ffn = 16;
    c.vocab_size = 9;
    c.segment_len = 4;
    c.pool_capacity = 8;
    c.selected_m = 4;
    c.dropout = 0.0;
    return c;
}

TransformerXL<float> tiny_model(const ModelConfig& c, std::uint64_t seed = 3) {
    Rng rng(seed);
    return TransformerXL<float>(c, ModelWeights<float>::initialized(c, rng));
}

std::vector<std::int32_t> stream(std::size_t count, std::size_t vocab, std::uint64_t seed = 11) {
    Rng rng(seed);
    std::vector<std::int32_t> t(count);
    for (auto& v : t) v = static_cast<std::int32_t>(rng.uniform_index(vocab));
    return t;
}

TEST(BucketSpearman, IdenticalRankingIsOneEverywhere) {
    Rng rng(1);
    std::vector<double> truth(200);
    for (auto& v : truth) v = rng.normal();
    for (double b : kDefaultBuckets) {
        const auto r = bucket_spearman(truth, truth, b);
        EXPECT_FALSE(r.skipped) << b;
        EXPECT_DOUBLE_EQ(r.rho, 1.0) << b;
        EXPECT_EQ(r.pairs, static_cast<std::size_t>(std::ceil(b * 2.0)));
    }
}

TEST(BucketSpearman, ConstantCandidateRaisesZeroVariance) {
    const std::vector<double> truth = {5, 4, 3, 2, 1, 0};
    const std::vector<double> flat(6, 7.0);
    const auto r = bucket_spearman(truth, flat, 100);
    EXPECT_TRUE(r.zero_variance);
    EXPECT_EQ(r.rho, 0.0);
}

TEST(BucketSpearman, RestrictsToTopByTruth) {
    // Top half by truth is indices {0, 2, 4}; the candidate reverses them.
    const std::vector<double> truth = {10, 1, 9, 2, 8, 3};
    const std::vector<double> cand = {1, 100, 2, 100, 3, 100};
    const auto half = bucket_spearman(truth, cand, 50);
    EXPECT_EQ(half.pairs, 3u);
    EXPECT_DOUBLE_EQ(half.rho, -1.0);
}

TEST(CorrelationExperiment, TinyHeadsSkipTheOnePercentBucket) {
    const auto model = tiny_model(tiny_config());
    ProbeOptions p;
    p.max_segments = 2;
    const CorrelationTable t = ranking_correlation_experiment(model, stream(100, 9), kDefaultBuckets, p);
    EXPECT_TRUE(t.bucket_skipped[0]);  // ceil(1% of 32) = 1 pair
    EXPECT_FALSE(t.bucket_skipped[1]);
}

TEST(BucketSpearman, SkipsBucketsWithFewerThanTwoPairs) {
    const std::vector<double> v = {1, 2, 3};
    EXPECT_TRUE(bucket_spearman(v, v, 1).skipped);
    EXPECT_THROW(bucket_spearman(v, v, 0), UsageError);
    EXPECT_THROW(bucket_spearman(v, {v.data(), 2}, 10), UsageError);
}

TEST(CorrelationExperiment, DotProductCandidateMatchesTruth) {
    ModelConfig c = tiny_config();
    c.segment_len = 8;
    c.pool_capacity = 32;  // 256 pairs per head, so the 1% bucket holds 3
    const auto model = tiny_model(c);
    const auto tokens = stream(400, 9);
    ProbeOptions p;
    p.max_segments = 5;
    const CorrelationTable t = ranking_correlation_experiment(model, tokens, kDefaultBuckets, p);
    ASSERT_EQ(t.metrics.size(), 3u);
    EXPECT_EQ(t.metrics[2], "dot_product");
    EXPECT_EQ(t.samples, 5u * 2 * 2);
    for (std::size_t b = 0; b < t.buckets.size(); ++b) {
        EXPECT_FALSE(t.bucket_skipped[b]);
        EXPECT_NEAR(t.rho[2][b], 1.0, 1e-12);
        EXPECT_EQ(t.zero_variance_samples[2][b], 0u);
        for (std::size_t m = 0; m < 3; ++m) {
            EXPECT_GE(t.rho[m][b], -1.0);
            EXPECT_LE(t.rho[m][b], 1.0);
        }
    }
}

TEST(ForEachHead, VisitsFullPoolSegments) {
    const ModelConfig c = tiny_config();
    const auto model = tiny_model(c);
    const auto tokens = stream(41, 9);  // 40 predictions = 10 segments; pool full from segment 2
    std::size_t calls = 0;
    const std::size_t segments = for_each_head(model, tokens, {}, [&](const HeadContext<float>& ctx) {
        EXPECT_EQ(ctx.memory.rows(), c.pool_capacity);
        ++calls;
    });
    EXPECT_EQ(segments, 8u);
    EXPECT_EQ(calls, 8u * 4);
    ProbeOptions partial;
    partial.min_pool_rows = 1;
    EXPECT_EQ(for_each_head(model, tokens, partial, [](const HeadContext<float>&) {}), 9u);
}

TEST(Histogram, CountsEverySample) {
    const std::vector<double> v = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    const Histogram h = make_histogram(v, 5);
    std::size_t total = 0;
    for (auto c : h.counts) total += c;
    EXPECT_EQ(total, v.size());
    EXPECT_EQ(h.counts.back(), 3u);  // 8, 9 and the maximum 10
    EXPECT_THROW(make_histogram({}, 3), UsageError);
}

TEST(NormDistribution, QueryNormsAreRootDAndEmptyStreamsReject) {
    const ModelConfig c = tiny_config();
    const auto model = tiny_model(c);
    const auto tokens = stream(120, 9);
    const NormDistribution nd = norm_distribution(model, tokens, {}, 10);
    ASSERT_EQ(nd.layers.size(), c.num_layers);
    for (const auto& st : nd.layers) {
        EXPECT_NEAR(st.query.median, std::sqrt(8.0), 1e-3);
        EXPECT_EQ(st.key_norms.size(), st.query_norms.size() / c.segment_len * c.pool_capacity * c.num_heads);
    }
    EXPECT_LT(nd.query_dispersion, 1e-3);
    EXPECT_THROW(norm_distribution(model, stream(6, 9), {}, 10), UsageError);
}

double subset_max_mass(const std::vector<double>& column, std::size_t m) {
    double best = 0.0;
    const std::size_t n = column.size();
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcount(mask)) != m) continue;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (mask & (1u << j)) s += column[j];
        best = std::max(best, s);
    }
    return best;
}

TEST(Utilization, ArmsMatchIndependentRecomputation) {
    ModelConfig c = tiny_config(1, 1);
    c.pool_capacity = 6;
    c.selected_m = 2;
    const auto model = tiny_model(c);
    const auto tokens = stream(60, 9);
    UtilizationOptions uo;
    uo.probe.max_segments = 6;
    uo.bootstrap_resamples = 50;
    const UtilizationReport r = memory_utilization(model, tokens, uo);
    ASSERT_EQ(r.segments, 6u);

    std::vector<double> recency, oracle, full;
    for_each_head(model, tokens, uo.probe, [&](const HeadContext<float>& ctx) {
        const std::size_t n = ctx.queries.rows();
        std::vector<double> column(ctx.memory.rows(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < column.size(); ++j) column[j] += ctx.full_probs(i, j);
        recency.push_back((column[4] + column[5]) / static_cast<double>(n));
        oracle.push_back(subset_max_mass(column, 2) / static_cast<double>(n));
        double s = 0.0;
        for (double v : column) s += v;
        full.push_back(s / static_cast<double>(n));
    });
    ASSERT_EQ(recency.size(), 6u);
    for (std::size_t s = 0; s < 6; ++s) {
        EXPECT_NEAR(r.arm("recency").per_segment[s], recency[s], 1e-12);
        EXPECT_NEAR(r.arm("oracle").per_segment[s], oracle[s], 1e-12);
    }
    double mean_full = 0.0;
    for (double v : full) mean_full += v / 6.0;
    EXPECT_NEAR(r.full_pool_mass, mean_full, 1e-12);
    EXPECT_EQ(r.oracle_violations, 0u);
    EXPECT_THROW(r.arm("missing"), UsageError);
}

TEST(Utilization, OracleDominatesAndFullSelectionRecoversPool) {
    const ModelConfig c = tiny_config();
    const auto model = tiny_model(c);
    const auto tokens = stream(200, 9);
    UtilizationOptions uo;
    uo.bootstrap_resamples = 100;
    const UtilizationReport r = memory_utilization(model, tokens, uo);
    EXPECT_EQ(r.oracle_violations, 0u);
    for (const auto& a : r.arms) EXPECT_LE(a.mean, r.arm("oracle").mean + 1e-12) << a.name;
    EXPECT_LE(r.trams_minus_random.lo, r.trams_minus_random.estimate);
    EXPECT_GE(r.trams_minus_random.hi, r.trams_minus_random.estimate);

    uo.selected_m = c.pool_capacity;
    const UtilizationReport all = memory_utilization(model, tokens, uo);
    for (const auto& a : all.arms) EXPECT_NEAR(a.mean, all.full_pool_mass, 1e-12) << a.name;
    uo.selected_m = c.pool_capacity + 1;
    EXPECT_THROW(memory_utilization(model, tokens, uo), UsageError);
}

TEST(Bootstrap, ConstantAndDeterministic) {
    const std::vector<double> flat(20, 0.25);
    const Interval iv = bootstrap_mean_interval(flat, 200, 1);
    EXPECT_DOUBLE_EQ(iv.lo, 0.25);
    EXPECT_DOUBLE_EQ(iv.hi, 0.25);
    std::vector<double> v(50);
    Rng rng(4);
    for (auto& x : v) x = rng.normal();
    const Interval a = bootstrap_mean_interval(v, 500, 9);
    const Interval b = bootstrap_mean_interval(v, 500, 9);
    EXPECT_EQ(a.lo, b.lo);
    EXPECT_EQ(a.hi, b.hi);
    EXPECT_LT(a.lo, a.estimate);
    EXPECT_GT(a.hi, a.estimate);
    // 95% interval of a mean of 50 standard normals spans roughly ±1.96/√50.
    EXPECT_NEAR(a.hi - a.lo, 2 * 1.96 / std::sqrt(50.0), 0.25);
}

TEST(LayerNormStatistics, SelectionInputsAreNormalized) {
    const auto model = tiny_model(tiny_config());
    const LayerNormStats s = layer_norm_statistics(model, stream(120, 9), {});
    EXPECT_GT(s.samples, 0u);
    EXPECT_EQ(s.fraction(), 1.0);
    EXPECT_LT(s.max_abs_mean, 1e-6);
}

TEST(Decomposition, ReconstructionIsExact) {
    const auto model = tiny_model(tiny_config());
    const auto tokens = stream(120, 9);
    const DecompositionStats d = logit_decomposition_error(model, tokens, {});
    EXPECT_GT(d.pairs, 0u);
    EXPECT_LT(d.max_reconstruction_error, 1e-12);
    EXPECT_LT(d.relative_error.median, 1e-3);
    EXPECT_LT(trams_identity_error(model, tokens, {}), 1e-6);
}

TEST(Ablation, FullSelectionMatchesBaselineAndInvalidPointsSkip) {
    const ModelConfig c = tiny_config();
    const auto model = tiny_model(c);
    const auto tokens = stream(150, 9);
    AblationOptions ao;
    const AblationCurve curve = ablation_sweep(model, tokens, AblationParam::m, {8, 2, 9, 0, 2}, ao);
    ASSERT_EQ(curve.points.size(), 4u);  // 0, 2, 8, 9
    EXPECT_TRUE(curve.points[0].skipped);
    EXPECT_FALSE(curve.points[1].skipped);
    const AblationPoint& full = curve.points[2];
    ASSERT_FALSE(full.skipped);
    EXPECT_EQ(full.trams.total_nll_nats, full.baseline.total_nll_nats);
    EXPECT_TRUE(curve.points[3].skipped);
    EXPECT_EQ(curve.points[3].reason, "m exceeds M");

    const AblationCurve layers = ablation_sweep(model, tokens, AblationParam::layer, {0, 1, 2}, ao);
    EXPECT_FALSE(layers.points[1].skipped);
    EXPECT_TRUE(layers.points[2].skipped);
    const AblationCurve big_m = ablation_sweep(model, tokens, AblationParam::M, {4, 16}, ao);
    EXPECT_FALSE(big_m.points[1].skipped);
    EXPECT_EQ(big_m.points[1].trams.pool_capacity, 16u);
}

TEST(Ablation, ParameterNames) {
    for (auto p : {AblationParam::M, AblationParam::m, AblationParam::n, AblationParam::layer}) {
        EXPECT_EQ(parse_ablation_param(to_string(p)), p);
    }
    EXPECT_THROW(parse_ablation_param("k"), UsageError);
}

TEST(CostProfile, ReportsEveryStrategyAndScaling) {
    const auto model = tiny_model(tiny_config());
    CostOptions co;
    co.runs = 2;  // raised to the minimum of 5
    co.scaling_pool_sizes = {64, 128};
    const CostProfile p = cost_profile(model, stream(60, 9), co);
    ASSERT_EQ(p.rows.size(), 3u);
    for (const auto& r : p.rows) {
        EXPECT_EQ(r.runs, 5u);
        EXPECT_LE(r.min_wall_s, r.median_wall_s);
        EXPECT_LE(r.median_wall_s, r.max_wall_s);
    }
    ASSERT_EQ(p.scaling.size(), 2u);
    EXPECT_TRUE(std::isfinite(p.scaling_exponent));
    EXPECT_GT(p.max_doubling_ratio, 0.0);
}

}  // namespace
}  // namespace trams
