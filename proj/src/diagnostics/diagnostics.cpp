// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#include "trams/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>

namespace trams {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double mean_of(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
    return v.empty() ? 0.0 : describe(std::move(v)).median;
}

}  // namespace

std::size_t for_each_head(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                          const ProbeOptions& options, const HeadProbe<float>& probe) {
    if (tokens.size() < 2) throw UsageError("probe: token stream needs at least 2 tokens");
    const ModelConfig& cfg = model.config();
    const std::size_t n = options.segment_len ? options.segment_len : cfg.segment_len;
    const std::size_t capacity = options.pool_capacity ? options.pool_capacity : cfg.pool_capacity;
    const std::size_t required = options.min_pool_rows ? options.min_pool_rows : capacity;

    std::optional<TransformerXL<float>> resized;
    const TransformerXL<float>* engine = &model;
    if (n + capacity > model.relpos_table().max_distance()) {
        resized.emplace(model);
        resized->refresh_caches(n + capacity);
        engine = &*resized;
    }

    MemoryPool<float> pool = engine->make_pool(capacity);
    Rng rng(options.seed);
    SelectionPolicy policy;
    policy.strategy = Strategy::none;
    ForwardOptions<float> fwd;
    bool active = false;
    fwd.probe = [&](const HeadContext<float>& ctx) {
        if (active) probe(ctx);
    };

    std::size_t probed = 0;
    const std::size_t predictions = tokens.size() - 1;
    for (std::size_t s = 0; s < predictions; s += n) {
        const std::size_t len = std::min(n, predictions - s);
        active = pool.rows() >= std::max<std::size_t>(required, 1) && len == n;
        if (active && options.max_segments && probed >= options.max_segments) break;
        (void)engine->forward_segment(tokens.subspan(s, len), static_cast<std::int64_t>(s), pool, policy, rng, fwd);
        if (active) ++probed;
    }
    return probed;
}

// ---- ranking-metric correlation ----------------------------------------------------

BucketCorrelation bucket_spearman(std::span<const double> truth, std::span<const double> candidate,
                                  double percent) {
    if (truth.size() != candidate.size()) throw UsageError("bucket_spearman: length mismatch");
    if (!(percent > 0.0 && percent <= 100.0)) throw UsageError("bucket_spearman: percent must be in (0, 100]");
    BucketCorrelation out;
    const std::size_t n = truth.size();
    out.pairs = std::min(n, static_cast<std::size_t>(std::ceil(percent / 100.0 * static_cast<double>(n) - 1e-9)));
    if (out.pairs < 2) {
        out.skipped = true;
        return out;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return truth[a] > truth[b]; });
    std::vector<double> t(out.pairs), c(out.pairs);
    for (std::size_t k = 0; k < out.pairs; ++k) {
        t[k] = truth[order[k]];
        c[k] = candidate[order[k]];
    }
    const SpearmanResult r = spearman_rank_correlation(t, c);
    out.rho = r.rho;
    out.zero_variance = r.zero_variance;
    return out;
}

CorrelationTable ranking_correlation_experiment(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                                                const std::vector<double>& buckets, const ProbeOptions& options) {
    if (buckets.empty()) throw UsageError("correlation: at least one bucket is required");
    CorrelationTable table;
    table.buckets = buckets;
    table.metrics = {"key_norm", "angle", "dot_product"};
    const std::size_t nm = table.metrics.size();
    const std::size_t nb = buckets.size();
    std::vector<std::vector<double>> sums(nm, std::vector<double>(nb, 0.0));
    table.used_samples.assign(nm, std::vector<std::size_t>(nb, 0));
    table.zero_variance_samples.assign(nm, std::vector<std::size_t>(nb, 0));

    std::vector<double> truth, key_norm, angle;
    for_each_head(model, tokens, options, [&](const HeadContext<float>& ctx) {
        const std::size_t rows = ctx.memory.rows();
        const std::size_t n = ctx.queries.rows();
        const Matrix kprime = reformulate_keys(ctx.memory, ctx.params);
        std::vector<double> knorm(rows);
        for (std::size_t j = 0; j < rows; ++j) knorm[j] = l2_norm<float>(kprime.row(j));
        truth.resize(n * rows);
        key_norm.resize(n * rows);
        angle.resize(n * rows);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < rows; ++j) {
                const std::size_t p = i * rows + j;
                truth[p] = ctx.full_logits(i, j);
                key_norm[p] = knorm[j];
                angle[p] = cosine<float>(ctx.queries.row(i), kprime.row(j));
            }
        }
        const std::span<const double> cands[] = {key_norm, angle, truth};
        for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t m = 0; m < nm; ++m) {
                const BucketCorrelation bc = bucket_spearman(truth, cands[m], buckets[b]);
                if (bc.skipped) continue;
                sums[m][b] += bc.rho;
                ++table.used_samples[m][b];
                if (bc.zero_variance) ++table.zero_variance_samples[m][b];
            }
        }
        ++table.samples;
    });

    table.rho.assign(nm, std::vector<double>(nb, 0.0));
    table.bucket_skipped.assign(nb, true);
    for (std::size_t m = 0; m < nm; ++m) {
        for (std::size_t b = 0; b < nb; ++b) {
            if (table.used_samples[m][b] == 0) continue;
            table.rho[m][b] = sums[m][b] / static_cast<double>(table.used_samples[m][b]);
            table.bucket_skipped[b] = false;
        }
    }
    table.sampling_plan = "all layers and heads; every full-pool segment" +
                          std::string(options.max_segments ? " (first " + std::to_string(options.max_segments) + ")"
                                                           : "") +
                          "; all (query, memory) pairs per head; per-sample Spearman averaged";
    return table;
}

// ---- norm distributions ------------------------------------------------------------

Histogram make_histogram(std::span<const double> values, std::size_t bins) {
    if (values.empty()) throw UsageError("histogram: empty sample");
    if (bins == 0) throw UsageError("histogram: bins must be >= 1");
    Histogram h;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    h.lo = *lo;
    h.hi = *hi;
    h.counts.assign(bins, 0);
    const double width = (h.hi - h.lo) / static_cast<double>(bins);
    for (double v : values) {
        std::size_t b = width > 0.0 ? static_cast<std::size_t>((v - h.lo) / width) : 0;
        ++h.counts[std::min(b, bins - 1)];
    }
    return h;
}

NormDistribution norm_distribution(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                                   const ProbeOptions& options, std::size_t bins) {
    const std::size_t layers = model.config().num_layers;
    NormDistribution out;
    out.layers.resize(layers);
    for_each_head(model, tokens, options, [&](const HeadContext<float>& ctx) {
        NormLayerStats& st = out.layers[ctx.layer];
        if (ctx.head == 0) {
            for (std::size_t i = 0; i < ctx.queries.rows(); ++i) st.query_norms.push_back(l2_norm<float>(ctx.queries.row(i)));
        }
        const Matrix kprime = reformulate_keys(ctx.memory, ctx.params);
        for (std::size_t j = 0; j < kprime.rows(); ++j) st.key_norms.push_back(l2_norm<float>(kprime.row(j)));
    });
    std::vector<double> all_q, all_k;
    for (std::size_t l = 0; l < layers; ++l) {
        NormLayerStats& st = out.layers[l];
        st.layer = l;
        if (st.query_norms.empty() || st.key_norms.empty()) {
            throw UsageError("norm_distribution: empty sample (stream too short to fill the memory pool)");
        }
        st.query = describe(st.query_norms);
        st.key = describe(st.key_norms);
        st.query_hist = make_histogram(st.query_norms, bins);
        st.key_hist = make_histogram(st.key_norms, bins);
        all_q.insert(all_q.end(), st.query_norms.begin(), st.query_norms.end());
        all_k.insert(all_k.end(), st.key_norms.begin(), st.key_norms.end());
    }
    out.query_dispersion = describe(all_q).relative_iqr();
    out.key_dispersion = describe(all_k).relative_iqr();
    return out;
}

// ---- memory utilization ------------------------------------------------------------

const UtilizationArm& UtilizationReport::arm(std::string_view name) const {
    for (const auto& a : arms)
        if (a.name == name) return a;
    throw UsageError("utilization: no arm named " + std::string(name));
}

Interval bootstrap_mean_interval(std::span<const double> values, std::size_t resamples, std::uint64_t seed) {
    Interval iv;
    if (values.empty()) return iv;
    iv.estimate = mean_of(values);
    if (resamples == 0) {
        iv.lo = iv.hi = iv.estimate;
        return iv;
    }
    Rng rng(seed);
    std::vector<double> means(resamples);
    for (auto& m : means) {
        double s = 0.0;
        for (std::size_t k = 0; k < values.size(); ++k) s += values[rng.uniform_index(values.size())];
        m = s / static_cast<double>(values.size());
    }
    std::sort(means.begin(), means.end());
    auto at = [&](double q) {
        const double pos = q * static_cast<double>(resamples - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, resamples - 1);
        return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
    };
    iv.lo = at(0.025);
    iv.hi = at(0.975);
    return iv;
}

UtilizationReport memory_utilization(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                                     const UtilizationOptions& options) {
    const ModelConfig& cfg = model.config();
    UtilizationReport report;
    report.pool_capacity = options.probe.pool_capacity ? options.probe.pool_capacity : cfg.pool_capacity;
    report.selected_m = options.selected_m ? options.selected_m : cfg.selected_m;
    if (report.selected_m > report.pool_capacity) {
        throw UsageError("utilization: m (" + std::to_string(report.selected_m) + ") exceeds M (" +
                         std::to_string(report.pool_capacity) + ")");
    }
    report.arms = {
        {"trams", Strategy::trams, RankDirection::descending, 0.0, {}},
        {"trams_ascending", Strategy::trams, RankDirection::ascending, 0.0, {}},
        {"trams_abs_ascending", Strategy::trams, RankDirection::abs_ascending, 0.0, {}},
        {"oracle", Strategy::oracle, RankDirection::descending, 0.0, {}},
        {"random", Strategy::random, RankDirection::descending, 0.0, {}},
        {"recency", Strategy::recency, RankDirection::descending, 0.0, {}},
    };
    const std::size_t na = report.arms.size();
    const std::size_t oracle_arm = 3;
    Rng rng = Rng(options.probe.seed).split(17);

    std::vector<double> segment_sum(na, 0.0);
    double segment_full = 0.0;
    std::size_t heads_in_segment = 0;
    std::vector<double> full_per_segment;
    auto flush = [&]() {
        if (heads_in_segment == 0) return;
        for (std::size_t a = 0; a < na; ++a) {
            report.arms[a].per_segment.push_back(segment_sum[a] / static_cast<double>(heads_in_segment));
            segment_sum[a] = 0.0;
        }
        full_per_segment.push_back(segment_full / static_cast<double>(heads_in_segment));
        segment_full = 0.0;
        heads_in_segment = 0;
    };

    const std::size_t per_segment_heads = cfg.num_layers * cfg.num_heads;
    std::vector<double> arm_mass(na);
    report.segments = for_each_head(model, tokens, options.probe, [&](const HeadContext<float>& ctx) {
        const std::size_t rows = ctx.memory.rows();
        const double n = static_cast<double>(ctx.queries.rows());
        const std::vector<double> column = memory_column_mass(ctx.full_probs, rows);
        const std::vector<double> scores = trams_selection_scores(ctx.memory, ctx.params, options.include_u_bias);
        for (std::size_t a = 0; a < na; ++a) {
            const UtilizationArm& arm = report.arms[a];
            SelectionResult sel;
            switch (arm.strategy) {
                case Strategy::trams: sel = top_m_select(scores, report.selected_m, arm.direction); break;
                case Strategy::oracle: sel = oracle_select_from_probs(ctx.full_probs, rows, report.selected_m); break;
                default: sel = baseline_select(arm.strategy, rows, report.selected_m, rng); break;
            }
            double mass = 0.0;
            for (std::size_t j : sel.chosen_indices) mass += column[j];
            arm_mass[a] = mass / n;
            segment_sum[a] += arm_mass[a];
        }
        for (std::size_t a = 0; a < na; ++a) {
            const double deficit = arm_mass[a] - arm_mass[oracle_arm];
            if (deficit > 1e-9) ++report.oracle_violations;
            report.max_oracle_deficit = std::max(report.max_oracle_deficit, deficit);
        }
        double full = 0.0;
        for (double c : column) full += c;
        segment_full += full / n;
        ++report.instances;
        if (++heads_in_segment == per_segment_heads) flush();
    });
    flush();

    for (auto& arm : report.arms) arm.mean = mean_of(arm.per_segment);
    report.full_pool_mass = mean_of(full_per_segment);
    const auto& trams = report.arm("trams");
    const auto& random = report.arm("random");
    const auto& recency = report.arm("recency");
    if (recency.mean > 0.0) report.trams_vs_recency_relative = (trams.mean - recency.mean) / recency.mean;
    std::vector<double> d_random(trams.per_segment.size()), d_recency(trams.per_segment.size());
    for (std::size_t s = 0; s < trams.per_segment.size(); ++s) {
        d_random[s] = trams.per_segment[s] - random.per_segment[s];
        d_recency[s] = trams.per_segment[s] - recency.per_segment[s];
    }
    report.trams_minus_random = bootstrap_mean_interval(d_random, options.bootstrap_resamples, options.probe.seed + 1);
    report.trams_minus_recency =
        bootstrap_mean_interval(d_recency, options.bootstrap_resamples, options.probe.seed + 2);
    return report;
}

// ---- layer-norm statistics and logit decomposition --------------------------------

LayerNormStats layer_norm_statistics(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                                     const ProbeOptions& options) {
    LayerNormStats st;
    const double root_d = std::sqrt(static_cast<double>(model.config().d_model));
    std::vector<double> ratios;
    auto visit = [&](std::span<const float> row) {
        double mean = 0.0;
        for (float v : row) mean += v;
        mean /= static_cast<double>(row.size());
        const double ratio = l2_norm<float>(row) / root_d;
        ++st.samples;
        if (std::abs(mean) < 0.05 && ratio >= 0.8 && ratio <= 1.2) ++st.within_bounds;
        st.max_abs_mean = std::max(st.max_abs_mean, std::abs(mean));
        ratios.push_back(ratio);
    };
    for_each_head(model, tokens, options, [&](const HeadContext<float>& ctx) {
        if (ctx.head != 0) return;
        for (std::size_t i = 0; i < ctx.queries.rows(); ++i) visit(ctx.queries.row(i));
        for (std::size_t j = 0; j < ctx.memory.rows(); ++j) visit(ctx.memory.row(j));
    });
    if (ratios.empty()) throw UsageError("layer_norm_statistics: empty sample");
    st.norm_ratio = describe(std::move(ratios));
    return st;
}

DecompositionStats logit_decomposition_error(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                                             const ProbeOptions& options) {
    DecompositionStats st;
    std::vector<double> errors;
    for_each_head(model, tokens, options, [&](const HeadContext<float>& ctx) {
        const Matrix kprime = reformulate_keys(ctx.memory, ctx.params);
        for (std::size_t i = 0; i < ctx.queries.rows(); ++i) {
            for (std::size_t j = 0; j < kprime.rows(); ++j) {
                const LogitDecomposition dec = decompose_logit<float>(ctx.queries.row(i), kprime.row(j));
                errors.push_back(std::abs(dec.dot - dec.sqrt_d_approximation) / (1.0 + std::abs(dec.dot)));
                st.max_reconstruction_error =
                    std::max(st.max_reconstruction_error, std::abs(dec.reconstructed() - dec.dot) / (1.0 + std::abs(dec.dot)));
            }
        }
    });
    if (errors.empty()) throw UsageError("logit_decomposition_error: empty sample");
    st.pairs = errors.size();
    st.relative_error = describe(std::move(errors));
    return st;
}

double trams_identity_error(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                            const ProbeOptions& options) {
    double worst = 0.0;
    for_each_head(model, tokens, options, [&](const HeadContext<float>& ctx) {
        const Matrix kprime = reformulate_keys(ctx.memory, ctx.params);
        const ScoreVector s = trams_scores(kprime);
        const double root_d = std::sqrt(static_cast<double>(kprime.cols()));
        for (std::size_t j = 0; j < kprime.rows(); ++j) {
            double sum = 0.0;
            for (float v : kprime.row(j)) sum += static_cast<double>(v);
            worst = std::max(worst, std::abs(s.values[j] - sum / root_d));
        }
    });
    return worst;
}

// ---- ablations ---------------------------------------------------------------------

std::string_view to_string(AblationParam p) noexcept {
    switch (p) {
        case AblationParam::M: return "M";
        case AblationParam::m: return "m";
        case AblationParam::n: return "n";
        case AblationParam::layer: return "layer";
    }
    return "?";
}

AblationParam parse_ablation_param(std::string_view name) {
    if (name == "M") return AblationParam::M;
    if (name == "m") return AblationParam::m;
    if (name == "n") return AblationParam::n;
    if (name == "layer") return AblationParam::layer;
    throw UsageError("unknown ablation parameter '" + std::string(name) + "' (expected M, m, n or layer)");
}

AblationCurve ablation_sweep(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                             AblationParam parameter, std::vector<double> values, const AblationOptions& options) {
    const ModelConfig& cfg = model.config();
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    AblationCurve curve;
    curve.parameter = parameter;
    for (double value : values) {
        AblationPoint pt;
        pt.value = value;
        EvalOptions base;
        base.segment_len = options.segment_len ? options.segment_len : cfg.segment_len;
        base.pool_capacity = options.pool_capacity ? options.pool_capacity : cfg.pool_capacity;
        base.override_capacity = true;
        base.max_segments = options.max_segments;
        base.seed = options.seed;
        std::size_t m = options.selected_m ? options.selected_m : cfg.selected_m;
        std::optional<std::size_t> only_layer;

        const bool integral = value >= 0.0 && std::floor(value) == value;
        const auto v = static_cast<std::size_t>(integral ? value : 0.0);
        if (!integral) {
            pt.skipped = true;
            pt.reason = "value must be a non-negative integer";
        } else {
            switch (parameter) {
                case AblationParam::M: base.pool_capacity = v; break;
                case AblationParam::m: m = v; break;
                case AblationParam::n: base.segment_len = v; break;
                case AblationParam::layer: only_layer = v; break;
            }
            if (base.segment_len == 0) pt.reason = "n must be >= 1";
            else if (m == 0) pt.reason = "m must be >= 1";
            else if (m > base.pool_capacity) pt.reason = "m exceeds M";
            else if (only_layer && *only_layer >= cfg.num_layers) pt.reason = "layer index out of range";
            pt.skipped = !pt.reason.empty();
        }
        if (!pt.skipped) {
            EvalOptions trams = base;
            trams.policy.strategy = Strategy::trams;
            trams.policy.direction = options.direction;
            trams.policy.include_u_bias = options.include_u_bias;
            trams.policy.selected_m = m;
            trams.policy.only_layer = only_layer;
            EvalOptions baseline = base;
            baseline.policy.strategy = Strategy::recency;
            baseline.policy.selected_m = m;
            pt.trams = eval_corpus(model, tokens, trams);
            pt.baseline = eval_corpus(model, tokens, baseline);
        }
        curve.points.push_back(std::move(pt));
    }
    return curve;
}

// ---- cost profile ----------------------------------------------------------------------

CostProfile cost_profile(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                         const CostOptions& options) {
    const ModelConfig& cfg = model.config();
    const std::size_t runs = std::max<std::size_t>(options.runs, 5);
    const std::size_t capacity = options.pool_capacity ? options.pool_capacity : cfg.pool_capacity;
    const std::size_t m = options.selected_m ? options.selected_m : cfg.selected_m;
    CostProfile profile;

    for (Strategy s : options.strategies) {
        EvalOptions eo;
        eo.segment_len = cfg.segment_len;
        eo.pool_capacity = capacity;
        eo.override_capacity = true;
        eo.max_segments = options.max_segments;
        eo.seed = options.seed;
        eo.policy.strategy = s;
        eo.policy.selected_m = s == Strategy::none ? capacity : m;
        (void)eval_corpus(model, tokens, eo);  // warm-up, excluded
        reset_peak_resident();
        std::vector<double> times;
        std::size_t token_count = 0;
        for (std::size_t r = 0; r < runs; ++r) {
            const auto t0 = Clock::now();
            const EvalReport rep = eval_corpus(model, tokens, eo);
            times.push_back(seconds_since(t0));
            token_count = rep.token_count;
        }
        CostRow row;
        row.strategy = std::string(to_string(s));
        row.runs = runs;
        row.median_wall_s = median_of(times);
        row.min_wall_s = *std::min_element(times.begin(), times.end());
        row.max_wall_s = *std::max_element(times.begin(), times.end());
        row.peak_resident_bytes = peak_resident_bytes();
        row.tokens_per_s = row.median_wall_s > 0 ? static_cast<double>(token_count) / row.median_wall_s : 0.0;
        profile.rows.push_back(row);
    }

    // Selection stage in isolation: TRAMS scores plus top-m for one head.
    const AttentionParams<float>& params = model.weights().layers.front().heads.front();
    Rng rng(options.seed + 99);
    std::vector<double> log_m, log_t;
    for (std::size_t rows : options.scaling_pool_sizes) {
        if (rows == 0) continue;
        Matrix mem(rows, cfg.d_model);
        rng.fill_normal(mem, 1.0);
        const std::size_t take = std::min(m, rows);
        std::vector<double> trials;
        std::size_t sink = 0;
        for (int trial = 0; trial < 7; ++trial) {
            std::size_t reps = 0;
            const auto t0 = Clock::now();
            double elapsed = 0.0;
            while (elapsed < 0.01) {
                const auto sel = top_m_select(trams_selection_scores(mem, params, true), take, RankDirection::descending);
                sink += sel.chosen_indices.size();
                ++reps;
                elapsed = seconds_since(t0);
            }
            trials.push_back(elapsed / static_cast<double>(reps));
        }
        if (sink == 0) continue;
        SelectionScalingPoint pt{rows, median_of(trials)};
        profile.scaling.push_back(pt);
        log_m.push_back(std::log(static_cast<double>(rows)));
        log_t.push_back(std::log(pt.median_seconds));
    }
    if (log_m.size() >= 2) {
        const double mx = mean_of(log_m), my = mean_of(log_t);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < log_m.size(); ++i) {
            num += (log_m[i] - mx) * (log_t[i] - my);
            den += (log_m[i] - mx) * (log_m[i] - mx);
        }
        profile.scaling_exponent = den > 0 ? num / den : 0.0;
        for (std::size_t i = 1; i < profile.scaling.size(); ++i) {
            if (profile.scaling[i].pool_rows == 2 * profile.scaling[i - 1].pool_rows) {
                profile.max_doubling_ratio = std::max(
                    profile.max_doubling_ratio, profile.scaling[i].median_seconds / profile.scaling[i - 1].median_seconds);
            }
        }
    }
    return profile;
}

}  // namespace trams
