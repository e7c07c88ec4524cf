// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trams/model.hpp"

namespace trams {

/// Shared evaluation setup for the analyses below. Segments are processed in
/// order with the full pool (no selection) so every analysis sees the same
/// hidden states.
struct ProbeOptions {
    std::size_t segment_len = 0;    ///< 0: model config n
    std::size_t pool_capacity = 0;  ///< 0: model config M
    std::size_t max_segments = 0;   ///< 0: whole stream
    /// Segments with fewer pooled rows than this are skipped (0: require a full pool).
    std::size_t min_pool_rows = 0;
    std::uint64_t seed = 0;
};

/// Calls `probe` for every (segment, layer, head) with a non-empty pool.
/// Returns the number of segments whose heads were probed.
std::size_t for_each_head(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                          const ProbeOptions& options, const HeadProbe<float>& probe);

// ---- ranking-metric correlation ----------------------------------------------------

inline const std::vector<double> kDefaultBuckets = {1, 10, 30, 50, 100};

struct BucketCorrelation {
    double rho = 0.0;
    std::size_t pairs = 0;
    bool skipped = false;        ///< fewer than 2 pairs in the bucket
    bool zero_variance = false;  ///< a ranking was constant within the bucket
};

/// Spearman correlation between `truth` and `candidate` restricted to the
/// ceil(percent% · n) pairs with the highest ground-truth values.
BucketCorrelation bucket_spearman(std::span<const double> truth, std::span<const double> candidate,
                                  double percent);

struct CorrelationTable {
    std::vector<double> buckets;
    std::vector<std::string> metrics;       ///< key_norm, angle, dot_product
    std::vector<std::vector<double>> rho;   ///< [metric][bucket], mean over samples
    std::vector<std::vector<std::size_t>> used_samples;  ///< [metric][bucket]
    std::vector<std::vector<std::size_t>> zero_variance_samples;
    std::vector<bool> bucket_skipped;       ///< no sample had ≥ 2 pairs
    std::size_t samples = 0;                ///< (segment, layer, head) instances
    std::string sampling_plan;
};

/// Ground truth: position-inclusive memory logits of each head. Candidates:
/// ‖K'_j‖, cos⟨Q'_i, K'_j⟩ and the ground truth itself.
CorrelationTable ranking_correlation_experiment(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                                                const std::vector<double>& buckets, const ProbeOptions& options);

// ---- norm distributions ------------------------------------------------------------

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> counts;
};

Histogram make_histogram(std::span<const double> values, std::size_t bins);

struct NormLayerStats {
    std::size_t layer = 0;
    std::vector<double> query_norms;  ///< ‖Q'_i‖ = ‖LN(h_i)‖
    std::vector<double> key_norms;    ///< ‖K'_j‖ over heads
    DispersionStats query;
    DispersionStats key;
    Histogram query_hist;
    Histogram key_hist;
};

struct NormDistribution {
    std::vector<NormLayerStats> layers;
    /// Pooled over layers: relative IQR (IQR / median).
    double query_dispersion = 0.0;
    double key_dispersion = 0.0;
};

/// Throws UsageError when no (segment, layer, head) instance is available.
NormDistribution norm_distribution(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                                   const ProbeOptions& options, std::size_t bins = 30);

// ---- memory utilization ------------------------------------------------------------

struct UtilizationArm {
    std::string name;  ///< e.g. "trams", "trams:ascending", "oracle"
    Strategy strategy = Strategy::none;
    RankDirection direction = RankDirection::descending;
    double mean = 0.0;
    std::vector<double> per_segment;
};

struct Interval {
    double estimate = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

struct UtilizationReport {
    std::size_t pool_capacity = 0;
    std::size_t selected_m = 0;
    std::size_t segments = 0;
    std::size_t instances = 0;  ///< (segment, layer, head) triples
    double full_pool_mass = 0.0;
    std::vector<UtilizationArm> arms;
    /// Instances where oracle mass fell below another arm by more than 1e-9.
    std::size_t oracle_violations = 0;
    double max_oracle_deficit = 0.0;
    /// (trams − recency) / recency.
    double trams_vs_recency_relative = 0.0;
    Interval trams_minus_random;
    Interval trams_minus_recency;

    const UtilizationArm& arm(std::string_view name) const;
};

struct UtilizationOptions {
    ProbeOptions probe;
    std::size_t selected_m = 0;  ///< 0: config m
    bool include_u_bias = true;
    std::size_t bootstrap_resamples = 2000;
};

/// Mass on each strategy's selected slots under the full-pool softmax, for
/// trams (every direction), oracle, random and recency on identical states.
UtilizationReport memory_utilization(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                                     const UtilizationOptions& options);

/// Percentile bootstrap of the mean of `values` (95%).
Interval bootstrap_mean_interval(std::span<const double> values, std::size_t resamples, std::uint64_t seed);

// ---- layer-norm statistics and logit decomposition --------------------------------

struct LayerNormStats {
    std::size_t samples = 0;
    std::size_t within_bounds = 0;  ///< |mean| < 0.05 and ‖h‖/√d ∈ [0.8, 1.2]
    double max_abs_mean = 0.0;
    DispersionStats norm_ratio;  ///< ‖h‖/√d
    double fraction() const noexcept {
        return samples ? static_cast<double>(within_bounds) / static_cast<double>(samples) : 0.0;
    }
};

/// Statistics of the layer-normed hidden states the selector sees (queries and
/// pooled memory rows) across all layers.
LayerNormStats layer_norm_statistics(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                                     const ProbeOptions& options);

struct DecompositionStats {
    std::size_t pairs = 0;
    /// |q·k − √d‖k‖cos| / (1 + |q·k|) with q = Q'_i, k = K'_j.
    DispersionStats relative_error;
    double max_reconstruction_error = 0.0;
};

DecompositionStats logit_decomposition_error(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                                             const ProbeOptions& options);

/// Worst |s_j − Σ_i K'_{j,i}/√d| over every layer/head on the model's states.
double trams_identity_error(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                            const ProbeOptions& options);

// ---- ablations ---------------------------------------------------------------------

enum class AblationParam { M, m, n, layer };
std::string_view to_string(AblationParam p) noexcept;
AblationParam parse_ablation_param(std::string_view name);

struct AblationPoint {
    double value = 0.0;
    bool skipped = false;
    std::string reason;
    EvalReport trams;
    EvalReport baseline;
};

struct AblationCurve {
    AblationParam parameter = AblationParam::m;
    std::vector<AblationPoint> points;  ///< sorted by value
};

struct AblationOptions {
    std::size_t pool_capacity = 0;  ///< fixed M (0: config)
    std::size_t selected_m = 0;     ///< fixed m (0: config)
    std::size_t segment_len = 0;    ///< fixed n (0: config)
    RankDirection direction = RankDirection::descending;
    bool include_u_bias = true;
    std::size_t max_segments = 0;
    std::uint64_t seed = 0;
};

/// One TRAMS and one recency evaluation per value. In layer mode TRAMS selects
/// only in the given layer and recency is used elsewhere.
AblationCurve ablation_sweep(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                             AblationParam parameter, std::vector<double> values, const AblationOptions& options);

// ---- cost profile ----------------------------------------------------------------------

struct CostRow {
    std::string strategy;
    std::size_t runs = 0;
    double median_wall_s = 0.0;
    double min_wall_s = 0.0;
    double max_wall_s = 0.0;
    std::size_t peak_resident_bytes = 0;
    double tokens_per_s = 0.0;
};

struct SelectionScalingPoint {
    std::size_t pool_rows = 0;
    double median_seconds = 0.0;  ///< one selection (scores + top-m) for one head
};

struct CostProfile {
    std::vector<CostRow> rows;
    std::vector<SelectionScalingPoint> scaling;
    double scaling_exponent = 0.0;  ///< least-squares slope of log time vs log M
    double max_doubling_ratio = 0.0;
};

struct CostOptions {
    std::vector<Strategy> strategies = {Strategy::none, Strategy::recency, Strategy::trams};
    std::size_t runs = 5;
    std::size_t max_segments = 0;
    std::size_t pool_capacity = 0;  ///< 0: config
    std::size_t selected_m = 0;     ///< 0: config
    std::vector<std::size_t> scaling_pool_sizes = {128, 256, 512, 1024, 2048};
    std::uint64_t seed = 0;
};

/// Median wall time of ≥ `runs` evaluations per strategy after one warm-up run.
CostProfile cost_profile(const TransformerXL<float>& model, std::span<const std::int32_t> tokens,
                         const CostOptions& options);

}  // namespace trams
