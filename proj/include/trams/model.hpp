// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trams/attention.hpp"
#include "trams/memory_select.hpp"
#include "trams/numerics.hpp"

namespace trams {

/// Architecture plus the default inference regime (n, M, m, strategy).
struct ModelConfig {
    std::size_t num_layers = 4;
    std::size_t num_heads = 4;
    std::size_t d_model = 64;
    std::size_t d_ffn = 256;
    std::size_t vocab_size = 0;
    std::size_t segment_len = 32;     ///< n
    std::size_t pool_capacity = 128;  ///< M
    std::size_t selected_m = 32;      ///< m
    Strategy strategy = Strategy::trams;
    RankDirection metric_direction = RankDirection::descending;
    double dropout = 0.1;
    /// Add the query-independent u·k term to the selection score.
    bool selection_u_bias = true;

    std::size_t head_dim() const noexcept { return num_heads ? d_model / num_heads : 0; }
    /// Throws UsageError listing every violated constraint.
    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// How memory rows are picked during one forward pass.
struct SelectionPolicy {
    Strategy strategy = Strategy::none;
    RankDirection direction = RankDirection::descending;
    std::size_t selected_m = 0;
    bool include_u_bias = true;
    /// When set, `strategy` applies only to this layer; the rest use recency with the same m.
    std::optional<std::size_t> only_layer;

    Strategy strategy_for_layer(std::size_t layer) const noexcept {
        if (only_layer && *only_layer != layer) return Strategy::recency;
        return strategy;
    }
    static SelectionPolicy from_config(const ModelConfig& config);
};

template <typename T>
struct LayerWeights {
    std::vector<AttentionParams<T>> heads;
    BasicMatrix<T> w_o;  ///< d × d
    BasicMatrix<T> ffn_norm_gain;
    BasicMatrix<T> ffn_norm_bias;
    BasicMatrix<T> w_ffn_in;  ///< d × d_ffn
    BasicMatrix<T> b_ffn_in;
    BasicMatrix<T> w_ffn_out;  ///< d_ffn × d
    BasicMatrix<T> b_ffn_out;
    friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

template <typename T>
struct ModelWeights {
    BasicMatrix<T> embedding;  ///< V × d
    std::vector<LayerWeights<T>> layers;
    BasicMatrix<T> final_norm_gain;
    BasicMatrix<T> final_norm_bias;
    BasicMatrix<T> w_out;  ///< d × V
    BasicMatrix<T> b_out;

    /// Every tensor shaped for `config` and filled with 0 (gains included).
    static ModelWeights zeros(const ModelConfig& config);
    /// Normal(0, 1) embeddings, 1/√fan-in projections, unit gains, zero biases.
    static ModelWeights initialized(const ModelConfig& config, Rng& rng);

    /// Visits every tensor in manifest order as f(name, matrix).
    template <typename F>
    void visit(F&& f) {
        visit_impl(*this, f);
    }
    template <typename F>
    void visit(F&& f) const {
        visit_impl(*this, f);
    }

    template <typename U>
    ModelWeights<U> cast() const;

    friend bool operator==(const ModelWeights&, const ModelWeights&) = default;

private:
    template <typename Self, typename F>
    static void visit_impl(Self& self, F& f) {
        f(std::string("embedding"), self.embedding);
        for (std::size_t l = 0; l < self.layers.size(); ++l) {
            auto& layer = self.layers[l];
            const std::string p = "layers." + std::to_string(l) + ".";
            for (std::size_t h = 0; h < layer.heads.size(); ++h) {
                auto& head = layer.heads[h];
                const std::string hp = p + "heads." + std::to_string(h) + ".";
                f(hp + "w_q", head.w_q);
                f(hp + "w_k_content", head.w_k_content);
                f(hp + "w_k_pos", head.w_k_pos);
                f(hp + "w_v", head.w_v);
                f(hp + "u_bias", head.u_bias);
                f(hp + "v_bias", head.v_bias);
            }
            f(p + "w_o", layer.w_o);
            f(p + "ffn_norm_gain", layer.ffn_norm_gain);
            f(p + "ffn_norm_bias", layer.ffn_norm_bias);
            f(p + "w_ffn_in", layer.w_ffn_in);
            f(p + "b_ffn_in", layer.b_ffn_in);
            f(p + "w_ffn_out", layer.w_ffn_out);
            f(p + "b_ffn_out", layer.b_ffn_out);
        }
        f(std::string("final_norm_gain"), self.final_norm_gain);
        f(std::string("final_norm_bias"), self.final_norm_bias);
        f(std::string("w_out"), self.w_out);
        f(std::string("b_out"), self.b_out);
    }
};

template <typename T>
template <typename U>
ModelWeights<U> ModelWeights<T>::cast() const {
    ModelWeights<U> out;
    out.embedding = embedding.template cast<U>();
    out.layers.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& src = layers[l];
        auto& dst = out.layers[l];
        for (const auto& h : src.heads) {
            dst.heads.push_back({h.w_q.template cast<U>(), h.w_k_content.template cast<U>(),
                                 h.w_k_pos.template cast<U>(), h.w_v.template cast<U>(), h.u_bias.template cast<U>(),
                                 h.v_bias.template cast<U>()});
        }
        dst.w_o = src.w_o.template cast<U>();
        dst.ffn_norm_gain = src.ffn_norm_gain.template cast<U>();
        dst.ffn_norm_bias = src.ffn_norm_bias.template cast<U>();
        dst.w_ffn_in = src.w_ffn_in.template cast<U>();
        dst.b_ffn_in = src.b_ffn_in.template cast<U>();
        dst.w_ffn_out = src.w_ffn_out.template cast<U>();
        dst.b_ffn_out = src.b_ffn_out.template cast<U>();
    }
    out.final_norm_gain = final_norm_gain.template cast<U>();
    out.final_norm_bias = final_norm_bias.template cast<U>();
    out.w_out = w_out.template cast<U>();
    out.b_out = b_out.template cast<U>();
    return out;
}

/// Everything a diagnostic probe can see for one (layer, head) of one segment.
/// `memory` is the whole layer-normed pool; `full_logits` / `full_probs` are the
/// unselected relative-position attention over [pool; segment].
template <typename T>
struct HeadContext {
    std::size_t layer = 0;
    std::size_t head = 0;
    const BasicMatrix<T>& queries;
    const BasicMatrix<T>& memory;
    const AttentionParams<T>& params;
    KeyPositions positions;
    const BasicMatrix<T>& full_logits;
    const BasicMatrix<T>& full_probs;
    const SelectionResult& selection;
    std::span<const std::int32_t> memory_tokens;
};

template <typename T>
using HeadProbe = std::function<void(const HeadContext<T>&)>;

template <typename T>
struct ForwardOptions {
    bool training = false;  ///< enables dropout
    bool update_pool = true;
    bool track_utilization = false;
    bool record_selections = false;
    HeadProbe<T> probe;
};

struct SegmentStats {
    /// Per layer: mean over queries and heads of the attention mass placed on
    /// (selected) memory by the actual, post-selection softmax.
    std::vector<double> memory_mass;
    /// Per layer: the same slots' mass under the full-pool softmax. Filled when
    /// utilization tracking is on.
    std::vector<double> utilization;
    std::vector<SelectionResult> selections;
};

template <typename T>
struct LayerTape {
    BasicMatrix<T> x_in;
    BasicMatrix<T> attn_in;  ///< non-affine layer norm of x_in
    std::vector<double> attn_inv_std;
    std::vector<RelPosHeadTape<T>> heads;
    BasicMatrix<T> heads_out;
    BasicMatrix<T> attn_drop_mask;
    BasicMatrix<T> ffn_xhat;
    std::vector<double> ffn_inv_std;
    BasicMatrix<T> ffn_in;
    BasicMatrix<T> hidden_pre;
    BasicMatrix<T> hidden;
    BasicMatrix<T> ffn_drop_mask;
};

template <typename T>
struct ForwardTape {
    std::vector<std::int32_t> tokens;
    std::vector<LayerTape<T>> layers;
    BasicMatrix<T> final_xhat;
    std::vector<double> final_inv_std;
    BasicMatrix<T> final_out;
};

template <typename T>
struct SegmentOutput {
    BasicMatrix<T> logits;  ///< n × V
    SegmentStats stats;
};

/// Pre-norm Transformer-XL decoder with relative positions and a selectable
/// memory subset per layer and head.
template <typename T>
class TransformerXL {
public:
    TransformerXL(ModelConfig config, ModelWeights<T> weights);

    const ModelConfig& config() const noexcept { return config_; }
    const ModelWeights<T>& weights() const noexcept { return weights_; }
    ModelWeights<T>& mutable_weights() noexcept { return weights_; }

    /// Recomputes the cached projected distance encodings. Call after any weight change.
    void refresh_caches(std::size_t max_distance = 0);

    MemoryPool<T> make_pool(std::size_t capacity) const {
        return MemoryPool<T>(config_.num_layers, config_.d_model, capacity);
    }

    /// One segment: selection per layer/head, relative attention over
    /// [selected memory; segment], FFN, output logits. The pool receives every
    /// layer's inputs for this segment (full segment, before selection).
    SegmentOutput<T> forward_segment(std::span<const std::int32_t> tokens, std::int64_t start_position,
                                     MemoryPool<T>& pool, const SelectionPolicy& policy, Rng& rng,
                                     const ForwardOptions<T>& options = {}, ForwardTape<T>* tape = nullptr) const;

    /// Adds dLoss/dweights into `grads` given dLoss/dlogits for a taped segment.
    void backward_segment(const ForwardTape<T>& tape, const BasicMatrix<T>& d_logits, ModelWeights<T>& grads) const;

    const RelPosTable<T>& relpos_table() const noexcept { return table_; }

private:
    ModelConfig config_;
    ModelWeights<T> weights_;
    RelPosTable<T> table_;
    std::vector<std::vector<BasicMatrix<T>>> projected_;  ///< [layer][head] table · W_k^R
};

// ---- free-function surface ----------------------------------------------------

template <typename T>
SegmentOutput<T> forward_segment(const TransformerXL<T>& model, std::span<const std::int32_t> tokens,
                                 std::int64_t start_position, MemoryPool<T>& pool, const SelectionPolicy& policy,
                                 Rng& rng) {
    return model.forward_segment(tokens, start_position, pool, policy, rng);
}

struct Metrics {
    double perplexity = 0.0;
    double bpc = 0.0;
};

/// ppl = exp(nll / count), bpc = (nll / count) / ln 2.
Metrics nll_to_metrics(double total_nll_nats, std::size_t token_count);

/// Negative log-likelihood (nats) of `targets` under row-wise softmax(logits).
template <typename T>
double segment_nll(const BasicMatrix<T>& logits, std::span<const std::int32_t> targets);

struct EvalOptions {
    SelectionPolicy policy;
    std::size_t segment_len = 0;    ///< 0: model config's n
    std::size_t pool_capacity = 0;  ///< M; ignored unless `override_capacity`
    bool override_capacity = false;
    bool track_utilization = false;
    std::uint64_t seed = 0;
    /// Stop after this many segments (0: whole stream).
    std::size_t max_segments = 0;

    static EvalOptions from_config(const ModelConfig& config);
};

struct EvalReport {
    std::string strategy;
    std::string metric_direction;
    std::size_t pool_capacity = 0;
    std::size_t selected_m = 0;
    std::size_t segment_len = 0;
    double total_nll_nats = 0.0;
    std::size_t token_count = 0;
    double perplexity = 0.0;
    double bpc = 0.0;
    double memory_mass = 0.0;
    double utilization = 0.0;
    std::size_t segments = 0;
    double wall_time_s = 0.0;
    std::size_t peak_resident_bytes = 0;
    /// Per-segment NLL, kept for bootstrap intervals.
    std::vector<double> segment_nll;
    std::vector<double> segment_utilization;
    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Non-overlapping segments of length n over the stream; accumulates the NLL of
/// every next-token prediction. Deterministic for a fixed model and seed.
template <typename T>
EvalReport eval_corpus(const TransformerXL<T>& model, std::span<const std::int32_t> tokens, const EvalOptions& options);

struct TrainHyperParams {
    double learning_rate = 2.5e-4;
    std::size_t steps = 200;
    std::size_t batch = 8;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    bool cosine_schedule = true;
    double clip_norm = 0.25;  ///< global gradient-norm clip; 0 disables
    std::size_t train_memory = 0;  ///< memory length during training; 0 → segment length
    std::uint64_t seed = 0;
    std::size_t log_every = 0;
    friend bool operator==(const TrainHyperParams&, const TrainHyperParams&) = default;
};

struct TrainResult {
    ModelWeights<float> weights;
    std::vector<double> loss_curve;  ///< mean per-token NLL (nats) of each step
};

/// Cross-entropy training with segment recurrence (memory detached), explicit
/// backward passes and Adam with an optional cosine decay.
TrainResult train_toy(const ModelConfig& config, std::span<const std::int32_t> corpus, const TrainHyperParams& hp,
                      const std::function<void(std::size_t, double)>& on_step = {});

struct GradientCheckResult {
    std::size_t checked = 0;
    std::size_t failures = 0;       ///< coordinates whose relative error exceeds the tolerance
    double max_relative_error = 0.0;
    double median_relative_error = 0.0;
    std::string worst_tensor;
    /// |analytic − numeric| / max(|analytic|, |numeric|, floor).
    static double relative_error(double analytic, double numeric, double floor = 1e-6) noexcept;
};

/// Compares backward_segment against central finite differences (double
/// precision, step 1e-5) on `samples` randomly drawn weight coordinates of a
/// freshly initialized model. The loss is the mean NLL of one segment that
/// attends to a pool filled by a preceding segment.
GradientCheckResult gradient_check(const ModelConfig& config, std::size_t samples, std::uint64_t seed,
                                   double tolerance = 1e-3);

/// Peak resident set size of this process (VmHWM), in bytes; 0 when unavailable.
std::size_t peak_resident_bytes();
/// Resets the kernel's peak-RSS watermark where supported. Returns false otherwise.
bool reset_peak_resident();

}  // namespace trams
