// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#include "trams/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace trams {

void ModelConfig::validate() const {
    std::vector<std::string> problems;
    if (num_layers == 0) problems.emplace_back("num_layers must be >= 1");
    if (num_heads == 0) problems.emplace_back("num_heads must be >= 1");
    if (num_heads != 0 && d_model % num_heads != 0) problems.emplace_back("d_model must be divisible by num_heads");
    if (d_model == 0 || d_model % 2 != 0) problems.emplace_back("d_model must be even and positive");
    if (d_ffn == 0) problems.emplace_back("d_ffn must be >= 1");
    if (vocab_size == 0) problems.emplace_back("vocab_size must be >= 1");
    if (segment_len == 0) problems.emplace_back("segment_len (n) must be >= 1");
    if (selected_m > pool_capacity) {
        problems.emplace_back("selected m (" + std::to_string(selected_m) + ") must not exceed pool capacity M (" +
                              std::to_string(pool_capacity) + ")");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) problems.emplace_back("dropout must be in [0, 1)");
    if (!problems.empty()) {
        std::string msg = "invalid model config:";
        for (const auto& p : problems) msg += " " + p + ";";
        throw UsageError(msg);
    }
}

SelectionPolicy SelectionPolicy::from_config(const ModelConfig& config) {
    SelectionPolicy p;
    p.strategy = config.strategy;
    p.direction = config.metric_direction;
    p.selected_m = config.selected_m;
    p.include_u_bias = config.selection_u_bias;
    return p;
}

template <typename T>
ModelWeights<T> ModelWeights<T>::zeros(const ModelConfig& config) {
    config.validate();
    const std::size_t d = config.d_model;
    const std::size_t dh = config.head_dim();
    ModelWeights w;
    w.embedding = BasicMatrix<T>(config.vocab_size, d);
    w.layers.resize(config.num_layers);
    for (auto& layer : w.layers) {
        layer.heads.assign(config.num_heads, AttentionParams<T>::zeros(d, dh));
        layer.w_o = BasicMatrix<T>(d, d);
        layer.ffn_norm_gain = BasicMatrix<T>(1, d);
        layer.ffn_norm_bias = BasicMatrix<T>(1, d);
        layer.w_ffn_in = BasicMatrix<T>(d, config.d_ffn);
        layer.b_ffn_in = BasicMatrix<T>(1, config.d_ffn);
        layer.w_ffn_out = BasicMatrix<T>(config.d_ffn, d);
        layer.b_ffn_out = BasicMatrix<T>(1, d);
    }
    w.final_norm_gain = BasicMatrix<T>(1, d);
    w.final_norm_bias = BasicMatrix<T>(1, d);
    w.w_out = BasicMatrix<T>(d, config.vocab_size);
    w.b_out = BasicMatrix<T>(1, config.vocab_size);
    return w;
}

template <typename T>
ModelWeights<T> ModelWeights<T>::initialized(const ModelConfig& config, Rng& rng) {
    ModelWeights w = zeros(config);
    const double d = static_cast<double>(config.d_model);
    const double depth_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(config.num_layers));
    rng.fill_normal(w.embedding, 1.0);
    for (auto& layer : w.layers) {
        for (auto& head : layer.heads) {
            rng.fill_normal(head.w_q, 1.0 / std::sqrt(d));
            rng.fill_normal(head.w_k_content, 1.0 / std::sqrt(d));
            rng.fill_normal(head.w_k_pos, 1.0 / std::sqrt(d));
            rng.fill_normal(head.w_v, 1.0 / std::sqrt(d));
        }
        layer.ffn_norm_gain.fill(T{1});
        rng.fill_normal(layer.w_o, depth_scale / std::sqrt(d));
        rng.fill_normal(layer.w_ffn_in, 1.0 / std::sqrt(d));
        rng.fill_normal(layer.w_ffn_out, depth_scale / std::sqrt(static_cast<double>(config.d_ffn)));
    }
    w.final_norm_gain.fill(T{1});
    rng.fill_normal(w.w_out, 1.0 / std::sqrt(d));
    return w;
}

namespace {

// Row-wise layer norm. Null gain/bias means the non-affine form. Records the
// normalized rows and inverse deviations when asked.
template <typename T>
BasicMatrix<T> layer_norm_rows(const BasicMatrix<T>& x, const BasicMatrix<T>* gain, const BasicMatrix<T>* bias,
                               BasicMatrix<T>* xhat_out = nullptr, std::vector<double>* inv_std_out = nullptr) {
    const std::size_t d = x.cols();
    BasicMatrix<T> out(x.rows(), d);
    if (xhat_out) *xhat_out = BasicMatrix<T>(x.rows(), d);
    if (inv_std_out) inv_std_out->assign(x.rows(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto row = x.row(r);
        double mean = 0.0;
        for (T v : row) mean += static_cast<double>(v);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (T v : row) var += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kDefaultLayerNormEps);
        if (inv_std_out) (*inv_std_out)[r] = inv;
        for (std::size_t c = 0; c < d; ++c) {
            const double xhat = (static_cast<double>(row[c]) - mean) * inv;
            if (xhat_out) (*xhat_out)(r, c) = static_cast<T>(xhat);
            double y = xhat;
            if (gain) y = y * static_cast<double>((*gain)(0, c)) + static_cast<double>((*bias)(0, c));
            out(r, c) = static_cast<T>(y);
        }
    }
    return out;
}

// dx for y = (x − μ)·s given dy and the normalized rows.
template <typename T>
BasicMatrix<T> layer_norm_backward(const BasicMatrix<T>& d_xhat, const BasicMatrix<T>& xhat,
                                   const std::vector<double>& inv_std) {
    const std::size_t d = xhat.cols();
    BasicMatrix<T> dx(xhat.rows(), d);
    for (std::size_t r = 0; r < xhat.rows(); ++r) {
        double mean_dy = 0.0;
        double mean_dy_xhat = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            mean_dy += static_cast<double>(d_xhat(r, c));
            mean_dy_xhat += static_cast<double>(d_xhat(r, c)) * static_cast<double>(xhat(r, c));
        }
        mean_dy /= static_cast<double>(d);
        mean_dy_xhat /= static_cast<double>(d);
        for (std::size_t c = 0; c < d; ++c) {
            dx(r, c) = static_cast<T>(inv_std[r] * (static_cast<double>(d_xhat(r, c)) - mean_dy -
                                                    static_cast<double>(xhat(r, c)) * mean_dy_xhat));
        }
    }
    return dx;
}

// Affine-norm backward: accumulates gain/bias grads and returns dx.
template <typename T>
BasicMatrix<T> affine_norm_backward(const BasicMatrix<T>& dy, const BasicMatrix<T>& xhat,
                                    const std::vector<double>& inv_std, const BasicMatrix<T>& gain,
                                    BasicMatrix<T>& d_gain, BasicMatrix<T>& d_bias) {
    BasicMatrix<T> d_xhat(dy.rows(), dy.cols());
    for (std::size_t r = 0; r < dy.rows(); ++r) {
        for (std::size_t c = 0; c < dy.cols(); ++c) {
            d_gain(0, c) += dy(r, c) * xhat(r, c);
            d_bias(0, c) += dy(r, c);
            d_xhat(r, c) = dy(r, c) * gain(0, c);
        }
    }
    return layer_norm_backward(d_xhat, xhat, inv_std);
}

template <typename T>
void add_row_bias_inplace(BasicMatrix<T>& x, const BasicMatrix<T>& bias) {
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) += bias(0, c);
}

template <typename T>
void add_column_sums(BasicMatrix<T>& bias_grad, const BasicMatrix<T>& x) {
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) bias_grad(0, c) += x(r, c);
}

template <typename T>
BasicMatrix<T> dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng) {
    BasicMatrix<T> mask(rows, cols, T{1});
    if (p <= 0.0) return mask;
    const T keep = static_cast<T>(1.0 / (1.0 - p));
    for (auto& v : mask.values()) v = rng.uniform() < p ? T{0} : keep;
    return mask;
}

template <typename T>
void multiply_inplace(BasicMatrix<T>& x, const BasicMatrix<T>& mask) {
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] *= mask.data()[i];
}

}  // namespace

template <typename T>
TransformerXL<T>::TransformerXL(ModelConfig config, ModelWeights<T> weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
    config_.validate();
    const auto expected = ModelWeights<T>::zeros(config_);
    std::vector<std::string> shapes;
    expected.visit([&](const std::string&, const BasicMatrix<T>& m) { shapes.push_back(m.shape_string()); });
    std::size_t i = 0;
    weights_.visit([&](const std::string& name, const BasicMatrix<T>& m) {
        if (i >= shapes.size() || m.shape_string() != shapes[i]) {
            throw UsageError("TransformerXL: tensor " + name + " has shape " + m.shape_string() +
                             " inconsistent with config");
        }
        ++i;
    });
    if (i != shapes.size()) throw UsageError("TransformerXL: weight layout does not match config");
    refresh_caches();
}

template <typename T>
void TransformerXL<T>::refresh_caches(std::size_t max_distance) {
    const std::size_t rows = std::max({max_distance, config_.segment_len + config_.pool_capacity, table_.max_distance()});
    table_ = RelPosTable<T>::sinusoidal(rows, config_.d_model);
    projected_.assign(config_.num_layers, {});
    for (std::size_t l = 0; l < config_.num_layers; ++l) {
        for (const auto& head : weights_.layers[l].heads) {
            projected_[l].push_back(matmul(table_.embeddings, head.w_k_pos));
        }
    }
}

template <typename T>
SegmentOutput<T> TransformerXL<T>::forward_segment(std::span<const std::int32_t> tokens, std::int64_t start_position,
                                                   MemoryPool<T>& pool, const SelectionPolicy& policy, Rng& rng,
                                                   const ForwardOptions<T>& options, ForwardTape<T>* tape) const {
    const std::size_t n = tokens.size();
    const std::size_t d = config_.d_model;
    const std::size_t dh = config_.head_dim();
    const std::size_t num_heads = config_.num_heads;
    if (n == 0) throw UsageError("forward_segment: empty segment");
    if (pool.num_layers() != config_.num_layers || pool.width() != d) {
        throw UsageError("forward_segment: pool layout does not match the model");
    }
    for (std::int32_t t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) {
            throw UsageError("forward_segment: token id " + std::to_string(t) + " outside vocabulary of " +
                             std::to_string(config_.vocab_size));
        }
    }
    if (!pool.empty() && pool.positions().back() >= start_position) {
        throw UsageError("forward_segment: segment must start after the pooled positions");
    }

    // Distance encodings: use the cache when it is long enough.
    const std::size_t needed = pool.empty() ? n : static_cast<std::size_t>(start_position + static_cast<std::int64_t>(n) -
                                                                            pool.positions().front());
    std::vector<std::vector<BasicMatrix<T>>> local_projected;
    RelPosTable<T> local_table;
    const auto* projected = &projected_;
    if (needed > table_.max_distance()) {
        local_table = RelPosTable<T>::sinusoidal(needed, d);
        local_projected.assign(config_.num_layers, {});
        for (std::size_t l = 0; l < config_.num_layers; ++l)
            for (const auto& head : weights_.layers[l].heads)
                local_projected[l].push_back(matmul(local_table.embeddings, head.w_k_pos));
        projected = &local_projected;
    }

    const bool need_full = options.track_utilization || static_cast<bool>(options.probe);
    const double dropout = options.training ? config_.dropout : 0.0;

    SegmentOutput<T> result;
    result.stats.memory_mass.assign(config_.num_layers, 0.0);
    if (options.track_utilization) result.stats.utilization.assign(config_.num_layers, 0.0);
    if (tape) {
        tape->tokens.assign(tokens.begin(), tokens.end());
        tape->layers.assign(config_.num_layers, {});
    }

    BasicMatrix<T> x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto src = weights_.embedding.row(static_cast<std::size_t>(tokens[i]));
        std::copy(src.begin(), src.end(), x.row(i).begin());
    }

    std::vector<BasicMatrix<T>> layer_inputs;
    layer_inputs.reserve(config_.num_layers);
    const std::size_t pool_rows = pool.rows();
    const KeyPositions full_positions{pool.positions(), start_position};

    for (std::size_t l = 0; l < config_.num_layers; ++l) {
        const auto& lw = weights_.layers[l];
        layer_inputs.push_back(x);
        LayerTape<T>* lt = tape ? &tape->layers[l] : nullptr;

        std::vector<double> inv_std;
        BasicMatrix<T> a = layer_norm_rows(x, static_cast<const BasicMatrix<T>*>(nullptr),
                                           static_cast<const BasicMatrix<T>*>(nullptr), lt ? &lt->attn_in : nullptr,
                                           &inv_std);
        const BasicMatrix<T> mem = pool_rows ? layer_norm_rows(pool.layer(l), static_cast<const BasicMatrix<T>*>(nullptr),
                                                               static_cast<const BasicMatrix<T>*>(nullptr))
                                             : BasicMatrix<T>(0, d);
        const Strategy strategy = policy.strategy_for_layer(l);
        BasicMatrix<T> heads_out(n, d);
        if (lt) {
            lt->x_in = x;
            lt->attn_inv_std = inv_std;
            lt->heads.resize(num_heads);
        }

        for (std::size_t h = 0; h < num_heads; ++h) {
            const auto& params = lw.heads[h];
            const BasicMatrix<T>& r = (*projected)[l][h];

            BasicMatrix<T> full_logits;
            BasicMatrix<T> full_probs;
            if (pool_rows && (need_full || strategy == Strategy::oracle)) {
                const BasicMatrix<T> q = matmul(a, params.w_q);
                const BasicMatrix<T> k = matmul(BasicMatrix<T>::vstack(mem, a), params.w_k_content);
                full_logits = relpos_logits_projected<T>(q, k, r, params.u_bias.row(0), params.v_bias.row(0),
                                                         full_positions);
                full_probs = softmax_rows(full_logits, std::sqrt(static_cast<double>(dh)));
            }

            SelectionResult sel;
            switch (strategy) {
                case Strategy::none:
                    sel.chosen_indices.resize(pool_rows);
                    std::iota(sel.chosen_indices.begin(), sel.chosen_indices.end(), std::size_t{0});
                    sel.scores.assign(pool_rows, 0.0);
                    break;
                case Strategy::recency:
                case Strategy::random:
                    sel = baseline_select(strategy, pool_rows, policy.selected_m, rng);
                    break;
                case Strategy::trams:
                    sel = top_m_select(trams_selection_scores(mem, params, policy.include_u_bias), policy.selected_m,
                                       policy.direction);
                    break;
                case Strategy::oracle:
                    sel = pool_rows ? oracle_select_from_probs(full_probs, pool_rows, policy.selected_m)
                                    : SelectionResult{};
                    break;
            }
            sel.strategy = strategy;
            sel.layer = l;
            sel.head = h;

            if (options.track_utilization && pool_rows) {
                double mass = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j : sel.chosen_indices) mass += static_cast<double>(full_probs(i, j));
                result.stats.utilization[l] += mass / static_cast<double>(n * num_heads);
            }
            if (options.probe && pool_rows) {
                options.probe(HeadContext<T>{l, h, a, mem, params, full_positions, full_logits, full_probs, sel,
                                             pool.token_ids()});
            }

            const bool all_rows = sel.chosen_indices.size() == pool_rows;
            std::vector<std::int64_t> sel_positions;
            sel_positions.reserve(sel.chosen_indices.size());
            for (std::size_t j : sel.chosen_indices) sel_positions.push_back(pool.positions()[j]);
            const BasicMatrix<T> mem_sel = all_rows ? mem : mem.gather_rows(sel.chosen_indices);
            const AttentionOutput<T> out = relpos_attention(a, mem_sel, params, r,
                                                            KeyPositions{sel_positions, start_position},
                                                            lt ? &lt->heads[h] : nullptr);
            double mem_mass = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < mem_sel.rows(); ++j) mem_mass += static_cast<double>(out.probs(i, j));
            result.stats.memory_mass[l] += mem_mass / static_cast<double>(n * num_heads);

            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < dh; ++c) heads_out(i, h * dh + c) = out.output(i, c);
            if (options.record_selections) result.stats.selections.push_back(std::move(sel));
        }

        BasicMatrix<T> attn = matmul(heads_out, lw.w_o);
        if (dropout > 0.0) {
            BasicMatrix<T> mask = dropout_mask<T>(n, d, dropout, rng);
            multiply_inplace(attn, mask);
            if (lt) lt->attn_drop_mask = std::move(mask);
        }
        if (lt) lt->heads_out = heads_out;
        for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += attn.data()[i];

        BasicMatrix<T> ffn_xhat;
        std::vector<double> ffn_inv;
        BasicMatrix<T> ffn_in = layer_norm_rows(x, &lw.ffn_norm_gain, &lw.ffn_norm_bias, &ffn_xhat, &ffn_inv);
        BasicMatrix<T> hidden_pre = matmul(ffn_in, lw.w_ffn_in);
        add_row_bias_inplace(hidden_pre, lw.b_ffn_in);
        BasicMatrix<T> hidden = hidden_pre;
        for (auto& v : hidden.values()) v = std::max(v, T{0});
        BasicMatrix<T> ffn = matmul(hidden, lw.w_ffn_out);
        add_row_bias_inplace(ffn, lw.b_ffn_out);
        if (dropout > 0.0) {
            BasicMatrix<T> mask = dropout_mask<T>(n, d, dropout, rng);
            multiply_inplace(ffn, mask);
            if (lt) lt->ffn_drop_mask = std::move(mask);
        }
        for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += ffn.data()[i];
        if (lt) {
            lt->ffn_xhat = std::move(ffn_xhat);
            lt->ffn_inv_std = std::move(ffn_inv);
            lt->ffn_in = std::move(ffn_in);
            lt->hidden_pre = std::move(hidden_pre);
            lt->hidden = std::move(hidden);
        }
    }

    BasicMatrix<T> final_xhat;
    std::vector<double> final_inv;
    BasicMatrix<T> y = layer_norm_rows(x, &weights_.final_norm_gain, &weights_.final_norm_bias, &final_xhat, &final_inv);
    result.logits = matmul(y, weights_.w_out);
    add_row_bias_inplace(result.logits, weights_.b_out);
    if (tape) {
        tape->final_xhat = std::move(final_xhat);
        tape->final_inv_std = std::move(final_inv);
        tape->final_out = std::move(y);
    }

    if (options.update_pool) {
        std::vector<std::int64_t> positions(n);
        std::iota(positions.begin(), positions.end(), start_position);
        pool.update(layer_inputs, positions, tokens);
    }
    return result;
}

template <typename T>
void TransformerXL<T>::backward_segment(const ForwardTape<T>& tape, const BasicMatrix<T>& d_logits,
                                        ModelWeights<T>& grads) const {
    const std::size_t n = tape.tokens.size();
    const std::size_t d = config_.d_model;
    const std::size_t dh = config_.head_dim();

    add_matmul_tn(grads.w_out, tape.final_out, d_logits);
    add_column_sums(grads.b_out, d_logits);
    const BasicMatrix<T> d_y = matmul_nt(d_logits, weights_.w_out);
    BasicMatrix<T> dx = affine_norm_backward(d_y, tape.final_xhat, tape.final_inv_std, weights_.final_norm_gain,
                                             grads.final_norm_gain, grads.final_norm_bias);

    for (std::size_t li = config_.num_layers; li-- > 0;) {
        const auto& lw = weights_.layers[li];
        auto& lg = grads.layers[li];
        const auto& lt = tape.layers[li];

        // FFN branch, x2 = x1 + drop(relu(LN(x1) W1 + b1) W2 + b2).
        BasicMatrix<T> d_ffn = dx;
        if (!lt.ffn_drop_mask.empty()) multiply_inplace(d_ffn, lt.ffn_drop_mask);
        add_matmul_tn(lg.w_ffn_out, lt.hidden, d_ffn);
        add_column_sums(lg.b_ffn_out, d_ffn);
        BasicMatrix<T> d_hidden = matmul_nt(d_ffn, lw.w_ffn_out);
        for (std::size_t i = 0; i < d_hidden.size(); ++i) {
            if (!(lt.hidden_pre.data()[i] > T{0})) d_hidden.data()[i] = T{0};
        }
        add_matmul_tn(lg.w_ffn_in, lt.ffn_in, d_hidden);
        add_column_sums(lg.b_ffn_in, d_hidden);
        const BasicMatrix<T> d_ffn_in = matmul_nt(d_hidden, lw.w_ffn_in);
        const BasicMatrix<T> d_from_ffn = affine_norm_backward(d_ffn_in, lt.ffn_xhat, lt.ffn_inv_std,
                                                               lw.ffn_norm_gain, lg.ffn_norm_gain, lg.ffn_norm_bias);
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] += d_from_ffn.data()[i];

        // Attention branch, x1 = x + drop(heads · W_o).
        BasicMatrix<T> d_attn = dx;
        if (!lt.attn_drop_mask.empty()) multiply_inplace(d_attn, lt.attn_drop_mask);
        add_matmul_tn(lg.w_o, lt.heads_out, d_attn);
        const BasicMatrix<T> d_heads = matmul_nt(d_attn, lw.w_o);
        BasicMatrix<T> d_attn_in(n, d);
        for (std::size_t h = 0; h < config_.num_heads; ++h) {
            if (lt.heads[h].r.rows() != table_.max_distance()) {
                throw UsageError("backward_segment: tape was recorded with a different distance table; "
                                 "call refresh_caches() with a large enough distance first");
            }
            const BasicMatrix<T> d_out = d_heads.column_block(h * dh, dh);
            const BasicMatrix<T> d_a =
                relpos_attention_backward(lt.heads[h], lw.heads[h], table_, d_out, lg.heads[h]);
            for (std::size_t i = 0; i < d_a.size(); ++i) d_attn_in.data()[i] += d_a.data()[i];
        }
        const BasicMatrix<T> d_from_attn = layer_norm_backward(d_attn_in, lt.attn_in, lt.attn_inv_std);
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] += d_from_attn.data()[i];
    }

    for (std::size_t i = 0; i < n; ++i) {
        auto dst = grads.embedding.row(static_cast<std::size_t>(tape.tokens[i]));
        const auto src = dx.row(i);
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
}

Metrics nll_to_metrics(double total_nll_nats, std::size_t token_count) {
    if (token_count == 0) throw UsageError("nll_to_metrics: token_count must be >= 1");
    const double mean = total_nll_nats / static_cast<double>(token_count);
    return {std::exp(mean), mean / std::numbers::ln2};
}

template <typename T>
double segment_nll(const BasicMatrix<T>& logits, std::span<const std::int32_t> targets) {
    if (targets.size() > logits.rows()) throw UsageError("segment_nll: more targets than logit rows");
    double total = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto row = logits.row(i);
        double mx = -INFINITY;
        for (T v : row) mx = std::max(mx, static_cast<double>(v));
        double sum = 0.0;
        for (T v : row) sum += std::exp(static_cast<double>(v) - mx);
        const auto t = static_cast<std::size_t>(targets[i]);
        if (t >= row.size()) throw UsageError("segment_nll: target id outside vocabulary");
        total += (std::log(sum) + mx) - static_cast<double>(row[t]);
    }
    return total;
}

#define TRAMS_INSTANTIATE_MODEL(T)                                                                     \
    template struct ModelWeights<T>;                                                                    \
    template class TransformerXL<T>;                                                                    \
    template double segment_nll(const BasicMatrix<T>&, std::span<const std::int32_t>);

TRAMS_INSTANTIATE_MODEL(float)
TRAMS_INSTANTIATE_MODEL(double)

#undef TRAMS_INSTANTIATE_MODEL

}  // namespace trams
