// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#include "trams/attention.hpp"

#include <cmath>
#include <string>

namespace trams {

namespace {

template <typename T>
BasicMatrix<T> add_row_bias(const BasicMatrix<T>& x, const BasicMatrix<T>& bias) {
    BasicMatrix<T> out = x;
    const auto b = bias.row(0);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
    }
    return out;
}

template <typename T>
void require_width(const char* op, const BasicMatrix<T>& x, std::size_t d) {
    if (!x.empty() && x.cols() != d) {
        throw UsageError(std::string(op) + ": expected " + std::to_string(d) + " columns, got " + x.shape_string());
    }
}

}  // namespace

template <typename T>
AttentionParams<T> AttentionParams<T>::zeros(std::size_t d, std::size_t d_head) {
    return AttentionParams{BasicMatrix<T>(d, d_head), BasicMatrix<T>(d, d_head), BasicMatrix<T>(d, d_head),
                           BasicMatrix<T>(d, d_head), BasicMatrix<T>(1, d_head), BasicMatrix<T>(1, d_head)};
}

template <typename T>
void AttentionParams<T>::validate() const {
    const std::size_t d = w_q.rows();
    const std::size_t dh = w_q.cols();
    for (const auto* m : {&w_k_content, &w_k_pos, &w_v}) {
        if (m->rows() != d || m->cols() != dh) {
            throw UsageError("AttentionParams: projection " + m->shape_string() + " inconsistent with w_q " +
                             w_q.shape_string());
        }
    }
    for (const auto* b : {&u_bias, &v_bias}) {
        if (b->rows() != 1 || b->cols() != dh) {
            throw UsageError("AttentionParams: bias " + b->shape_string() + " must be [1x" + std::to_string(dh) + "]");
        }
    }
}

template <typename T>
RelPosTable<T> RelPosTable<T>::sinusoidal(std::size_t max_distance, std::size_t d) {
    if (d == 0 || d % 2 != 0) throw UsageError("RelPosTable: width must be even and positive");
    RelPosTable table{BasicMatrix<T>(max_distance, d)};
    const std::size_t half = d / 2;
    for (std::size_t k = 0; k < max_distance; ++k) {
        for (std::size_t i = 0; i < half; ++i) {
            const double inv_freq = 1.0 / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
            const double angle = static_cast<double>(k) * inv_freq;
            table.embeddings(k, i) = static_cast<T>(std::sin(angle));
            table.embeddings(k, half + i) = static_cast<T>(std::cos(angle));
        }
    }
    return table;
}

template <typename T>
ProjectedQkv<T> project_qkv(const BasicMatrix<T>& h, const BasicMatrix<T>& mem, const AttentionParams<T>& params) {
    params.validate();
    require_width("project_qkv(h)", h, params.model_dim());
    require_width("project_qkv(mem)", mem, params.model_dim());
    const BasicMatrix<T> keys_input = BasicMatrix<T>::vstack(mem, h);
    return {matmul(h, params.w_q), matmul(keys_input, params.w_k_content), matmul(keys_input, params.w_v)};
}

template <typename T>
void apply_causal_mask(BasicMatrix<T>& logits, std::size_t mem_rows) {
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        for (std::size_t j = mem_rows + i + 1; j < logits.cols(); ++j) logits(i, j) = static_cast<T>(kMaskedLogit);
    }
}

namespace {

template <typename T>
BasicMatrix<T> masked_softmax(const BasicMatrix<T>& logits, std::size_t mem_rows, double scale) {
    BasicMatrix<T> probs = softmax_rows(logits, scale);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        for (std::size_t j = mem_rows + i + 1; j < probs.cols(); ++j) probs(i, j) = T{0};
    }
    return probs;
}

}  // namespace

template <typename T>
BasicMatrix<T> content_logits(const BasicMatrix<T>& h, const BasicMatrix<T>& mem, const AttentionParams<T>& params) {
    const auto qkv = project_qkv(h, mem, params);
    return matmul_nt(qkv.q, qkv.k);
}

template <typename T>
AttentionOutput<T> attend_standard(const BasicMatrix<T>& h, const BasicMatrix<T>& mem,
                                   const AttentionParams<T>& params, double scale) {
    const auto qkv = project_qkv(h, mem, params);
    if (scale <= 0.0) scale = std::sqrt(static_cast<double>(params.head_dim()));
    BasicMatrix<T> logits = matmul_nt(qkv.q, qkv.k);
    apply_causal_mask(logits, mem.rows());
    AttentionOutput<T> out;
    out.probs = masked_softmax(logits, mem.rows(), scale);
    out.output = matmul(out.probs, qkv.v);
    return out;
}

template <typename T>
BasicMatrix<T> reformulation_map(const AttentionParams<T>& params) {
    params.validate();
    return matmul_nt(params.w_k_content, params.w_q);
}

template <typename T>
BasicMatrix<T> reformulate_keys(const BasicMatrix<T>& mem, const AttentionParams<T>& params) {
    require_width("reformulate_keys", mem, params.model_dim());
    if (mem.rows() == 0) return BasicMatrix<T>(0, params.model_dim());
    return matmul(mem, reformulation_map(params));
}

std::vector<std::int64_t> pair_distances(std::size_t queries, const KeyPositions& positions) {
    const std::size_t mem_rows = positions.memory.size();
    const std::size_t keys = mem_rows + queries;
    std::vector<std::int64_t> dist(queries * keys, -1);
    for (std::size_t i = 0; i < queries; ++i) {
        const std::int64_t qpos = positions.segment_start + static_cast<std::int64_t>(i);
        for (std::size_t j = 0; j < mem_rows; ++j) {
            const std::int64_t d = qpos - positions.memory[j];
            if (d <= 0) {
                throw UsageError("relpos: memory position " + std::to_string(positions.memory[j]) +
                                 " is not before query position " + std::to_string(qpos));
            }
            dist[i * keys + j] = d;
        }
        for (std::size_t j = 0; j <= i; ++j) dist[i * keys + mem_rows + j] = static_cast<std::int64_t>(i - j);
    }
    return dist;
}

template <typename T>
BasicMatrix<T> relpos_logits_projected(const BasicMatrix<T>& q, const BasicMatrix<T>& k, const BasicMatrix<T>& r,
                                       std::span<const T> u, std::span<const T> v, const KeyPositions& positions) {
    const std::size_t n = q.rows();
    const std::size_t keys = positions.memory.size() + n;
    if (k.rows() != keys) {
        throw UsageError("relpos_logits: expected " + std::to_string(keys) + " key rows, got " + k.shape_string());
    }
    const auto dist = pair_distances(n, positions);

    BasicMatrix<T> qu = q;
    BasicMatrix<T> qv = q;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < q.cols(); ++c) {
            qu(i, c) += u[c];
            qv(i, c) += v[c];
        }
    }
    BasicMatrix<T> logits = matmul_nt(qu, k);
    const BasicMatrix<T> by_distance = matmul_nt(qv, r);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < keys; ++j) {
            const std::int64_t d = dist[i * keys + j];
            if (d < 0) {
                logits(i, j) = static_cast<T>(kMaskedLogit);
                continue;
            }
            if (static_cast<std::size_t>(d) >= r.rows()) {
                throw UsageError("relpos_logits: distance " + std::to_string(d) + " exceeds table size " +
                                 std::to_string(r.rows()));
            }
            logits(i, j) = static_cast<T>(static_cast<double>(logits(i, j)) +
                                          static_cast<double>(by_distance(i, static_cast<std::size_t>(d))));
        }
    }
    return logits;
}

template <typename T>
BasicMatrix<T> relpos_logits(const BasicMatrix<T>& h, const BasicMatrix<T>& mem, const AttentionParams<T>& params,
                             const RelPosTable<T>& table, const KeyPositions& positions) {
    if (mem.rows() != positions.memory.size()) {
        throw UsageError("relpos_logits: " + std::to_string(positions.memory.size()) + " memory positions for " +
                         std::to_string(mem.rows()) + " memory rows");
    }
    const auto qkv = project_qkv(h, mem, params);
    const BasicMatrix<T> r = matmul(table.embeddings, params.w_k_pos);
    return relpos_logits_projected<T>(qkv.q, qkv.k, r, params.u_bias.row(0), params.v_bias.row(0), positions);
}

template <typename T>
AttentionOutput<T> relpos_attention(const BasicMatrix<T>& h, const BasicMatrix<T>& mem,
                                    const AttentionParams<T>& params, const BasicMatrix<T>& r,
                                    const KeyPositions& positions, RelPosHeadTape<T>* tape) {
    params.validate();
    require_width("relpos_attention(h)", h, params.model_dim());
    require_width("relpos_attention(mem)", mem, params.model_dim());
    if (mem.rows() != positions.memory.size()) {
        throw UsageError("relpos_attention: memory rows and positions disagree");
    }
    BasicMatrix<T> keys_input = BasicMatrix<T>::vstack(mem, h);
    BasicMatrix<T> q = matmul(h, params.w_q);
    BasicMatrix<T> k = matmul(keys_input, params.w_k_content);
    BasicMatrix<T> v = matmul(keys_input, params.w_v);
    const BasicMatrix<T> logits =
        relpos_logits_projected<T>(q, k, r, params.u_bias.row(0), params.v_bias.row(0), positions);
    const double scale = std::sqrt(static_cast<double>(params.head_dim()));

    AttentionOutput<T> out;
    out.probs = masked_softmax(logits, mem.rows(), scale);
    out.output = matmul(out.probs, v);
    if (tape) {
        tape->keys_input = std::move(keys_input);
        tape->q = std::move(q);
        tape->k = std::move(k);
        tape->v = std::move(v);
        tape->r = r;
        tape->probs = out.probs;
        tape->distances = pair_distances(h.rows(), positions);
        tape->mem_rows = mem.rows();
    }
    return out;
}

template <typename T>
BasicMatrix<T> relpos_attention_backward(const RelPosHeadTape<T>& tape, const AttentionParams<T>& params,
                                         const RelPosTable<T>& table, const BasicMatrix<T>& d_output,
                                         AttentionParams<T>& grad) {
    const std::size_t n = tape.q.rows();
    const std::size_t keys = tape.k.rows();
    const std::size_t dh = params.head_dim();
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // Through out = P·V.
    const BasicMatrix<T> d_probs = matmul_nt(d_output, tape.v);
    const BasicMatrix<T> d_v = matmul_tn(tape.probs, d_output);

    // Through the softmax; masked entries have P = 0 and drop out.
    BasicMatrix<T> d_logits(n, keys);
    for (std::size_t i = 0; i < n; ++i) {
        double inner = 0.0;
        for (std::size_t j = 0; j < keys; ++j) {
            inner += static_cast<double>(tape.probs(i, j)) * static_cast<double>(d_probs(i, j));
        }
        for (std::size_t j = 0; j < keys; ++j) {
            const double p = static_cast<double>(tape.probs(i, j));
            d_logits(i, j) = static_cast<T>(p * (static_cast<double>(d_probs(i, j)) - inner) * inv_scale);
        }
    }

    // Content terms (q + u)·k.
    const BasicMatrix<T> qu = add_row_bias(tape.q, params.u_bias);
    const BasicMatrix<T> qv = add_row_bias(tape.q, params.v_bias);
    BasicMatrix<T> d_q = matmul(d_logits, tape.k);
    const BasicMatrix<T> d_k = matmul_tn(d_logits, qu);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < dh; ++c) grad.u_bias(0, c) += d_q(i, c);

    // Distance terms (q + v)·r_{i−j}.
    BasicMatrix<T> d_by_distance(n, tape.r.rows());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < keys; ++j) {
            const std::int64_t d = tape.distances[i * keys + j];
            if (d >= 0) d_by_distance(i, static_cast<std::size_t>(d)) += d_logits(i, j);
        }
    }
    const BasicMatrix<T> d_qv = matmul(d_by_distance, tape.r);
    const BasicMatrix<T> d_r = matmul_tn(d_by_distance, qv);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < dh; ++c) {
            grad.v_bias(0, c) += d_qv(i, c);
            d_q(i, c) += d_qv(i, c);
        }
    }
    add_matmul_tn(grad.w_k_pos, table.embeddings, d_r);

    // Projections.
    BasicMatrix<T> h(n, params.model_dim());
    for (std::size_t i = 0; i < n; ++i) {
        const auto src = tape.keys_input.row(tape.mem_rows + i);
        std::copy(src.begin(), src.end(), h.row(i).begin());
    }
    add_matmul_tn(grad.w_q, h, d_q);
    add_matmul_tn(grad.w_k_content, tape.keys_input, d_k);
    add_matmul_tn(grad.w_v, tape.keys_input, d_v);

    BasicMatrix<T> d_h = matmul_nt(d_q, params.w_q);
    const BasicMatrix<T> d_keys = matmul_nt(d_k, params.w_k_content);
    const BasicMatrix<T> d_values = matmul_nt(d_v, params.w_v);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < params.model_dim(); ++c) {
            d_h(i, c) += d_keys(tape.mem_rows + i, c) + d_values(tape.mem_rows + i, c);
        }
    }
    return d_h;
}

template <typename T>
LogitDecomposition decompose_logit(std::span<const T> q_row, std::span<const T> k_row) {
    LogitDecomposition out;
    out.norm_q = l2_norm(q_row);
    out.norm_k = l2_norm(k_row);
    out.dot = dot(q_row, k_row);
    out.cos_qk = cosine(q_row, k_row, &out.degenerate);
    out.sqrt_d_approximation = std::sqrt(static_cast<double>(q_row.size())) * out.norm_k * out.cos_qk;
    return out;
}

#define TRAMS_INSTANTIATE_ATTENTION(T)                                                                          \
    template struct AttentionParams<T>;                                                                          \
    template struct RelPosTable<T>;                                                                              \
    template ProjectedQkv<T> project_qkv(const BasicMatrix<T>&, const BasicMatrix<T>&, const AttentionParams<T>&); \
    template void apply_causal_mask(BasicMatrix<T>&, std::size_t);                                               \
    template AttentionOutput<T> attend_standard(const BasicMatrix<T>&, const BasicMatrix<T>&,                    \
                                                const AttentionParams<T>&, double);                              \
    template BasicMatrix<T> content_logits(const BasicMatrix<T>&, const BasicMatrix<T>&, const AttentionParams<T>&); \
    template BasicMatrix<T> reformulation_map(const AttentionParams<T>&);                                        \
    template BasicMatrix<T> reformulate_keys(const BasicMatrix<T>&, const AttentionParams<T>&);                  \
    template BasicMatrix<T> relpos_logits(const BasicMatrix<T>&, const BasicMatrix<T>&, const AttentionParams<T>&, \
                                          const RelPosTable<T>&, const KeyPositions&);                           \
    template BasicMatrix<T> relpos_logits_projected(const BasicMatrix<T>&, const BasicMatrix<T>&,                \
                                                    const BasicMatrix<T>&, std::span<const T>, std::span<const T>, \
                                                    const KeyPositions&);                                        \
    template AttentionOutput<T> relpos_attention(const BasicMatrix<T>&, const BasicMatrix<T>&,                   \
                                                 const AttentionParams<T>&, const BasicMatrix<T>&,               \
                                                 const KeyPositions&, RelPosHeadTape<T>*);                       \
    template BasicMatrix<T> relpos_attention_backward(const RelPosHeadTape<T>&, const AttentionParams<T>&,       \
                                                      const RelPosTable<T>&, const BasicMatrix<T>&,              \
                                                      AttentionParams<T>&);                                      \
    template LogitDecomposition decompose_logit(std::span<const T>, std::span<const T>);

TRAMS_INSTANTIATE_ATTENTION(float)
TRAMS_INSTANTIATE_ATTENTION(double)

#undef TRAMS_INSTANTIATE_ATTENTION

}  // namespace trams
