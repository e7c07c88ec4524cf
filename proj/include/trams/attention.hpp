// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trams/numerics.hpp"

namespace trams {

/// Logit written into masked (future) positions before the softmax.
inline constexpr double kMaskedLogit = -1e9;

/// Projections of one attention head. Matrices map the model width d onto the
/// head width d_h; the two biases are stored as 1×d_h rows.
template <typename T>
struct AttentionParams {
    BasicMatrix<T> w_q;          ///< d × d_h
    BasicMatrix<T> w_k_content;  ///< d × d_h, applied to hidden states
    BasicMatrix<T> w_k_pos;      ///< d × d_h, applied to sinusoidal distance encodings
    BasicMatrix<T> w_v;          ///< d × d_h
    BasicMatrix<T> u_bias;       ///< 1 × d_h, content bias
    BasicMatrix<T> v_bias;       ///< 1 × d_h, position bias

    std::size_t model_dim() const noexcept { return w_q.rows(); }
    std::size_t head_dim() const noexcept { return w_q.cols(); }

    static AttentionParams zeros(std::size_t d, std::size_t d_head);
    /// Throws UsageError unless all six members agree on (d, d_h).
    void validate() const;
    friend bool operator==(const AttentionParams&, const AttentionParams&) = default;
};

/// Fixed sinusoidal encodings R_k for distances k ∈ [0, rows).
template <typename T>
struct RelPosTable {
    BasicMatrix<T> embeddings;  ///< max_distance × d

    static RelPosTable sinusoidal(std::size_t max_distance, std::size_t d);
    std::size_t max_distance() const noexcept { return embeddings.rows(); }
};

template <typename T>
struct AttentionOutput {
    BasicMatrix<T> output;  ///< N × d_h
    BasicMatrix<T> probs;   ///< N × (M' + N); masked entries are exactly 0
};

template <typename T>
struct ProjectedQkv {
    BasicMatrix<T> q;  ///< N × d_h
    BasicMatrix<T> k;  ///< (M' + N) × d_h
    BasicMatrix<T> v;  ///< (M' + N) × d_h
};

/// Q = h·W_Q, K = [mem; h]·W_K, V = [mem; h]·W_V.
template <typename T>
ProjectedQkv<T> project_qkv(const BasicMatrix<T>& h, const BasicMatrix<T>& mem, const AttentionParams<T>& params);

/// Writes kMaskedLogit into every (i, mem_rows + j) entry with j > i.
template <typename T>
void apply_causal_mask(BasicMatrix<T>& logits, std::size_t mem_rows);

/// Content-only attention softmax(QKᵀ / scale)·V over [mem; h]. Memory rows are
/// visible to every query; the segment part is causal. scale <= 0 selects √d_h.
template <typename T>
AttentionOutput<T> attend_standard(const BasicMatrix<T>& h, const BasicMatrix<T>& mem,
                                   const AttentionParams<T>& params, double scale = 0.0);

/// Raw (unscaled, unmasked) logits Q·Kᵀ in the standard association order.
template <typename T>
BasicMatrix<T> content_logits(const BasicMatrix<T>& h, const BasicMatrix<T>& mem, const AttentionParams<T>& params);

/// W_K·W_Qᵀ (d × d): the map that turns hidden states into reformulated keys.
template <typename T>
BasicMatrix<T> reformulation_map(const AttentionParams<T>& params);

/// K' = mem · W_K · W_Qᵀ, so that h·K'ᵀ equals (h W_Q)(mem W_K)ᵀ.
template <typename T>
BasicMatrix<T> reformulate_keys(const BasicMatrix<T>& mem, const AttentionParams<T>& params);

/// Key layout for relative-position attention: absolute positions of the
/// memory rows (strictly before the segment) and the first segment position.
/// Segment token i sits at `segment_start + i`.
struct KeyPositions {
    std::span<const std::int64_t> memory;
    std::int64_t segment_start = 0;
};

/// Relative-position logits
///   A[i][j] = q_i·k_j + q_i·r_{i−j} + u·k_j + v·r_{i−j}
/// with q = h W_q, k = [mem; h] W_k^E, r_t = R_t W_k^R. Unscaled; masked entries
/// hold kMaskedLogit. Throws UsageError if a distance falls outside `table`.
template <typename T>
BasicMatrix<T> relpos_logits(const BasicMatrix<T>& h, const BasicMatrix<T>& mem, const AttentionParams<T>& params,
                             const RelPosTable<T>& table, const KeyPositions& positions);

/// Same as relpos_logits but from already projected q (N×d_h), k ((M'+N)×d_h)
/// and r = R·W_k^R (max_distance × d_h).
template <typename T>
BasicMatrix<T> relpos_logits_projected(const BasicMatrix<T>& q, const BasicMatrix<T>& k, const BasicMatrix<T>& r,
                                       std::span<const T> u, std::span<const T> v, const KeyPositions& positions);

/// Distance i − j for every (query, key) pair, row-major N × (M'+N); masked pairs hold -1.
std::vector<std::int64_t> pair_distances(std::size_t queries, const KeyPositions& positions);

/// Intermediates of one relative-position head kept for the backward pass.
template <typename T>
struct RelPosHeadTape {
    BasicMatrix<T> keys_input;  ///< [mem; h], (M'+N) × d
    BasicMatrix<T> q;
    BasicMatrix<T> k;
    BasicMatrix<T> v;
    BasicMatrix<T> r;  ///< projected distance encodings
    BasicMatrix<T> probs;
    std::vector<std::int64_t> distances;
    std::size_t mem_rows = 0;
};

/// Full relative-position attention for one head. `r` is table·W_k^R. When
/// `tape` is non-null it receives what relpos_attention_backward needs.
template <typename T>
AttentionOutput<T> relpos_attention(const BasicMatrix<T>& h, const BasicMatrix<T>& mem,
                                    const AttentionParams<T>& params, const BasicMatrix<T>& r,
                                    const KeyPositions& positions, RelPosHeadTape<T>* tape = nullptr);

/// Accumulates parameter gradients into `grad` (and W_k^R's gradient via
/// `table`) and returns dLoss/dh for the segment rows. Memory rows are treated
/// as constants.
template <typename T>
BasicMatrix<T> relpos_attention_backward(const RelPosHeadTape<T>& tape, const AttentionParams<T>& params,
                                         const RelPosTable<T>& table, const BasicMatrix<T>& d_output,
                                         AttentionParams<T>& grad);

struct LogitDecomposition {
    double norm_q = 0.0;
    double norm_k = 0.0;
    double cos_qk = 0.0;
    double dot = 0.0;
    /// √d · ‖k‖ · cos⟨q, k⟩, the constant-query-norm approximation of q·k.
    double sqrt_d_approximation = 0.0;
    bool degenerate = false;

    double reconstructed() const noexcept { return norm_q * norm_k * cos_qk; }
};

template <typename T>
LogitDecomposition decompose_logit(std::span<const T> q_row, std::span<const T> k_row);

}  // namespace trams
