// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trams/attention.hpp"
#include "trams/numerics.hpp"

namespace trams {

enum class Strategy { trams, oracle, random, recency, none };
enum class RankDirection { descending, ascending, abs_ascending };

std::string_view to_string(Strategy s) noexcept;
std::string_view to_string(RankDirection d) noexcept;
/// Throws UsageError on an unknown name.
Strategy parse_strategy(std::string_view name);
RankDirection parse_direction(std::string_view name);

/// FIFO pool of per-layer hidden states from earlier segments. Every layer holds
/// the same rows; row r of every layer belongs to absolute position positions()[r].
template <typename T>
class MemoryPool {
public:
    MemoryPool() = default;
    MemoryPool(std::size_t num_layers, std::size_t width, std::size_t capacity);

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t rows() const noexcept { return positions_.size(); }
    std::size_t num_layers() const noexcept { return layers_.size(); }
    std::size_t width() const noexcept { return width_; }
    bool empty() const noexcept { return positions_.empty(); }

    const BasicMatrix<T>& layer(std::size_t l) const { return layers_.at(l); }
    std::span<const std::int64_t> positions() const noexcept { return positions_; }
    std::span<const std::int32_t> token_ids() const noexcept { return token_ids_; }

    /// Appends one row per new position to every layer and evicts the oldest rows
    /// beyond capacity. Positions must continue the strictly increasing order.
    void update(std::span<const BasicMatrix<T>> new_hidden, std::span<const std::int64_t> positions,
                std::span<const std::int32_t> token_ids);
    void clear() noexcept;

    friend bool operator==(const MemoryPool&, const MemoryPool&) = default;

private:
    std::size_t capacity_ = 0;
    std::size_t width_ = 0;
    std::vector<BasicMatrix<T>> layers_;
    std::vector<std::int64_t> positions_;
    std::vector<std::int32_t> token_ids_;
};

/// Functional form of MemoryPool::update.
template <typename T>
MemoryPool<T> pool_update(MemoryPool<T> pool, std::span<const BasicMatrix<T>> new_hidden,
                          std::span<const std::int64_t> positions, std::span<const std::int32_t> token_ids);

struct SelectionResult {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::vector<std::size_t> chosen_indices;  ///< pool rows, strictly increasing
    std::vector<double> scores;               ///< aligned with chosen_indices
    std::vector<double> pool_scores;          ///< one per pool row when the strategy scores rows
    Strategy strategy = Strategy::none;
};

struct ScoreVector {
    std::vector<double> values;
    std::size_t zero_norm_rows = 0;  ///< rows scored 0 because ‖K'_j‖ = 0
};

/// s_j = cos⟨K'_j, 𝟙⟩ · ‖K'_j‖ for every row of the reformulated keys.
ScoreVector trams_scores(const Matrix& reformulated_keys);
ScoreVector trams_scores(const MatrixD& reformulated_keys);

/// The same scores without forming K': contracts W_Q's column sums through W_K
/// once and takes one dot product per memory row. With `include_u_bias`, adds the
/// query-independent content-bias logit u·(m_j W_k^E), on the same 1/√d scale.
template <typename T>
std::vector<double> trams_selection_scores(const BasicMatrix<T>& memory, const AttentionParams<T>& params,
                                           bool include_u_bias);

/// Indices of the m extremal scores in `direction`, ties going to the larger
/// (more recent) index, returned in temporal order.
SelectionResult top_m_select(std::span<const double> scores, std::size_t m, RankDirection direction);

/// Per-memory-row attention mass summed over all queries, from an
/// N × (M' + N) probability matrix whose first `memory_rows` columns are memory.
std::vector<double> memory_column_mass(const Matrix& probs, std::size_t memory_rows);
std::vector<double> memory_column_mass(const MatrixD& probs, std::size_t memory_rows);

/// Oracle from precomputed full-pool probabilities.
template <typename T>
SelectionResult oracle_select_from_probs(const BasicMatrix<T>& probs, std::size_t memory_rows, std::size_t m);

/// Oracle under content-only attention: top-m pool rows by summed post-softmax
/// mass over the N queries of the segment, using the full-pool softmax.
template <typename T>
SelectionResult oracle_select(const BasicMatrix<T>& h, const BasicMatrix<T>& pool_layer,
                              const AttentionParams<T>& params, std::size_t m);

/// Random (seeded, without replacement) or recency (last m) selection.
SelectionResult baseline_select(Strategy kind, std::size_t pool_rows, std::size_t m, Rng& rng);

struct TraceRecord {
    std::int64_t position = 0;
    std::string token;
    std::optional<double> score;
    bool selected = false;
    std::size_t layer = 0;
    std::size_t head = 0;
};

using Detokenizer = std::function<std::string(std::int32_t)>;

/// One record per pool row describing whether `result` picked it.
template <typename T>
std::vector<TraceRecord> selection_trace(const SelectionResult& result, const MemoryPool<T>& pool,
                                         const Detokenizer& detok);

/// {"position":…,"token":…,"score":…,"selected":…,"layer":…,"head":…}
std::string to_json_line(const TraceRecord& record);
TraceRecord trace_record_from_json_line(std::string_view line);

}  // namespace trams
