// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#include "trams/memory_select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace trams {

std::string_view to_string(Strategy s) noexcept {
    switch (s) {
        case Strategy::trams: return "trams";
        case Strategy::oracle: return "oracle";
        case Strategy::random: return "random";
        case Strategy::recency: return "recency";
        case Strategy::none: return "none";
    }
    return "none";
}

std::string_view to_string(RankDirection d) noexcept {
    switch (d) {
        case RankDirection::descending: return "descending";
        case RankDirection::ascending: return "ascending";
        case RankDirection::abs_ascending: return "abs_ascending";
    }
    return "descending";
}

Strategy parse_strategy(std::string_view name) {
    for (Strategy s : {Strategy::trams, Strategy::oracle, Strategy::random, Strategy::recency, Strategy::none}) {
        if (to_string(s) == name) return s;
    }
    throw UsageError("unknown strategy '" + std::string(name) + "' (expected trams|oracle|random|recency|none)");
}

RankDirection parse_direction(std::string_view name) {
    for (RankDirection d : {RankDirection::descending, RankDirection::ascending, RankDirection::abs_ascending}) {
        if (to_string(d) == name) return d;
    }
    throw UsageError("unknown metric direction '" + std::string(name) +
                     "' (expected descending|ascending|abs_ascending)");
}

// ---- pool --------------------------------------------------------------------

template <typename T>
MemoryPool<T>::MemoryPool(std::size_t num_layers, std::size_t width, std::size_t capacity)
    : capacity_(capacity), width_(width), layers_(num_layers, BasicMatrix<T>(0, width)) {}

template <typename T>
void MemoryPool<T>::update(std::span<const BasicMatrix<T>> new_hidden, std::span<const std::int64_t> positions,
                           std::span<const std::int32_t> token_ids) {
    if (new_hidden.size() != layers_.size()) {
        throw UsageError("pool_update: got " + std::to_string(new_hidden.size()) + " layers, pool has " +
                         std::to_string(layers_.size()));
    }
    const std::size_t n = positions.size();
    if (token_ids.size() != n) throw UsageError("pool_update: positions and token ids differ in length");
    for (const auto& h : new_hidden) {
        if (h.rows() != n || (n > 0 && h.cols() != width_)) {
            throw UsageError("pool_update: hidden state " + h.shape_string() + " does not match " +
                             std::to_string(n) + " rows of width " + std::to_string(width_));
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t prev = i > 0 ? positions[i - 1] : (positions_.empty() ? INT64_MIN : positions_.back());
        if (positions[i] <= prev) throw UsageError("pool_update: positions must be strictly increasing");
    }

    const std::size_t keep_old = std::min(rows(), capacity_ >= n ? capacity_ - n : 0);
    const std::size_t drop_old = rows() - keep_old;
    const std::size_t skip_new = n > capacity_ ? n - capacity_ : 0;

    std::vector<std::size_t> old_rows(keep_old);
    std::iota(old_rows.begin(), old_rows.end(), drop_old);
    std::vector<std::size_t> new_rows(n - skip_new);
    std::iota(new_rows.begin(), new_rows.end(), skip_new);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        layers_[l] = BasicMatrix<T>::vstack(layers_[l].gather_rows(old_rows), new_hidden[l].gather_rows(new_rows));
        if (layers_[l].rows() == 0) layers_[l] = BasicMatrix<T>(0, width_);
    }
    positions_.erase(positions_.begin(), positions_.begin() + static_cast<std::ptrdiff_t>(drop_old));
    token_ids_.erase(token_ids_.begin(), token_ids_.begin() + static_cast<std::ptrdiff_t>(drop_old));
    positions_.insert(positions_.end(), positions.begin() + static_cast<std::ptrdiff_t>(skip_new), positions.end());
    token_ids_.insert(token_ids_.end(), token_ids.begin() + static_cast<std::ptrdiff_t>(skip_new), token_ids.end());
}

template <typename T>
void MemoryPool<T>::clear() noexcept {
    for (auto& l : layers_) l = BasicMatrix<T>(0, width_);
    positions_.clear();
    token_ids_.clear();
}

template <typename T>
MemoryPool<T> pool_update(MemoryPool<T> pool, std::span<const BasicMatrix<T>> new_hidden,
                          std::span<const std::int64_t> positions, std::span<const std::int32_t> token_ids) {
    pool.update(new_hidden, positions, token_ids);
    return pool;
}

// ---- scores --------------------------------------------------------------------

namespace {

template <typename T>
ScoreVector trams_scores_impl(const BasicMatrix<T>& k) {
    ScoreVector out;
    out.values.resize(k.rows());
    const std::vector<T> ones(k.cols(), T{1});
    for (std::size_t j = 0; j < k.rows(); ++j) {
        bool degenerate = false;
        const double c = cosine<T>(k.row(j), ones, &degenerate);
        if (degenerate) {
            ++out.zero_norm_rows;
            out.values[j] = 0.0;
            continue;
        }
        out.values[j] = c * l2_norm(k.row(j));
    }
    return out;
}

template <typename T>
std::vector<double> column_mass_impl(const BasicMatrix<T>& probs, std::size_t memory_rows) {
    if (memory_rows > probs.cols()) throw UsageError("memory_column_mass: more memory rows than columns");
    std::vector<double> mass(memory_rows, 0.0);
    for (std::size_t i = 0; i < probs.rows(); ++i)
        for (std::size_t j = 0; j < memory_rows; ++j) mass[j] += static_cast<double>(probs(i, j));
    return mass;
}

}  // namespace

ScoreVector trams_scores(const Matrix& reformulated_keys) { return trams_scores_impl(reformulated_keys); }
ScoreVector trams_scores(const MatrixD& reformulated_keys) { return trams_scores_impl(reformulated_keys); }

template <typename T>
std::vector<double> trams_selection_scores(const BasicMatrix<T>& memory, const AttentionParams<T>& params,
                                           bool include_u_bias) {
    params.validate();
    const std::size_t d = params.model_dim();
    const std::size_t dh = params.head_dim();
    if (!memory.empty() && memory.cols() != d) {
        throw UsageError("trams_selection_scores: memory " + memory.shape_string() + " has wrong width");
    }
    // K'·𝟙 = m W_K (W_Qᵀ 𝟙); W_Qᵀ𝟙 is the column sum of W_Q.
    std::vector<double> query_dir(dh, 0.0);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < dh; ++c) query_dir[c] += static_cast<double>(params.w_q(r, c));
    if (include_u_bias) {
        for (std::size_t c = 0; c < dh; ++c) query_dir[c] += static_cast<double>(params.u_bias(0, c));
    }
    std::vector<double> key_dir(d, 0.0);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < dh; ++c) key_dir[r] += static_cast<double>(params.w_k_content(r, c)) * query_dir[c];

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> scores(memory.rows());
    for (std::size_t j = 0; j < memory.rows(); ++j) {
        double s = 0.0;
        const auto row = memory.row(j);
        for (std::size_t r = 0; r < d; ++r) s += static_cast<double>(row[r]) * key_dir[r];
        scores[j] = s * inv_sqrt_d;
    }
    return scores;
}

// ---- selection -----------------------------------------------------------------

SelectionResult top_m_select(std::span<const double> scores, std::size_t m, RankDirection direction) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto key = [&](std::size_t i) {
        switch (direction) {
            case RankDirection::descending: return -scores[i];
            case RankDirection::ascending: return scores[i];
            case RankDirection::abs_ascending: return std::abs(scores[i]);
        }
        return -scores[i];
    };
    const std::size_t take = std::min(m, n);
    // Smaller key ranks first; equal keys go to the more recent index.
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double ka = key(a), kb = key(b);
                          if (ka != kb) return ka < kb;
                          return a > b;
                      });
    order.resize(take);
    std::sort(order.begin(), order.end());

    SelectionResult result;
    result.chosen_indices = std::move(order);
    result.scores.reserve(take);
    for (std::size_t i : result.chosen_indices) result.scores.push_back(scores[i]);
    result.pool_scores.assign(scores.begin(), scores.end());
    result.strategy = Strategy::trams;
    return result;
}

std::vector<double> memory_column_mass(const Matrix& probs, std::size_t memory_rows) {
    return column_mass_impl(probs, memory_rows);
}
std::vector<double> memory_column_mass(const MatrixD& probs, std::size_t memory_rows) {
    return column_mass_impl(probs, memory_rows);
}

template <typename T>
SelectionResult oracle_select_from_probs(const BasicMatrix<T>& probs, std::size_t memory_rows, std::size_t m) {
    const auto mass = memory_column_mass(probs, memory_rows);
    SelectionResult result = top_m_select(mass, m, RankDirection::descending);
    result.strategy = Strategy::oracle;
    return result;
}

template <typename T>
SelectionResult oracle_select(const BasicMatrix<T>& h, const BasicMatrix<T>& pool_layer,
                              const AttentionParams<T>& params, std::size_t m) {
    const auto full = attend_standard(h, pool_layer, params);
    return oracle_select_from_probs(full.probs, pool_layer.rows(), m);
}

SelectionResult baseline_select(Strategy kind, std::size_t pool_rows, std::size_t m, Rng& rng) {
    SelectionResult result;
    result.strategy = kind;
    const std::size_t take = std::min(m, pool_rows);
    switch (kind) {
        case Strategy::recency:
            for (std::size_t i = pool_rows - take; i < pool_rows; ++i) result.chosen_indices.push_back(i);
            break;
        case Strategy::random: {
            // Partial Fisher-Yates over the index range.
            std::vector<std::size_t> idx(pool_rows);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            for (std::size_t i = 0; i < take; ++i) {
                const auto j = i + static_cast<std::size_t>(rng.uniform_index(pool_rows - i));
                std::swap(idx[i], idx[j]);
            }
            idx.resize(take);
            std::sort(idx.begin(), idx.end());
            result.chosen_indices = std::move(idx);
            break;
        }
        default:
            throw UsageError("baseline_select: kind must be random or recency, got " + std::string(to_string(kind)));
    }
    result.scores.assign(result.chosen_indices.size(), 0.0);
    return result;
}

// ---- tracing -------------------------------------------------------------------

template <typename T>
std::vector<TraceRecord> selection_trace(const SelectionResult& result, const MemoryPool<T>& pool,
                                         const Detokenizer& detok) {
    std::vector<TraceRecord> out;
    out.reserve(pool.rows());
    std::size_t next = 0;
    for (std::size_t r = 0; r < pool.rows(); ++r) {
        TraceRecord rec;
        rec.position = pool.positions()[r];
        rec.token = detok ? detok(pool.token_ids()[r]) : std::to_string(pool.token_ids()[r]);
        if (r < result.pool_scores.size()) rec.score = result.pool_scores[r];
        while (next < result.chosen_indices.size() && result.chosen_indices[next] < r) ++next;
        rec.selected = next < result.chosen_indices.size() && result.chosen_indices[next] == r;
        rec.layer = result.layer;
        rec.head = result.head;
        out.push_back(std::move(rec));
    }
    return out;
}

std::string to_json_line(const TraceRecord& record) {
    nlohmann::ordered_json j;
    j["position"] = record.position;
    j["token"] = record.token;
    if (record.score) {
        j["score"] = *record.score;
    } else {
        j["score"] = nullptr;
    }
    j["selected"] = record.selected;
    j["layer"] = record.layer;
    j["head"] = record.head;
    return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

TraceRecord trace_record_from_json_line(std::string_view line) {
    TraceRecord rec;
    try {
        const auto j = nlohmann::json::parse(line);
        rec.position = j.at("position").get<std::int64_t>();
        rec.token = j.at("token").get<std::string>();
        if (!j.at("score").is_null()) rec.score = j.at("score").get<double>();
        rec.selected = j.at("selected").get<bool>();
        rec.layer = j.at("layer").get<std::size_t>();
        rec.head = j.at("head").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("trace record: ") + e.what());
    }
    return rec;
}

#define TRAMS_INSTANTIATE_MEMORY(T)                                                                               \
    template class MemoryPool<T>;                                                                                  \
    template MemoryPool<T> pool_update(MemoryPool<T>, std::span<const BasicMatrix<T>>, std::span<const std::int64_t>, \
                                       std::span<const std::int32_t>);                                             \
    template std::vector<double> trams_selection_scores(const BasicMatrix<T>&, const AttentionParams<T>&, bool);   \
    template SelectionResult oracle_select_from_probs(const BasicMatrix<T>&, std::size_t, std::size_t);            \
    template SelectionResult oracle_select(const BasicMatrix<T>&, const BasicMatrix<T>&, const AttentionParams<T>&, \
                                           std::size_t);                                                           \
    template std::vector<TraceRecord> selection_trace(const SelectionResult&, const MemoryPool<T>&,               \
                                                      const Detokenizer&);

TRAMS_INSTANTIATE_MEMORY(float)
TRAMS_INSTANTIATE_MEMORY(double)

#undef TRAMS_INSTANTIATE_MEMORY

}  // namespace trams
