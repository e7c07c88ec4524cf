// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <fstream>
#include <optional>
#include <string>

#include "trams/model.hpp"

namespace trams {

EvalOptions EvalOptions::from_config(const ModelConfig& config) {
    EvalOptions o;
    o.policy = SelectionPolicy::from_config(config);
    o.segment_len = config.segment_len;
    o.pool_capacity = config.pool_capacity;
    return o;
}

template <typename T>
EvalReport eval_corpus(const TransformerXL<T>& model, std::span<const std::int32_t> tokens, const EvalOptions& options) {
    if (tokens.size() < 2) throw UsageError("eval_corpus: token stream needs at least 2 tokens");
    const ModelConfig& cfg = model.config();
    const std::size_t n = options.segment_len ? options.segment_len : cfg.segment_len;
    const std::size_t capacity = options.override_capacity ? options.pool_capacity : cfg.pool_capacity;
    if (options.policy.strategy != Strategy::none && options.policy.selected_m > capacity) {
        throw UsageError("eval_corpus: selected m (" + std::to_string(options.policy.selected_m) +
                         ") exceeds pool capacity M (" + std::to_string(capacity) + ")");
    }

    std::optional<TransformerXL<T>> resized;
    const TransformerXL<T>* engine = &model;
    if (n + capacity > model.relpos_table().max_distance()) {
        resized.emplace(model);
        resized->refresh_caches(n + capacity);
        engine = &*resized;
    }

    EvalReport report;
    report.strategy = std::string(to_string(options.policy.strategy));
    report.metric_direction = std::string(to_string(options.policy.direction));
    report.pool_capacity = capacity;
    report.selected_m = options.policy.selected_m;
    report.segment_len = n;

    MemoryPool<T> pool = engine->make_pool(capacity);
    Rng rng(options.seed);
    ForwardOptions<T> fwd;
    fwd.track_utilization = options.track_utilization;

    const auto started = std::chrono::steady_clock::now();
    double mass_weighted = 0.0;
    double util_weighted = 0.0;
    std::size_t mass_queries = 0;
    const std::size_t predictions = tokens.size() - 1;
    for (std::size_t s = 0; s < predictions; s += n) {
        if (options.max_segments && report.segments >= options.max_segments) break;
        const std::size_t len = std::min(n, predictions - s);
        const bool had_memory = !pool.empty();
        const auto out = engine->forward_segment(tokens.subspan(s, len), static_cast<std::int64_t>(s), pool,
                                                 options.policy, rng, fwd);
        const double nll = segment_nll(out.logits, tokens.subspan(s + 1, len));
        report.total_nll_nats += nll;
        report.token_count += len;
        report.segment_nll.push_back(nll);
        ++report.segments;
        if (had_memory) {
            double mass = 0.0;
            for (double v : out.stats.memory_mass) mass += v;
            mass /= static_cast<double>(out.stats.memory_mass.size());
            mass_weighted += mass * static_cast<double>(len);
            if (options.track_utilization) {
                double util = 0.0;
                for (double v : out.stats.utilization) util += v;
                util /= static_cast<double>(out.stats.utilization.size());
                util_weighted += util * static_cast<double>(len);
                report.segment_utilization.push_back(util);
            }
            mass_queries += len;
        }
    }
    report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    report.peak_resident_bytes = peak_resident_bytes();

    const Metrics metrics = nll_to_metrics(report.total_nll_nats, report.token_count);
    report.perplexity = metrics.perplexity;
    report.bpc = metrics.bpc;
    if (mass_queries) {
        report.memory_mass = mass_weighted / static_cast<double>(mass_queries);
        report.utilization = util_weighted / static_cast<double>(mass_queries);
    }
    return report;
}

template EvalReport eval_corpus(const TransformerXL<float>&, std::span<const std::int32_t>, const EvalOptions&);
template EvalReport eval_corpus(const TransformerXL<double>&, std::span<const std::int32_t>, const EvalOptions&);

std::size_t peak_resident_bytes() {
    std::ifstream status("/proc/self/status");
    std::string line;
    while (std::getline(status, line)) {
        if (line.rfind("VmHWM:", 0) == 0) {
            try {
                return static_cast<std::size_t>(std::stoull(line.substr(6))) * 1024;
            } catch (const std::exception&) {
                return 0;
            }
        }
    }
    return 0;
}

bool reset_peak_resident() {
    std::ofstream clear("/proc/self/clear_refs");
    if (!clear) return false;
    clear << "5";
    return static_cast<bool>(clear);
}

}  // namespace trams
