// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "config_fields.hpp"
#include "trams/diagnostics.hpp"

namespace trams {

namespace {

using ojson = nlohmann::ordered_json;

struct Flags {
    std::string config_path;
    std::optional<std::string> corpus, checkpoint, out_dir, strategy, direction, tokenizer;
    std::optional<std::size_t> M, m, n, max_segments, max_vocab, steps, batch;
    std::optional<double> learning_rate;
    std::optional<std::uint64_t> seed;
    std::string format = "json";
    std::string split = "all";
    bool no_timestamp = false;
    bool no_u_bias = false;
};

void add_common(CLI::App& cmd, Flags& f) {
    cmd.add_option("--config", f.config_path, "JSON config file; flags override its values");
    cmd.add_option("--corpus", f.corpus, "UTF-8 text corpus");
    cmd.add_option("--checkpoint", f.checkpoint, "checkpoint path");
    cmd.add_option("--out", f.out_dir, "output directory (default $TRAMS_OUT_DIR, else out)");
    cmd.add_option("--seed", f.seed, "seed for every random choice (default 0)");
    cmd.add_option("--strategy", f.strategy, "trams | oracle | random | recency | none");
    cmd.add_option("--direction", f.direction, "descending | ascending | abs_ascending (default descending)");
    cmd.add_option("--M", f.M, "memory pool capacity");
    cmd.add_option("--m", f.m, "selected memories");
    cmd.add_option("--n", f.n, "segment length");
    cmd.add_option("--max-segments", f.max_segments, "stop after this many segments (default: whole stream)");
    cmd.add_option("--split", f.split, "all | train | valid: which part of the corpus to read (default all)")
        ->check(CLI::IsMember({"all", "train", "valid"}));
    cmd.add_flag("--no-u-bias", f.no_u_bias, "score memories without the u·k content-bias term");
    cmd.add_flag("--no-timestamp", f.no_timestamp,
                 "zero-filled file timestamps, wall times and memory figures for byte-identical reruns");
}

RunConfig resolve_config(const Flags& f) {
    RunConfig c = f.config_path.empty() ? RunConfig{} : apply_config_json(RunConfig{}, read_text_file(f.config_path));
    if (f.corpus) c.corpus = *f.corpus;
    if (f.checkpoint) c.checkpoint = *f.checkpoint;
    if (f.out_dir) c.output_dir = *f.out_dir;
    if (f.seed) c.seed = *f.seed;
    if (f.strategy) c.model.strategy = parse_strategy(*f.strategy);
    if (f.direction) c.model.metric_direction = parse_direction(*f.direction);
    if (f.tokenizer) c.tokenizer = parse_tokenizer_kind(*f.tokenizer);
    if (f.M) c.model.pool_capacity = *f.M;
    if (f.m) c.model.selected_m = *f.m;
    if (f.n) c.model.segment_len = *f.n;
    if (f.max_vocab) c.max_vocab = *f.max_vocab;
    if (f.steps) c.train.steps = *f.steps;
    if (f.batch) c.train.batch = *f.batch;
    if (f.learning_rate) c.train.learning_rate = *f.learning_rate;
    if (f.no_u_bias) c.model.selection_u_bias = false;
    c.train.seed = c.seed;
    c.validate();
    return c;
}

/// Checkpoint architecture; regime keys present in the config file, then flags, override it.
ModelConfig regime(const Checkpoint& ckpt, const Flags& f) {
    ModelConfig m = ckpt.config;
    if (!f.config_path.empty()) {
        const RunConfig file = apply_config_json(RunConfig{}, read_text_file(f.config_path));
        const auto keys = nlohmann::json::parse(read_text_file(f.config_path));
        if (keys.contains("strategy")) m.strategy = file.model.strategy;
        if (keys.contains("metric_direction")) m.metric_direction = file.model.metric_direction;
        if (keys.contains("pool_capacity")) m.pool_capacity = file.model.pool_capacity;
        if (keys.contains("selected_m")) m.selected_m = file.model.selected_m;
        if (keys.contains("segment_len")) m.segment_len = file.model.segment_len;
        if (keys.contains("selection_u_bias")) m.selection_u_bias = file.model.selection_u_bias;
    }
    if (f.strategy) m.strategy = parse_strategy(*f.strategy);
    if (f.direction) m.metric_direction = parse_direction(*f.direction);
    if (f.M) m.pool_capacity = *f.M;
    if (f.m) m.selected_m = *f.m;
    if (f.n) m.segment_len = *f.n;
    if (f.no_u_bias) m.selection_u_bias = false;
    if (m.selected_m > m.pool_capacity) {
        throw UsageError("m (" + std::to_string(m.selected_m) + ") exceeds M (" + std::to_string(m.pool_capacity) + ")");
    }
    if (m.segment_len == 0) throw UsageError("n must be >= 1");
    return m;
}

std::pair<std::size_t, std::size_t> split_range(std::size_t size, double valid_fraction, const std::string& split) {
    const auto cut = size - static_cast<std::size_t>(std::floor(static_cast<double>(size) * valid_fraction));
    if (split == "train") return {0, cut};
    if (split == "valid") return {cut, size};
    return {0, size};
}

std::string require(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string("missing required ") + flag);
    return value;
}

Checkpoint load_required_checkpoint(const RunConfig& c) {
    return load_checkpoint(require(c.checkpoint, "--checkpoint"));
}

std::vector<std::int32_t> load_tokens(const RunConfig& c, const Checkpoint& ckpt, const std::string& split) {
    const std::string path = require(c.corpus, "--corpus");
    if (!std::filesystem::exists(path)) throw UsageError("corpus '" + path + "' does not exist");
    const std::string text = read_text_file(path);
    std::vector<std::int32_t> ids;
    if (ckpt.vocab) {
        ids = ckpt.vocab->encode(text);
    } else {
        ids = tokenize_corpus(text, c.tokenizer, c.max_vocab).ids;
    }
    for (auto id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= ckpt.config.vocab_size) {
            throw UsageError("corpus token id " + std::to_string(id) + " exceeds the checkpoint vocabulary");
        }
    }
    const auto [lo, hi] = split_range(ids.size(), c.valid_fraction, split);
    if (hi - lo < 2) throw UsageError("corpus split '" + split + "' has fewer than 2 tokens");
    return {ids.begin() + static_cast<std::ptrdiff_t>(lo), ids.begin() + static_cast<std::ptrdiff_t>(hi)};
}

ojson report_json(const EvalReport& r) { return ojson::parse(eval_report_json(r)); }

void scrub(EvalReport& r, bool no_timestamp) {
    if (!no_timestamp) return;
    r.wall_time_s = 0.0;
    r.peak_resident_bytes = 0;
}

std::filesystem::path output_file(const RunConfig& c, const std::string& experiment, bool fixed) {
    const auto dir = resolve_output_dir(c.output_dir);
    std::filesystem::create_directories(dir);
    return dir / experiment_file_name(experiment, fixed);
}

std::string cell(std::size_t v) { return std::to_string(v); }
std::string cell(double v) { return format_number(v); }

ProbeOptions probe_options(const ModelConfig& m, const Flags& f, const RunConfig& c) {
    ProbeOptions p;
    p.segment_len = m.segment_len;
    p.pool_capacity = m.pool_capacity;
    p.max_segments = f.max_segments.value_or(0);
    p.seed = c.seed;
    return p;
}

TransformerXL<float> build_model(const Checkpoint& ckpt, const ModelConfig& regime_config) {
    TransformerXL<float> model(ckpt.config, ckpt.weights);
    model.refresh_caches(regime_config.segment_len + regime_config.pool_capacity);
    return model;
}

// ---- subcommands --------------------------------------------------------------------

int cmd_train(const Flags& f, std::ostream& out, std::ostream& err) {
    RunConfig c = resolve_config(f);
    const std::string ckpt_path = require(c.checkpoint, "--checkpoint (output path)");
    const std::string corpus_path = require(c.corpus, "--corpus");
    if (!std::filesystem::exists(corpus_path)) throw UsageError("corpus '" + corpus_path + "' does not exist");
    TokenizedCorpus corpus = tokenize_corpus(read_text_file(corpus_path), c.tokenizer, c.max_vocab);
    c.model.vocab_size = corpus.vocab.size();
    c.model.validate();
    const auto [lo, cut] = split_range(corpus.ids.size(), c.valid_fraction, "train");
    const std::span<const std::int32_t> all(corpus.ids);
    TrainResult result = train_toy(c.model, all.subspan(lo, cut - lo), c.train, [&](std::size_t step, double loss) {
        if (c.train.log_every && (step + 1) % c.train.log_every == 0) {
            err << "step " << step + 1 << " loss " << format_number(loss) << "\n";
        }
    });
    Checkpoint ckpt{c.model, std::move(result.weights), corpus.vocab};
    save_checkpoint(ckpt, ckpt_path);

    ojson j;
    j["checkpoint"] = ckpt_path;
    j["vocab_size"] = c.model.vocab_size;
    j["train_tokens"] = cut - lo;
    j["steps"] = c.train.steps;
    j["final_loss_nats"] = result.loss_curve.empty() ? 0.0 : result.loss_curve.back();
    if (corpus.ids.size() - cut >= 2) {
        TransformerXL<float> model = build_model(ckpt, c.model);
        EvalOptions eo = EvalOptions::from_config(c.model);
        eo.seed = c.seed;
        eo.max_segments = f.max_segments.value_or(0);
        EvalReport rep = eval_corpus(model, all.subspan(cut), eo);
        scrub(rep, f.no_timestamp);
        j["valid"] = report_json(rep);
    }
    out << j.dump(2) << "\n";
    return 0;
}

int cmd_eval(const Flags& f, std::ostream& out) {
    const RunConfig c = resolve_config(f);
    const Checkpoint ckpt = load_required_checkpoint(c);
    const ModelConfig m = regime(ckpt, f);
    const auto tokens = load_tokens(c, ckpt, f.split);
    const TransformerXL<float> model = build_model(ckpt, m);
    EvalOptions eo = EvalOptions::from_config(m);
    eo.pool_capacity = m.pool_capacity;
    eo.override_capacity = true;
    eo.seed = c.seed;
    eo.max_segments = f.max_segments.value_or(0);
    eo.track_utilization = true;
    EvalReport rep = eval_corpus(model, tokens, eo);
    scrub(rep, f.no_timestamp);
    if (parse_report_format(f.format) == ReportFormat::json) out << eval_report_json(rep);
    else out << to_csv(eval_report_table({rep}));
    return 0;
}

int diag_correlation(const Flags& f, const std::vector<double>& buckets, std::ostream& out) {
    const RunConfig c = resolve_config(f);
    const Checkpoint ckpt = load_required_checkpoint(c);
    const ModelConfig m = regime(ckpt, f);
    const auto tokens = load_tokens(c, ckpt, f.split);
    const TransformerXL<float> model = build_model(ckpt, m);
    const CorrelationTable t = ranking_correlation_experiment(model, tokens, buckets, probe_options(m, f, c));
    Table csv;
    csv.columns.push_back("metric");
    for (double b : t.buckets) csv.columns.push_back(format_number(b));
    csv.columns.insert(csv.columns.end(), {"samples", "used_samples", "zero_variance_samples", "sampling_plan"});
    for (std::size_t mi = 0; mi < t.metrics.size(); ++mi) {
        std::vector<std::string> row{t.metrics[mi]};
        std::size_t used = 0, zero = 0;
        for (std::size_t b = 0; b < t.buckets.size(); ++b) {
            row.push_back(t.bucket_skipped[b] ? "" : format_number(t.rho[mi][b]));
            used += t.used_samples[mi][b];
            zero += t.zero_variance_samples[mi][b];
        }
        row.insert(row.end(), {cell(t.samples), cell(used), cell(zero), t.sampling_plan});
        csv.add_row(std::move(row));
    }
    const auto path = output_file(c, "correlation", f.no_timestamp);
    write_csv(csv, path);
    out << path.string() << "\n";
    return 0;
}

int diag_norms(const Flags& f, std::size_t bins, std::ostream& out) {
    const RunConfig c = resolve_config(f);
    const Checkpoint ckpt = load_required_checkpoint(c);
    const ModelConfig m = regime(ckpt, f);
    const auto tokens = load_tokens(c, ckpt, f.split);
    const TransformerXL<float> model = build_model(ckpt, m);
    const NormDistribution nd = norm_distribution(model, tokens, probe_options(m, f, c), bins);
    Table stats{{"layer", "kind", "count", "median", "q1", "q3", "mean", "stddev", "relative_iqr"}, {}};
    Table hist{{"layer", "kind", "bin", "lo", "hi", "count"}, {}};
    for (const auto& st : nd.layers) {
        for (int kind = 0; kind < 2; ++kind) {
            const auto& d = kind == 0 ? st.query : st.key;
            const auto& values = kind == 0 ? st.query_norms : st.key_norms;
            const auto& h = kind == 0 ? st.query_hist : st.key_hist;
            const std::string name = kind == 0 ? "query" : "key";
            stats.add_row({cell(st.layer), name, cell(values.size()), cell(d.median), cell(d.q1), cell(d.q3),
                           cell(d.mean), cell(d.stddev), cell(d.relative_iqr())});
            const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
            for (std::size_t b = 0; b < h.counts.size(); ++b) {
                hist.add_row({cell(st.layer), name, cell(b), cell(h.lo + width * static_cast<double>(b)),
                              cell(h.lo + width * static_cast<double>(b + 1)), cell(h.counts[b])});
            }
        }
    }
    const auto path = output_file(c, "norms", f.no_timestamp);
    const auto hist_path = output_file(c, "norms_hist", f.no_timestamp);
    write_csv(stats, path);
    write_csv(hist, hist_path);
    ojson j;
    j["query_relative_iqr"] = nd.query_dispersion;
    j["key_relative_iqr"] = nd.key_dispersion;
    j["stats"] = path.string();
    j["histograms"] = hist_path.string();
    out << j.dump(2) << "\n";
    return 0;
}

ojson interval_json(const Interval& iv) { return {{"estimate", iv.estimate}, {"lo", iv.lo}, {"hi", iv.hi}}; }

int diag_utilization(const Flags& f, std::size_t resamples, std::ostream& out) {
    const RunConfig c = resolve_config(f);
    const Checkpoint ckpt = load_required_checkpoint(c);
    const ModelConfig m = regime(ckpt, f);
    const auto tokens = load_tokens(c, ckpt, f.split);
    const TransformerXL<float> model = build_model(ckpt, m);
    UtilizationOptions uo;
    uo.probe = probe_options(m, f, c);
    uo.selected_m = m.selected_m;
    uo.include_u_bias = m.selection_u_bias;
    uo.bootstrap_resamples = resamples;
    const UtilizationReport r = memory_utilization(model, tokens, uo);
    Table t{{"arm", "strategy", "direction", "mean_utilization", "segments", "M", "m"}, {}};
    for (const auto& a : r.arms) {
        t.add_row({a.name, std::string(to_string(a.strategy)), std::string(to_string(a.direction)), cell(a.mean),
                   cell(a.per_segment.size()), cell(r.pool_capacity), cell(r.selected_m)});
    }
    const auto path = output_file(c, "utilization", f.no_timestamp);
    write_csv(t, path);
    ojson j;
    j["M"] = r.pool_capacity;
    j["m"] = r.selected_m;
    j["segments"] = r.segments;
    j["instances"] = r.instances;
    j["full_pool_mass"] = r.full_pool_mass;
    for (const auto& a : r.arms) j["arms"][a.name] = a.mean;
    j["oracle_violations"] = r.oracle_violations;
    j["trams_vs_recency_relative"] = r.trams_vs_recency_relative;
    j["trams_minus_random"] = interval_json(r.trams_minus_random);
    j["trams_minus_recency"] = interval_json(r.trams_minus_recency);
    j["table"] = path.string();
    out << j.dump(2) << "\n";
    return 0;
}

int diag_layernorm(const Flags& f, std::ostream& out) {
    const RunConfig c = resolve_config(f);
    const Checkpoint ckpt = load_required_checkpoint(c);
    const ModelConfig m = regime(ckpt, f);
    const auto tokens = load_tokens(c, ckpt, f.split);
    const TransformerXL<float> model = build_model(ckpt, m);
    const LayerNormStats s = layer_norm_statistics(model, tokens, probe_options(m, f, c));
    ojson j;
    j["samples"] = s.samples;
    j["within_bounds"] = s.within_bounds;
    j["fraction"] = s.fraction();
    j["max_abs_mean"] = s.max_abs_mean;
    j["norm_ratio_median"] = s.norm_ratio.median;
    j["norm_ratio_q1"] = s.norm_ratio.q1;
    j["norm_ratio_q3"] = s.norm_ratio.q3;
    out << j.dump(2) << "\n";
    return 0;
}

int diag_decompose(const Flags& f, std::ostream& out) {
    const RunConfig c = resolve_config(f);
    const Checkpoint ckpt = load_required_checkpoint(c);
    const ModelConfig m = regime(ckpt, f);
    const auto tokens = load_tokens(c, ckpt, f.split);
    const TransformerXL<float> model = build_model(ckpt, m);
    const ProbeOptions p = probe_options(m, f, c);
    const DecompositionStats s = logit_decomposition_error(model, tokens, p);
    ojson j;
    j["pairs"] = s.pairs;
    j["relative_error_median"] = s.relative_error.median;
    j["relative_error_q3"] = s.relative_error.q3;
    j["relative_error_mean"] = s.relative_error.mean;
    j["max_reconstruction_error"] = s.max_reconstruction_error;
    j["trams_identity_max_error"] = trams_identity_error(model, tokens, p);
    out << j.dump(2) << "\n";
    return 0;
}

int diag_gradcheck(const Flags& f, std::size_t samples, std::ostream& out) {
    ModelConfig cfg;
    cfg.num_layers = 2;
    cfg.num_heads = 2;
    cfg.d_model = 8;
    cfg.d_ffn = 16;
    cfg.vocab_size = 11;
    cfg.segment_len = 5;
    cfg.pool_capacity = 6;
    cfg.selected_m = 6;
    cfg.dropout = 0.0;
    const GradientCheckResult r = gradient_check(cfg, samples, f.seed.value_or(0));
    ojson j;
    j["checked"] = r.checked;
    j["failures"] = r.failures;
    j["max_relative_error"] = r.max_relative_error;
    j["median_relative_error"] = r.median_relative_error;
    j["worst_tensor"] = r.worst_tensor;
    out << j.dump(2) << "\n";
    return r.failures == 0 ? 0 : 2;
}

int cmd_ablate(const Flags& f, const std::string& param, const std::vector<double>& values, std::ostream& out) {
    const RunConfig c = resolve_config(f);
    const Checkpoint ckpt = load_required_checkpoint(c);
    const ModelConfig m = regime(ckpt, f);
    const auto tokens = load_tokens(c, ckpt, f.split);
    const AblationParam p = parse_ablation_param(param);
    std::size_t max_distance = m.segment_len + m.pool_capacity;
    for (double v : values) {
        if (v > 0 && (p == AblationParam::M || p == AblationParam::n)) {
            max_distance = std::max(max_distance, static_cast<std::size_t>(v) +
                                                      (p == AblationParam::M ? m.segment_len : m.pool_capacity));
        }
    }
    TransformerXL<float> model(ckpt.config, ckpt.weights);
    model.refresh_caches(max_distance);
    AblationOptions ao;
    ao.pool_capacity = m.pool_capacity;
    ao.selected_m = m.selected_m;
    ao.segment_len = m.segment_len;
    ao.direction = m.metric_direction;
    ao.include_u_bias = m.selection_u_bias;
    ao.max_segments = f.max_segments.value_or(0);
    ao.seed = c.seed;
    const AblationCurve curve = ablation_sweep(model, tokens, p, values, ao);
    Table t{{"parameter", "value", "skipped", "reason", "trams_ppl", "trams_bpc", "trams_nll_nats", "baseline_ppl",
             "baseline_bpc", "baseline_nll_nats", "tokens"},
            {}};
    for (const auto& pt : curve.points) {
        if (pt.skipped) {
            t.add_row({param, cell(pt.value), "1", pt.reason, "", "", "", "", "", "", ""});
            continue;
        }
        t.add_row({param, cell(pt.value), "0", "", cell(pt.trams.perplexity), cell(pt.trams.bpc),
                   cell(pt.trams.total_nll_nats), cell(pt.baseline.perplexity), cell(pt.baseline.bpc),
                   cell(pt.baseline.total_nll_nats), cell(pt.trams.token_count)});
    }
    const auto path = output_file(c, "ablation-" + param, f.no_timestamp);
    write_csv(t, path);
    out << path.string() << "\n";
    return 0;
}

int cmd_trace(const Flags& f, std::optional<std::size_t> segment, std::optional<std::size_t> layer,
              std::optional<std::size_t> head, std::ostream& out) {
    const RunConfig c = resolve_config(f);
    const Checkpoint ckpt = load_required_checkpoint(c);
    const ModelConfig m = regime(ckpt, f);
    const auto tokens = load_tokens(c, ckpt, f.split);
    const TransformerXL<float> model = build_model(ckpt, m);
    const std::size_t n = m.segment_len;
    const std::size_t predictions = tokens.size() - 1;
    const std::size_t segments = (predictions + n - 1) / n;
    const std::size_t target = segment.value_or(std::min(segments - 1, (m.pool_capacity + n - 1) / n));
    if (target >= segments) {
        throw UsageError("--segment " + std::to_string(target) + " exceeds the " + std::to_string(segments) +
                         " segments of the corpus");
    }
    if (layer && *layer >= m.num_layers) throw UsageError("--layer out of range");
    if (head && *head >= m.num_heads) throw UsageError("--head out of range");
    MemoryPool<float> pool = model.make_pool(m.pool_capacity);
    SelectionPolicy policy = SelectionPolicy::from_config(m);
    if (policy.strategy == Strategy::none) policy.selected_m = m.pool_capacity;
    Rng rng(c.seed);
    const std::span<const std::int32_t> all(tokens);
    for (std::size_t s = 0; s < target; ++s) {
        (void)model.forward_segment(all.subspan(s * n, n), static_cast<std::int64_t>(s * n), pool, policy, rng);
    }
    const MemoryPool<float> before = pool;
    ForwardOptions<float> fo;
    fo.record_selections = true;
    const std::size_t start = target * n;
    const auto result = model.forward_segment(all.subspan(start, std::min(n, predictions - start)),
                                              static_cast<std::int64_t>(start), pool, policy, rng, fo);
    const Detokenizer detok = [&](std::int32_t id) {
        return ckpt.vocab ? ckpt.vocab->token(id) : std::to_string(id);
    };
    for (const auto& sel : result.stats.selections) {
        if ((layer && sel.layer != *layer) || (head && sel.head != *head)) continue;
        for (const auto& rec : selection_trace(sel, before, detok)) out << to_json_line(rec) << "\n";
    }
    return 0;
}

int cmd_profile(const Flags& f, std::size_t runs, std::ostream& out) {
    const RunConfig c = resolve_config(f);
    const Checkpoint ckpt = load_required_checkpoint(c);
    const ModelConfig m = regime(ckpt, f);
    const auto tokens = load_tokens(c, ckpt, f.split);
    const TransformerXL<float> model = build_model(ckpt, m);
    CostOptions co;
    co.runs = runs;
    co.max_segments = f.max_segments.value_or(0);
    co.pool_capacity = m.pool_capacity;
    co.selected_m = m.selected_m;
    co.seed = c.seed;
    const CostProfile p = cost_profile(model, tokens, co);
    Table t{{"strategy", "runs", "median_wall_s", "min_wall_s", "max_wall_s", "peak_resident_bytes", "tokens_per_s"},
            {}};
    for (const auto& r : p.rows) {
        t.add_row({r.strategy, cell(r.runs), cell(r.median_wall_s), cell(r.min_wall_s), cell(r.max_wall_s),
                   cell(r.peak_resident_bytes), cell(r.tokens_per_s)});
    }
    Table s{{"pool_rows", "median_seconds"}, {}};
    for (const auto& pt : p.scaling) s.add_row({cell(pt.pool_rows), cell(pt.median_seconds)});
    const auto path = output_file(c, "profile", f.no_timestamp);
    const auto scaling_path = output_file(c, "selection_scaling", f.no_timestamp);
    write_csv(t, path);
    write_csv(s, scaling_path);
    ojson j;
    j["table"] = path.string();
    j["scaling"] = scaling_path.string();
    j["scaling_exponent"] = p.scaling_exponent;
    j["max_doubling_ratio"] = p.max_doubling_ratio;
    out << j.dump(2) << "\n";
    return 0;
}

std::vector<double> parse_list(const std::string& text, const char* flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(parse_number(item));
        } catch (const CorruptFileError&) {
            throw UsageError(std::string(flag) + ": '" + item + "' is not a number");
        }
    }
    if (out.empty()) throw UsageError(std::string(flag) + " needs at least one value");
    return out;
}

std::string config_key_footer() {
    std::ostringstream os;
    const RunConfig defaults;
    os << "\nConfig file keys (JSON object) and defaults:\n";
    for (const auto& field : detail::config_fields()) {
        os << "  " << field.key << " = " << field.get(defaults).dump() << "  (" << field.help << ")\n";
    }
    os << "\nExit codes: 0 success, 1 usage error, 2 runtime failure.\n";
    return os.str();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Memory selection experiments for segment-recurrent transformers", "trams"};
    app.footer(config_key_footer());
    app.require_subcommand(1);
    Flags f;

    auto* train = app.add_subcommand("train", "train the toy model and write a checkpoint");
    add_common(*train, f);
    train->add_option("--tokenizer", f.tokenizer, "char | word (default char)");
    train->add_option("--max-vocab", f.max_vocab, "word vocabulary cap including <unk> (default 0: no cap)");
    train->add_option("--steps", f.steps, "optimizer steps (default 200)");
    train->add_option("--batch", f.batch, "parallel streams (default 8)");
    train->add_option("--lr", f.learning_rate, "peak learning rate (default 2.5e-4)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and print an EvalReport");
    add_common(*eval, f);
    eval->add_option("--format", f.format, "json | csv (default json)")->check(CLI::IsMember({"json", "csv"}));

    auto* diagnose = app.add_subcommand("diagnose", "analyses on a trained checkpoint");
    diagnose->require_subcommand(1);
    std::string buckets_text = "1,10,30,50,100";
    std::size_t bins = 30;
    std::size_t resamples = 2000;
    std::size_t grad_samples = 250;
    auto* d_corr = diagnose->add_subcommand("correlation", "Spearman agreement of ranking metrics per bucket");
    add_common(*d_corr, f);
    d_corr->add_option("--buckets", buckets_text, "top-percent buckets (default 1,10,30,50,100)");
    auto* d_norms = diagnose->add_subcommand("norms", "query and reformulated-key norm distributions");
    add_common(*d_norms, f);
    d_norms->add_option("--bins", bins, "histogram bins (default 30)");
    auto* d_util = diagnose->add_subcommand("utilization", "attention mass kept by each selection strategy");
    add_common(*d_util, f);
    d_util->add_option("--resamples", resamples, "bootstrap resamples (default 2000)");
    auto* d_ln = diagnose->add_subcommand("layernorm", "mean and norm of layer-normed states");
    add_common(*d_ln, f);
    auto* d_dec = diagnose->add_subcommand("decompose", "constant-query-norm logit approximation error");
    add_common(*d_dec, f);
    auto* d_grad = diagnose->add_subcommand("gradcheck", "finite-difference check of the trainer's gradients");
    d_grad->add_option("--seed", f.seed, "seed (default 0)");
    d_grad->add_option("--samples", grad_samples, "sampled coordinates (default 250)");

    auto* ablate = app.add_subcommand("ablate", "sweep one parameter, TRAMS against recency");
    add_common(*ablate, f);
    std::string param;
    std::string values_text;
    ablate->add_option("--param", param, "M | m | n | layer")->required();
    ablate->add_option("--values", values_text, "comma-separated values")->required();

    auto* trace = app.add_subcommand("trace", "JSON lines describing each pool row at one segment");
    add_common(*trace, f);
    std::optional<std::size_t> seg, layer, head;
    trace->add_option("--segment", seg, "segment index (default: first with a full pool)");
    trace->add_option("--layer", layer, "only this layer");
    trace->add_option("--head", head, "only this head");

    auto* profile = app.add_subcommand("profile", "wall time and peak memory per strategy");
    add_common(*profile, f);
    std::size_t runs = 5;
    profile->add_option("--runs", runs, "timed runs per strategy, at least 5 (default 5)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        if (code == 0) return 0;
        err << app.help();
        return 1;
    }

    try {
        if (*train) return cmd_train(f, out, err);
        if (*eval) return cmd_eval(f, out);
        if (*d_corr) return diag_correlation(f, parse_list(buckets_text, "--buckets"), out);
        if (*d_norms) return diag_norms(f, bins, out);
        if (*d_util) return diag_utilization(f, resamples, out);
        if (*d_ln) return diag_layernorm(f, out);
        if (*d_dec) return diag_decompose(f, out);
        if (*d_grad) return diag_gradcheck(f, grad_samples, out);
        if (*ablate) return cmd_ablate(f, param, parse_list(values_text, "--values"), out);
        if (*trace) return cmd_trace(f, seg, layer, head, out);
        if (*profile) return cmd_profile(f, runs, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    err << app.help();
    return 1;
}

}  // namespace trams
