// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion. Trains the desk-scale toy
// model once on the synthetic corpus, then evaluates every criterion on it.
//
//   acceptance [workdir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "trams/cli_io.hpp"
#include "trams/diagnostics.hpp"

namespace trams {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body,
               double setup_s = 0.0) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = setup_s + std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_time = secs < budget_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    char timing[96];
    std::snprintf(timing, sizeof(timing), "%.2fs / %.0fs%s", secs, budget_s, in_time ? "" : " OVER BUDGET");
    std::cout << (pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail << " (" << timing << ")"
              << std::endl;
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

template <typename T>
BasicMatrix<T> layer_normed_rows(std::size_t rows, std::size_t d, Rng& rng) {
    BasicMatrix<T> m(rows, d);
    rng.fill_normal(m, 1.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto normed = layer_norm<T>(m.row(r));
        std::copy(normed.begin(), normed.end(), m.row(r).begin());
    }
    return m;
}

template <typename T>
AttentionParams<T> random_head(std::size_t d, std::size_t dh, Rng& rng) {
    AttentionParams<T> p = AttentionParams<T>::zeros(d, dh);
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    rng.fill_normal(p.w_q, s);
    rng.fill_normal(p.w_k_content, s);
    rng.fill_normal(p.w_k_pos, s);
    rng.fill_normal(p.w_v, s);
    rng.fill_normal(p.u_bias, 0.1);
    rng.fill_normal(p.v_bias, 0.1);
    return p;
}

/// Per-memory-row content-attention mass summed over queries, in plain loops.
std::vector<double> reference_column_mass(const MatrixD& h, const MatrixD& mem, const AttentionParams<double>& p) {
    const std::size_t n = h.rows(), rows = mem.rows(), d = h.cols(), dh = p.head_dim();
    auto project = [&](std::span<const double> x, const MatrixD& w) {
        std::vector<double> out(dh, 0.0);
        for (std::size_t c = 0; c < dh; ++c)
            for (std::size_t k = 0; k < d; ++k) out[c] += x[k] * w(k, c);
        return out;
    };
    std::vector<std::vector<double>> keys;
    for (std::size_t j = 0; j < rows; ++j) keys.push_back(project(mem.row(j), p.w_k_content));
    for (std::size_t j = 0; j < n; ++j) keys.push_back(project(h.row(j), p.w_k_content));
    std::vector<double> mass(rows, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto q = project(h.row(i), p.w_q);
        const std::size_t visible = rows + i + 1;
        std::vector<double> logits(visible);
        for (std::size_t j = 0; j < visible; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < dh; ++c) s += q[c] * keys[j][c];
            logits[j] = s / std::sqrt(static_cast<double>(dh));
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double& l : logits) z += (l = std::exp(l - mx));
        for (std::size_t j = 0; j < rows; ++j) mass[j] += logits[j] / z;
    }
    return mass;
}

int run(const fs::path& workdir) {
    fs::create_directories(workdir);
    const fs::path corpus_path = workdir / "corpus.txt";
    const fs::path ckpt_path = workdir / "toy.ckpt";
    const std::string text = synthetic_corpus(1'000'000, 0);
    write_text_file(corpus_path, text);
    const TokenizedCorpus corpus = tokenize_corpus(text, TokenizerKind::char_level);
    const std::span<const std::int32_t> ids(corpus.ids);
    const std::size_t cut = ids.size() - ids.size() / 20;
    const auto train_ids = ids.subspan(0, cut);
    const auto valid_ids = ids.subspan(cut);

    ModelConfig config;  // 4 layers, 4 heads, d=64, n=32, M=128, m=32
    config.vocab_size = corpus.vocab.size();
    TrainHyperParams hp;
    hp.steps = 1500;
    hp.learning_rate = 2e-3;
    hp.seed = 0;

    std::cout << "corpus: " << text.size() << " bytes, " << ids.size() << " tokens, vocab " << config.vocab_size
              << "; held-out " << valid_ids.size() << " tokens" << std::endl;

    std::optional<Checkpoint> ckpt;
    std::optional<TransformerXL<float>> model;
    auto need_model = [&]() -> const TransformerXL<float>& {
        if (!model) throw RuntimeFailure("trained checkpoint unavailable (training failed)");
        return *model;
    };

    double train_s = 0.0;
    double final_loss = 0.0;
    try {
        const auto t0 = Clock::now();
        TrainResult result = train_toy(config, train_ids, hp);
        train_s = std::chrono::duration<double>(Clock::now() - t0).count();
        final_loss = result.loss_curve.back();
        ckpt = Checkpoint{config, std::move(result.weights), corpus.vocab};
        save_checkpoint(*ckpt, ckpt_path);
        model.emplace(ckpt->config, ckpt->weights);
        std::cout << "trained toy model: " << hp.steps << " steps in " << num(train_s) << "s" << std::endl;
    } catch (const std::exception& e) {
        std::cout << "training failed: " << e.what() << std::endl;
    }

    criterion(1, "reformulation exactness", 10, [] {
        Rng rng(101);
        double worst = 0.0;
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t d = std::size_t{8} << rng.uniform_index(4);
            const std::size_t heads = std::size_t{1} << rng.uniform_index(3);
            const auto p = random_head<float>(d, d / heads, rng);
            const Matrix h = layer_normed_rows<float>(1 + rng.uniform_index(32), d, rng);
            const Matrix mem = layer_normed_rows<float>(1 + rng.uniform_index(64), d, rng);
            const Matrix standard = content_logits(h, mem, p);
            const Matrix keys = Matrix::vstack(mem, h);
            const Matrix reformulated = matmul_nt(h, reformulate_keys(keys, p));
            for (std::size_t i = 0; i < standard.size(); ++i) {
                worst = std::max(worst, std::abs(static_cast<double>(standard.data()[i]) -
                                                 static_cast<double>(reformulated.data()[i])));
            }
        }
        return Outcome{worst < 1e-5, "200 configs, max |standard - reformulated| = " + num(worst) + " (< 1e-5)"};
    });

    criterion(2, "TRAMS metric identity", 5, [&] {
        Rng rng(202);
        Matrix rows(10000, 64);
        rng.fill_normal(rows, 2.0);
        const ScoreVector s = trams_scores(rows);
        double worst = 0.0;
        for (std::size_t j = 0; j < rows.rows(); ++j) {
            double sum = 0.0;
            for (float v : rows.row(j)) sum += v;
            worst = std::max(worst, std::abs(s.values[j] - sum / 8.0));
        }
        ProbeOptions p;
        p.max_segments = 20;
        const double model_worst = trams_identity_error(need_model(), valid_ids, p);
        return Outcome{worst < 1e-6 && model_worst < 1e-6,
                       "random rows max error " + num(worst) + ", checkpoint layers/heads max error " +
                           num(model_worst) + " (< 1e-6)"};
    });

    criterion(3, "degenerate-selection equivalence", 60, [&] {
        const auto needed = std::min<std::size_t>(valid_ids.size(), 50'001);
        const auto tokens = valid_ids.subspan(0, needed);
        EvalOptions eo = EvalOptions::from_config(config);
        eo.policy.selected_m = config.pool_capacity;
        eo.policy.strategy = Strategy::recency;
        const double reference = eval_corpus(need_model(), tokens, eo).total_nll_nats;
        double worst = 0.0;
        std::string detail;
        for (Strategy s : {Strategy::trams, Strategy::oracle, Strategy::random}) {
            eo.policy.strategy = s;
            const double nll = eval_corpus(need_model(), tokens, eo).total_nll_nats;
            worst = std::max(worst, std::abs(nll - reference));
            detail += std::string(to_string(s)) + " " + num(std::abs(nll - reference)) + ", ";
        }
        return Outcome{worst <= 1e-9 && tokens.size() >= 50'000,
                       std::to_string(tokens.size() - 1) + " predictions, |NLL - recency(m=M)|: " + detail +
                           "max " + num(worst) + " (<= 1e-9)"};
    });

    criterion(4, "oracle optimality", 30, [] {
        Rng rng(404);
        std::size_t instances = 0;
        double worst = -1.0;
        for (; instances < 600; ++instances) {
            const std::size_t d = std::size_t{4} << rng.uniform_index(3);
            const std::size_t rows = 1 + rng.uniform_index(12);
            const std::size_t m = 1 + rng.uniform_index(std::min<std::size_t>(4, rows));
            const auto p = random_head<double>(d, d / (std::size_t{1} << rng.uniform_index(2)), rng);
            MatrixD h(1 + rng.uniform_index(6), d), mem(rows, d);
            rng.fill_normal(h, 1.5);
            rng.fill_normal(mem, 1.5);
            const SelectionResult sel = oracle_select(h, mem, p, m);
            const std::vector<double> mass = reference_column_mass(h, mem, p);
            double oracle_mass = 0.0;
            for (std::size_t j : sel.chosen_indices) oracle_mass += mass[j];
            double best = 0.0;
            for (std::uint32_t mask = 0; mask < (1u << rows); ++mask) {
                if (static_cast<std::size_t>(__builtin_popcount(mask)) != m) continue;
                double s = 0.0;
                for (std::size_t j = 0; j < rows; ++j)
                    if (mask & (1u << j)) s += mass[j];
                best = std::max(best, s);
            }
            if (sel.chosen_indices.size() != m) return Outcome{false, "oracle returned the wrong subset size"};
            worst = std::max(worst, best - oracle_mass);
        }
        return Outcome{worst <= 1e-9, std::to_string(instances) + " instances, max (best subset - oracle) = " +
                                          num(worst) + " (<= 1e-9)"};
    });

    criterion(5, "gradient check", 60, [] {
        ModelConfig c;
        c.num_layers = 2;
        c.num_heads = 2;
        c.d_model = 8;
        c.d_ffn = 16;
        c.vocab_size = 11;
        c.segment_len = 5;
        c.pool_capacity = 6;
        c.selected_m = 6;
        c.dropout = 0.0;
        const GradientCheckResult r = gradient_check(c, 250, 7, 1e-3);
        return Outcome{r.failures == 0 && r.checked >= 200,
                       std::to_string(r.checked) + " coordinates, " + std::to_string(r.failures) +
                           " above 1e-3, max relative error " + num(r.max_relative_error) + " (" + r.worst_tensor +
                           ")"};
    });

    criterion(6, "trainability", 600, [&] {
        EvalOptions eo;
        eo.policy.strategy = Strategy::none;
        const EvalReport rep = eval_corpus(need_model(), valid_ids, eo);
        const double bound = std::log2(static_cast<double>(config.vocab_size)) - 1.0;
        return Outcome{rep.bpc < bound, std::to_string(hp.steps) + " steps (" + num(train_s) + "s), held-out bpc " +
                                            num(rep.bpc) + " (< log2(" + std::to_string(config.vocab_size) +
                                            ") - 1 = " + num(bound) + "), final train loss " + num(final_loss) +
                                            " nats"};
    }, train_s);

    criterion(7, "strategy ordering (m = M/4)", 120, [&] {
        UtilizationOptions uo;
        uo.selected_m = config.pool_capacity / 4;
        uo.probe.max_segments = 400;
        const UtilizationReport r = memory_utilization(need_model(), valid_ids, uo);
        const double oracle = r.arm("oracle").mean, trams = r.arm("trams").mean, random = r.arm("random").mean;
        const double recency = r.arm("recency").mean;
        const bool ok = r.segments >= 100 && oracle >= trams && oracle >= random && r.oracle_violations == 0;
        auto iv = [](const Interval& i) { return num(i.estimate) + " [" + num(i.lo) + ", " + num(i.hi) + "]"; };
        return Outcome{ok, std::to_string(r.segments) + " segments; oracle " + num(oracle) + ", trams " + num(trams) +
                               ", random " + num(random) + ", recency " + num(recency) + "; trams-random " +
                               iv(r.trams_minus_random) + ", trams-recency " + iv(r.trams_minus_recency) +
                               "; ascending " + num(r.arm("trams_ascending").mean) + ", abs_ascending " +
                               num(r.arm("trams_abs_ascending").mean)};
    });

    criterion(8, "correlation harness", 10, [&] {
        ProbeOptions p;
        p.max_segments = 10;
        const CorrelationTable t = ranking_correlation_experiment(need_model(), valid_ids, kDefaultBuckets, p);
        double worst = 0.0;
        bool all_used = true;
        for (std::size_t b = 0; b < t.buckets.size(); ++b) {
            worst = std::max(worst, std::abs(t.rho[2][b] - 1.0));
            all_used = all_used && !t.bucket_skipped[b] && t.used_samples[2][b] == t.samples;
        }
        Rng rng(808);
        std::vector<double> truth(4096);
        for (auto& v : truth) v = rng.normal();
        const std::vector<double> constant(truth.size(), 0.5);
        bool flagged = true;
        for (double b : kDefaultBuckets) flagged = flagged && bucket_spearman(truth, constant, b).zero_variance;
        return Outcome{worst < 1e-12 && all_used && flagged,
                       "dot-product rho max |1 - rho| = " + num(worst) + " over buckets {1,10,30,50,100} (" +
                           std::to_string(t.samples) + " samples); constant candidate flagged: " +
                           (flagged ? "yes" : "no")};
    });

    criterion(9, "layer-norm statistics", 10, [&] {
        ProbeOptions p;
        p.max_segments = 100;
        const LayerNormStats s = layer_norm_statistics(need_model(), valid_ids, p);
        return Outcome{s.fraction() >= 0.95, std::to_string(s.samples) + " states, " + num(100 * s.fraction()) +
                                                 "% within bounds, max |mean| " + num(s.max_abs_mean) +
                                                 ", median norm/sqrt(d) " + num(s.norm_ratio.median)};
    });

    criterion(10, "oracle at m = M/2 keeps NLL", 60, [&] {
        const auto tokens = valid_ids.subspan(0, std::min<std::size_t>(valid_ids.size(), 50'001));
        EvalOptions eo = EvalOptions::from_config(config);
        eo.policy.strategy = Strategy::none;
        const double full = eval_corpus(need_model(), tokens, eo).total_nll_nats;
        eo.policy.strategy = Strategy::oracle;
        eo.policy.selected_m = config.pool_capacity / 2;
        const double half = eval_corpus(need_model(), tokens, eo).total_nll_nats;
        const double rel = (half - full) / full;
        return Outcome{std::abs(rel) < 0.01,
                       "full-pool NLL " + num(full) + ", oracle m=" + std::to_string(eo.policy.selected_m) + " NLL " +
                           num(half) + ", relative change " + num(100 * rel) + "% (|.| < 1%)"};
    });

    criterion(11, "determinism and serialization", 60, [&] {
        if (!ckpt) throw RuntimeFailure("trained checkpoint unavailable");
        const std::string bytes = serialize_checkpoint(*ckpt);
        const Checkpoint loaded = load_checkpoint(ckpt_path);
        const bool ckpt_ok = loaded == *ckpt && serialize_checkpoint(loaded) == bytes;

        const std::string out_dir = (workdir / "reports").string();
        auto invoke = [&](std::vector<std::string> args) {
            args.insert(args.begin(), "trams");
            args.insert(args.end(), {"--corpus", corpus_path.string(), "--checkpoint", ckpt_path.string(), "--split",
                                     "valid", "--max-segments", "40", "--seed", "5", "--out", out_dir,
                                     "--no-timestamp"});
            std::vector<const char*> argv;
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
            if (code != 0) throw RuntimeFailure("cli exited " + std::to_string(code) + ": " + err.str());
            return out.str();
        };
        const std::string eval_a = invoke({"eval", "--strategy", "random", "--m", "32"});
        const std::string eval_b = invoke({"eval", "--strategy", "random", "--m", "32"});
        const std::string corr_path = invoke({"diagnose", "correlation"});
        const std::string corr_a = read_text_file(corr_path.substr(0, corr_path.size() - 1));
        (void)invoke({"diagnose", "correlation"});
        const std::string corr_b = read_text_file(corr_path.substr(0, corr_path.size() - 1));
        const bool reports_ok = eval_a == eval_b && corr_a == corr_b && !eval_a.empty();
        return Outcome{ckpt_ok && reports_ok, std::string("checkpoint round trip ") +
                                                  (ckpt_ok ? "bit-exact" : "MISMATCH") + " (" +
                                                  std::to_string(bytes.size()) + " bytes); repeated eval and " +
                                                  "correlation reports " + (reports_ok ? "identical" : "DIFFER")};
    });

    std::cout << (failures == 0 ? "ALL CRITERIA PASSED" : std::to_string(failures) + " CRITERIA FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}

}  // namespace
}  // namespace trams

int main(int argc, char** argv) {
    const std::filesystem::path workdir = argc > 1 ? argv[1] : "acceptance_work";
    try {
        return trams::run(workdir);
    } catch (const std::exception& e) {
        std::cerr << "acceptance: " << e.what() << "\n";
        return 2;
    }
}
