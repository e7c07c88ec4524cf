// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>

#include "trams/model.hpp"

namespace trams {

namespace {

template <typename T>
std::vector<BasicMatrix<T>*> tensor_list(ModelWeights<T>& w) {
    std::vector<BasicMatrix<T>*> out;
    w.visit([&](const std::string&, BasicMatrix<T>& m) { out.push_back(&m); });
    return out;
}

// d(mean NLL)/dlogits for one segment, scaled by 1/total_tokens.
BasicMatrix<float> cross_entropy_grad(const Matrix& logits, std::span<const std::int32_t> targets, double scale) {
    Matrix grad = softmax_rows(logits, 1.0);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        grad(i, static_cast<std::size_t>(targets[i])) -= 1.0f;
        for (auto& v : grad.row(i)) v = static_cast<float>(static_cast<double>(v) * scale);
    }
    return grad;
}

struct Stream {
    std::size_t begin = 0;
    std::size_t length = 0;  ///< predictions available in this stream
    std::size_t cursor = 0;
    MemoryPool<float> pool;
};

}  // namespace

TrainResult train_toy(const ModelConfig& config, std::span<const std::int32_t> corpus, const TrainHyperParams& hp,
                      const std::function<void(std::size_t, double)>& on_step) {
    config.validate();
    if (corpus.size() < 2) throw UsageError("train_toy: corpus needs at least 2 tokens");
    if (hp.batch == 0) throw UsageError("train_toy: batch must be >= 1");
    if (!(hp.learning_rate >= 0.0)) throw UsageError("train_toy: learning rate must be >= 0");

    Rng rng(hp.seed);
    Rng init_rng = rng.split(1);
    Rng dropout_rng = rng.split(2);
    TrainResult result{ModelWeights<float>::initialized(config, init_rng), {}};
    if (hp.steps == 0) return result;

    const std::size_t n = config.segment_len;
    const std::size_t mem_len = hp.train_memory ? hp.train_memory : n;
    TransformerXL<float> model(config, result.weights);
    model.refresh_caches(n + mem_len);

    const std::size_t predictions = corpus.size() - 1;
    const std::size_t batch = std::max<std::size_t>(1, std::min(hp.batch, predictions / n));
    const std::size_t chunk = predictions / batch;
    std::vector<Stream> streams(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        streams[b].begin = b * chunk;
        streams[b].length = chunk;
        streams[b].pool = model.make_pool(mem_len);
    }

    SelectionPolicy policy;
    policy.strategy = Strategy::none;
    ForwardOptions<float> fwd;
    fwd.training = config.dropout > 0.0;

    ModelWeights<float> adam_m = ModelWeights<float>::zeros(config);
    ModelWeights<float> adam_v = ModelWeights<float>::zeros(config);
    const auto m_list = tensor_list(adam_m);
    const auto v_list = tensor_list(adam_v);

    for (std::size_t step = 0; step < hp.steps; ++step) {
        ModelWeights<float> grads = ModelWeights<float>::zeros(config);
        std::vector<ForwardTape<float>> tapes(batch);
        std::vector<Matrix> logits(batch);
        std::vector<std::span<const std::int32_t>> targets(batch);
        std::size_t total_tokens = 0;
        double total_nll = 0.0;

        for (std::size_t b = 0; b < batch; ++b) {
            Stream& st = streams[b];
            if (st.cursor >= st.length) {
                st.cursor = 0;
                st.pool.clear();
            }
            const std::size_t len = std::min(n, st.length - st.cursor);
            const std::size_t at = st.begin + st.cursor;
            auto out = model.forward_segment(corpus.subspan(at, len), static_cast<std::int64_t>(at), st.pool, policy,
                                             dropout_rng, fwd, &tapes[b]);
            targets[b] = corpus.subspan(at + 1, len);
            total_nll += segment_nll(out.logits, targets[b]);
            logits[b] = std::move(out.logits);
            total_tokens += len;
            st.cursor += len;
        }
        const double loss = total_nll / static_cast<double>(total_tokens);
        if (!std::isfinite(loss)) {
            throw RuntimeFailure("train_toy: loss became non-finite at step " + std::to_string(step) +
                                 " (lr=" + std::to_string(hp.learning_rate) + "); lower the learning rate");
        }
        result.loss_curve.push_back(loss);

        for (std::size_t b = 0; b < batch; ++b) {
            const Matrix d_logits =
                cross_entropy_grad(logits[b], targets[b], 1.0 / static_cast<double>(total_tokens));
            model.backward_segment(tapes[b], d_logits, grads);
        }

        auto g_list = tensor_list(grads);
        double norm2 = 0.0;
        for (const auto* g : g_list)
            for (float v : g->values()) norm2 += static_cast<double>(v) * static_cast<double>(v);
        const double norm = std::sqrt(norm2);
        if (!std::isfinite(norm)) {
            throw RuntimeFailure("train_toy: gradient became non-finite at step " + std::to_string(step));
        }
        const double clip = (hp.clip_norm > 0.0 && norm > hp.clip_norm) ? hp.clip_norm / norm : 1.0;

        const double lr = hp.cosine_schedule
                              ? hp.learning_rate * 0.5 *
                                    (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                                    static_cast<double>(hp.steps)))
                              : hp.learning_rate;
        const double t = static_cast<double>(step + 1);
        const double bias1 = 1.0 - std::pow(hp.beta1, t);
        const double bias2 = 1.0 - std::pow(hp.beta2, t);

        auto p_list = tensor_list(model.mutable_weights());
        for (std::size_t k = 0; k < p_list.size(); ++k) {
            auto p = p_list[k]->values();
            const auto g = g_list[k]->values();
            auto mm = m_list[k]->values();
            auto vv = v_list[k]->values();
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double gi = static_cast<double>(g[i]) * clip;
                const double mi = hp.beta1 * static_cast<double>(mm[i]) + (1.0 - hp.beta1) * gi;
                const double vi = hp.beta2 * static_cast<double>(vv[i]) + (1.0 - hp.beta2) * gi * gi;
                mm[i] = static_cast<float>(mi);
                vv[i] = static_cast<float>(vi);
                const double update = lr * (mi / bias1) / (std::sqrt(vi / bias2) + hp.adam_eps);
                p[i] = static_cast<float>(static_cast<double>(p[i]) - update);
            }
        }
        model.refresh_caches(n + mem_len);
        if (on_step) on_step(step, loss);
    }
    result.weights = model.weights();
    return result;
}

double GradientCheckResult::relative_error(double analytic, double numeric, double floor) noexcept {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

GradientCheckResult gradient_check(const ModelConfig& config, std::size_t samples, std::uint64_t seed,
                                   double tolerance) {
    config.validate();
    if (samples == 0) throw UsageError("gradient_check: samples must be >= 1");
    Rng rng(seed);
    Rng init_rng = rng.split(1);
    Rng data_rng = rng.split(2);
    Rng pick_rng = rng.split(3);
    // Move biases and gains off their 0/1 initialization so their gradients are exercised.
    ModelWeights<double> weights = ModelWeights<float>::initialized(config, init_rng).cast<double>();
    weights.visit([&](const std::string& name, MatrixD& m) {
        if (name.find("bias") != std::string::npos || name.find("b_") != std::string::npos ||
            name.find("gain") != std::string::npos) {
            for (auto& v : m.values()) v += 0.3 * data_rng.normal();
        }
    });
    TransformerXL<double> model(config, weights);
    const std::size_t n = config.segment_len;
    model.refresh_caches(2 * n + config.pool_capacity);

    std::vector<std::int32_t> tokens(2 * n + 1);
    for (auto& t : tokens) t = static_cast<std::int32_t>(data_rng.uniform_index(config.vocab_size));
    const std::span<const std::int32_t> all(tokens);

    SelectionPolicy policy;
    policy.strategy = Strategy::none;
    Rng fwd_rng(0);
    MemoryPool<double> pool = model.make_pool(config.pool_capacity);
    (void)model.forward_segment(all.subspan(0, n), 0, pool, policy, fwd_rng);

    ForwardOptions<double> keep;
    keep.update_pool = false;
    const auto inputs = all.subspan(n, n);
    const auto targets = all.subspan(n + 1, n);
    auto loss = [&](const TransformerXL<double>& m) {
        MemoryPool<double> p = pool;
        const auto out = m.forward_segment(inputs, static_cast<std::int64_t>(n), p, policy, fwd_rng, keep);
        return segment_nll(out.logits, targets) / static_cast<double>(n);
    };

    ForwardTape<double> tape;
    MemoryPool<double> p = pool;
    const auto out = model.forward_segment(inputs, static_cast<std::int64_t>(n), p, policy, fwd_rng, keep, &tape);
    MatrixD d_logits = softmax_rows(out.logits, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        d_logits(i, static_cast<std::size_t>(targets[i])) -= 1.0;
        for (auto& v : d_logits.row(i)) v /= static_cast<double>(n);
    }
    ModelWeights<double> grads = ModelWeights<double>::zeros(config);
    model.backward_segment(tape, d_logits, grads);

    struct Slot {
        std::string name;
        MatrixD* param;
        const MatrixD* grad;
    };
    std::vector<Slot> slots;
    std::vector<const MatrixD*> grad_list;
    grads.visit([&](const std::string&, const MatrixD& g) { grad_list.push_back(&g); });
    std::size_t k = 0;
    std::size_t total = 0;
    model.mutable_weights().visit([&](const std::string& name, MatrixD& w) {
        slots.push_back({name, &w, grad_list[k++]});
        total += w.size();
    });

    GradientCheckResult result;
    std::vector<double> errors;
    const double step = 1e-5;
    for (std::size_t s = 0; s < samples; ++s) {
        std::size_t flat = static_cast<std::size_t>(pick_rng.uniform_index(total));
        std::size_t which = 0;
        while (flat >= slots[which].param->size()) flat -= slots[which++].param->size();
        Slot& slot = slots[which];
        double& w = slot.param->data()[flat];
        const double original = w;
        w = original + step;
        model.refresh_caches();
        const double plus = loss(model);
        w = original - step;
        model.refresh_caches();
        const double minus = loss(model);
        w = original;
        model.refresh_caches();
        const double numeric = (plus - minus) / (2 * step);
        const double analytic = slot.grad->data()[flat];
        const double err = GradientCheckResult::relative_error(analytic, numeric);
        errors.push_back(err);
        if (err > tolerance) ++result.failures;
        if (err >= result.max_relative_error) {
            result.max_relative_error = err;
            result.worst_tensor = slot.name;
        }
    }
    result.checked = samples;
    result.median_relative_error = describe(errors).median;
    return result;
}

}  // namespace trams
