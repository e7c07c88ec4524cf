// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>

#include "config_fields.hpp"

namespace trams {

namespace detail {

namespace {

using nlohmann::json;

template <typename Member>
ConfigField size_field(std::string key, std::string help, bool model, Member member) {
    return {std::move(key), std::move(help), model,
            [member](RunConfig& c, const json& v) -> std::string {
                if (!v.is_number_unsigned()) return "expected a non-negative integer";
                member(c) = v.get<std::uint64_t>();
                return {};
            },
            [member](const RunConfig& c) { return json(member(c)); }};
}

template <typename Member>
ConfigField real_field(std::string key, std::string help, bool model, Member member) {
    return {std::move(key), std::move(help), model,
            [member](RunConfig& c, const json& v) -> std::string {
                if (!v.is_number()) return "expected a number";
                member(c) = v.get<double>();
                return {};
            },
            [member](const RunConfig& c) { return json(member(c)); }};
}

template <typename Member>
ConfigField bool_field(std::string key, std::string help, bool model, Member member) {
    return {std::move(key), std::move(help), model,
            [member](RunConfig& c, const json& v) -> std::string {
                if (!v.is_boolean()) return "expected true or false";
                member(c) = v.get<bool>();
                return {};
            },
            [member](const RunConfig& c) { return json(member(c)); }};
}

template <typename Member>
ConfigField string_field(std::string key, std::string help, Member member) {
    return {std::move(key), std::move(help), false,
            [member](RunConfig& c, const json& v) -> std::string {
                if (!v.is_string()) return "expected a string";
                member(c) = v.get<std::string>();
                return {};
            },
            [member](const RunConfig& c) { return json(member(c)); }};
}

template <typename Member, typename Parse, typename Print>
ConfigField enum_field(std::string key, std::string help, bool model, Member member, Parse parse, Print print) {
    return {std::move(key), std::move(help), model,
            [member, parse](RunConfig& c, const json& v) -> std::string {
                if (!v.is_string()) return "expected a string";
                try {
                    member(c) = parse(v.get<std::string>());
                } catch (const UsageError& e) {
                    return e.what();
                }
                return {};
            },
            [member, print](const RunConfig& c) {
                return json(std::string(print(member(c))));
            }};
}

#define TRAMS_MEMBER(path) [](auto& c) -> auto& { return c.path; }

std::vector<ConfigField> build_fields() {
    std::vector<ConfigField> f;
    f.push_back(size_field("num_layers", "transformer blocks", true, TRAMS_MEMBER(model.num_layers)));
    f.push_back(size_field("num_heads", "attention heads per block", true, TRAMS_MEMBER(model.num_heads)));
    f.push_back(size_field("d_model", "hidden width d (even, divisible by num_heads)", true,
                           TRAMS_MEMBER(model.d_model)));
    f.push_back(size_field("d_ffn", "feed-forward inner width", true, TRAMS_MEMBER(model.d_ffn)));
    f.push_back(size_field("vocab_size", "set from the tokenized corpus when 0", true, TRAMS_MEMBER(model.vocab_size)));
    f.push_back(size_field("segment_len", "segment length n", true, TRAMS_MEMBER(model.segment_len)));
    f.push_back(size_field("pool_capacity", "memory pool capacity M", true, TRAMS_MEMBER(model.pool_capacity)));
    f.push_back(size_field("selected_m", "selected memories m (<= M)", true, TRAMS_MEMBER(model.selected_m)));
    f.push_back(enum_field(
        "strategy", "trams | oracle | random | recency | none", true, TRAMS_MEMBER(model.strategy),
        [](const std::string& s) { return parse_strategy(s); }, [](Strategy s) { return to_string(s); }));
    f.push_back(enum_field(
        "metric_direction", "descending | ascending | abs_ascending", true, TRAMS_MEMBER(model.metric_direction),
        [](const std::string& s) { return parse_direction(s); }, [](RankDirection d) { return to_string(d); }));
    f.push_back(real_field("dropout", "dropout rate during training", true, TRAMS_MEMBER(model.dropout)));
    f.push_back(bool_field("selection_u_bias", "add the u·k content-bias term to selection scores", true,
                           TRAMS_MEMBER(model.selection_u_bias)));
    f.push_back(real_field("learning_rate", "Adam peak learning rate", false, TRAMS_MEMBER(train.learning_rate)));
    f.push_back(size_field("steps", "optimizer steps", false, TRAMS_MEMBER(train.steps)));
    f.push_back(size_field("batch", "parallel training streams", false, TRAMS_MEMBER(train.batch)));
    f.push_back(real_field("beta1", "Adam beta1", false, TRAMS_MEMBER(train.beta1)));
    f.push_back(real_field("beta2", "Adam beta2", false, TRAMS_MEMBER(train.beta2)));
    f.push_back(real_field("adam_eps", "Adam epsilon", false, TRAMS_MEMBER(train.adam_eps)));
    f.push_back(bool_field("cosine_schedule", "cosine learning-rate decay", false, TRAMS_MEMBER(train.cosine_schedule)));
    f.push_back(real_field("clip_norm", "global gradient-norm clip (0 disables)", false, TRAMS_MEMBER(train.clip_norm)));
    f.push_back(size_field("train_memory", "memory length during training (0: segment_len)", false,
                           TRAMS_MEMBER(train.train_memory)));
    f.push_back(size_field("log_every", "print the loss every k steps (0: never)", false, TRAMS_MEMBER(train.log_every)));
    f.push_back(string_field("corpus", "UTF-8 text corpus path", TRAMS_MEMBER(corpus)));
    f.push_back(string_field("checkpoint", "checkpoint path", TRAMS_MEMBER(checkpoint)));
    f.push_back(string_field("output_dir", "report directory (empty: $TRAMS_OUT_DIR, else out)",
                             TRAMS_MEMBER(output_dir)));
    f.push_back(enum_field(
        "tokenizer", "char | word", false, TRAMS_MEMBER(tokenizer),
        [](const std::string& s) { return parse_tokenizer_kind(s); }, [](TokenizerKind k) { return to_string(k); }));
    f.push_back(size_field("max_vocab", "word vocabulary cap including <unk> (0: no cap)", false,
                           TRAMS_MEMBER(max_vocab)));
    f.push_back(real_field("valid_fraction", "held-out tail fraction used for evaluation", false,
                           TRAMS_MEMBER(valid_fraction)));
    f.push_back(size_field("seed", "seed for every random choice", false, TRAMS_MEMBER(seed)));
    return f;
}

#undef TRAMS_MEMBER

}  // namespace

const std::vector<ConfigField>& config_fields() {
    static const std::vector<ConfigField> fields = build_fields();
    return fields;
}

std::vector<std::string> apply_fields(RunConfig& config, const nlohmann::json& object, bool model_only) {
    std::vector<std::string> problems;
    if (!object.is_object()) return {"expected a JSON object"};
    for (const auto& [key, value] : object.items()) {
        const ConfigField* field = nullptr;
        for (const auto& f : config_fields())
            if (f.key == key && (f.model_field || !model_only)) field = &f;
        if (!field) {
            problems.push_back("unknown key '" + key + "'");
            continue;
        }
        if (std::string why = field->set(config, value); !why.empty()) problems.push_back("'" + key + "': " + why);
    }
    return problems;
}

nlohmann::json model_config_to_json(const ModelConfig& config) {
    RunConfig rc;
    rc.model = config;
    nlohmann::json j = nlohmann::json::object();
    for (const auto& f : config_fields())
        if (f.model_field) j[f.key] = f.get(rc);
    return j;
}

}  // namespace detail

void RunConfig::validate() const {
    std::vector<std::string> problems;
    try {
        ModelConfig probe = model;
        if (probe.vocab_size == 0) probe.vocab_size = 1;
        probe.validate();
    } catch (const UsageError& e) {
        problems.emplace_back(e.what());
    }
    if (!(train.learning_rate >= 0.0)) problems.emplace_back("learning_rate must be >= 0");
    if (train.batch == 0) problems.emplace_back("batch must be >= 1");
    if (!(train.beta1 >= 0.0 && train.beta1 < 1.0)) problems.emplace_back("beta1 must be in [0, 1)");
    if (!(train.beta2 >= 0.0 && train.beta2 < 1.0)) problems.emplace_back("beta2 must be in [0, 1)");
    if (!(train.adam_eps > 0.0)) problems.emplace_back("adam_eps must be > 0");
    if (!(train.clip_norm >= 0.0)) problems.emplace_back("clip_norm must be >= 0");
    if (tokenizer == TokenizerKind::word_level && max_vocab == 1) problems.emplace_back("max_vocab must be 0 or >= 2");
    if (!(valid_fraction >= 0.0 && valid_fraction < 1.0)) problems.emplace_back("valid_fraction must be in [0, 1)");
    if (!problems.empty()) {
        std::string msg = "invalid config:";
        for (const auto& p : problems) msg += " " + p + ";";
        throw UsageError(msg);
    }
}

const std::vector<std::string>& run_config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& f : detail::config_fields()) k.push_back(f.key);
        return k;
    }();
    return keys;
}

RunConfig apply_config_json(const RunConfig& base, std::string_view json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("config: invalid JSON: ") + e.what());
    }
    RunConfig out = base;
    const auto problems = detail::apply_fields(out, j, false);
    if (!problems.empty()) {
        std::string msg = "config:";
        for (const auto& p : problems) msg += " " + p + ";";
        throw UsageError(msg);
    }
    out.train.seed = out.seed;
    return out;
}

RunConfig parse_config(const std::filesystem::path& path) {
    RunConfig config;
    if (!path.empty()) {
        if (!std::filesystem::exists(path)) throw UsageError("config file '" + path.string() + "' does not exist");
        config = apply_config_json(config, read_text_file(path));
    }
    config.validate();
    return config;
}

std::string run_config_to_json(const RunConfig& config) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& f : detail::config_fields()) j[f.key] = nlohmann::ordered_json::parse(f.get(config).dump());
    return j.dump(2) + "\n";
}

std::filesystem::path resolve_output_dir(const std::string& configured) {
    if (!configured.empty()) return configured;
    if (const char* env = std::getenv("TRAMS_OUT_DIR"); env && *env) return env;
    return "out";
}

}  // namespace trams
