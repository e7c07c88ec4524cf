// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>

#include "config_fields.hpp"

namespace trams {

namespace {

using nlohmann::json;

constexpr std::size_t kMagicBytes = sizeof(kCheckpointMagic);

void put_le(std::string& out, std::uint64_t value, std::size_t bytes) {
    for (std::size_t i = 0; i < bytes; ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::string_view in, std::size_t offset, std::size_t bytes) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bytes; ++i) v |= std::uint64_t{static_cast<unsigned char>(in[offset + i])} << (8 * i);
    return v;
}

[[noreturn]] void corrupt(const std::string& what) { throw CorruptFileError("corrupt checkpoint: " + what); }

json vocab_to_json(const Vocabulary& v) {
    json j;
    j["kind"] = std::string(to_string(v.kind));
    j["tokens"] = v.id_to_token;
    j["unk_id"] = v.unk_id ? json(*v.unk_id) : json(nullptr);
    return j;
}

Vocabulary vocab_from_json(const json& j) {
    if (!j.is_object()) corrupt("field 'vocab' is not an object");
    Vocabulary v;
    try {
        v.kind = parse_tokenizer_kind(j.at("kind").get<std::string>());
        v.id_to_token = j.at("tokens").get<std::vector<std::string>>();
        const json& unk = j.at("unk_id");
        if (!unk.is_null()) v.unk_id = unk.get<std::int32_t>();
    } catch (const json::exception& e) {
        corrupt(std::string("field 'vocab': ") + e.what());
    } catch (const UsageError& e) {
        corrupt(std::string("field 'vocab.kind': ") + e.what());
    }
    for (std::size_t i = 0; i < v.id_to_token.size(); ++i) {
        if (!v.token_to_id.emplace(v.id_to_token[i], static_cast<std::int32_t>(i)).second) {
            corrupt("field 'vocab.tokens': duplicate token at index " + std::to_string(i));
        }
    }
    if (v.unk_id && (*v.unk_id < 0 || static_cast<std::size_t>(*v.unk_id) >= v.size())) {
        corrupt("field 'vocab.unk_id' is out of range");
    }
    return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    ckpt.config.validate();
    json header;
    header["config"] = detail::model_config_to_json(ckpt.config);
    json tensors = json::array();
    std::size_t payload = 0;
    ckpt.weights.visit([&](const std::string& name, const BasicMatrix<float>& m) {
        tensors.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}});
        payload += m.size() * sizeof(float);
    });
    header["tensors"] = std::move(tensors);
    if (ckpt.vocab) header["vocab"] = vocab_to_json(*ckpt.vocab);
    const std::string text = header.dump();

    std::string out;
    out.reserve(kMagicBytes + 6 + text.size() + payload);
    out.append(kCheckpointMagic, kMagicBytes);
    put_le(out, kCheckpointVersion, 2);
    put_le(out, text.size(), 4);
    out += text;
    ckpt.weights.visit([&](const std::string&, const BasicMatrix<float>& m) {
        for (float f : m.values()) put_le(out, std::bit_cast<std::uint32_t>(f), 4);
    });
    return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
    if (bytes.size() < kMagicBytes) corrupt("truncated in field 'magic'");
    if (std::memcmp(bytes.data(), kCheckpointMagic, kMagicBytes) != 0) corrupt("bad value in field 'magic'");
    if (bytes.size() < kMagicBytes + 2) corrupt("truncated in field 'version'");
    const auto version = static_cast<std::uint16_t>(get_le(bytes, kMagicBytes, 2));
    if (version != kCheckpointVersion) {
        throw UnsupportedVersionError("unsupported checkpoint version " + std::to_string(version) + " (field 'version'; "
                                      "this build reads version " + std::to_string(kCheckpointVersion) + ")");
    }
    if (bytes.size() < kMagicBytes + 6) corrupt("truncated in field 'header_length'");
    const std::size_t header_len = get_le(bytes, kMagicBytes + 2, 4);
    std::size_t offset = kMagicBytes + 6;
    if (bytes.size() - offset < header_len) corrupt("truncated in field 'header'");

    json header;
    try {
        header = json::parse(bytes.substr(offset, header_len));
    } catch (const json::exception& e) {
        corrupt(std::string("field 'header' is not valid JSON: ") + e.what());
    }
    offset += header_len;
    if (!header.is_object() || !header.contains("config") || !header.contains("tensors")) {
        corrupt("field 'header' lacks 'config' or 'tensors'");
    }

    Checkpoint ckpt;
    RunConfig rc;
    if (const auto problems = detail::apply_fields(rc, header["config"], true); !problems.empty()) {
        corrupt("field 'config': " + problems.front());
    }
    ckpt.config = rc.model;
    try {
        ckpt.config.validate();
    } catch (const UsageError& e) {
        corrupt(std::string("field 'config': ") + e.what());
    }
    ckpt.weights = ModelWeights<float>::zeros(ckpt.config);

    const json& manifest = header["tensors"];
    if (!manifest.is_array()) corrupt("field 'tensors' is not an array");
    std::size_t index = 0;
    ckpt.weights.visit([&](const std::string& name, BasicMatrix<float>& m) {
        if (index >= manifest.size()) corrupt("field 'tensors' ends before tensor '" + name + "'");
        const json& entry = manifest[index++];
        const bool ok = entry.is_object() && entry.value("name", json()) == name &&
                        entry.value("shape", json()) == json::array({m.rows(), m.cols()});
        if (!ok) {
            corrupt("field 'tensors[" + std::to_string(index - 1) + "]' = " + entry.dump() + ", expected '" + name +
                    "' with shape " + m.shape_string());
        }
        if (bytes.size() - offset < m.size() * sizeof(float)) corrupt("truncated in tensor '" + name + "'");
        for (float& f : m.values()) {
            f = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, offset, 4)));
            offset += 4;
        }
    });
    if (index != manifest.size()) corrupt("field 'tensors' lists " + std::to_string(manifest.size() - index) +
                                          " unexpected extra tensors");
    if (offset != bytes.size()) corrupt(std::to_string(bytes.size() - offset) + " trailing bytes after the last tensor");

    if (header.contains("vocab")) {
        ckpt.vocab = vocab_from_json(header["vocab"]);
        if (ckpt.vocab->size() != ckpt.config.vocab_size) {
            corrupt("field 'vocab' has " + std::to_string(ckpt.vocab->size()) + " tokens but config.vocab_size is " +
                    std::to_string(ckpt.config.vocab_size));
        }
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_text_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw UsageError("checkpoint '" + path.string() + "' does not exist");
    try {
        return deserialize_checkpoint(read_text_file(path));
    } catch (const CorruptFileError& e) {
        if (dynamic_cast<const UnsupportedVersionError*>(&e)) throw UnsupportedVersionError(path.string() + ": " + e.what());
        throw CorruptFileError(path.string() + ": " + e.what());
    }
}

}  // namespace trams
