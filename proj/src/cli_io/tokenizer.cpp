// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "trams/cli_io.hpp"

namespace trams {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::vector<std::string_view> split_words(std::string_view text) {
    std::vector<std::string_view> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        const std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        if (i > start) words.push_back(text.substr(start, i - start));
    }
    return words;
}

std::size_t utf8_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead & 0xE0) == 0xC0) return 2;
    if ((lead & 0xF0) == 0xE0) return 3;
    if ((lead & 0xF8) == 0xF0) return 4;
    return 0;
}

}  // namespace

std::string_view to_string(TokenizerKind kind) noexcept {
    return kind == TokenizerKind::char_level ? "char" : "word";
}

TokenizerKind parse_tokenizer_kind(std::string_view name) {
    if (name == "char") return TokenizerKind::char_level;
    if (name == "word") return TokenizerKind::word_level;
    throw UsageError("unknown tokenizer '" + std::string(name) + "' (expected char or word)");
}

std::vector<std::string> utf8_code_points(std::string_view text) {
    std::vector<std::string> out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size();) {
        const std::size_t len = utf8_length(static_cast<unsigned char>(text[i]));
        if (len == 0 || i + len > text.size()) {
            throw UsageError("malformed UTF-8 at byte offset " + std::to_string(i));
        }
        for (std::size_t k = 1; k < len; ++k) {
            if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
                throw UsageError("malformed UTF-8 at byte offset " + std::to_string(i + k));
            }
        }
        out.emplace_back(text.substr(i, len));
        i += len;
    }
    return out;
}

std::vector<std::int32_t> Vocabulary::encode(std::string_view text) const {
    std::vector<std::int32_t> ids;
    auto lookup = [&](const std::string& tok) {
        const auto it = token_to_id.find(tok);
        if (it != token_to_id.end()) return it->second;
        if (unk_id) return *unk_id;
        throw UsageError("token '" + tok + "' is not in the vocabulary");
    };
    if (kind == TokenizerKind::char_level) {
        for (const auto& cp : utf8_code_points(text)) ids.push_back(lookup(cp));
    } else {
        for (auto w : split_words(text)) ids.push_back(lookup(std::string(w)));
    }
    return ids;
}

std::string Vocabulary::decode(std::span<const std::int32_t> ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (kind == TokenizerKind::word_level && i > 0) out += ' ';
        out += token(ids[i]);
    }
    return out;
}

const std::string& Vocabulary::token(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token.size()) {
        throw UsageError("token id " + std::to_string(id) + " outside vocabulary of size " +
                         std::to_string(id_to_token.size()));
    }
    return id_to_token[static_cast<std::size_t>(id)];
}

TokenizedCorpus tokenize_corpus(std::string_view text, TokenizerKind kind, std::size_t max_vocab) {
    if (text.empty()) throw UsageError("tokenize: corpus text is empty");
    TokenizedCorpus out;
    Vocabulary& v = out.vocab;
    v.kind = kind;
    if (kind == TokenizerKind::char_level) {
        const auto cps = utf8_code_points(text);
        for (const auto& cp : cps) v.token_to_id.emplace(cp, 0);
        for (auto& [tok, id] : v.token_to_id) {
            id = static_cast<std::int32_t>(v.id_to_token.size());
            v.id_to_token.push_back(tok);
        }
        out.ids.reserve(cps.size());
        for (const auto& cp : cps) out.ids.push_back(v.token_to_id.at(cp));
        return out;
    }

    if (max_vocab == 1) throw UsageError("tokenize: max_vocab must be 0 or >= 2 for word vocabularies");
    const auto words = split_words(text);
    if (words.empty()) throw UsageError("tokenize: corpus contains no words");
    struct Entry {
        std::size_t count = 0;
        std::size_t first = 0;
    };
    std::unordered_map<std::string_view, Entry> stats;
    for (std::size_t i = 0; i < words.size(); ++i) {
        auto [it, inserted] = stats.try_emplace(words[i], Entry{0, i});
        ++it->second.count;
    }
    std::vector<std::pair<std::string_view, Entry>> ranked(stats.begin(), stats.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second.count != b.second.count) return a.second.count > b.second.count;
        return a.second.first < b.second.first;
    });
    const std::size_t keep = max_vocab ? std::min(ranked.size(), max_vocab - 1) : ranked.size();
    for (std::size_t r = 0; r < keep; ++r) {
        std::string tok(ranked[r].first);
        if (tok == kUnkToken) continue;
        v.token_to_id.emplace(tok, static_cast<std::int32_t>(v.id_to_token.size()));
        v.id_to_token.push_back(std::move(tok));
    }
    v.unk_id = static_cast<std::int32_t>(v.id_to_token.size());
    v.token_to_id.emplace(std::string(kUnkToken), *v.unk_id);
    v.id_to_token.emplace_back(kUnkToken);
    out.ids.reserve(words.size());
    for (auto w : words) {
        const auto it = v.token_to_id.find(std::string(w));
        out.ids.push_back(it != v.token_to_id.end() ? it->second : *v.unk_id);
    }
    return out;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeFailure("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw RuntimeFailure("read error on '" + path.string() + "'");
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot open '" + path.string() + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw RuntimeFailure("write error on '" + path.string() + "'");
}

std::string synthetic_corpus(std::size_t approx_bytes, std::uint64_t seed) {
    static constexpr const char* kOnsets[] = {"b", "c", "d", "f", "g", "h", "l", "m", "n", "p", "r", "s", "t", "v",
                                              "w", "st", "th", "tr", "pl", "gr"};
    static constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ea", "ou", "ai"};
    static constexpr const char* kCodas[] = {"", "", "", "n", "r", "s", "t", "l", "nd", "ng"};
    static constexpr const char* kFunction[] = {"the", "a", "of", "and", "to", "in", "was", "with", "that", "for",
                                                "on", "by", "from", "at", "his", "her", "it", "as"};
    Rng rng(seed);
    auto pick = [&](const auto& arr) {
        return std::string(arr[rng.uniform_index(std::size(arr))]);
    };
    auto syllable = [&] { return pick(kOnsets) + pick(kVowels) + pick(kCodas); };

    std::vector<std::string> lexicon;
    for (const char* w : kFunction) lexicon.emplace_back(w);
    while (lexicon.size() < 400) {
        std::string w = syllable();
        if (rng.uniform() < 0.6) w += syllable();
        if (rng.uniform() < 0.2) w += syllable();
        lexicon.push_back(std::move(w));
    }
    std::vector<double> cumulative(lexicon.size());
    double total = 0.0;
    for (std::size_t r = 0; r < lexicon.size(); ++r) cumulative[r] = total += 1.0 / static_cast<double>(r + 1);
    auto zipf_word = [&]() -> const std::string& {
        const double u = rng.uniform() * total;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        return lexicon[std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), lexicon.size() - 1)];
    };
    auto make_name = [&] {
        std::string n = syllable() + syllable();
        n[0] = static_cast<char>(n[0] - 'a' + 'A');
        return n;
    };

    std::string text;
    text.reserve(approx_bytes + 256);
    while (text.size() < approx_bytes) {
        const std::string names[2] = {make_name(), make_name()};
        const std::size_t sentences = 4 + rng.uniform_index(5);
        for (std::size_t s = 0; s < sentences; ++s) {
            const std::size_t words = 6 + rng.uniform_index(9);
            const std::string& subject = names[rng.uniform_index(2)];
            text += subject;
            for (std::size_t w = 1; w < words; ++w) {
                text += ' ';
                if (rng.uniform() < 0.08) text += names[rng.uniform_index(2)];
                else text += zipf_word();
                if (w + 1 < words && rng.uniform() < 0.07) text += ',';
            }
            text += s + 1 < sentences ? ". " : ".\n";
        }
    }
    return text;
}

}  // namespace trams
