// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trams/model.hpp"

namespace trams {

/// A checkpoint or report file that does not parse. The message names the field.
class CorruptFileError : public RuntimeFailure {
public:
    using RuntimeFailure::RuntimeFailure;
};

/// A checkpoint written by a newer or unknown format version.
class UnsupportedVersionError : public CorruptFileError {
public:
    using CorruptFileError::CorruptFileError;
};

// ---- tokenization ---------------------------------------------------------------

enum class TokenizerKind { char_level, word_level };

std::string_view to_string(TokenizerKind kind) noexcept;
TokenizerKind parse_tokenizer_kind(std::string_view name);

inline constexpr std::string_view kUnkToken = "<unk>";

/// Character vocabularies hold the distinct code points in ascending order and
/// have no unknown entry. Word vocabularies keep words by descending frequency
/// (ties: first occurrence) followed by "<unk>".
struct Vocabulary {
    TokenizerKind kind = TokenizerKind::char_level;
    std::map<std::string, std::int32_t> token_to_id;
    std::vector<std::string> id_to_token;
    std::optional<std::int32_t> unk_id;

    std::size_t size() const noexcept { return id_to_token.size(); }
    /// Maps text onto ids; unseen characters throw UsageError, unseen words map to unk.
    std::vector<std::int32_t> encode(std::string_view text) const;
    /// Characters are concatenated; words are joined with single spaces.
    std::string decode(std::span<const std::int32_t> ids) const;
    const std::string& token(std::int32_t id) const;

    friend bool operator==(const Vocabulary&, const Vocabulary&) = default;
};

struct TokenizedCorpus {
    Vocabulary vocab;
    std::vector<std::int32_t> ids;
};

/// Builds a vocabulary from `text` and encodes it. `max_vocab` caps the word
/// vocabulary (including "<unk>"); 0 keeps every word. Character vocabularies
/// ignore the cap.
TokenizedCorpus tokenize_corpus(std::string_view text, TokenizerKind kind, std::size_t max_vocab = 0);

/// Splits UTF-8 text into code points, each returned as its byte sequence.
/// Throws UsageError on malformed UTF-8.
std::vector<std::string> utf8_code_points(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Deterministic pseudo-English text: a few hundred syllable-built words in
/// templated sentences, plus recurring rare names.
std::string synthetic_corpus(std::size_t approx_bytes, std::uint64_t seed);

// ---- checkpoints ------------------------------------------------------------------

inline constexpr char kCheckpointMagic[10] = {'T', 'R', 'A', 'M', 'S', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig config;
    ModelWeights<float> weights;
    std::optional<Vocabulary> vocab;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Layout: 10-byte magic, u16 version (LE), u32 header length (LE), UTF-8 JSON
/// header {config, tensors: [{name, shape}], vocab?}, then every tensor as raw
/// little-endian float32 in manifest order.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---- configuration -------------------------------------------------------------------

struct RunConfig {
    ModelConfig model;
    TrainHyperParams train;
    std::string corpus;
    std::string checkpoint;
    std::string output_dir;  ///< empty: $TRAMS_OUT_DIR, else "out"
    TokenizerKind tokenizer = TokenizerKind::char_level;
    std::size_t max_vocab = 0;
    /// Fraction of the corpus (its tail) held out for evaluation after training.
    double valid_fraction = 0.05;
    std::uint64_t seed = 0;

    /// Throws UsageError listing every violated constraint.
    void validate() const;
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Key names accepted in config files, in documentation order.
const std::vector<std::string>& run_config_keys();

/// Applies a JSON object onto `base`. Unknown keys and type mismatches throw
/// UsageError naming every offender. Does not validate constraints.
RunConfig apply_config_json(const RunConfig& base, std::string_view json_text);
/// Reads a JSON config file (or defaults when `path` is empty) and validates it.
RunConfig parse_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& config);

/// Resolves the output directory: explicit value, then $TRAMS_OUT_DIR, then "out".
std::filesystem::path resolve_output_dir(const std::string& configured);

// ---- reports ------------------------------------------------------------------------

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);
double parse_number(std::string_view text);

/// Column-oriented text table written as RFC 4180 CSV.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row);
    std::size_t column(std::string_view name) const;
    double number(std::size_t row, std::string_view column) const;
    friend bool operator==(const Table&, const Table&) = default;
};

std::string to_csv(const Table& table);
Table parse_csv(std::string_view text);
void write_csv(const Table& table, const std::filesystem::path& path);
Table read_csv(const std::filesystem::path& path);

enum class ReportFormat { json, csv };
ReportFormat parse_report_format(std::string_view name);

/// Column order of the EvalReport CSV and key order of its JSON form.
const std::vector<std::string>& eval_report_fields();
std::string eval_report_json(const EvalReport& report);
Table eval_report_table(const std::vector<EvalReport>& reports);
EvalReport eval_report_from_json(std::string_view text);
void write_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format);

/// "{experiment}-{timestamp}.csv"; the timestamp is UTC YYYYMMDDTHHMMSS, or
/// all zeros when `fixed` is set.
std::string experiment_file_name(std::string_view experiment, bool fixed, std::string_view extension = "csv");

// ---- command line -------------------------------------------------------------------

/// Dispatches `trams <subcommand> ...`. Returns 0 on success, 1 on usage
/// errors, 2 on runtime failures.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace trams
