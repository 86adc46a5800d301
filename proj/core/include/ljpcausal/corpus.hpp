#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ljpcausal/common.hpp"

namespace ljp {

struct Token {
    std::string surface;
    int offset = 0;        // byte offset into the record text
    double norm_pos = 0;   // index / max(1, token_count - 1)
};

struct CaseRecord {
    std::string id;
    std::string text;
    std::string label;
    std::vector<Token> tokens;
    std::vector<std::string> pos;  // empty, or one tag per token
    std::vector<std::string> ner;  // empty, or one tag per token
};

enum class Split : std::uint8_t { train, dev, test, unused };

const char* split_name(Split s);
std::optional<Split> split_from_name(const std::string& name);

struct Corpus {
    std::vector<CaseRecord> records;
    std::vector<std::string> labels;       // first-appearance order
    std::map<std::string, Split> split;    // record id -> split

    int label_index(const std::string& label) const;  // -1 if unknown
    Split split_of(const std::string& id) const;      // defaults to train
    std::vector<const CaseRecord*> split_records(Split s) const;
};

struct TokenizerConfig {
    bool lowercase = false;
    bool pretokenized_passthrough = false;  // input must carry tokens
};

// Splits on ASCII whitespace/punctuation; multi-byte UTF-8 sequences count
// as word characters, so unsegmented CJK stays one token (such corpora must
// be pre-tokenized, see load_corpus).
std::vector<Token> tokenize(const std::string& text, const TokenizerConfig& cfg = {});

void recompute_norm_pos(std::vector<Token>& tokens);

enum class CorpusFormat { jsonl };

// One JSON object per line: {id, text, label, tokens?, pos?, ner?}.
// tokens may be [["surface", offset], ...] or [{"surface":..,"offset":..}, ...];
// when present they are taken verbatim and norm_pos is recomputed.
Corpus load_corpus(const std::string& path, CorpusFormat format = CorpusFormat::jsonl,
                   const TokenizerConfig& tok = {});
Corpus parse_corpus_jsonl(std::istream& in, const TokenizerConfig& tok,
                          const std::string& origin);

struct SplitFractions {
    double train = 0.8;
    double dev = 0.1;
    double test = 0.1;
};

struct SplitOptions {
    SplitFractions fractions;
    std::uint32_t seed = 0;
    // Sub-sampling of the train partition (kept fraction in percent);
    // records dropped from train land in Split::unused.
    double train_keep_pct = 100.0;
};

// Stratified by label, deterministic per seed. Labels with fewer than 3
// records go entirely to train with a warning.
void split_corpus(Corpus& corpus, const SplitOptions& opts);

void save_split_manifest(const Corpus& corpus, const std::string& path);
void load_split_manifest(Corpus& corpus, const std::string& path);

}  // namespace ljp
