#include "ljpcausal/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ljp {

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::dev: return "dev";
        case Split::test: return "test";
        case Split::unused: return "unused";
    }
    return "train";
}

std::optional<Split> split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "dev") return Split::dev;
    if (name == "test") return Split::test;
    if (name == "unused") return Split::unused;
    return std::nullopt;
}

int Corpus::label_index(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label) return static_cast<int>(i);
    }
    return -1;
}

Split Corpus::split_of(const std::string& id) const {
    auto it = split.find(id);
    return it == split.end() ? Split::train : it->second;
}

std::vector<const CaseRecord*> Corpus::split_records(Split s) const {
    std::vector<const CaseRecord*> out;
    for (const auto& r : records) {
        if (split_of(r.id) == s) out.push_back(&r);
    }
    return out;
}

std::vector<Token> tokenize(const std::string& text, const TokenizerConfig& cfg) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_ascii_alnum(c) || c >= 0x80) {
            std::size_t start = i;
            while (i < text.size()) {
                unsigned char d = static_cast<unsigned char>(text[i]);
                if (!is_ascii_alnum(d) && d < 0x80) break;
                ++i;
            }
            std::string surface = text.substr(start, i - start);
            if (cfg.lowercase) surface = to_lower(surface);
            tokens.push_back(Token{std::move(surface), static_cast<int>(start), 0.0});
        } else {
            ++i;
        }
    }
    recompute_norm_pos(tokens);
    return tokens;
}

void recompute_norm_pos(std::vector<Token>& tokens) {
    const double denom = std::max<std::size_t>(1, tokens.size() - (tokens.empty() ? 0 : 1));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        tokens[i].norm_pos = static_cast<double>(i) / denom;
    }
}

namespace {

std::vector<Token> parse_token_array(const nlohmann::json& arr, const std::string& where) {
    std::vector<Token> tokens;
    int prev_offset = -1;
    for (const auto& t : arr) {
        Token tok;
        if (t.is_array() && t.size() == 2 && t[0].is_string() && t[1].is_number()) {
            tok.surface = t[0].get<std::string>();
            tok.offset = t[1].get<int>();
        } else if (t.is_object() && t.contains("surface") && t.contains("offset")) {
            tok.surface = t["surface"].get<std::string>();
            tok.offset = t["offset"].get<int>();
        } else {
            throw ParseError(where + ": token entries must be [surface, offset] or {surface, offset}");
        }
        if (tok.surface.empty()) {
            throw ParseError(where + ": empty token surface");
        }
        if (tok.offset <= prev_offset) {
            throw ParseError(where + ": token offsets must be strictly increasing");
        }
        prev_offset = tok.offset;
        tokens.push_back(std::move(tok));
    }
    recompute_norm_pos(tokens);
    return tokens;
}

std::vector<std::string> parse_tag_array(const nlohmann::json& arr, std::size_t n_tokens,
                                         const char* field, const std::string& where) {
    std::vector<std::string> tags;
    for (const auto& t : arr) {
        if (!t.is_string()) throw ParseError(where + ": " + field + " entries must be strings");
        tags.push_back(t.get<std::string>());
    }
    if (tags.size() != n_tokens) {
        throw ParseError(where + ": " + field + " length does not match token count");
    }
    return tags;
}

}  // namespace

Corpus parse_corpus_jsonl(std::istream& in, const TokenizerConfig& tok,
                          const std::string& origin) {
    Corpus corpus;
    std::set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = origin + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where + ": invalid JSON (" + e.what() + ")");
        }
        if (!j.is_object()) throw ParseError(where + ": record must be a JSON object");
        for (const char* field : {"id", "text", "label"}) {
            if (!j.contains(field) || !j[field].is_string()) {
                throw ParseError(where + ": missing or non-string field \"" + field + "\"");
            }
        }
        CaseRecord rec;
        rec.id = j["id"].get<std::string>();
        rec.text = j["text"].get<std::string>();
        rec.label = j["label"].get<std::string>();
        if (!seen_ids.insert(rec.id).second) {
            throw ValidationError(where + ": duplicate record id \"" + rec.id + "\"");
        }
        if (j.contains("tokens")) {
            if (!j["tokens"].is_array()) throw ParseError(where + ": tokens must be an array");
            rec.tokens = parse_token_array(j["tokens"], where);
        } else {
            if (tok.pretokenized_passthrough) {
                throw ParseError(where + ": pre-tokenized passthrough requires a tokens field");
            }
            rec.tokens = tokenize(rec.text, tok);
        }
        if (j.contains("pos")) rec.pos = parse_tag_array(j["pos"], rec.tokens.size(), "pos", where);
        if (j.contains("ner")) rec.ner = parse_tag_array(j["ner"], rec.tokens.size(), "ner", where);
        if (corpus.label_index(rec.label) < 0) corpus.labels.push_back(rec.label);
        corpus.records.push_back(std::move(rec));
    }
    for (const auto& r : corpus.records) corpus.split[r.id] = Split::train;
    return corpus;
}

Corpus load_corpus(const std::string& path, CorpusFormat format, const TokenizerConfig& tok) {
    (void)format;  // only jsonl for now
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open corpus file: " + path);
    return parse_corpus_jsonl(in, tok, path);
}

namespace {

// Largest-remainder apportionment of n into the given fractions.
std::array<std::size_t, 3> apportion(std::size_t n, const SplitFractions& f) {
    const double fr[3] = {f.train, f.dev, f.test};
    std::array<std::size_t, 3> base{};
    double rem[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        double ideal = fr[i] * static_cast<double>(n);
        base[i] = static_cast<std::size_t>(std::floor(ideal + 1e-12));
        rem[i] = ideal - static_cast<double>(base[i]);
        assigned += base[i];
    }
    int order[3] = {0, 1, 2};
    std::stable_sort(order, order + 3, [&](int a, int b) { return rem[a] > rem[b]; });
    for (int k = 0; assigned < n; ++k) {
        base[order[k % 3]] += 1;
        ++assigned;
    }
    return base;
}

}  // namespace

void split_corpus(Corpus& corpus, const SplitOptions& opts) {
    const auto& f = opts.fractions;
    if (f.train < 0 || f.dev < 0 || f.test < 0) {
        throw ValidationError("split fractions must be nonnegative");
    }
    if (std::abs(f.train + f.dev + f.test - 1.0) > 1e-9) {
        throw ValidationError("split fractions must sum to 1");
    }
    if (opts.train_keep_pct <= 0 || opts.train_keep_pct > 100) {
        throw ValidationError("train_keep_pct must be in (0, 100]");
    }

    // Record indices grouped by label, in file order.
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < corpus.records.size(); ++i) {
        by_label[corpus.records[i].label].push_back(i);
    }

    for (std::size_t li = 0; li < corpus.labels.size(); ++li) {
        const std::string& label = corpus.labels[li];
        auto& idx = by_label[label];
        if (idx.size() < 3) {
            log_warning("label \"" + label + "\" has fewer than 3 records; placed entirely in train");
            for (auto i : idx) corpus.split[corpus.records[i].id] = Split::train;
            continue;
        }
        std::seed_seq seq{opts.seed, static_cast<std::uint32_t>(li)};
        std::mt19937 rng(seq);
        std::shuffle(idx.begin(), idx.end(), rng);
        auto counts = apportion(idx.size(), f);
        std::size_t pos = 0;
        std::vector<std::size_t> train_members;
        for (std::size_t k = 0; k < counts[0]; ++k) train_members.push_back(idx[pos++]);
        for (std::size_t k = 0; k < counts[1]; ++k) corpus.split[corpus.records[idx[pos++]].id] = Split::dev;
        for (std::size_t k = 0; k < counts[2]; ++k) corpus.split[corpus.records[idx[pos++]].id] = Split::test;

        std::size_t keep = train_members.size();
        if (opts.train_keep_pct < 100.0) {
            keep = static_cast<std::size_t>(std::floor(
                opts.train_keep_pct / 100.0 * static_cast<double>(train_members.size()) + 0.5));
            keep = std::max<std::size_t>(1, keep);
        }
        for (std::size_t k = 0; k < train_members.size(); ++k) {
            corpus.split[corpus.records[train_members[k]].id] =
                k < keep ? Split::train : Split::unused;
        }
    }
}

void save_split_manifest(const Corpus& corpus, const std::string& path) {
    nlohmann::ordered_json j;
    for (const auto& r : corpus.records) {
        j[r.id] = split_name(corpus.split_of(r.id));
    }
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write split manifest: " + path);
    out << j.dump(2) << "\n";
}

void load_split_manifest(Corpus& corpus, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open split manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid split manifest " + path + ": " + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        auto s = split_from_name(it.value().get<std::string>());
        if (!s) throw ParseError("unknown split name in manifest: " + it.value().get<std::string>());
        corpus.split[it.key()] = *s;
    }
}

}  // namespace ljp
