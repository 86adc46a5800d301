#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ljpcausal/corpus.hpp"
#include "ljpcausal/embedder.hpp"
#include "ljpcausal/factors.hpp"
#include "ljpcausal/llm.hpp"

namespace ljp {

// Binary Bayesian network for synthetic validation data. cpt[v] maps the
// parent-bit pattern (parents[v][k] contributes bit k) to P(v = 1 | pattern).
struct BinaryNet {
    std::vector<std::string> names;
    std::vector<std::vector<int>> parents;
    std::vector<std::vector<double>> cpt;

    int n() const { return static_cast<int>(names.size()); }
};

// Ancestral sampling; `observed` selects the exported columns (empty =
// all). Hidden variables are sampled but not exported.
VarTable sample_binary_network(const BinaryNet& net, int n_records, std::uint32_t seed,
                               const std::vector<int>& observed = {});

// Bundled synthetic mini-corpus: two charges with planted token families.
// Signal families cause their charge; spur families are mostly downstream
// of a signal family with a weak direct label component, so their
// unadjusted association with the charge far exceeds their direct effect.
struct MiniCorpus {
    Corpus corpus;
    std::vector<std::string> lexicon_lines;
    std::vector<std::string> stopwords;
    std::vector<ScriptedRule> llm_rules;
    std::string default_llm_response;
};

MiniCorpus make_mini_corpus(int n_records, std::uint32_t seed);

// Writes corpus.jsonl, lexicon.txt, stopwords.txt, llm_rules.json and a
// ready-to-run config.json into the directory.
void write_mini_corpus_files(const std::string& dir, int n_records, std::uint32_t seed);

}  // namespace ljp
