#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ljpcausal/common.hpp"

namespace ljp {

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual int dim() const = 0;
    virtual Eigen::VectorXd embed(const std::string& text) const = 0;
};

// Deterministic offline embedder: signed feature hashing of character
// n-grams (n = 2..4 over the padded string) plus the whole token,
// L2-normalized. Nonempty input always yields a nonzero vector.
class HashingEmbedder : public Embedder {
public:
    explicit HashingEmbedder(int dim = 256);
    int dim() const override { return dim_; }
    Eigen::VectorXd embed(const std::string& text) const override;

private:
    int dim_;
};

struct LexiconEntry {
    std::string term;
    std::string gloss;  // optional
};

// One term per line, optionally followed by a tab-separated gloss.
struct Lexicon {
    std::vector<LexiconEntry> entries;
    std::string source;

    static Lexicon load(const std::string& path, const std::string& source_tag = "");
};

// Top-k lexicon entries by cosine similarity to the keyword embedding;
// ties broken by lexicon order. Empty lexicon yields an empty result with
// a warning.
std::vector<const LexiconEntry*> retrieve_context(const std::string& keyword,
                                                  const Lexicon& lexicon, int k,
                                                  const Embedder& embedder);

}  // namespace ljp
