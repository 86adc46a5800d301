#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ljpcausal/corpus.hpp"
#include "ljpcausal/embedder.hpp"
#include "ljpcausal/llm.hpp"
#include "ljpcausal/yake.hpp"

namespace ljp {

struct Factor {
    int id = 0;
    std::string canonical;             // member nearest the cluster centroid
    std::vector<std::string> members;  // sorted, disjoint across factors
    bool zero_variance = false;        // constant column in the design matrix
};

enum class VarKind : std::uint8_t { factor, charge };

// Binary variable table fed to causal discovery and strength estimation:
// factor columns first, then charge columns.
struct VarTable {
    std::vector<std::string> names;
    std::vector<VarKind> kinds;
    std::vector<int> source_index;  // factor id or label index
    std::vector<std::vector<std::uint8_t>> cols;

    int n_rows() const { return cols.empty() ? 0 : static_cast<int>(cols[0].size()); }
    int n_cols() const { return static_cast<int>(cols.size()); }
};

struct FactorSpace {
    std::vector<Factor> factors;
    std::map<std::string, int> term_to_factor;  // normalized surface -> factor id
    std::vector<std::string> labels;
    std::vector<std::string> row_ids;           // record ids behind X/Y rows
    std::vector<std::vector<std::uint8_t>> x_cols;  // per factor
    std::vector<std::vector<std::uint8_t>> y_cols;  // per label

    int factor_of(const std::string& normalized_surface) const;  // -1 if none
    // Zero-variance factor columns are dropped (reported via log_warning).
    VarTable variable_table() const;
    std::string digest() const;

    void save(const std::string& path) const;
    static FactorSpace load(const std::string& path);
};

struct RefineParams {
    int repeats = 3;
    double delta = 0.5;     // vote-fraction threshold, strict >
    int batch_size = 30;
    int retrieval_k = 3;
    int max_parse_retries = 2;
    std::uint32_t seed = 0;
    std::vector<FewShotExample> demos;
    double temperature = 0.7;
};

struct RefineOutcome {
    KeywordSet refined;                        // stage = refine
    std::map<std::string, double> vote_fraction;
    int batches = 0;
    std::vector<int> failed_batches;           // all repeats unparseable
    int hallucinated_dropped = 0;
};

// Retrieval-augmented LLM filtering: each batch prompt is issued `repeats`
// times; a keyword survives when its vote fraction exceeds delta.
RefineOutcome llm_refine(const KeywordSet& init, const Lexicon& lexicon,
                         const std::vector<std::string>& charge_group,
                         LlmClient& client, const Embedder& embedder,
                         const RefineParams& params);

class Tagger {
public:
    virtual ~Tagger() = default;
    virtual std::optional<std::string> pos(const std::string& surface) const = 0;
    virtual std::optional<std::string> ner(const std::string& surface) const = 0;
};

// Lookup tagger backed by term -> tag lexicon files (term\ttag per line).
class DictionaryTagger : public Tagger {
public:
    DictionaryTagger(std::map<std::string, std::string> pos_map,
                     std::map<std::string, std::string> ner_map);
    static DictionaryTagger from_files(const std::string& pos_path,
                                       const std::string& ner_path);
    std::optional<std::string> pos(const std::string& surface) const override;
    std::optional<std::string> ner(const std::string& surface) const override;

private:
    std::map<std::string, std::string> pos_map_;
    std::map<std::string, std::string> ner_map_;
};

struct TagFilterPolicy {
    std::set<std::string> keep_pos = {"NOUN", "VERB", "PROPN"};
    std::set<std::string> exclude_ner = {"PERSON", "GPE", "DATE"};
};

// Keeps a keyword when its majority-occurrence POS is in keep_pos and its
// majority-occurrence NER is not excluded. Tags come from the training
// records, then from the fallback tagger; untagged keywords pass with a
// warning.
std::set<std::string> pos_ner_filter(const std::set<std::string>& keywords,
                                     const Corpus& corpus,
                                     const Tagger* fallback = nullptr,
                                     const TagFilterPolicy& policy = {});

// K-means over keyword embeddings with silhouette-selected k in
// [k_min, k_max]; (0, 0) selects the default range
// (max(2, ceil(n/10)), min(50, n-1)). Factors are ordered by canonical
// term for stable ids.
FactorSpace cluster_factors(const std::set<std::string>& refined,
                            const Embedder& embedder,
                            std::pair<int, int> k_range, std::uint32_t seed);

// Fills X (factor occurrence) and Y (one-hot charge) over the given split
// of the corpus, in record order.
void build_design_matrix(FactorSpace& fs, const Corpus& corpus, Split split = Split::train);

}  // namespace ljp
