#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ljpcausal/corpus.hpp"

namespace ljp {

// Per-term salience features. Lower score = more salient.
//
// Feature definitions (single-token terms, term identity is the
// case-folded surface):
//   casing      max(tf_upper, tf_acronym) / (1 + ln tf); tf_upper counts
//               capitalized occurrences that do not open a sentence,
//               tf_acronym counts all-caps occurrences of length >= 2.
//   position    log2(log2(3 + median sentence index of occurrences)),
//               sentence indices restart per record.
//   freq_norm   tf / (mean tf + population stddev of tf) over all
//               non-stopword terms.
//   relatedness 1 + (DL + DR) * tf / max_tf, where DL (DR) is the number
//               of distinct left (right) window neighbours divided by the
//               total count of such neighbours; windows never cross a
//               sentence boundary.
//   dispersion  distinct sentences containing the term / total sentences.
//
// score = (relatedness * position)
//       / (casing + freq_norm / relatedness + dispersion / relatedness)
struct TermStats {
    std::string term;
    int tf = 0;
    double casing = 0;
    double position = 0;
    double freq_norm = 0;
    double relatedness = 0;
    double dispersion = 0;
    double score = 0;
};

enum class KeywordStage { cand, init, refine };

struct KeywordSet {
    KeywordStage stage = KeywordStage::cand;
    std::vector<std::pair<std::string, double>> terms;  // (term, score)

    std::vector<std::string> term_names() const;
};

struct YakeParams {
    int window = 1;
    std::set<std::string> stopwords;
    // false: one statistics pass over the whole training split (default).
    // true: per-record scoring, aggregated per term by minimum score.
    bool per_document = false;
};

// Scores every distinct non-stopword term of the training split.
// Result sorted by (score asc, term asc). Throws PipelineError when no
// term survives stopword removal.
std::vector<TermStats> yake_score(const Corpus& corpus, const YakeParams& params);

// Score at the 40th percentile (nearest rank) of the score distribution.
double default_tau(const std::vector<TermStats>& stats);

// All terms with score <= tau, ascending by score.
KeywordSet candidate_set(const std::vector<TermStats>& stats, double tau);

// Frequency-stratified uniform sample of size min(n_s, |cand|): candidates
// are binned into `buckets` equal-width log2-frequency strata, floor(n_s /
// buckets) drawn per stratum, remainder distributed round-robin starting
// from the densest strata.
KeywordSet stratified_uniform_sample(const KeywordSet& cand,
                                     const std::vector<TermStats>& stats,
                                     int n_s, int buckets, std::uint32_t seed);

// Tabular audit dump: term, tf, features, score.
void dump_term_stats(const std::vector<TermStats>& stats, std::ostream& out);

}  // namespace ljp
