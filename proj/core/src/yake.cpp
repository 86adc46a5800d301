#include "ljpcausal/yake.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <random>

namespace ljp {

std::vector<std::string> KeywordSet::term_names() const {
    std::vector<std::string> out;
    out.reserve(terms.size());
    for (const auto& [t, s] : terms) out.push_back(t);
    return out;
}

namespace {

// Sentence terminators: ASCII plus full-width CJK forms.
const char* kTerminators[] = {".", "!", "?", ";", "\n",
                              "\xE3\x80\x82",   // 。
                              "\xEF\xBC\x81",   // ！
                              "\xEF\xBC\x9F",   // ？
                              "\xEF\xBC\x9B"};  // ；

// Byte offsets one past each terminator occurrence in the text.
std::vector<int> terminator_ends(const std::string& text) {
    std::vector<int> ends;
    for (const char* t : kTerminators) {
        std::size_t tl = std::char_traits<char>::length(t);
        std::size_t pos = text.find(t);
        while (pos != std::string::npos) {
            ends.push_back(static_cast<int>(pos + tl));
            pos = text.find(t, pos + tl);
        }
    }
    std::sort(ends.begin(), ends.end());
    return ends;
}

struct DocView {
    const CaseRecord* rec = nullptr;
    std::vector<int> sent_of_token;   // per token
    std::vector<bool> sentence_head;  // first token of its sentence
    int n_sentences = 0;              // sentences containing >= 1 token
};

DocView make_doc_view(const CaseRecord& rec) {
    DocView dv;
    dv.rec = &rec;
    auto ends = terminator_ends(rec.text);
    dv.sent_of_token.resize(rec.tokens.size());
    dv.sentence_head.resize(rec.tokens.size(), false);
    int prev_sent = -1;
    std::set<int> sentences;
    for (std::size_t i = 0; i < rec.tokens.size(); ++i) {
        int off = rec.tokens[i].offset;
        int s = static_cast<int>(std::upper_bound(ends.begin(), ends.end(), off) - ends.begin());
        dv.sent_of_token[i] = s;
        dv.sentence_head[i] = (s != prev_sent);
        prev_sent = s;
        sentences.insert(s);
    }
    dv.n_sentences = static_cast<int>(sentences.size());
    return dv;
}

bool is_all_caps(const std::string& s) {
    int alpha = 0;
    for (unsigned char c : s) {
        if (c >= 'a' && c <= 'z') return false;
        if (c >= 'A' && c <= 'Z') ++alpha;
    }
    return alpha >= 2;
}

bool starts_upper(const std::string& s) {
    return !s.empty() && s[0] >= 'A' && s[0] <= 'Z';
}

double median(std::vector<int> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n == 0) return 0;
    if (n % 2 == 1) return v[n / 2];
    return (static_cast<double>(v[n / 2 - 1]) + static_cast<double>(v[n / 2])) / 2.0;
}

struct Accum {
    int tf = 0;
    int tf_upper = 0;
    int tf_acronym = 0;
    std::vector<int> sent_indices;               // per occurrence, doc-relative
    std::set<std::pair<int, int>> sentences;     // distinct (doc, sentence)
    std::set<std::string> left_terms, right_terms;
    int left_total = 0, right_total = 0;
};

std::vector<TermStats> score_docs(const std::vector<const CaseRecord*>& docs,
                                  const YakeParams& params) {
    std::map<std::string, Accum> acc;
    long total_sentences = 0;

    for (std::size_t d = 0; d < docs.size(); ++d) {
        DocView dv = make_doc_view(*docs[d]);
        total_sentences += dv.n_sentences;
        const auto& toks = docs[d]->tokens;
        for (std::size_t i = 0; i < toks.size(); ++i) {
            const std::string key = to_lower(toks[i].surface);
            if (params.stopwords.count(key)) continue;
            Accum& a = acc[key];
            a.tf += 1;
            if (is_all_caps(toks[i].surface)) {
                a.tf_acronym += 1;
            } else if (starts_upper(toks[i].surface) && !dv.sentence_head[i]) {
                a.tf_upper += 1;
            }
            a.sent_indices.push_back(dv.sent_of_token[i]);
            a.sentences.insert({static_cast<int>(d), dv.sent_of_token[i]});
            for (int w = 1; w <= params.window; ++w) {
                if (i >= static_cast<std::size_t>(w) &&
                    dv.sent_of_token[i - w] == dv.sent_of_token[i]) {
                    a.left_terms.insert(to_lower(toks[i - w].surface));
                    a.left_total += 1;
                }
                if (i + w < toks.size() && dv.sent_of_token[i + w] == dv.sent_of_token[i]) {
                    a.right_terms.insert(to_lower(toks[i + w].surface));
                    a.right_total += 1;
                }
            }
        }
    }

    if (acc.empty()) {
        throw PipelineError("yake: vocabulary is empty after stopword removal");
    }

    double mean_tf = 0, max_tf = 0;
    for (const auto& [t, a] : acc) {
        mean_tf += a.tf;
        max_tf = std::max(max_tf, static_cast<double>(a.tf));
    }
    mean_tf /= static_cast<double>(acc.size());
    double var = 0;
    for (const auto& [t, a] : acc) {
        var += (a.tf - mean_tf) * (a.tf - mean_tf);
    }
    const double std_tf = std::sqrt(var / static_cast<double>(acc.size()));

    std::vector<TermStats> out;
    out.reserve(acc.size());
    for (const auto& [term, a] : acc) {
        TermStats ts;
        ts.term = term;
        ts.tf = a.tf;
        ts.casing = std::max(a.tf_upper, a.tf_acronym) / (1.0 + std::log(static_cast<double>(a.tf)));
        ts.position = std::log2(std::log2(3.0 + median(a.sent_indices)));
        ts.freq_norm = a.tf / (mean_tf + std_tf);
        const double dl = a.left_total > 0
                              ? static_cast<double>(a.left_terms.size()) / a.left_total
                              : 0.0;
        const double dr = a.right_total > 0
                              ? static_cast<double>(a.right_terms.size()) / a.right_total
                              : 0.0;
        ts.relatedness = 1.0 + (dl + dr) * (a.tf / max_tf);
        ts.dispersion = static_cast<double>(a.sentences.size()) /
                        static_cast<double>(std::max<long>(1, total_sentences));
        ts.score = (ts.relatedness * ts.position) /
                   (ts.casing + ts.freq_norm / ts.relatedness + ts.dispersion / ts.relatedness);
        out.push_back(std::move(ts));
    }
    return out;
}

void sort_by_salience(std::vector<TermStats>& stats) {
    std::sort(stats.begin(), stats.end(), [](const TermStats& a, const TermStats& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.term < b.term;
    });
}

}  // namespace

std::vector<TermStats> yake_score(const Corpus& corpus, const YakeParams& params) {
    auto docs = corpus.split_records(Split::train);
    if (docs.empty()) throw PipelineError("yake: empty training split");

    if (!params.per_document) {
        auto stats = score_docs(docs, params);
        sort_by_salience(stats);
        return stats;
    }

    // Per-document mode: keep the best (lowest) score a term attains.
    std::map<std::string, TermStats> best;
    for (const auto* doc : docs) {
        std::vector<const CaseRecord*> one{doc};
        std::vector<TermStats> stats;
        try {
            stats = score_docs(one, params);
        } catch (const PipelineError&) {
            continue;  // all-stopword document
        }
        for (auto& ts : stats) {
            auto it = best.find(ts.term);
            if (it == best.end() || ts.score < it->second.score) {
                best[ts.term] = ts;
            } else {
                it->second.tf += ts.tf;
            }
        }
    }
    if (best.empty()) throw PipelineError("yake: vocabulary is empty after stopword removal");
    std::vector<TermStats> out;
    for (auto& [t, ts] : best) out.push_back(ts);
    sort_by_salience(out);
    return out;
}

double default_tau(const std::vector<TermStats>& stats) {
    if (stats.empty()) throw ValidationError("default_tau: empty statistics");
    std::vector<double> scores;
    scores.reserve(stats.size());
    for (const auto& s : stats) scores.push_back(s.score);
    std::sort(scores.begin(), scores.end());
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(0.40 * static_cast<double>(scores.size())));
    rank = std::max<std::size_t>(1, rank);
    return scores[rank - 1];
}

KeywordSet candidate_set(const std::vector<TermStats>& stats, double tau) {
    if (!(tau > 0)) throw ValidationError("candidate_set: tau must be > 0");
    KeywordSet ks;
    ks.stage = KeywordStage::cand;
    for (const auto& s : stats) {
        if (s.score <= tau) ks.terms.push_back({s.term, s.score});
    }
    std::sort(ks.terms.begin(), ks.terms.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });
    if (ks.terms.empty()) log_warning("candidate_set: no term scored below tau");
    return ks;
}

KeywordSet stratified_uniform_sample(const KeywordSet& cand,
                                     const std::vector<TermStats>& stats,
                                     int n_s, int buckets, std::uint32_t seed) {
    if (n_s < 1) throw ValidationError("stratified_uniform_sample: n_s must be >= 1");
    if (buckets < 1) throw ValidationError("stratified_uniform_sample: buckets must be >= 1");

    KeywordSet out;
    out.stage = KeywordStage::init;
    if (static_cast<int>(cand.terms.size()) <= n_s) {
        out.terms = cand.terms;
        return out;
    }

    std::map<std::string, int> tf;
    for (const auto& s : stats) tf[s.term] = s.tf;

    std::vector<double> logf(cand.terms.size());
    double lo = 0, hi = 0;
    for (std::size_t i = 0; i < cand.terms.size(); ++i) {
        auto it = tf.find(cand.terms[i].first);
        const int f = it == tf.end() ? 1 : std::max(1, it->second);
        logf[i] = std::log2(static_cast<double>(f));
        if (i == 0) {
            lo = hi = logf[i];
        } else {
            lo = std::min(lo, logf[i]);
            hi = std::max(hi, logf[i]);
        }
    }

    std::vector<std::vector<std::size_t>> strata(buckets);
    const double width = (hi - lo) / buckets;
    for (std::size_t i = 0; i < cand.terms.size(); ++i) {
        int b = width > 0 ? static_cast<int>((logf[i] - lo) / width) : 0;
        b = std::min(b, buckets - 1);
        strata[b].push_back(i);
    }

    // Shuffle each stratum with its own derived stream, then draw the base
    // quota; leftovers go round-robin starting from the densest strata.
    std::vector<std::vector<std::size_t>> shuffled(buckets);
    for (int b = 0; b < buckets; ++b) {
        shuffled[b] = strata[b];
        std::seed_seq seq{seed, static_cast<std::uint32_t>(b)};
        std::mt19937 rng(seq);
        std::shuffle(shuffled[b].begin(), shuffled[b].end(), rng);
    }

    const int quota = n_s / buckets;
    std::vector<std::size_t> taken_count(buckets, 0);
    std::vector<std::size_t> picked;
    for (int b = 0; b < buckets; ++b) {
        std::size_t take = std::min<std::size_t>(quota, shuffled[b].size());
        for (std::size_t k = 0; k < take; ++k) picked.push_back(shuffled[b][k]);
        taken_count[b] = take;
    }

    std::vector<int> order(buckets);
    for (int b = 0; b < buckets; ++b) order[b] = b;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return strata[a].size() > strata[b].size();
    });
    while (static_cast<int>(picked.size()) < n_s) {
        bool progressed = false;
        for (int b : order) {
            if (static_cast<int>(picked.size()) >= n_s) break;
            if (taken_count[b] < shuffled[b].size()) {
                picked.push_back(shuffled[b][taken_count[b]++]);
                progressed = true;
            }
        }
        if (!progressed) break;
    }

    for (std::size_t i : picked) out.terms.push_back(cand.terms[i]);
    std::sort(out.terms.begin(), out.terms.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });
    return out;
}

void dump_term_stats(const std::vector<TermStats>& stats, std::ostream& out) {
    out << "term\ttf\tcasing\tposition\tfreq_norm\trelatedness\tdispersion\tscore\n";
    for (const auto& s : stats) {
        out << s.term << '\t' << s.tf << '\t' << s.casing << '\t' << s.position << '\t'
            << s.freq_norm << '\t' << s.relatedness << '\t' << s.dispersion << '\t'
            << s.score << '\n';
    }
}

}  // namespace ljp
