#include "ljpcausal/embedder.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace ljp {

HashingEmbedder::HashingEmbedder(int dim) : dim_(dim) {
    if (dim < 4) throw ValidationError("HashingEmbedder: dim must be >= 4");
}

Eigen::VectorXd HashingEmbedder::embed(const std::string& text) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
    if (text.empty()) return v;

    auto add_feature = [&](std::string_view feat) {
        const std::uint64_t h = fnv1a(feat);
        const int idx = static_cast<int>(h % static_cast<std::uint64_t>(dim_));
        const double sign = ((h >> 63) & 1u) ? -1.0 : 1.0;
        v[idx] += sign;
    };

    const std::string padded = "^" + to_lower(text) + "$";
    for (int n = 2; n <= 4; ++n) {
        if (static_cast<int>(padded.size()) < n) break;
        for (std::size_t i = 0; i + n <= padded.size(); ++i) {
            add_feature(std::string_view(padded).substr(i, n));
        }
    }
    add_feature(padded);

    const double norm = v.norm();
    if (norm > 0) v /= norm;
    return v;
}

Lexicon Lexicon::load(const std::string& path, const std::string& source_tag) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open lexicon file: " + path);
    Lexicon lex;
    lex.source = source_tag.empty() ? path : source_tag;
    std::string line;
    std::set<std::string> seen;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        LexiconEntry entry;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            entry.term = line;
        } else {
            entry.term = line.substr(0, tab);
            entry.gloss = line.substr(tab + 1);
        }
        if (entry.term.empty()) continue;
        if (!seen.insert(entry.term).second) {
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": duplicate lexicon term \"" + entry.term + "\"");
        }
        lex.entries.push_back(std::move(entry));
    }
    return lex;
}

std::vector<const LexiconEntry*> retrieve_context(const std::string& keyword,
                                                  const Lexicon& lexicon, int k,
                                                  const Embedder& embedder) {
    if (k < 1) throw ValidationError("retrieve_context: k must be >= 1");
    if (lexicon.entries.empty()) {
        log_warning("retrieve_context: empty lexicon, no contexts for \"" + keyword + "\"");
        return {};
    }
    const Eigen::VectorXd q = embedder.embed(keyword);
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(lexicon.entries.size());
    for (std::size_t i = 0; i < lexicon.entries.size(); ++i) {
        const Eigen::VectorXd e = embedder.embed(lexicon.entries[i].term);
        const double denom = q.norm() * e.norm();
        const double cos = denom > 0 ? q.dot(e) / denom : 0.0;
        scored.push_back({cos, i});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<const LexiconEntry*> out;
    const std::size_t take = std::min<std::size_t>(k, scored.size());
    for (std::size_t i = 0; i < take; ++i) {
        out.push_back(&lexicon.entries[scored[i].second]);
    }
    return out;
}

}  // namespace ljp
