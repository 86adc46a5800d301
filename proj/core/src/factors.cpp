#include "ljpcausal/factors.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "ljpcausal/kmeans.hpp"

namespace ljp {

int FactorSpace::factor_of(const std::string& normalized_surface) const {
    auto it = term_to_factor.find(normalized_surface);
    return it == term_to_factor.end() ? -1 : it->second;
}

VarTable FactorSpace::variable_table() const {
    VarTable vt;
    for (std::size_t j = 0; j < factors.size(); ++j) {
        if (factors[j].zero_variance) {
            log_warning("variable_table: excluding zero-variance factor \"" +
                        factors[j].canonical + "\"");
            continue;
        }
        vt.names.push_back(factors[j].canonical);
        vt.kinds.push_back(VarKind::factor);
        vt.source_index.push_back(factors[j].id);
        vt.cols.push_back(x_cols[j]);
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        vt.names.push_back(labels[i]);
        vt.kinds.push_back(VarKind::charge);
        vt.source_index.push_back(static_cast<int>(i));
        vt.cols.push_back(y_cols[i]);
    }
    return vt;
}

std::string FactorSpace::digest() const {
    std::ostringstream os;
    for (const auto& f : factors) {
        os << f.id << ':' << f.canonical << '=';
        for (const auto& m : f.members) os << m << ',';
        os << ';';
    }
    for (const auto& l : labels) os << l << '|';
    return fnv1a_hex(os.str());
}

namespace {

std::string bits_to_string(const std::vector<std::uint8_t>& col) {
    std::string s(col.size(), '0');
    for (std::size_t i = 0; i < col.size(); ++i) {
        if (col[i]) s[i] = '1';
    }
    return s;
}

std::vector<std::uint8_t> string_to_bits(const std::string& s) {
    std::vector<std::uint8_t> col(s.size(), 0);
    for (std::size_t i = 0; i < s.size(); ++i) col[i] = s[i] == '1' ? 1 : 0;
    return col;
}

}  // namespace

void FactorSpace::save(const std::string& path) const {
    nlohmann::ordered_json j;
    j["labels"] = labels;
    j["row_ids"] = row_ids;
    j["factors"] = nlohmann::ordered_json::array();
    for (const auto& f : factors) {
        nlohmann::ordered_json fj;
        fj["id"] = f.id;
        fj["canonical"] = f.canonical;
        fj["members"] = f.members;
        fj["zero_variance"] = f.zero_variance;
        j["factors"].push_back(fj);
    }
    j["x"] = nlohmann::ordered_json::array();
    for (const auto& col : x_cols) j["x"].push_back(bits_to_string(col));
    j["y"] = nlohmann::ordered_json::array();
    for (const auto& col : y_cols) j["y"].push_back(bits_to_string(col));
    j["digest"] = digest();
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write factor space: " + path);
    out << j.dump(2) << "\n";
}

FactorSpace FactorSpace::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open factor space: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid factor space " + path + ": " + e.what());
    }
    FactorSpace fs;
    fs.labels = j.at("labels").get<std::vector<std::string>>();
    fs.row_ids = j.at("row_ids").get<std::vector<std::string>>();
    for (const auto& fj : j.at("factors")) {
        Factor f;
        f.id = fj.at("id").get<int>();
        f.canonical = fj.at("canonical").get<std::string>();
        f.members = fj.at("members").get<std::vector<std::string>>();
        f.zero_variance = fj.value("zero_variance", false);
        for (const auto& m : f.members) fs.term_to_factor[m] = f.id;
        fs.factors.push_back(std::move(f));
    }
    for (const auto& s : j.at("x")) fs.x_cols.push_back(string_to_bits(s.get<std::string>()));
    for (const auto& s : j.at("y")) fs.y_cols.push_back(string_to_bits(s.get<std::string>()));
    return fs;
}

RefineOutcome llm_refine(const KeywordSet& init, const Lexicon& lexicon,
                         const std::vector<std::string>& charge_group,
                         LlmClient& client, const Embedder& embedder,
                         const RefineParams& params) {
    if (params.repeats < 1) throw ValidationError("llm_refine: repeats must be >= 1");
    if (!(params.delta > 0 && params.delta < 1)) {
        throw ValidationError("llm_refine: delta must be in (0, 1)");
    }

    std::vector<std::string> terms = init.term_names();
    RefineOutcome outcome;
    if (terms.empty()) {
        outcome.refined.stage = KeywordStage::refine;
        return outcome;
    }

    // Contexts are retrieved once per keyword.
    std::map<std::string, std::vector<std::string>> contexts;
    for (const auto& w : terms) {
        std::vector<std::string> ctx;
        for (const auto* entry : retrieve_context(w, lexicon, params.retrieval_k, embedder)) {
            ctx.push_back(entry->gloss.empty() ? entry->term
                                               : entry->term + " - " + entry->gloss);
        }
        contexts[w] = std::move(ctx);
    }

    std::vector<std::vector<std::string>> batches;
    for (std::size_t i = 0; i < terms.size(); i += params.batch_size) {
        batches.emplace_back(terms.begin() + i,
                             terms.begin() + std::min(terms.size(), i + params.batch_size));
    }
    outcome.batches = static_cast<int>(batches.size());

    std::map<std::string, int> votes;
    std::vector<int> batch_failures(batches.size(), 0);

    for (int r = 0; r < params.repeats; ++r) {
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& batch = batches[b];
            std::set<std::string> allowed(batch.begin(), batch.end());
            LlmRequest req = build_refine_prompt(
                batch, contexts, charge_group, params.demos, params.temperature,
                derive_seed(params.seed, static_cast<std::uint32_t>(r * batches.size() + b)));

            bool parsed = false;
            for (int attempt = 0; attempt <= params.max_parse_retries && !parsed; ++attempt) {
                LlmResponse resp = client.complete(req);
                if (!resp.ok) {
                    throw PipelineError("llm_refine: client failure on batch " +
                                        std::to_string(b) + ": " + resp.text);
                }
                try {
                    KeywordParseResult parsed_list = parse_keyword_list(resp, allowed);
                    for (const auto& w : parsed_list.kept) votes[w] += 1;
                    outcome.hallucinated_dropped += parsed_list.dropped;
                    parsed = true;
                } catch (const ParseError&) {
                    req.user += "\n\nReminder: output only a JSON list of quoted terms, "
                                "e.g. [\"Term1\", \"Term2\"].";
                }
            }
            if (!parsed) {
                // All retries failed: this run rejects the whole batch.
                batch_failures[b] += 1;
            }
        }
    }

    std::vector<int> dead_batches;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        if (batch_failures[b] == params.repeats) dead_batches.push_back(static_cast<int>(b));
    }
    outcome.failed_batches = dead_batches;
    if (static_cast<int>(dead_batches.size()) == outcome.batches) {
        std::ostringstream os;
        os << "llm_refine: every run failed to parse; failed batches:";
        for (int b : dead_batches) os << ' ' << b;
        throw PipelineError(os.str());
    }

    outcome.refined.stage = KeywordStage::refine;
    for (const auto& [term, score] : init.terms) {
        const double frac = static_cast<double>(votes[term]) / params.repeats;
        outcome.vote_fraction[term] = frac;
        if (frac > params.delta) outcome.refined.terms.push_back({term, score});
    }
    return outcome;
}

DictionaryTagger::DictionaryTagger(std::map<std::string, std::string> pos_map,
                                   std::map<std::string, std::string> ner_map)
    : pos_map_(std::move(pos_map)), ner_map_(std::move(ner_map)) {}

namespace {
std::map<std::string, std::string> load_tag_map(const std::string& path) {
    std::map<std::string, std::string> m;
    if (path.empty()) return m;
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open tag lexicon: " + path);
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) continue;
        m[to_lower(line.substr(0, tab))] = line.substr(tab + 1);
    }
    return m;
}
}  // namespace

DictionaryTagger DictionaryTagger::from_files(const std::string& pos_path,
                                              const std::string& ner_path) {
    return DictionaryTagger(load_tag_map(pos_path), load_tag_map(ner_path));
}

std::optional<std::string> DictionaryTagger::pos(const std::string& surface) const {
    auto it = pos_map_.find(to_lower(surface));
    if (it == pos_map_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::string> DictionaryTagger::ner(const std::string& surface) const {
    auto it = ner_map_.find(to_lower(surface));
    if (it == ner_map_.end()) return std::nullopt;
    return it->second;
}

namespace {

// Most frequent tag; ties broken by lexicographic order.
std::optional<std::string> majority_tag(const std::map<std::string, int>& counts) {
    std::optional<std::string> best;
    int best_n = 0;
    for (const auto& [tag, n] : counts) {
        if (n > best_n) {
            best = tag;
            best_n = n;
        }
    }
    return best;
}

}  // namespace

std::set<std::string> pos_ner_filter(const std::set<std::string>& keywords,
                                     const Corpus& corpus, const Tagger* fallback,
                                     const TagFilterPolicy& policy) {
    std::map<std::string, std::map<std::string, int>> pos_counts, ner_counts;
    for (const auto* rec : corpus.split_records(Split::train)) {
        if (rec->pos.empty() && rec->ner.empty()) continue;
        for (std::size_t i = 0; i < rec->tokens.size(); ++i) {
            const std::string key = to_lower(rec->tokens[i].surface);
            if (!keywords.count(key)) continue;
            if (!rec->pos.empty() && !rec->pos[i].empty()) pos_counts[key][rec->pos[i]] += 1;
            if (!rec->ner.empty() && !rec->ner[i].empty()) ner_counts[key][rec->ner[i]] += 1;
        }
    }

    std::set<std::string> kept;
    for (const auto& kw : keywords) {
        std::optional<std::string> pos_tag = majority_tag(pos_counts[kw]);
        std::optional<std::string> ner_tag = majority_tag(ner_counts[kw]);
        if (!pos_tag && fallback) pos_tag = fallback->pos(kw);
        if (!ner_tag && fallback) ner_tag = fallback->ner(kw);

        if (!pos_tag && !ner_tag) {
            log_warning("pos_ner_filter: no tags for \"" + kw + "\", keyword passes");
            kept.insert(kw);
            continue;
        }
        if (pos_tag && !policy.keep_pos.count(*pos_tag)) continue;
        if (ner_tag && policy.exclude_ner.count(*ner_tag)) continue;
        kept.insert(kw);
    }
    return kept;
}

FactorSpace cluster_factors(const std::set<std::string>& refined, const Embedder& embedder,
                            std::pair<int, int> k_range, std::uint32_t seed) {
    FactorSpace fs;
    std::vector<std::string> terms(refined.begin(), refined.end());

    if (terms.size() < 2) {
        log_warning("cluster_factors: fewer than 2 keywords, emitting a single factor");
        Factor f;
        f.id = 0;
        f.members = terms;
        f.canonical = terms.empty() ? "(empty)" : terms[0];
        for (const auto& m : f.members) fs.term_to_factor[m] = 0;
        fs.factors.push_back(std::move(f));
        return fs;
    }

    const int n = static_cast<int>(terms.size());
    Eigen::MatrixXd points(n, embedder.dim());
    for (int i = 0; i < n; ++i) points.row(i) = embedder.embed(terms[i]);

    int k_min = k_range.first, k_max = k_range.second;
    if (k_min <= 0 || k_max <= 0) {
        k_min = std::max(2, (n + 9) / 10);
        k_max = std::min(50, n - 1);
    }
    k_min = std::max(1, std::min(k_min, n));
    k_max = std::max(k_min, std::min(k_max, n));

    KMeansResult best;
    double best_sil = -2;
    int best_k = -1;
    for (int k = k_min; k <= k_max; ++k) {
        KMeansResult r = kmeans(points, k, derive_seed(seed, static_cast<std::uint32_t>(k)));
        if (k_min == k_max) {
            best = std::move(r);
            best_k = k;
            break;
        }
        const double sil = mean_silhouette(points, r.assignment);
        if (sil > best_sil) {
            best_sil = sil;
            best = std::move(r);
            best_k = k;
        }
    }

    // Canonical member = nearest to centroid, ties lexicographic; factors
    // ordered by canonical term so ids do not depend on k-means labels.
    std::vector<std::vector<int>> cluster_members(best_k);
    for (int i = 0; i < n; ++i) cluster_members[best.assignment[i]].push_back(i);

    struct ClusterDraft {
        std::string canonical;
        std::vector<std::string> members;
    };
    std::vector<ClusterDraft> drafts;
    for (int c = 0; c < best_k; ++c) {
        if (cluster_members[c].empty()) continue;
        ClusterDraft d;
        double best_d = std::numeric_limits<double>::max();
        for (int i : cluster_members[c]) {
            d.members.push_back(terms[i]);
            const double dist = (points.row(i) - best.centroids.row(c)).norm();
            if (dist < best_d - 1e-15 ||
                (std::abs(dist - best_d) <= 1e-15 && terms[i] < d.canonical)) {
                best_d = dist;
                d.canonical = terms[i];
            }
        }
        std::sort(d.members.begin(), d.members.end());
        drafts.push_back(std::move(d));
    }
    std::sort(drafts.begin(), drafts.end(),
              [](const ClusterDraft& a, const ClusterDraft& b) { return a.canonical < b.canonical; });

    for (std::size_t c = 0; c < drafts.size(); ++c) {
        Factor f;
        f.id = static_cast<int>(c);
        f.canonical = drafts[c].canonical;
        f.members = drafts[c].members;
        for (const auto& m : f.members) fs.term_to_factor[m] = f.id;
        fs.factors.push_back(std::move(f));
    }
    return fs;
}

void build_design_matrix(FactorSpace& fs, const Corpus& corpus, Split split) {
    const auto records = corpus.split_records(split);
    fs.labels = corpus.labels;
    fs.row_ids.clear();
    fs.x_cols.assign(fs.factors.size(), {});
    fs.y_cols.assign(fs.labels.size(), {});
    for (auto& col : fs.x_cols) col.assign(records.size(), 0);
    for (auto& col : fs.y_cols) col.assign(records.size(), 0);

    for (std::size_t r = 0; r < records.size(); ++r) {
        const CaseRecord& rec = *records[r];
        fs.row_ids.push_back(rec.id);
        for (const auto& tok : rec.tokens) {
            const int f = fs.factor_of(to_lower(tok.surface));
            if (f >= 0) fs.x_cols[f][r] = 1;
        }
        const int li = corpus.label_index(rec.label);
        if (li < 0) throw ValidationError("build_design_matrix: unknown label " + rec.label);
        fs.y_cols[li][r] = 1;
    }

    for (std::size_t j = 0; j < fs.factors.size(); ++j) {
        const auto& col = fs.x_cols[j];
        const bool any1 = std::find(col.begin(), col.end(), 1) != col.end();
        const bool any0 = std::find(col.begin(), col.end(), 0) != col.end();
        fs.factors[j].zero_variance = !(any0 && any1);
        if (fs.factors[j].zero_variance) {
            log_warning("build_design_matrix: factor \"" + fs.factors[j].canonical +
                        "\" has zero variance in this split");
        }
    }
}

}  // namespace ljp
