#include "ljpcausal/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <sstream>

namespace ljp {

VarTable sample_binary_network(const BinaryNet& net, int n_records, std::uint32_t seed,
                               const std::vector<int>& observed) {
    const int n_vars = net.n();
    // Topological order via Kahn.
    std::vector<int> indeg(n_vars, 0);
    for (int v = 0; v < n_vars; ++v) indeg[v] = static_cast<int>(net.parents[v].size());
    std::vector<int> order;
    std::vector<int> frontier;
    for (int v = 0; v < n_vars; ++v) {
        if (indeg[v] == 0) frontier.push_back(v);
    }
    while (!frontier.empty()) {
        const int v = frontier.front();
        frontier.erase(frontier.begin());
        order.push_back(v);
        for (int w = 0; w < n_vars; ++w) {
            for (int p : net.parents[w]) {
                if (p == v && --indeg[w] == 0) frontier.push_back(w);
            }
        }
    }
    if (static_cast<int>(order.size()) != n_vars) {
        throw ValidationError("sample_binary_network: parent structure is cyclic");
    }

    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<std::vector<std::uint8_t>> values(n_vars,
                                                  std::vector<std::uint8_t>(n_records, 0));
    for (int r = 0; r < n_records; ++r) {
        for (int v : order) {
            int pattern = 0;
            for (std::size_t k = 0; k < net.parents[v].size(); ++k) {
                pattern |= (values[net.parents[v][k]][r] ? 1 : 0) << k;
            }
            values[v][r] = u01(rng) < net.cpt[v][pattern] ? 1 : 0;
        }
    }

    std::vector<int> cols = observed;
    if (cols.empty()) {
        for (int v = 0; v < n_vars; ++v) cols.push_back(v);
    }
    VarTable table;
    for (int v : cols) {
        table.names.push_back(net.names[v]);
        table.kinds.push_back(VarKind::factor);
        table.source_index.push_back(v);
        table.cols.push_back(values[v]);
    }
    return table;
}

namespace {

struct Family {
    const char* stem;
    std::vector<const char*> members;
};

const Family kSigA{"strike", {"strikeblow", "strikehit", "strikejab"}};
const Family kSigB{"loot", {"lootbag", "lootcash", "loothaul"}};
const Family kSpurA1{"bruise", {"bruisemark", "bruisecut", "bruisewelt"}};
const Family kSpurA2{"shout", {"shoutcry", "shoutyell", "shoutroar"}};
const Family kSpurB1{"ledger", {"ledgerbook", "ledgerpage", "ledgerline"}};

const char* kFillers[] = {"court",  "defendant", "evidence",  "witness", "street",
                          "night",  "report",    "officer",   "statement", "victim"};

const char* kChargeA = "assault";
const char* kChargeB = "larceny";

void push_family(std::vector<std::string>& tokens, const Family& fam, std::mt19937& rng) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(fam.members.size()) - 1);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const int first = pick(rng);
    tokens.push_back(fam.members[first]);
    if (u01(rng) < 0.5) {
        int second = pick(rng);
        if (second == first) second = (second + 1) % static_cast<int>(fam.members.size());
        tokens.push_back(fam.members[second]);
    }
}

}  // namespace

MiniCorpus make_mini_corpus(int n_records, std::uint32_t seed) {
    MiniCorpus mini;
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    for (int r = 0; r < n_records; ++r) {
        const bool is_a = r % 2 == 0;  // alternate for exact label balance

        const bool sig_a = u01(rng) < (is_a ? 0.92 : 0.06);
        const bool sig_b = u01(rng) < (is_a ? 0.06 : 0.92);
        const bool spur_a1 = u01(rng) < 0.22 + (sig_a ? 0.50 : 0.0) + (is_a ? 0.14 : 0.0);
        const bool spur_a2 = u01(rng) < 0.20 + (sig_a ? 0.50 : 0.0) + (is_a ? 0.14 : 0.0);
        const bool spur_b1 = u01(rng) < 0.22 + (sig_b ? 0.50 : 0.0) + (!is_a ? 0.14 : 0.0);

        std::vector<std::string> content;
        if (sig_a) push_family(content, kSigA, rng);
        if (sig_b) push_family(content, kSigB, rng);
        if (spur_a1) push_family(content, kSpurA1, rng);
        if (spur_a2) push_family(content, kSpurA2, rng);
        if (spur_b1) push_family(content, kSpurB1, rng);

        int n_fillers = 0;
        for (const char* filler : kFillers) {
            if (u01(rng) < 0.45) {
                content.push_back(filler);
                ++n_fillers;
            }
        }
        for (int k = 0; n_fillers < 3 && k < 10; ++k, ++n_fillers) {
            content.push_back(kFillers[k]);
        }
        std::shuffle(content.begin(), content.end(), rng);

        std::ostringstream text;
        text << "the";
        const std::size_t comma_at = content.size() / 2;
        for (std::size_t i = 0; i < content.size(); ++i) {
            text << ' ' << content[i];
            if (i + 1 == comma_at) text << ',';
        }
        text << '.';

        CaseRecord rec;
        char id[16];
        std::snprintf(id, sizeof(id), "case-%04d", r);
        rec.id = id;
        rec.text = text.str();
        rec.label = is_a ? kChargeA : kChargeB;
        rec.tokens = tokenize(rec.text);
        if (mini.corpus.label_index(rec.label) < 0) mini.corpus.labels.push_back(rec.label);
        mini.corpus.split[rec.id] = Split::train;
        mini.corpus.records.push_back(std::move(rec));
    }

    // Lexicon: one gloss per planted surface plus generic legal entries.
    auto add_family_gloss = [&](const Family& fam, const std::string& gloss) {
        for (const char* m : fam.members) {
            mini.lexicon_lines.push_back(std::string(m) + "\t" + gloss);
        }
    };
    add_family_gloss(kSigA, "act of striking causing bodily harm");
    add_family_gloss(kSigB, "unlawful taking of property");
    add_family_gloss(kSpurA1, "visible injury consequence");
    add_family_gloss(kSpurA2, "loud vocal disturbance at the scene");
    add_family_gloss(kSpurB1, "financial record of transactions");
    mini.lexicon_lines.push_back("verdict\tformal decision of the court");
    mini.lexicon_lines.push_back("testimony\tstatement given under oath");

    mini.stopwords = {"the", "a", "of", "and"};

    // Refinement: answer with every planted surface; the parser intersects
    // with the batch, so extra terms are dropped as hallucinations.
    {
        std::ostringstream list;
        list << '[';
        bool first = true;
        for (const Family* fam : {&kSigA, &kSigB, &kSpurA1, &kSpurA2, &kSpurB1}) {
            for (const char* m : fam->members) {
                list << (first ? "" : ", ") << '"' << m << '"';
                first = false;
            }
        }
        list << ']';
        mini.llm_rules.push_back({{"screen legal terms relevant"}, list.str(), -1});
    }

    // Edge directions: signals cause their spur families and their charge.
    auto edge_rule = [&](const char* cause_stem, const char* effect_stem) {
        mini.llm_rules.push_back(
            {{"Node u denotes '" + std::string(cause_stem),
              "Node v denotes '" + std::string(effect_stem)},
             "<START>u->v</START>",
             -1});
        mini.llm_rules.push_back(
            {{"Node u denotes '" + std::string(effect_stem),
              "Node v denotes '" + std::string(cause_stem)},
             "<START>v->u</START>",
             -1});
    };
    edge_rule(kSigA.stem, kSpurA1.stem);
    edge_rule(kSigA.stem, kSpurA2.stem);
    edge_rule(kSigA.stem, kChargeA);
    edge_rule(kSpurA1.stem, kChargeA);
    edge_rule(kSpurA2.stem, kChargeA);
    edge_rule(kSigB.stem, kSpurB1.stem);
    edge_rule(kSigB.stem, kChargeB);
    edge_rule(kSpurB1.stem, kChargeB);

    mini.default_llm_response = "<START>u<->v</START>";
    return mini;
}

}  // namespace ljp
