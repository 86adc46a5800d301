#include "ljpcausal/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace ljp {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& content) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PipelineError("cannot write file: " + path);
    out << content;
}

std::string resolve_path(const std::string& base_dir, const std::string& path) {
    if (path.empty()) return path;
    fs::path p(path);
    if (p.is_absolute()) return path;
    return (fs::path(base_dir) / p).lexically_normal().string();
}

std::set<std::string> load_stopwords(const std::string& path) {
    std::set<std::string> words;
    if (path.empty()) return words;
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open stopword list: " + path);
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) words.insert(to_lower(line));
    }
    return words;
}

}  // namespace

PipelineConfig PipelineConfig::load(const std::string& path) {
    nlohmann::json j;
    {
        std::ifstream in(path);
        if (!in) throw ParseError("cannot open config: " + path);
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("invalid config " + path + ": " + e.what());
        }
    }
    const std::string base = fs::path(path).parent_path().string();

    PipelineConfig cfg;
    cfg.corpus_path = resolve_path(base, j.value("corpus", ""));
    cfg.lexicon_path = resolve_path(base, j.value("lexicon", ""));
    cfg.stopwords_path = resolve_path(base, j.value("stopwords", ""));
    cfg.pos_lexicon_path = resolve_path(base, j.value("pos_lexicon", ""));
    cfg.ner_lexicon_path = resolve_path(base, j.value("ner_lexicon", ""));

    if (j.contains("tokenizer")) {
        cfg.tokenizer.lowercase = j["tokenizer"].value("lowercase", false);
        cfg.tokenizer.pretokenized_passthrough =
            j["tokenizer"].value("pretokenized_passthrough", false);
    }
    if (j.contains("split")) {
        cfg.split.fractions.train = j["split"].value("train", 0.8);
        cfg.split.fractions.dev = j["split"].value("dev", 0.1);
        cfg.split.fractions.test = j["split"].value("test", 0.1);
        cfg.split.train_keep_pct = j["split"].value("train_keep_pct", 100.0);
    }
    if (j.contains("yake")) {
        cfg.yake.window = j["yake"].value("window", 1);
        cfg.yake.per_document = j["yake"].value("per_document", false);
    }
    cfg.tau = j.value("tau", 0.0);
    cfg.n_s = j.value("n_s", 150);
    cfg.buckets = j.value("buckets", 10);
    cfg.retrieval_k = j.value("retrieval_k", 3);
    cfg.repeats = j.value("repeats", 3);
    cfg.delta = j.value("delta", 0.5);
    cfg.refine_batch_size = j.value("refine_batch_size", 30);
    if (j.contains("charge_group")) {
        cfg.charge_group = j["charge_group"].get<std::vector<std::string>>();
    }
    cfg.k_min = j.value("k_min", 0);
    cfg.k_max = j.value("k_max", 0);
    cfg.embedding_dim = j.value("embedding_dim", 256);
    if (j.contains("discovery")) {
        cfg.discovery.alpha_ci = j["discovery"].value("alpha_ci", 0.05);
        cfg.discovery.max_cond = j["discovery"].value("max_cond", 3);
        cfg.discovery.penalty = j["discovery"].value("penalty", 1.0);
    }
    cfg.epsilon = j.value("epsilon", 0.2);
    cfg.alpha_temporal = j.value("alpha_temporal", 0.3);
    cfg.q_graphs = j.value("q_graphs", 20);
    cfg.psm.caliper = j.value("caliper", 0.05);
    if (j.contains("encoder")) {
        cfg.encoder.hash_dim = j["encoder"].value("hash_dim", 2048);
        cfg.encoder.embed_dim = j["encoder"].value("embed_dim", 32);
    }
    if (j.contains("train")) {
        cfg.train.lambda = j["train"].value("lambda", 1.0);
        cfg.train.lr = j["train"].value("lr", 0.05);
        cfg.train.epochs = j["train"].value("epochs", 30);
        cfg.train.batch_size = j["train"].value("batch_size", 16);
        cfg.train.patience = j["train"].value("patience", 5);
    }
    if (j.contains("refute")) {
        cfg.refute.trials = j["refute"].value("trials", 10);
        cfg.refute.subset_fraction = j["refute"].value("subset_fraction", 0.8);
        cfg.refute.thresholds.abs_tol = j["refute"].value("abs_tol", 0.05);
        cfg.refute.thresholds.rel_tol = j["refute"].value("rel_tol", 0.25);
        cfg.refute.thresholds.placebo_tol = j["refute"].value("placebo_tol", 0.05);
        cfg.refute.top_cells = j["refute"].value("top_cells", 16);
    }
    if (j.contains("llm")) {
        cfg.llm.kind = j["llm"].value("kind", "scripted");
        cfg.llm.path = resolve_path(base, j["llm"].value("path", ""));
        if (j["llm"].contains("http")) {
            const auto& h = j["llm"]["http"];
            cfg.llm.http.host = h.value("host", "");
            cfg.llm.http.path = h.value("path", "/v1/chat/completions");
            cfg.llm.http.model = h.value("model", "default");
            cfg.llm.http.token_env = h.value("token_env", "LJP_LLM_TOKEN");
            cfg.llm.http.max_retries = h.value("max_retries", 2);
            cfg.llm.http.max_in_flight = h.value("max_in_flight", 4);
            cfg.llm.http.timeout_sec = h.value("timeout_sec", 60);
        }
    }
    cfg.seed = j.value("seed", 0u);
    cfg.random_edge_control = j.value("random_edge_control", false);

    if (!cfg.stopwords_path.empty()) cfg.yake.stopwords = load_stopwords(cfg.stopwords_path);
    cfg.validate();
    return cfg;
}

void PipelineConfig::validate() const {
    if (corpus_path.empty()) throw ValidationError("config: corpus path is required");
    const auto& f = split.fractions;
    if (f.train < 0 || f.dev < 0 || f.test < 0 ||
        std::abs(f.train + f.dev + f.test - 1.0) > 1e-9) {
        throw ValidationError("config: split fractions must be nonnegative and sum to 1");
    }
    if (n_s < 1) throw ValidationError("config: n_s must be >= 1");
    if (buckets < 1) throw ValidationError("config: buckets must be >= 1");
    if (repeats < 1) throw ValidationError("config: repeats must be >= 1");
    if (!(delta > 0 && delta < 1)) throw ValidationError("config: delta must be in (0, 1)");
    if (epsilon < 0 || epsilon > 1) throw ValidationError("config: epsilon must be in [0, 1]");
    if (q_graphs < 1) throw ValidationError("config: q_graphs must be >= 1");
    if (train.lambda < 0) throw ValidationError("config: lambda must be >= 0");
    if (llm.kind != "scripted" && llm.kind != "fixture" && llm.kind != "http") {
        throw ValidationError("config: llm.kind must be scripted, fixture, or http");
    }
}

std::string PipelineConfig::to_json_string() const {
    nlohmann::ordered_json j;
    j["corpus"] = corpus_path;
    j["lexicon"] = lexicon_path;
    j["stopwords"] = stopwords_path;
    j["pos_lexicon"] = pos_lexicon_path;
    j["ner_lexicon"] = ner_lexicon_path;
    j["tokenizer"] = {{"lowercase", tokenizer.lowercase},
                      {"pretokenized_passthrough", tokenizer.pretokenized_passthrough}};
    j["split"] = {{"train", split.fractions.train},
                  {"dev", split.fractions.dev},
                  {"test", split.fractions.test},
                  {"train_keep_pct", split.train_keep_pct}};
    j["yake"] = {{"window", yake.window}, {"per_document", yake.per_document}};
    j["tau"] = tau;
    j["n_s"] = n_s;
    j["buckets"] = buckets;
    j["retrieval_k"] = retrieval_k;
    j["repeats"] = repeats;
    j["delta"] = delta;
    j["refine_batch_size"] = refine_batch_size;
    j["charge_group"] = charge_group;
    j["k_min"] = k_min;
    j["k_max"] = k_max;
    j["embedding_dim"] = embedding_dim;
    j["discovery"] = {{"alpha_ci", discovery.alpha_ci},
                      {"max_cond", discovery.max_cond},
                      {"penalty", discovery.penalty}};
    j["epsilon"] = epsilon;
    j["alpha_temporal"] = alpha_temporal;
    j["q_graphs"] = q_graphs;
    j["caliper"] = psm.caliper;
    j["encoder"] = {{"hash_dim", encoder.hash_dim}, {"embed_dim", encoder.embed_dim}};
    j["train"] = {{"lambda", train.lambda},
                  {"lr", train.lr},
                  {"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"patience", train.patience}};
    j["refute"] = {{"trials", refute.trials},
                   {"subset_fraction", refute.subset_fraction},
                   {"abs_tol", refute.thresholds.abs_tol},
                   {"rel_tol", refute.thresholds.rel_tol},
                   {"placebo_tol", refute.thresholds.placebo_tol},
                   {"top_cells", refute.top_cells}};
    j["llm"] = {{"kind", llm.kind},
                {"path", llm.path},
                {"http",
                 {{"host", llm.http.host},
                  {"path", llm.http.path},
                  {"model", llm.http.model},
                  {"token_env", llm.http.token_env},
                  {"max_retries", llm.http.max_retries},
                  {"max_in_flight", llm.http.max_in_flight},
                  {"timeout_sec", llm.http.timeout_sec}}}};
    j["seed"] = seed;
    j["random_edge_control"] = random_edge_control;
    return j.dump(2) + "\n";
}

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::extract: return "extract";
        case Stage::refine: return "refine";
        case Stage::discover: return "discover";
        case Stage::resolve: return "resolve";
        case Stage::sample: return "sample";
        case Stage::strength: return "strength";
        case Stage::train: return "train";
        case Stage::predict: return "predict";
        case Stage::refute: return "refute";
        case Stage::report: return "report";
    }
    return "extract";
}

std::optional<Stage> stage_from_name(const std::string& name) {
    for (Stage s : {Stage::extract, Stage::refine, Stage::discover, Stage::resolve,
                    Stage::sample, Stage::strength, Stage::train, Stage::predict,
                    Stage::refute, Stage::report}) {
        if (name == stage_name(s)) return s;
    }
    return std::nullopt;
}

std::unique_ptr<LlmClient> make_llm_client(const LlmClientConfig& cfg) {
    if (cfg.kind == "scripted") return ScriptedMockClient::from_file(cfg.path);
    if (cfg.kind == "fixture") return FixtureMockClient::from_file(cfg.path);
    if (cfg.kind == "http") return std::make_unique<HttpChatClient>(cfg.http);
    throw ValidationError("unknown llm client kind: " + cfg.kind);
}

// ---------------------------------------------------------------------------
// Artifact bookkeeping
// ---------------------------------------------------------------------------

namespace {

struct RunContext {
    std::string run_dir;
    const PipelineConfig* cfg = nullptr;
    std::map<std::string, std::string> inputs;   // relative path -> digest
    std::map<std::string, std::string> outputs;  // relative path -> digest

    std::string abs(const std::string& rel) const {
        return (fs::path(run_dir) / rel).string();
    }

    // Reads an upstream artifact, recording its digest. `producer` names
    // the stage that should have produced it.
    std::string require(const std::string& rel, const char* producer) {
        const std::string path = abs(rel);
        if (!fs::exists(path)) {
            throw PipelineError("missing artifact " + rel + "; run " + std::string(producer) +
                                " first");
        }
        inputs[rel] = fnv1a_hex(read_file(path));
        return path;
    }

    void emit(const std::string& rel, const std::string& content) {
        write_file(abs(rel), content);
        outputs[rel] = fnv1a_hex(content);
    }
};

void update_manifest(const RunContext& ctx, Stage stage) {
    const std::string manifest_path = ctx.abs("manifest.json");
    nlohmann::ordered_json manifest;
    if (fs::exists(manifest_path)) {
        try {
            manifest = nlohmann::ordered_json::parse(read_file(manifest_path));
        } catch (const nlohmann::json::exception&) {
            manifest = nlohmann::ordered_json();
        }
    }
    // Rebuild the stages object in stage order so reruns are byte-stable.
    nlohmann::ordered_json entry;
    entry["inputs"] = nlohmann::ordered_json();
    for (const auto& [rel, digest] : ctx.inputs) entry["inputs"][rel] = digest;
    entry["outputs"] = nlohmann::ordered_json();
    for (const auto& [rel, digest] : ctx.outputs) entry["outputs"][rel] = digest;

    nlohmann::ordered_json stages;
    nlohmann::ordered_json old = manifest.value("stages", nlohmann::ordered_json());
    for (Stage s : {Stage::extract, Stage::refine, Stage::discover, Stage::resolve,
                    Stage::sample, Stage::strength, Stage::train, Stage::predict,
                    Stage::refute, Stage::report}) {
        const std::string name = stage_name(s);
        if (s == stage) {
            stages[name] = entry;
        } else if (old.contains(name)) {
            stages[name] = old[name];
        }
    }
    manifest = nlohmann::ordered_json();
    manifest["stages"] = stages;
    write_file(manifest_path, manifest.dump(2) + "\n");
}

Corpus load_pipeline_corpus(RunContext& ctx, bool with_splits) {
    const PipelineConfig& cfg = *ctx.cfg;
    if (!fs::exists(cfg.corpus_path)) {
        throw PipelineError("corpus file not found: " + cfg.corpus_path);
    }
    ctx.inputs["(corpus)"] = fnv1a_hex(read_file(cfg.corpus_path));
    Corpus corpus = load_corpus(cfg.corpus_path, CorpusFormat::jsonl, cfg.tokenizer);
    if (with_splits) {
        load_split_manifest(corpus, ctx.require("extract/splits.json", "extract"));
    }
    return corpus;
}

std::vector<std::string> effective_charge_group(const PipelineConfig& cfg,
                                                const Corpus& corpus) {
    return cfg.charge_group.empty() ? corpus.labels : cfg.charge_group;
}

ContextProvider lexicon_context_provider(const Lexicon& lexicon, const Embedder& embedder,
                                         int k) {
    return [&lexicon, &embedder, k](const std::string& u, const std::string& v) {
        std::vector<std::string> out;
        for (const std::string& name : {u, v}) {
            for (const auto* e : retrieve_context(name, lexicon, k, embedder)) {
                out.push_back(e->gloss.empty() ? e->term : e->term + ": " + e->gloss);
            }
        }
        return out;
    };
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void stage_extract(RunContext& ctx) {
    const PipelineConfig& cfg = *ctx.cfg;
    Corpus corpus = load_pipeline_corpus(ctx, false);
    SplitOptions split = cfg.split;
    split.seed = derive_seed(cfg.seed, 1);  // sub-seeds derive from the master seed
    split_corpus(corpus, split);
    {
        nlohmann::ordered_json j;
        for (const auto& r : corpus.records) j[r.id] = split_name(corpus.split_of(r.id));
        ctx.emit("extract/splits.json", j.dump(2) + "\n");
    }

    const auto stats = yake_score(corpus, cfg.yake);
    {
        std::ostringstream os;
        dump_term_stats(stats, os);
        ctx.emit("extract/term_stats.tsv", os.str());
    }

    const double tau = cfg.tau > 0 ? cfg.tau : default_tau(stats);
    const KeywordSet cand = candidate_set(stats, tau);
    const KeywordSet init =
        stratified_uniform_sample(cand, stats, cfg.n_s, cfg.buckets, derive_seed(cfg.seed, 2));
    {
        nlohmann::ordered_json j;
        j["tau"] = tau;
        j["candidates"] = cand.terms.size();
        j["keywords"] = nlohmann::ordered_json::array();
        for (const auto& [term, score] : init.terms) {
            j["keywords"].push_back({{"term", term}, {"score", score}});
        }
        ctx.emit("extract/keywords_init.json", j.dump(2) + "\n");
    }
}

KeywordSet load_keywords_init(RunContext& ctx) {
    const std::string path = ctx.require("extract/keywords_init.json", "extract");
    nlohmann::json j = nlohmann::json::parse(read_file(path));
    KeywordSet ks;
    ks.stage = KeywordStage::init;
    for (const auto& kj : j.at("keywords")) {
        ks.terms.push_back({kj.at("term").get<std::string>(), kj.at("score").get<double>()});
    }
    return ks;
}

void stage_refine(RunContext& ctx) {
    const PipelineConfig& cfg = *ctx.cfg;
    Corpus corpus = load_pipeline_corpus(ctx, true);
    KeywordSet init = load_keywords_init(ctx);

    Lexicon lexicon;
    if (!cfg.lexicon_path.empty()) {
        ctx.inputs["(lexicon)"] = fnv1a_hex(read_file(cfg.lexicon_path));
        lexicon = Lexicon::load(cfg.lexicon_path);
    }
    HashingEmbedder embedder(cfg.embedding_dim);
    auto client = make_llm_client(cfg.llm);

    RefineParams params;
    params.repeats = cfg.repeats;
    params.delta = cfg.delta;
    params.batch_size = cfg.refine_batch_size;
    params.retrieval_k = cfg.retrieval_k;
    params.seed = derive_seed(cfg.seed, 3);
    params.demos.push_back({{"Candidate Word 1", "Candidate Word 2", "Candidate Word 3"},
                            {"Candidate Word 1", "Candidate Word 2"}});

    RefineOutcome refined =
        llm_refine(init, lexicon, effective_charge_group(cfg, corpus), *client, embedder, params);

    std::unique_ptr<DictionaryTagger> tagger;
    if (!cfg.pos_lexicon_path.empty() || !cfg.ner_lexicon_path.empty()) {
        tagger = std::make_unique<DictionaryTagger>(
            DictionaryTagger::from_files(cfg.pos_lexicon_path, cfg.ner_lexicon_path));
    }
    std::set<std::string> refined_terms;
    for (const auto& [t, s] : refined.refined.terms) refined_terms.insert(t);
    const std::set<std::string> filtered = pos_ner_filter(refined_terms, corpus, tagger.get());

    FactorSpace fspace = cluster_factors(filtered, embedder, {cfg.k_min, cfg.k_max},
                                         derive_seed(cfg.seed, 4));
    build_design_matrix(fspace, corpus, Split::train);
    {
        nlohmann::ordered_json j;
        j["initial"] = init.terms.size();
        j["refined"] = refined.refined.terms.size();
        j["after_pos_ner"] = filtered.size();
        j["hallucinated_dropped"] = refined.hallucinated_dropped;
        j["failed_batches"] = refined.failed_batches;
        j["vote_fraction"] = nlohmann::ordered_json();
        for (const auto& [term, frac] : refined.vote_fraction) j["vote_fraction"][term] = frac;
        ctx.emit("refine/refine_report.json", j.dump(2) + "\n");
    }
    {
        const std::string path = ctx.abs("refine/factor_space.json");
        fs::create_directories(fs::path(path).parent_path());
        fspace.save(path);
        ctx.outputs["refine/factor_space.json"] = fnv1a_hex(read_file(path));
    }
}

void stage_discover(RunContext& ctx) {
    const PipelineConfig& cfg = *ctx.cfg;
    FactorSpace fspace = FactorSpace::load(ctx.require("refine/factor_space.json", "refine"));
    const VarTable table = fspace.variable_table();
    const Pag pag = discover_pag(table, cfg.discovery);

    const std::string pag_path = ctx.abs("discover/pag.json");
    fs::create_directories(fs::path(pag_path).parent_path());
    pag.save(pag_path);
    ctx.outputs["discover/pag.json"] = fnv1a_hex(read_file(pag_path));
    ctx.emit("discover/pag.dot", pag.to_dot());
    save_sepsets(pag, ctx.abs("discover/sepsets.json"));
    ctx.outputs["discover/sepsets.json"] = fnv1a_hex(read_file(ctx.abs("discover/sepsets.json")));
}

void stage_resolve(RunContext& ctx) {
    const PipelineConfig& cfg = *ctx.cfg;
    Corpus corpus = load_pipeline_corpus(ctx, true);
    FactorSpace fspace = FactorSpace::load(ctx.require("refine/factor_space.json", "refine"));
    Pag pag = Pag::load(ctx.require("discover/pag.json", "discover"));

    Lexicon lexicon;
    if (!cfg.lexicon_path.empty()) lexicon = Lexicon::load(cfg.lexicon_path);
    HashingEmbedder embedder(cfg.embedding_dim);
    auto client = make_llm_client(cfg.llm);

    PriorMap priors = elicit_edge_priors(
        pag, ambiguous_edges(pag),
        lexicon_context_provider(lexicon, embedder, cfg.retrieval_k), *client, cfg.epsilon);
    apply_constraints(pag, priors, fspace, corpus, cfg.alpha_temporal);

    const std::string pag_path = ctx.abs("resolve/pag_resolved.json");
    fs::create_directories(fs::path(pag_path).parent_path());
    pag.save(pag_path);
    ctx.outputs["resolve/pag_resolved.json"] = fnv1a_hex(read_file(pag_path));
    save_priors(priors, pag, ctx.abs("resolve/priors.json"));
    ctx.outputs["resolve/priors.json"] = fnv1a_hex(read_file(ctx.abs("resolve/priors.json")));
}

void stage_sample(RunContext& ctx) {
    const PipelineConfig& cfg = *ctx.cfg;
    FactorSpace fspace = FactorSpace::load(ctx.require("refine/factor_space.json", "refine"));
    Pag pag = Pag::load(ctx.require("resolve/pag_resolved.json", "resolve"));
    PriorMap priors = load_priors(ctx.require("resolve/priors.json", "resolve"));
    const VarTable table = fspace.variable_table();

    WeightedGraphEnsemble ensemble =
        sample_graphs(pag, priors, cfg.q_graphs, derive_seed(cfg.seed, 6));
    for (auto& g : ensemble.graphs) g.bic = bic_of_graph(g, table);
    normalize_weights(ensemble);

    const std::string path = ctx.abs("sample/ensemble.json");
    fs::create_directories(fs::path(path).parent_path());
    save_ensemble(ensemble, pag, path);
    ctx.outputs["sample/ensemble.json"] = fnv1a_hex(read_file(path));
    for (int q = 0; q < ensemble.q(); ++q) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample/dot/g%03d.dot", q);
        ctx.emit(name, sampled_graph_to_dot(ensemble.graphs[q], pag));
    }

    if (cfg.random_edge_control) {
        WeightedGraphEnsemble control =
            random_edge_baseline(pag, priors, ensemble, derive_seed(cfg.seed, 7));
        for (auto& g : control.graphs) g.bic = bic_of_graph(g, table);
        normalize_weights(control);
        const std::string cpath = ctx.abs("sample/ensemble_control.json");
        save_ensemble(control, pag, cpath);
        ctx.outputs["sample/ensemble_control.json"] = fnv1a_hex(read_file(cpath));
    }
}

void stage_strength(RunContext& ctx) {
    const PipelineConfig& cfg = *ctx.cfg;
    FactorSpace fspace = FactorSpace::load(ctx.require("refine/factor_space.json", "refine"));
    const VarTable table = fspace.variable_table();
    const int n_factors = static_cast<int>(fspace.factors.size());
    const int n_labels = static_cast<int>(fspace.labels.size());

    auto compute = [&](const std::string& ensemble_rel, const std::string& out_rel,
                       const std::string& tsv_rel) {
        WeightedGraphEnsemble ensemble = load_ensemble(ctx.require(ensemble_rel, "sample"));
        const auto estimates = estimate_ensemble_strengths(ensemble, table, cfg.psm);
        StrengthMatrix psi =
            aggregate_strengths(ensemble, estimates, table, n_factors, n_labels);
        const std::string path = ctx.abs(out_rel);
        fs::create_directories(fs::path(path).parent_path());
        psi.save(path);
        ctx.outputs[out_rel] = fnv1a_hex(read_file(path));
        if (!tsv_rel.empty()) {
            psi.save_tsv(fspace, ctx.abs(tsv_rel));
            ctx.outputs[tsv_rel] = fnv1a_hex(read_file(ctx.abs(tsv_rel)));
        }
    };
    compute("sample/ensemble.json", "strength/strengths.json", "strength/strengths.tsv");
    if (cfg.random_edge_control) {
        compute("sample/ensemble_control.json", "strength/strengths_control.json", "");
    }
}

void stage_train(RunContext& ctx) {
    const PipelineConfig& cfg = *ctx.cfg;
    Corpus corpus = load_pipeline_corpus(ctx, true);
    FactorSpace fspace = FactorSpace::load(ctx.require("refine/factor_space.json", "refine"));

    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, 5);
    auto fit = [&](const std::string& strengths_rel, const std::string& model_rel,
                   const std::string& metrics_rel) {
        StrengthMatrix psi = StrengthMatrix::load(ctx.require(strengths_rel, "strength"));
        TrainResult result = train(corpus, fspace, psi, cfg.encoder, tc, cfg.tokenizer);
        const std::string path = ctx.abs(model_rel);
        fs::create_directories(fs::path(path).parent_path());
        result.model.save(path);
        ctx.outputs[model_rel] = fnv1a_hex(read_file(path));

        nlohmann::ordered_json j;
        j["best_epoch"] = result.best_epoch;
        j["best_dev_accuracy"] = result.best_dev_accuracy;
        j["epochs"] = nlohmann::ordered_json::array();
        for (const auto& e : result.history) {
            j["epochs"].push_back({{"epoch", e.epoch},
                                   {"train_loss", e.train_loss},
                                   {"dev_accuracy", e.dev_accuracy},
                                   {"dev_loss", e.dev_loss}});
        }
        ctx.emit(metrics_rel, j.dump(2) + "\n");
    };
    fit("strength/strengths.json", "train/model.json", "train/metrics.json");
    if (cfg.random_edge_control) {
        fit("strength/strengths_control.json", "train/model_control.json",
            "train/metrics_control.json");
    }
}

double evaluate_model(const JudgmentModel& model, const Corpus& corpus, Split split,
                      std::ostringstream* tsv, nlohmann::ordered_json* explanations) {
    int correct = 0, total = 0;
    for (const auto* rec : corpus.split_records(split)) {
        const Prediction pred = predict_tokens(model, rec->tokens);
        const bool ok = pred.label == rec->label;
        correct += ok ? 1 : 0;
        total += 1;
        if (tsv) {
            (*tsv) << rec->id << '\t' << rec->label << '\t' << pred.label << '\t'
                   << (ok ? 1 : 0) << '\n';
        }
        if (explanations) {
            std::vector<std::pair<double, std::string>> ranked;
            for (int i = 0; i < pred.attention.size(); ++i) {
                ranked.push_back({pred.attention[i], rec->tokens[i].surface});
            }
            std::stable_sort(ranked.begin(), ranked.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            nlohmann::ordered_json top = nlohmann::ordered_json::array();
            for (std::size_t k = 0; k < std::min<std::size_t>(5, ranked.size()); ++k) {
                top.push_back({{"token", ranked[k].second}, {"attention", ranked[k].first}});
            }
            (*explanations)[rec->id] = top;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / total;
}

void stage_predict(RunContext& ctx) {
    const PipelineConfig& cfg = *ctx.cfg;
    Corpus corpus = load_pipeline_corpus(ctx, true);
    FactorSpace fspace = FactorSpace::load(ctx.require("refine/factor_space.json", "refine"));
    JudgmentModel model = JudgmentModel::load(ctx.require("train/model.json", "train"));
    if (model.factor_digest != fspace.digest()) {
        throw ValidationError("predict: model was trained against a different factor space");
    }

    std::ostringstream tsv;
    tsv << "id\tgold\tpredicted\tcorrect\n";
    nlohmann::ordered_json explanations;
    const double acc = evaluate_model(model, corpus, Split::test, &tsv, &explanations);
    ctx.emit("predict/predictions.tsv", tsv.str());
    ctx.emit("predict/explanations.json", explanations.dump(2) + "\n");

    nlohmann::ordered_json metrics;
    metrics["test_accuracy"] = acc;
    if (cfg.random_edge_control) {
        JudgmentModel control =
            JudgmentModel::load(ctx.require("train/model_control.json", "train"));
        metrics["test_accuracy_control"] = evaluate_model(control, corpus, Split::test,
                                                          nullptr, nullptr);
    }
    ctx.emit("predict/metrics.json", metrics.dump(2) + "\n");
}

void stage_refute(RunContext& ctx) {
    const PipelineConfig& cfg = *ctx.cfg;
    FactorSpace fspace = FactorSpace::load(ctx.require("refine/factor_space.json", "refine"));
    const VarTable table = fspace.variable_table();
    WeightedGraphEnsemble ensemble = load_ensemble(ctx.require("sample/ensemble.json", "sample"));
    StrengthMatrix psi = StrengthMatrix::load(ctx.require("strength/strengths.json", "strength"));

    // Refute the strongest cells; per cell, the job comes from the
    // highest-weight graph containing the edge.
    struct Cell {
        int f, l;
        double abs_psi;
    };
    std::vector<Cell> cells;
    for (const auto& [cell, contribs] : psi.provenance) {
        cells.push_back({cell.first, cell.second, std::abs(psi.at(cell.first, cell.second))});
    }
    std::stable_sort(cells.begin(), cells.end(),
                     [](const Cell& a, const Cell& b) { return a.abs_psi > b.abs_psi; });
    if (static_cast<int>(cells.size()) > cfg.refute.top_cells) {
        cells.resize(cfg.refute.top_cells);
    }

    auto col_of = [&](VarKind kind, int source) {
        for (int c = 0; c < table.n_cols(); ++c) {
            if (table.kinds[c] == kind && table.source_index[c] == source) return c;
        }
        return -1;
    };

    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    std::ostringstream tsv;
    tsv << "factor\tcharge\tstrategy\toriginal\trefuted\ttrials\tskipped\tpass\tthreshold\n";
    for (const auto& cell : cells) {
        const int t_col = col_of(VarKind::factor, cell.f);
        const int y_col = col_of(VarKind::charge, cell.l);
        if (t_col < 0 || y_col < 0) continue;

        int best_q = -1;
        double best_w = -1;
        for (int q = 0; q < ensemble.q(); ++q) {
            if (ensemble.graphs[q].has_edge(t_col, y_col) && ensemble.graphs[q].weight > best_w) {
                best_w = ensemble.graphs[q].weight;
                best_q = q;
            }
        }
        if (best_q < 0) continue;

        RefutationJob job;
        job.data = &table;
        job.t_col = t_col;
        job.y_col = y_col;
        job.confounders = ensemble.graphs[best_q].parents_of(t_col, table.n_cols());
        job.confounders.erase(
            std::remove(job.confounders.begin(), job.confounders.end(), y_col),
            job.confounders.end());
        job.psm = cfg.psm;

        const std::uint32_t seed = derive_seed(cfg.seed, 8);
        const RefutationReport reports[3] = {
            refute_random_confounder(job, cfg.refute.trials, seed, cfg.refute.thresholds),
            refute_placebo(job, cfg.refute.trials, seed, cfg.refute.thresholds),
            refute_subset(job, cfg.refute.subset_fraction, cfg.refute.trials, seed,
                          cfg.refute.thresholds),
        };
        for (const auto& rep : reports) {
            rows.push_back({{"factor", fspace.factors[cell.f].canonical},
                            {"charge", fspace.labels[cell.l]},
                            {"strategy", refutation_strategy_name(rep.strategy)},
                            {"original", rep.original},
                            {"refuted", rep.refuted_mean},
                            {"trials", rep.trials},
                            {"skipped", rep.skipped},
                            {"pass", rep.pass},
                            {"threshold", rep.threshold}});
            tsv << fspace.factors[cell.f].canonical << '\t' << fspace.labels[cell.l] << '\t'
                << refutation_strategy_name(rep.strategy) << '\t' << rep.original << '\t'
                << rep.refuted_mean << '\t' << rep.trials << '\t' << rep.skipped << '\t'
                << (rep.pass ? 1 : 0) << '\t' << rep.threshold << '\n';
        }
    }
    ctx.emit("refute/refutation.json", rows.dump(2) + "\n");
    ctx.emit("refute/refutation.tsv", tsv.str());
}

void stage_report(RunContext& ctx) {
    Corpus corpus = load_pipeline_corpus(ctx, true);
    FactorSpace fspace = FactorSpace::load(ctx.require("refine/factor_space.json", "refine"));
    JudgmentModel model = JudgmentModel::load(ctx.require("train/model.json", "train"));

    const auto rows = factor_count_report(corpus, fspace, model);
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    std::ostringstream tsv;
    tsv << "scheme\tlevel\tlo\thi\tn\tcorrect\taccuracy\tdelta_acc_rel\n";
    for (const auto& r : rows) {
        nlohmann::ordered_json rj;
        rj["scheme"] = r.scheme;
        rj["level"] = r.level;
        rj["lo"] = r.lo;
        rj["hi"] = r.hi;
        rj["n"] = r.n;
        rj["correct"] = r.correct;
        if (r.accuracy) rj["accuracy"] = *r.accuracy;
        else rj["accuracy"] = nullptr;
        if (r.delta_acc_rel) rj["delta_acc_rel"] = *r.delta_acc_rel;
        else rj["delta_acc_rel"] = nullptr;
        j.push_back(rj);
        tsv << r.scheme << '\t' << r.level << '\t' << r.lo << '\t' << r.hi << '\t' << r.n << '\t'
            << r.correct << '\t';
        if (r.accuracy) tsv << *r.accuracy;
        else tsv << "null";
        tsv << '\t';
        if (r.delta_acc_rel) tsv << *r.delta_acc_rel;
        else tsv << "null";
        tsv << '\n';
    }
    ctx.emit("report/factor_count.json", j.dump(2) + "\n");
    ctx.emit("report/factor_count.tsv", tsv.str());
}

}  // namespace

std::vector<FactorCountRow> factor_count_report(const Corpus& corpus, const FactorSpace& fs,
                                                const JudgmentModel& model) {
    struct Scheme {
        const char* name;
        std::vector<std::pair<int, int>> bounds;  // hi = -1 means open
    };
    const Scheme schemes[2] = {
        {"five_level", {{0, 4}, {5, 9}, {10, 14}, {15, 19}, {20, -1}}},
        {"four_level", {{0, 4}, {5, 9}, {10, 14}, {15, -1}}},
    };

    // Factor occurrences and correctness per test record.
    std::vector<std::pair<int, bool>> outcomes;
    for (const auto* rec : corpus.split_records(Split::test)) {
        int occurrences = 0;
        for (const auto& tok : rec->tokens) {
            if (fs.factor_of(to_lower(tok.surface)) >= 0) ++occurrences;
        }
        const Prediction pred = predict_tokens(model, rec->tokens);
        outcomes.push_back({occurrences, pred.label == rec->label});
    }

    std::vector<FactorCountRow> rows;
    for (const auto& scheme : schemes) {
        std::optional<double> level1_acc;
        for (std::size_t li = 0; li < scheme.bounds.size(); ++li) {
            FactorCountRow row;
            row.scheme = scheme.name;
            row.level = static_cast<int>(li) + 1;
            row.lo = scheme.bounds[li].first;
            row.hi = scheme.bounds[li].second;
            for (const auto& [count, ok] : outcomes) {
                const bool in_level =
                    count >= row.lo && (row.hi < 0 || count <= row.hi);
                if (in_level) {
                    row.n += 1;
                    row.correct += ok ? 1 : 0;
                }
            }
            if (row.n > 0) {
                row.accuracy = static_cast<double>(row.correct) / row.n;
                if (li == 0) level1_acc = row.accuracy;
                if (level1_acc) row.delta_acc_rel = *row.accuracy - *level1_acc;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

void run_stage(Stage stage, const PipelineConfig& cfg, const std::string& run_dir) {
    RunContext ctx;
    ctx.run_dir = run_dir;
    ctx.cfg = &cfg;
    fs::create_directories(run_dir);
    write_file(ctx.abs("config.resolved.json"), cfg.to_json_string());

    switch (stage) {
        case Stage::extract: stage_extract(ctx); break;
        case Stage::refine: stage_refine(ctx); break;
        case Stage::discover: stage_discover(ctx); break;
        case Stage::resolve: stage_resolve(ctx); break;
        case Stage::sample: stage_sample(ctx); break;
        case Stage::strength: stage_strength(ctx); break;
        case Stage::train: stage_train(ctx); break;
        case Stage::predict: stage_predict(ctx); break;
        case Stage::refute: stage_refute(ctx); break;
        case Stage::report: stage_report(ctx); break;
    }
    update_manifest(ctx, stage);
}

void run_all(const PipelineConfig& cfg, const std::string& run_dir) {
    for (Stage s : {Stage::extract, Stage::refine, Stage::discover, Stage::resolve,
                    Stage::sample, Stage::strength, Stage::train, Stage::predict,
                    Stage::refute, Stage::report}) {
        run_stage(s, cfg, run_dir);
    }
}

void write_mini_corpus_files(const std::string& dir, int n_records, std::uint32_t seed) {
    MiniCorpus mini = make_mini_corpus(n_records, seed);
    fs::create_directories(dir);

    {
        std::ostringstream os;
        for (const auto& rec : mini.corpus.records) {
            nlohmann::ordered_json j;
            j["id"] = rec.id;
            j["text"] = rec.text;
            j["label"] = rec.label;
            os << j.dump() << "\n";
        }
        write_file((fs::path(dir) / "corpus.jsonl").string(), os.str());
    }
    {
        std::ostringstream os;
        for (const auto& line : mini.lexicon_lines) os << line << "\n";
        write_file((fs::path(dir) / "lexicon.txt").string(), os.str());
    }
    {
        std::ostringstream os;
        for (const auto& w : mini.stopwords) os << w << "\n";
        write_file((fs::path(dir) / "stopwords.txt").string(), os.str());
    }
    {
        nlohmann::ordered_json j;
        j["rules"] = nlohmann::ordered_json::array();
        for (const auto& rule : mini.llm_rules) {
            j["rules"].push_back({{"contains", rule.contains},
                                  {"respond", rule.respond},
                                  {"max_uses", rule.max_uses}});
        }
        j["default"] = mini.default_llm_response;
        write_file((fs::path(dir) / "llm_rules.json").string(), j.dump(2) + "\n");
    }
    {
        nlohmann::ordered_json j;
        j["corpus"] = "corpus.jsonl";
        j["lexicon"] = "lexicon.txt";
        j["stopwords"] = "stopwords.txt";
        j["split"] = {{"train", 0.6}, {"dev", 0.1}, {"test", 0.3}, {"train_keep_pct", 100.0}};
        j["n_s"] = 150;
        j["buckets"] = 10;
        j["repeats"] = 3;
        j["delta"] = 0.5;
        j["k_min"] = 0;
        j["k_max"] = 0;
        j["epsilon"] = 0.2;
        j["alpha_temporal"] = 0.3;
        j["q_graphs"] = 20;
        j["caliper"] = 0.05;
        j["encoder"] = {{"hash_dim", 512}, {"embed_dim", 24}};
        j["train"] = {{"lambda", 2.0},
                      {"lr", 0.05},
                      {"epochs", 40},
                      {"batch_size", 16},
                      {"patience", 8}};
        j["llm"] = {{"kind", "scripted"}, {"path", "llm_rules.json"}};
        j["seed"] = 7;
        j["random_edge_control"] = true;
        write_file((fs::path(dir) / "config.json").string(), j.dump(2) + "\n");
    }
}

}  // namespace ljp
