#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ljpcausal/discovery.hpp"
#include "ljpcausal/edges.hpp"
#include "ljpcausal/model.hpp"
#include "ljpcausal/refute.hpp"
#include "ljpcausal/strength.hpp"
#include "ljpcausal/synthetic.hpp"
#include "ljpcausal/yake.hpp"

namespace ljp {

struct LlmClientConfig {
    std::string kind = "scripted";  // scripted | fixture | http
    std::string path;               // rules / fixture file
    HttpChatConfig http;
};

struct RefuteConfig {
    int trials = 10;
    double subset_fraction = 0.8;
    RefutationThresholds thresholds;
    int top_cells = 16;  // strongest |psi| cells refuted
};

// Every knob of the pipeline; a fully-resolved copy is written next to the
// outputs of every run.
struct PipelineConfig {
    std::string corpus_path;
    std::string lexicon_path;
    std::string stopwords_path;
    std::string pos_lexicon_path;
    std::string ner_lexicon_path;

    TokenizerConfig tokenizer;
    SplitOptions split{{0.8, 0.1, 0.1}, 0, 100.0};

    YakeParams yake;      // stopwords filled from stopwords_path at load
    double tau = 0;       // 0 = auto (40th percentile)
    int n_s = 150;
    int buckets = 10;

    int retrieval_k = 3;
    int repeats = 3;
    double delta = 0.5;
    int refine_batch_size = 30;
    std::vector<std::string> charge_group;  // empty = corpus labels
    int k_min = 0, k_max = 0;               // 0 = auto range
    int embedding_dim = 256;

    DiscoveryConfig discovery;

    double epsilon = 0.2;
    double alpha_temporal = 0.3;
    int q_graphs = 20;

    PsmParams psm;

    EncoderParams encoder;
    TrainConfig train;

    RefuteConfig refute;

    LlmClientConfig llm;
    std::uint32_t seed = 0;
    bool random_edge_control = false;

    static PipelineConfig load(const std::string& path);
    void validate() const;
    std::string to_json_string() const;
};

enum class Stage {
    extract,
    refine,
    discover,
    resolve,
    sample,
    strength,
    train,
    predict,
    refute,
    report
};

const char* stage_name(Stage s);
std::optional<Stage> stage_from_name(const std::string& name);

std::unique_ptr<LlmClient> make_llm_client(const LlmClientConfig& cfg);

// Runs one stage against the artifacts in run_dir. Missing upstream
// artifacts raise PipelineError naming the stage that produces them.
void run_stage(Stage stage, const PipelineConfig& cfg, const std::string& run_dir);

// All ten stages in order.
void run_all(const PipelineConfig& cfg, const std::string& run_dir);

struct FactorCountRow {
    std::string scheme;  // "five_level" | "four_level"
    int level = 0;       // 1-based
    int lo = 0;
    int hi = -1;  // -1 = open-ended
    int n = 0;
    int correct = 0;
    std::optional<double> accuracy;       // empty level -> null
    std::optional<double> delta_acc_rel;  // vs level 1
};

// Accuracy per factor-occurrence-count level over the test split, with the
// relative improvement against the lowest level.
std::vector<FactorCountRow> factor_count_report(const Corpus& corpus, const FactorSpace& fs,
                                                const JudgmentModel& model);

// Bundled mini-corpus files plus a ready-to-run config.json.
void write_mini_corpus_files(const std::string& dir, int n_records, std::uint32_t seed);

}  // namespace ljp
