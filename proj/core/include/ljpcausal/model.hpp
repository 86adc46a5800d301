#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ljpcausal/corpus.hpp"
#include "ljpcausal/factors.hpp"
#include "ljpcausal/strength.hpp"

namespace ljp {

struct EncoderParams {
    int hash_dim = 2048;  // embedding rows
    int embed_dim = 32;   // d
};

struct TrainConfig {
    double lambda = 1.0;  // causal-loss trade-off
    double lr = 0.05;
    int epochs = 30;
    int batch_size = 16;
    std::uint32_t seed = 0;
    int patience = 5;  // early-stop patience on dev improvement
};

// Token encoder (trainable hashed embeddings), attention pooler with a
// learnable query, and a linear classification head.
struct JudgmentModel {
    EncoderParams enc;
    TokenizerConfig tok;
    Eigen::MatrixXd embedding;  // hash_dim x d
    Eigen::VectorXd query;      // d
    Eigen::MatrixXd head_w;     // labels x d
    Eigen::VectorXd head_b;     // labels
    std::vector<std::string> labels;
    std::string factor_digest;  // factor space this model was trained against

    void save(const std::string& path) const;
    static JudgmentModel load(const std::string& path);
};

JudgmentModel init_model(const EncoderParams& enc, const TokenizerConfig& tok,
                         const std::vector<std::string>& labels, std::uint32_t seed);

// Embedding row for a token surface.
int hash_row(const JudgmentModel& model, const std::string& surface);

// H: one embedding row per token.
Eigen::MatrixXd encode(const JudgmentModel& model, const std::vector<Token>& tokens);

// Max-shifted softmax of q . h_i.
Eigen::VectorXd attention(const Eigen::MatrixXd& h, const Eigen::VectorXd& query);

// v = sum_i a_i h_i.
Eigen::VectorXd pool(const Eigen::MatrixXd& h, const Eigen::VectorXd& a);

// Attention targets: clamped strengths psi[factor(token), y] normalized
// over the token sequence; uniform when no token carries mass.
Eigen::VectorXd causal_targets(const std::vector<Token>& tokens, const FactorSpace& fs,
                               const StrengthMatrix& psi, int label);

struct LossGrads {
    double loss = 0;
    double cross_entropy = 0;
    double causal = 0;  // sum_i (a_i - g_i)^2, before lambda
    Eigen::VectorXd d_query;
    Eigen::MatrixXd d_head_w;
    Eigen::VectorXd d_head_b;
    std::map<int, Eigen::VectorXd> d_embedding;  // touched rows only
};

// L = cross-entropy + lambda * sum_i (a_i - g_i)^2 with analytic gradients
// for every trainable parameter.
LossGrads loss_and_grads(const JudgmentModel& model, const std::vector<int>& rows,
                         int label, const Eigen::VectorXd& g, double lambda);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0;
    double dev_accuracy = 0;
    double dev_loss = 0;
};

struct TrainResult {
    JudgmentModel model;
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_dev_accuracy = 0;
};

// Thrown on loss divergence; carries the last finite-loss model state.
class TrainDivergence : public PipelineError {
public:
    TrainDivergence(const std::string& msg, JudgmentModel last_good)
        : PipelineError(msg), last_good_model(std::move(last_good)) {}
    JudgmentModel last_good_model;
};

// Minibatch Adam with dev-accuracy early stopping (improvement is
// lexicographic on (accuracy, lower dev loss); patience in epochs); the
// best snapshot is restored. Deterministic per seed.
TrainResult train(const Corpus& corpus, const FactorSpace& fs, const StrengthMatrix& psi,
                  const EncoderParams& enc, const TrainConfig& cfg,
                  const TokenizerConfig& tok = {});

struct Prediction {
    std::string label;
    Eigen::VectorXd probabilities;
    Eigen::VectorXd attention;
    std::vector<Token> tokens;
};

Prediction predict(const JudgmentModel& model, const std::string& text);
Prediction predict_tokens(const JudgmentModel& model, const std::vector<Token>& tokens);

}  // namespace ljp
