#include "ljpcausal/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <json.hpp>

namespace ljp {

JudgmentModel init_model(const EncoderParams& enc, const TokenizerConfig& tok,
                         const std::vector<std::string>& labels, std::uint32_t seed) {
    if (enc.embed_dim < 4) throw ValidationError("init_model: embed_dim must be >= 4");
    JudgmentModel m;
    m.enc = enc;
    m.tok = tok;
    m.labels = labels;
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 0.1);
    m.embedding.resize(enc.hash_dim, enc.embed_dim);
    for (int i = 0; i < enc.hash_dim; ++i) {
        for (int j = 0; j < enc.embed_dim; ++j) m.embedding(i, j) = gauss(rng);
    }
    m.query.resize(enc.embed_dim);
    for (int j = 0; j < enc.embed_dim; ++j) m.query[j] = gauss(rng);
    m.head_w = Eigen::MatrixXd::Zero(static_cast<int>(labels.size()), enc.embed_dim);
    m.head_b = Eigen::VectorXd::Zero(static_cast<int>(labels.size()));
    return m;
}

int hash_row(const JudgmentModel& model, const std::string& surface) {
    return static_cast<int>(fnv1a(to_lower(surface)) %
                            static_cast<std::uint64_t>(model.enc.hash_dim));
}

Eigen::MatrixXd encode(const JudgmentModel& model, const std::vector<Token>& tokens) {
    Eigen::MatrixXd h(static_cast<int>(tokens.size()), model.enc.embed_dim);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        h.row(static_cast<int>(i)) = model.embedding.row(hash_row(model, tokens[i].surface));
    }
    return h;
}

Eigen::VectorXd attention(const Eigen::MatrixXd& h, const Eigen::VectorXd& query) {
    Eigen::VectorXd logits = h * query;
    const double mx = logits.maxCoeff();
    Eigen::VectorXd a = (logits.array() - mx).exp();
    return a / a.sum();
}

Eigen::VectorXd pool(const Eigen::MatrixXd& h, const Eigen::VectorXd& a) {
    if (h.rows() != a.size()) throw ValidationError("pool: attention/encoding size mismatch");
    return h.transpose() * a;
}

Eigen::VectorXd causal_targets(const std::vector<Token>& tokens, const FactorSpace& fs,
                               const StrengthMatrix& psi, int label) {
    const int n = static_cast<int>(tokens.size());
    Eigen::VectorXd raw = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        const int f = fs.factor_of(to_lower(tokens[i].surface));
        if (f >= 0 && f < psi.n_factors && label < psi.n_labels) {
            raw[i] = std::max(0.0, psi.at(f, label));
        }
    }
    const double total = raw.sum();
    if (total <= 0) return Eigen::VectorXd::Constant(n, 1.0 / n);
    return raw / total;
}

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
    const double mx = z.maxCoeff();
    Eigen::VectorXd e = (z.array() - mx).exp();
    return e / e.sum();
}

}  // namespace

LossGrads loss_and_grads(const JudgmentModel& model, const std::vector<int>& rows,
                         int label, const Eigen::VectorXd& g, double lambda) {
    if (rows.empty()) throw ValidationError("loss_and_grads: empty token sequence");
    if (lambda < 0) throw ValidationError("loss_and_grads: lambda must be >= 0");
    const int n = static_cast<int>(rows.size());
    const int d = model.enc.embed_dim;

    Eigen::MatrixXd h(n, d);
    for (int i = 0; i < n; ++i) h.row(i) = model.embedding.row(rows[i]);

    const Eigen::VectorXd a = attention(h, model.query);
    const Eigen::VectorXd v = pool(h, a);
    const Eigen::VectorXd z = model.head_w * v + model.head_b;
    const Eigen::VectorXd p = softmax(z);

    LossGrads out;
    out.cross_entropy = -std::log(std::max(1e-300, p[label]));
    out.causal = (a - g).squaredNorm();
    out.loss = out.cross_entropy + lambda * out.causal;

    // dL/dz = p - onehot(label)
    Eigen::VectorXd dz = p;
    dz[label] -= 1.0;

    out.d_head_w = dz * v.transpose();
    out.d_head_b = dz;
    const Eigen::VectorXd dv = model.head_w.transpose() * dz;

    // dL/da_i = h_i . dv + 2 lambda (a_i - g_i)
    Eigen::VectorXd da = h * dv;
    if (lambda > 0) da += 2.0 * lambda * (a - g);

    // Softmax backward: ds_i = a_i (da_i - sum_k a_k da_k)
    const double adot = a.dot(da);
    Eigen::VectorXd ds = a.array() * (da.array() - adot);

    out.d_query = h.transpose() * ds;

    // dL/dh_i = a_i dv + ds_i q; rows repeated by hashing accumulate.
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd dh = a[i] * dv + ds[i] * model.query;
        auto [it, inserted] = out.d_embedding.try_emplace(rows[i], dh);
        if (!inserted) it->second += dh;
    }
    return out;
}

namespace {

struct AdamState {
    // Same shapes as the parameters; embeddings updated lazily per row.
    Eigen::MatrixXd m_emb, v_emb;
    Eigen::VectorXd m_q, v_q;
    Eigen::MatrixXd m_w, v_w;
    Eigen::VectorXd m_b, v_b;
    std::vector<long> emb_step;  // per-row step counter
    long step = 0;

    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

    explicit AdamState(const JudgmentModel& m)
        : m_emb(Eigen::MatrixXd::Zero(m.embedding.rows(), m.embedding.cols())),
          v_emb(Eigen::MatrixXd::Zero(m.embedding.rows(), m.embedding.cols())),
          m_q(Eigen::VectorXd::Zero(m.query.size())),
          v_q(Eigen::VectorXd::Zero(m.query.size())),
          m_w(Eigen::MatrixXd::Zero(m.head_w.rows(), m.head_w.cols())),
          v_w(Eigen::MatrixXd::Zero(m.head_w.rows(), m.head_w.cols())),
          m_b(Eigen::VectorXd::Zero(m.head_b.size())),
          v_b(Eigen::VectorXd::Zero(m.head_b.size())),
          emb_step(m.embedding.rows(), 0) {}

    template <typename P>
    static void update(P& param, P& m1, P& m2, const P& grad, double lr, long step) {
        m1 = beta1 * m1 + (1 - beta1) * grad;
        m2 = (beta2 * m2.array() + (1 - beta2) * grad.array().square()).matrix();
        const double bc1 = 1 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1 - std::pow(beta2, static_cast<double>(step));
        param.array() -=
            lr * (m1.array() / bc1) / ((m2.array() / bc2).sqrt() + eps);
    }
};

struct TrainInstance {
    std::vector<int> rows;
    int label = 0;
    Eigen::VectorXd g;
};

}  // namespace

TrainResult train(const Corpus& corpus, const FactorSpace& fs, const StrengthMatrix& psi,
                  const EncoderParams& enc, const TrainConfig& cfg,
                  const TokenizerConfig& tok) {
    const auto train_recs = corpus.split_records(Split::train);
    const auto dev_recs = corpus.split_records(Split::dev);
    if (train_recs.empty()) throw ValidationError("train: empty training split");

    JudgmentModel model = init_model(enc, tok, corpus.labels, cfg.seed);
    model.factor_digest = fs.digest();

    auto make_instance = [&](const CaseRecord& rec) {
        TrainInstance inst;
        inst.rows.reserve(rec.tokens.size());
        for (const auto& t : rec.tokens) inst.rows.push_back(hash_row(model, t.surface));
        inst.label = corpus.label_index(rec.label);
        inst.g = causal_targets(rec.tokens, fs, psi, inst.label);
        return inst;
    };

    std::vector<TrainInstance> train_set;
    int skipped = 0;
    for (const auto* rec : train_recs) {
        if (rec->tokens.empty()) {
            ++skipped;
            continue;
        }
        train_set.push_back(make_instance(*rec));
    }
    if (skipped > 0) {
        log_warning("train: skipped " + std::to_string(skipped) + " empty-token records");
    }
    if (train_set.empty()) throw ValidationError("train: no usable training records");

    std::vector<TrainInstance> dev_set;
    for (const auto* rec : dev_recs) {
        if (!rec->tokens.empty()) dev_set.push_back(make_instance(*rec));
    }

    AdamState adam(model);
    TrainResult result;
    JudgmentModel best = model;
    JudgmentModel last_good = model;
    double best_acc = -1, best_loss = std::numeric_limits<double>::max();
    int best_epoch = 0, since_best = 0;

    auto evaluate = [&](const std::vector<TrainInstance>& set, double& acc, double& loss) {
        int correct = 0;
        double total_loss = 0;
        for (const auto& inst : set) {
            Eigen::MatrixXd h(static_cast<int>(inst.rows.size()), enc.embed_dim);
            for (std::size_t i = 0; i < inst.rows.size(); ++i) {
                h.row(static_cast<int>(i)) = model.embedding.row(inst.rows[i]);
            }
            const Eigen::VectorXd a = attention(h, model.query);
            const Eigen::VectorXd z = model.head_w * pool(h, a) + model.head_b;
            const Eigen::VectorXd p = softmax(z);
            int arg = 0;
            p.maxCoeff(&arg);
            if (arg == inst.label) ++correct;
            total_loss += -std::log(std::max(1e-300, p[inst.label])) +
                          cfg.lambda * (a - inst.g).squaredNorm();
        }
        acc = set.empty() ? 0 : static_cast<double>(correct) / set.size();
        loss = set.empty() ? 0 : total_loss / set.size();
    };

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::seed_seq seq{cfg.seed, static_cast<std::uint32_t>(epoch), 0x5e5eu};
        std::mt19937 rng(seq);
        std::shuffle(order.begin(), order.end(), rng);

        double epoch_loss = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const double scale = 1.0 / static_cast<double>(end - start);

            Eigen::VectorXd g_q = Eigen::VectorXd::Zero(enc.embed_dim);
            Eigen::MatrixXd g_w = Eigen::MatrixXd::Zero(model.head_w.rows(), model.head_w.cols());
            Eigen::VectorXd g_b = Eigen::VectorXd::Zero(model.head_b.size());
            std::map<int, Eigen::VectorXd> g_emb;

            for (std::size_t k = start; k < end; ++k) {
                const TrainInstance& inst = train_set[order[k]];
                LossGrads lg = loss_and_grads(model, inst.rows, inst.label, inst.g, cfg.lambda);
                epoch_loss += lg.loss;
                g_q += scale * lg.d_query;
                g_w += scale * lg.d_head_w;
                g_b += scale * lg.d_head_b;
                for (const auto& [row, grad] : lg.d_embedding) {
                    auto [it, inserted] = g_emb.try_emplace(row, scale * grad);
                    if (!inserted) it->second += scale * grad;
                }
            }

            adam.step += 1;
            AdamState::update(model.query, adam.m_q, adam.v_q, g_q, cfg.lr, adam.step);
            AdamState::update(model.head_w, adam.m_w, adam.v_w, g_w, cfg.lr, adam.step);
            AdamState::update(model.head_b, adam.m_b, adam.v_b, g_b, cfg.lr, adam.step);
            for (const auto& [row, grad] : g_emb) {
                adam.emb_step[row] += 1;
                Eigen::VectorXd m_row = adam.m_emb.row(row);
                Eigen::VectorXd v_row = adam.v_emb.row(row);
                Eigen::VectorXd p_row = model.embedding.row(row);
                AdamState::update(p_row, m_row, v_row, grad, cfg.lr, adam.emb_step[row]);
                adam.m_emb.row(row) = m_row;
                adam.v_emb.row(row) = v_row;
                model.embedding.row(row) = p_row;
            }
        }

        if (!std::isfinite(epoch_loss)) {
            throw TrainDivergence("train: loss diverged at epoch " + std::to_string(epoch),
                                  last_good);
        }
        last_good = model;

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(train_set.size());
        evaluate(dev_set.empty() ? train_set : dev_set, stats.dev_accuracy, stats.dev_loss);
        result.history.push_back(stats);

        const bool improved = stats.dev_accuracy > best_acc + 1e-12 ||
                              (stats.dev_accuracy >= best_acc - 1e-12 &&
                               stats.dev_loss < best_loss - 1e-12);
        if (improved) {
            best_acc = std::max(best_acc, stats.dev_accuracy);
            best_loss = stats.dev_loss;
            best = model;
            best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }

    result.model = std::move(best);
    result.best_epoch = best_epoch;
    result.best_dev_accuracy = best_acc;
    return result;
}

Prediction predict_tokens(const JudgmentModel& model, const std::vector<Token>& tokens) {
    Prediction pred;
    pred.tokens = tokens;
    const int n_labels = static_cast<int>(model.labels.size());
    if (tokens.empty()) {
        pred.probabilities = Eigen::VectorXd::Constant(n_labels, 1.0 / n_labels);
        pred.attention = Eigen::VectorXd();
        pred.label = model.labels.empty() ? "" : model.labels[0];
        return pred;
    }
    const Eigen::MatrixXd h = encode(model, tokens);
    pred.attention = attention(h, model.query);
    const Eigen::VectorXd z = model.head_w * pool(h, pred.attention) + model.head_b;
    pred.probabilities = softmax(z);
    int arg = 0;
    pred.probabilities.maxCoeff(&arg);
    pred.label = model.labels[arg];
    return pred;
}

Prediction predict(const JudgmentModel& model, const std::string& text) {
    return predict_tokens(model, tokenize(text, model.tok));
}

namespace {

nlohmann::ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (int i = 0; i < m.rows(); ++i) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const int rows = static_cast<int>(j.size());
    const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    }
    return m;
}

}  // namespace

void JudgmentModel::save(const std::string& path) const {
    nlohmann::ordered_json j;
    j["hash_dim"] = enc.hash_dim;
    j["embed_dim"] = enc.embed_dim;
    j["tokenizer"] = {{"lowercase", tok.lowercase},
                      {"pretokenized_passthrough", tok.pretokenized_passthrough}};
    j["labels"] = labels;
    j["factor_digest"] = factor_digest;
    j["embedding"] = matrix_to_json(embedding);
    j["query"] = std::vector<double>(query.data(), query.data() + query.size());
    j["head_w"] = matrix_to_json(head_w);
    j["head_b"] = std::vector<double>(head_b.data(), head_b.data() + head_b.size());
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write model checkpoint: " + path);
    out << j.dump() << "\n";
}

JudgmentModel JudgmentModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open model checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid model checkpoint " + path + ": " + e.what());
    }
    JudgmentModel m;
    m.enc.hash_dim = j.at("hash_dim").get<int>();
    m.enc.embed_dim = j.at("embed_dim").get<int>();
    m.tok.lowercase = j.at("tokenizer").value("lowercase", false);
    m.tok.pretokenized_passthrough = j.at("tokenizer").value("pretokenized_passthrough", false);
    m.labels = j.at("labels").get<std::vector<std::string>>();
    m.factor_digest = j.value("factor_digest", "");
    m.embedding = matrix_from_json(j.at("embedding"));
    const auto q = j.at("query").get<std::vector<double>>();
    m.query = Eigen::Map<const Eigen::VectorXd>(q.data(), static_cast<long>(q.size()));
    m.head_w = matrix_from_json(j.at("head_w"));
    const auto b = j.at("head_b").get<std::vector<double>>();
    m.head_b = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<long>(b.size()));
    return m;
}

}  // namespace ljp
