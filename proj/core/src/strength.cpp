#include "ljpcausal/strength.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace ljp {

Eigen::VectorXd fit_propensity(const Eigen::MatrixXd& confounders,
                               const std::vector<std::uint8_t>& treatment,
                               double ridge) {
    const int n = static_cast<int>(treatment.size());
    int n_treated = 0;
    for (auto t : treatment) n_treated += t ? 1 : 0;
    if (n_treated == 0 || n_treated == n) {
        throw PipelineError("fit_propensity: untestable treatment (single class)");
    }

    if (confounders.cols() == 0) {
        const double mean_t = static_cast<double>(n_treated) / n;
        return Eigen::VectorXd::Constant(n, mean_t);
    }

    // Design with intercept; ridge penalty applies to all coefficients.
    const int p = static_cast<int>(confounders.cols()) + 1;
    Eigen::MatrixXd design(n, p);
    design.col(0).setOnes();
    design.rightCols(p - 1) = confounders;
    Eigen::VectorXd t(n);
    for (int i = 0; i < n; ++i) t[i] = treatment[i] ? 1.0 : 0.0;

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (int iter = 0; iter < 100; ++iter) {
        Eigen::VectorXd eta = design * beta;
        Eigen::VectorXd prob(n), w(n);
        for (int i = 0; i < n; ++i) {
            const double pr = 1.0 / (1.0 + std::exp(-eta[i]));
            prob[i] = std::min(1.0 - 1e-12, std::max(1e-12, pr));
            w[i] = std::max(1e-10, prob[i] * (1.0 - prob[i]));
        }
        Eigen::VectorXd grad = design.transpose() * (t - prob) - ridge * beta;
        Eigen::MatrixXd hess = design.transpose() * w.asDiagonal() * design;
        hess.diagonal().array() += ridge;
        Eigen::VectorXd delta = hess.ldlt().solve(grad);
        beta += delta;
        if (delta.lpNorm<Eigen::Infinity>() < 1e-8) break;
    }

    Eigen::VectorXd scores(n);
    Eigen::VectorXd eta = design * beta;
    for (int i = 0; i < n; ++i) {
        const double pr = 1.0 / (1.0 + std::exp(-eta[i]));
        scores[i] = std::min(1.0 - 1e-12, std::max(1e-12, pr));
    }
    return scores;
}

AteEstimate psm_ate_with_confounders(const VarTable& data, int t_col, int y_col,
                                     const std::vector<int>& confounder_cols,
                                     const PsmParams& params, int graph_index) {
    const int n = data.n_rows();
    const auto& t = data.cols[t_col];
    const auto& y = data.cols[y_col];

    Eigen::MatrixXd confounders(n, static_cast<int>(confounder_cols.size()));
    for (std::size_t j = 0; j < confounder_cols.size(); ++j) {
        for (int i = 0; i < n; ++i) {
            confounders(i, static_cast<int>(j)) = data.cols[confounder_cols[j]][i] ? 1.0 : 0.0;
        }
    }
    const Eigen::VectorXd scores = fit_propensity(confounders, t);

    // Controls sorted by score; equidistant candidates contribute the mean
    // outcome of all controls sharing the minimal distance.
    struct Control {
        double score;
        int index;
    };
    std::vector<Control> controls;
    for (int i = 0; i < n; ++i) {
        if (!t[i]) controls.push_back({scores[i], i});
    }
    std::sort(controls.begin(), controls.end(), [](const Control& a, const Control& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.index < b.index;
    });
    // Prefix sums of outcomes per distinct score value.
    std::vector<double> uniq_scores;
    std::vector<double> sum_y;
    std::vector<int> count;
    for (const auto& c : controls) {
        if (uniq_scores.empty() || uniq_scores.back() != c.score) {
            uniq_scores.push_back(c.score);
            sum_y.push_back(0);
            count.push_back(0);
        }
        sum_y.back() += y[c.index] ? 1.0 : 0.0;
        count.back() += 1;
    }

    AteEstimate est;
    est.treatment = t_col;
    est.outcome = y_col;
    est.graph_index = graph_index;

    auto mean_at = [&](std::size_t k) { return sum_y[k] / count[k]; };

    double total = 0;
    for (int i = 0; i < n; ++i) {
        if (!t[i]) continue;
        const double s = scores[i];
        const auto it = std::lower_bound(uniq_scores.begin(), uniq_scores.end(), s);
        double best_dist = std::numeric_limits<double>::max();
        double matched_y = 0;
        int matched_n = 0;
        auto consider = [&](std::size_t k) {
            const double dist = std::abs(uniq_scores[k] - s);
            if (dist + 1e-15 < best_dist) {
                best_dist = dist;
                matched_y = mean_at(k);
                matched_n = 1;
            } else if (std::abs(dist - best_dist) <= 1e-15) {
                // two distinct score values equally far: average their means
                matched_y = (matched_y * matched_n + mean_at(k)) / (matched_n + 1);
                matched_n += 1;
            }
        };
        if (it != uniq_scores.end()) consider(static_cast<std::size_t>(it - uniq_scores.begin()));
        if (it != uniq_scores.begin()) consider(static_cast<std::size_t>(it - uniq_scores.begin()) - 1);

        if (matched_n == 0 || best_dist > params.caliper) {
            est.caliper_dropped += 1;
            continue;
        }
        total += (y[i] ? 1.0 : 0.0) - matched_y;
        est.matched_pairs += 1;
    }

    if (est.matched_pairs == 0) {
        est.value = 0;
        est.unestimable = true;
        log_warning("psm_ate: no matched pairs inside the caliper");
    } else {
        est.value = total / est.matched_pairs;
    }
    return est;
}

AteEstimate psm_ate(const VarTable& data, int t_col, int y_col, const SampledGraph& graph,
                    const PsmParams& params, int graph_index) {
    if (!graph.has_edge(t_col, y_col)) {
        throw ValidationError("psm_ate: graph does not contain the treated edge");
    }
    std::vector<int> confounders = graph.parents_of(t_col, data.n_cols());
    confounders.erase(std::remove(confounders.begin(), confounders.end(), y_col),
                      confounders.end());
    return psm_ate_with_confounders(data, t_col, y_col, confounders, params, graph_index);
}

std::vector<AteEstimate> estimate_ensemble_strengths(const WeightedGraphEnsemble& ensemble,
                                                     const VarTable& data,
                                                     const PsmParams& params) {
    std::vector<AteEstimate> out;
    for (int q = 0; q < ensemble.q(); ++q) {
        const SampledGraph& g = ensemble.graphs[q];
        for (const auto& [from, to] : g.edges) {
            if (data.kinds[from] != VarKind::factor || data.kinds[to] != VarKind::charge) {
                continue;
            }
            try {
                out.push_back(psm_ate(data, from, to, g, params, q));
            } catch (const PipelineError& e) {
                log_warning(std::string("estimate_ensemble_strengths: ") + e.what());
                AteEstimate est;
                est.treatment = from;
                est.outcome = to;
                est.graph_index = q;
                est.unestimable = true;
                out.push_back(est);
            }
        }
    }
    return out;
}

StrengthMatrix aggregate_strengths(const WeightedGraphEnsemble& ensemble,
                                   const std::vector<AteEstimate>& estimates,
                                   const VarTable& data, int n_factors, int n_labels) {
    StrengthMatrix m;
    m.n_factors = n_factors;
    m.n_labels = n_labels;
    m.psi.assign(static_cast<std::size_t>(n_factors) * n_labels, 0.0);
    for (const auto& est : estimates) {
        if (est.graph_index < 0 || est.graph_index >= ensemble.q()) continue;
        const int f = data.source_index[est.treatment];
        const int l = data.source_index[est.outcome];
        const double w = ensemble.graphs[est.graph_index].weight;
        m.at(f, l) += w * est.value;
        m.provenance[{f, l}].push_back({est.graph_index, est.value});
    }
    return m;
}

void StrengthMatrix::save(const std::string& path) const {
    nlohmann::ordered_json j;
    j["n_factors"] = n_factors;
    j["n_labels"] = n_labels;
    j["psi"] = psi;
    j["provenance"] = nlohmann::ordered_json::array();
    for (const auto& [cell, contribs] : provenance) {
        nlohmann::ordered_json cj;
        cj["factor"] = cell.first;
        cj["label"] = cell.second;
        cj["contributions"] = nlohmann::ordered_json::array();
        for (const auto& [q, v] : contribs) {
            cj["contributions"].push_back({{"graph", q}, {"value", v}});
        }
        j["provenance"].push_back(cj);
    }
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write strength matrix: " + path);
    out << j.dump(2) << "\n";
}

StrengthMatrix StrengthMatrix::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open strength matrix: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid strength matrix " + path + ": " + e.what());
    }
    StrengthMatrix m;
    m.n_factors = j.at("n_factors").get<int>();
    m.n_labels = j.at("n_labels").get<int>();
    m.psi = j.at("psi").get<std::vector<double>>();
    for (const auto& cj : j.value("provenance", nlohmann::json::array())) {
        auto& cell = m.provenance[{cj.at("factor").get<int>(), cj.at("label").get<int>()}];
        for (const auto& kj : cj.at("contributions")) {
            cell.push_back({kj.at("graph").get<int>(), kj.at("value").get<double>()});
        }
    }
    return m;
}

void StrengthMatrix::save_tsv(const FactorSpace& fs, const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write strength table: " + path);
    out << "factor\tcharge\tpsi\tsupport\n";
    for (int f = 0; f < n_factors; ++f) {
        for (int l = 0; l < n_labels; ++l) {
            auto it = provenance.find({f, l});
            const std::size_t support = it == provenance.end() ? 0 : it->second.size();
            out << fs.factors[f].canonical << '\t' << fs.labels[l] << '\t' << at(f, l) << '\t'
                << support << '\n';
        }
    }
}

}  // namespace ljp
