#include "rankope/policies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace rankope {

using nlohmann::json;

namespace {

int resolve_row(const Eigen::MatrixXd& features, const ContextVector& x, const char* what) {
    if (x.row_id >= 0 && x.row_id < features.rows()) return x.row_id;
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
        if (features.cols() == x.values.size() && features.row(r).transpose() == x.values) {
            return static_cast<int>(r);
        }
    }
    throw std::runtime_error(std::string(what) + ": context does not match any table row");
}

}  // namespace

double score(const ScoreFunction& fn, const ContextVector& x, ActionId a) {
    if (fn.tabular()) {
        const int row = resolve_row(fn.table_features, x, "score table");
        return fn.table(row, a);
    }
    if (fn.theta_x.size() != x.values.size()) {
        throw std::invalid_argument("score: context dimension mismatch");
    }
    if (a < 0 || a >= fn.theta_a.size()) {
        throw std::invalid_argument("score: action index out of range");
    }
    double s = fn.theta_x.dot(x.values) + fn.theta_a(a) + fn.theta_xa(a);
    if (fn.bilinear.size() > 0) s += x.values.dot(fn.bilinear.col(a));
    return s;
}

Eigen::VectorXd score_all(const ScoreFunction& fn, const ContextVector& x, int action_count) {
    if (fn.tabular()) {
        const int row = resolve_row(fn.table_features, x, "score table");
        return fn.table.row(row).transpose();
    }
    Eigen::VectorXd s = fn.theta_a + fn.theta_xa;
    s.array() += fn.theta_x.dot(x.values);
    if (fn.bilinear.size() > 0) s += fn.bilinear.transpose() * x.values;
    if (s.size() != action_count) {
        throw std::invalid_argument("score: action-count mismatch");
    }
    return s;
}

std::string to_string(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::PlackettLuce: return "plackett_luce";
        case PolicyKind::GreedyDeterministic: return "greedy_deterministic";
        case PolicyKind::EpsilonGreedy: return "epsilon_greedy";
        case PolicyKind::ThresholdMixed: return "threshold_mixed";
        case PolicyKind::Mixture: return "mixture";
        case PolicyKind::Tabular: return "tabular";
    }
    return "unknown";
}

PolicyKind policy_kind_from_string(const std::string& name) {
    if (name == "plackett_luce") return PolicyKind::PlackettLuce;
    if (name == "greedy_deterministic") return PolicyKind::GreedyDeterministic;
    if (name == "epsilon_greedy") return PolicyKind::EpsilonGreedy;
    if (name == "threshold_mixed") return PolicyKind::ThresholdMixed;
    if (name == "mixture") return PolicyKind::Mixture;
    if (name == "tabular") return PolicyKind::Tabular;
    throw std::invalid_argument("unknown policy kind: " + name);
}

int TabularPolicyTable::resolve(const ContextVector& x) const {
    return resolve_row(context_features, x, "tabular policy");
}

PreparedPolicy::PreparedPolicy(const PolicySpec& policy, const ContextVector& x)
    : policy_(&policy), context_(&x) {
    switch (policy.kind) {
        case PolicyKind::PlackettLuce: branch_ = Branch::PlackettLuce; break;
        case PolicyKind::GreedyDeterministic: branch_ = Branch::Greedy; break;
        case PolicyKind::EpsilonGreedy: branch_ = Branch::EpsilonGreedy; break;
        case PolicyKind::Mixture: branch_ = Branch::Mixture; break;
        case PolicyKind::Tabular: branch_ = Branch::Tabular; break;
        case PolicyKind::ThresholdMixed:
            branch_ = x.values(0) > policy.alpha ? Branch::PlackettLuce : Branch::Greedy;
            break;
    }
    if (branch_ == Branch::Tabular) {
        table_row_ = policy.table.resolve(x);
        return;
    }
    scores_ = score_all(policy.score, x, policy.action_count);
    if (branch_ != Branch::Greedy) {
        exp_scores_ = (scores_.array() - scores_.maxCoeff()).exp();
        exp_total_ = exp_scores_.sum();
    }
    greedy_order_.resize(static_cast<std::size_t>(policy.action_count));
    std::iota(greedy_order_.begin(), greedy_order_.end(), 0);
    std::stable_sort(greedy_order_.begin(), greedy_order_.end(),
                     [&](int lhs, int rhs) { return scores_(lhs) > scores_(rhs); });
}

ActionId PreparedPolicy::greedy_next(const std::vector<bool>& used) const {
    for (int a : greedy_order_) {
        if (!used[static_cast<std::size_t>(a)]) return a;
    }
    throw std::logic_error("greedy_next: no action left");
}

double PreparedPolicy::ranking_probability(const Ranking& ranking) const {
    if (branch_ == Branch::Tabular) {
        const auto& rankings = policy_->table.rankings[static_cast<std::size_t>(table_row_)];
        const auto& probs = policy_->table.probabilities[static_cast<std::size_t>(table_row_)];
        for (std::size_t i = 0; i < rankings.size(); ++i) {
            if (rankings[i] == ranking) return probs[i];
        }
        return 0.0;
    }
    return prefix_probability(std::span<const ActionId>(ranking.slots));
}

double PreparedPolicy::prefix_probability(std::span<const ActionId> prefix) const {
    if (branch_ == Branch::Tabular) {
        const auto& rankings = policy_->table.rankings[static_cast<std::size_t>(table_row_)];
        const auto& probs = policy_->table.probabilities[static_cast<std::size_t>(table_row_)];
        double total = 0.0;
        for (std::size_t i = 0; i < rankings.size(); ++i) {
            if (std::equal(prefix.begin(), prefix.end(), rankings[i].slots.begin())) {
                total += probs[i];
            }
        }
        return total;
    }
    // Sequential kinds factor over positions, so a prefix's mass is the
    // product of its per-position factors.
    const int n = policy_->action_count;
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    double remaining_exp = exp_total_;
    double prob = 1.0;
    int placed = 0;
    for (ActionId a : prefix) {
        double factor = 0.0;
        switch (branch_) {
            case Branch::PlackettLuce:
                factor = exp_scores_(a) / remaining_exp;
                break;
            case Branch::Greedy:
                factor = (a == greedy_next(used)) ? 1.0 : 0.0;
                break;
            case Branch::EpsilonGreedy: {
                const double uniform_part = policy_->epsilon / static_cast<double>(n - placed);
                factor = (a == greedy_next(used) ? 1.0 - policy_->epsilon : 0.0) + uniform_part;
                break;
            }
            case Branch::Mixture: {
                const double uniform_part = policy_->epsilon / static_cast<double>(n - placed);
                const double eps_factor =
                    (a == greedy_next(used) ? 1.0 - policy_->epsilon : 0.0) + uniform_part;
                const double pl_factor = exp_scores_(a) / remaining_exp;
                factor = policy_->mixture_weight * eps_factor +
                         (1.0 - policy_->mixture_weight) * pl_factor;
                break;
            }
            case Branch::Tabular: break;  // handled above
        }
        prob *= factor;
        if (prob == 0.0) return 0.0;
        used[static_cast<std::size_t>(a)] = true;
        if (branch_ != Branch::Greedy) remaining_exp -= exp_scores_(a);
        ++placed;
    }
    return prob;
}

Ranking PreparedPolicy::sample(RngStream& rng) const {
    const int n = policy_->action_count;
    const int k = policy_->ranking_length;
    if (branch_ == Branch::Tabular) {
        const auto& rankings = policy_->table.rankings[static_cast<std::size_t>(table_row_)];
        const auto& probs = policy_->table.probabilities[static_cast<std::size_t>(table_row_)];
        double u = rng.uniform();
        for (std::size_t i = 0; i < rankings.size(); ++i) {
            u -= probs[i];
            if (u < 0.0) return rankings[i];
        }
        return rankings.back();
    }
    Ranking out;
    out.slots.reserve(static_cast<std::size_t>(k));
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    double remaining_exp = exp_total_;
    auto draw_softmax = [&]() {
        double u = rng.uniform() * remaining_exp;
        for (ActionId a = 0; a < n; ++a) {
            if (used[static_cast<std::size_t>(a)]) continue;
            u -= exp_scores_(a);
            if (u < 0.0) return a;
        }
        for (ActionId a = n - 1; a >= 0; --a) {
            if (!used[static_cast<std::size_t>(a)]) return a;
        }
        throw std::logic_error("softmax draw: no action left");
    };
    auto draw_uniform_remaining = [&](int remaining) {
        int idx = rng.uniform_int(remaining);
        for (ActionId a = 0; a < n; ++a) {
            if (used[static_cast<std::size_t>(a)]) continue;
            if (idx-- == 0) return a;
        }
        throw std::logic_error("uniform draw: no action left");
    };
    for (int pos = 0; pos < k; ++pos) {
        ActionId a = -1;
        switch (branch_) {
            case Branch::PlackettLuce:
                a = draw_softmax();
                break;
            case Branch::Greedy:
                a = greedy_next(used);
                break;
            case Branch::EpsilonGreedy:
                a = rng.uniform() < 1.0 - policy_->epsilon ? greedy_next(used)
                                                           : draw_uniform_remaining(n - pos);
                break;
            case Branch::Mixture:
                if (rng.uniform() < policy_->mixture_weight) {
                    a = rng.uniform() < 1.0 - policy_->epsilon ? greedy_next(used)
                                                               : draw_uniform_remaining(n - pos);
                } else {
                    a = draw_softmax();
                }
                break;
            case Branch::Tabular: break;
        }
        out.slots.push_back(a);
        used[static_cast<std::size_t>(a)] = true;
        remaining_exp -= branch_ == Branch::Greedy ? 0.0 : exp_scores_(a);
    }
    return out;
}

double ranking_probability(const PolicySpec& policy, const ContextVector& x, const Ranking& ranking) {
    require_valid_ranking(ranking, policy.action_count, policy.ranking_length);
    return PreparedPolicy(policy, x).ranking_probability(ranking);
}

Ranking sample_ranking(const PolicySpec& policy, const ContextVector& x, RngStream& rng) {
    return PreparedPolicy(policy, x).sample(rng);
}

namespace {

void validate_prefix(const PolicySpec& policy, std::span<const ActionId> prefix) {
    if (static_cast<int>(prefix.size()) > policy.ranking_length) {
        throw std::invalid_argument("invalid prefix: longer than ranking length");
    }
    std::vector<bool> seen(static_cast<std::size_t>(policy.action_count), false);
    for (ActionId a : prefix) {
        if (a < 0 || a >= policy.action_count) {
            throw std::invalid_argument("invalid prefix: action out of range");
        }
        if (seen[static_cast<std::size_t>(a)]) {
            throw std::invalid_argument("invalid prefix: duplicate action");
        }
        seen[static_cast<std::size_t>(a)] = true;
    }
}

}  // namespace

double prefix_marginal(const PolicySpec& policy, const ContextVector& x,
                       std::span<const ActionId> prefix) {
    validate_prefix(policy, prefix);
    if (prefix.empty()) return 1.0;
    return PreparedPolicy(policy, x).prefix_probability(prefix);
}

Eigen::MatrixXd position_marginal_table(const PolicySpec& policy, const ContextVector& x,
                                        const std::vector<Ranking>& rankings) {
    Eigen::MatrixXd table = Eigen::MatrixXd::Zero(policy.action_count, policy.ranking_length);
    const PreparedPolicy prepared(policy, x);
    if (policy.kind == PolicyKind::Tabular) {
        const int row = policy.table.resolve(x);
        const auto& listed = policy.table.rankings[static_cast<std::size_t>(row)];
        const auto& probs = policy.table.probabilities[static_cast<std::size_t>(row)];
        for (std::size_t i = 0; i < listed.size(); ++i) {
            for (int k = 0; k < listed[i].length(); ++k) {
                table(listed[i].slots[static_cast<std::size_t>(k)], k) += probs[i];
            }
        }
        return table;
    }
    for (const Ranking& ranking : rankings) {
        const double p = prepared.ranking_probability(ranking);
        if (p == 0.0) continue;
        for (int k = 0; k < ranking.length(); ++k) {
            table(ranking.slots[static_cast<std::size_t>(k)], k) += p;
        }
    }
    return table;
}

Eigen::MatrixXd position_marginal_table(const PolicySpec& policy, const ContextVector& x,
                                        const EnumerationOptions& options, bool* approximate) {
    if (approximate != nullptr) *approximate = false;
    const long total = permutation_count(policy.action_count, policy.ranking_length);
    if (total <= options.cap || policy.kind == PolicyKind::Tabular) {
        std::vector<Ranking> rankings;
        if (policy.kind != PolicyKind::Tabular) {
            rankings = enumerate_rankings(policy.action_count, policy.ranking_length, options.cap);
        }
        return position_marginal_table(policy, x, rankings);
    }
    if (!options.allow_monte_carlo) {
        throw std::runtime_error("position marginals: ranking space " + std::to_string(total) +
                                 " exceeds cap " + std::to_string(options.cap) +
                                 " and Monte Carlo fallback is disabled");
    }
    if (approximate != nullptr) *approximate = true;
    Eigen::MatrixXd table = Eigen::MatrixXd::Zero(policy.action_count, policy.ranking_length);
    RngStream rng(options.mc_seed);
    const PreparedPolicy prepared(policy, x);
    for (int s = 0; s < options.mc_samples; ++s) {
        const Ranking ranking = prepared.sample(rng);
        for (int k = 0; k < ranking.length(); ++k) {
            table(ranking.slots[static_cast<std::size_t>(k)], k) += 1.0;
        }
    }
    table /= static_cast<double>(options.mc_samples);
    return table;
}

double position_marginal(const PolicySpec& policy, const ContextVector& x, ActionId a, int k,
                         const EnumerationOptions& options, bool* approximate) {
    if (k < 1 || k > policy.ranking_length) {
        throw std::invalid_argument("position_marginal: position out of range");
    }
    return position_marginal_table(policy, x, options, approximate)(a, k - 1);
}

std::vector<std::pair<Ranking, double>> support_set(const PolicySpec& policy,
                                                    const ContextVector& x, long cap) {
    std::vector<std::pair<Ranking, double>> out;
    const PreparedPolicy prepared(policy, x);
    for (const Ranking& ranking :
         enumerate_rankings(policy.action_count, policy.ranking_length, cap)) {
        const double p = prepared.ranking_probability(ranking);
        if (p > 0.0) out.emplace_back(ranking, p);
    }
    return out;
}

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

Eigen::VectorXd vector_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return m;
}

json alpha_to_json(double alpha) {
    if (std::isinf(alpha)) return alpha > 0 ? "inf" : "-inf";
    return alpha;
}

double alpha_from_json(const json& j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw std::invalid_argument("alpha: expected number, \"inf\" or \"-inf\", got " + s);
    }
    return j.get<double>();
}

}  // namespace

std::string policy_to_json(const PolicySpec& policy) {
    json j;
    j["kind"] = to_string(policy.kind);
    j["action_count"] = policy.action_count;
    j["K"] = policy.ranking_length;
    if (policy.kind == PolicyKind::Tabular) {
        json table = json::array();
        for (std::size_t r = 0; r < policy.table.rankings.size(); ++r) {
            json entry;
            entry["context_id"] = r;
            entry["context"] = vector_to_json(
                policy.table.context_features.row(static_cast<Eigen::Index>(r)).transpose());
            json rankings = json::array();
            for (const auto& ranking : policy.table.rankings[r]) rankings.push_back(ranking.slots);
            entry["rankings"] = rankings;
            entry["probs"] = policy.table.probabilities[r];
            table.push_back(entry);
        }
        j["table"] = table;
        return j.dump(2);
    }
    if (policy.kind == PolicyKind::EpsilonGreedy || policy.kind == PolicyKind::Mixture) {
        j["epsilon"] = policy.epsilon;
    }
    if (policy.kind == PolicyKind::ThresholdMixed) j["alpha"] = alpha_to_json(policy.alpha);
    if (policy.kind == PolicyKind::Mixture) j["mixture_weight"] = policy.mixture_weight;
    if (policy.score.tabular()) {
        j["score_table"] = matrix_to_json(policy.score.table);
        j["score_rows"] = matrix_to_json(policy.score.table_features);
    } else {
        j["theta_x"] = vector_to_json(policy.score.theta_x);
        j["theta_a"] = vector_to_json(policy.score.theta_a);
        j["theta_xa"] = vector_to_json(policy.score.theta_xa);
        if (policy.score.bilinear.size() > 0) j["theta_bilinear"] = matrix_to_json(policy.score.bilinear);
    }
    return j.dump(2);
}

PolicySpec policy_from_json(const std::string& text) {
    const json j = json::parse(text);
    PolicySpec policy;
    policy.kind = policy_kind_from_string(j.at("kind").get<std::string>());
    policy.action_count = j.at("action_count").get<int>();
    policy.ranking_length = j.at("K").get<int>();
    if (policy.kind == PolicyKind::Tabular) {
        const auto& table = j.at("table");
        policy.table.context_features.resize(static_cast<Eigen::Index>(table.size()),
                                             table.empty() ? 0
                                                           : static_cast<Eigen::Index>(
                                                                 table[0].at("context").size()));
        for (std::size_t r = 0; r < table.size(); ++r) {
            policy.table.context_features.row(static_cast<Eigen::Index>(r)) =
                vector_from_json(table[r].at("context")).transpose();
            std::vector<Ranking> rankings;
            for (const auto& slots : table[r].at("rankings")) {
                rankings.push_back(Ranking{slots.get<std::vector<int>>()});
            }
            policy.table.rankings.push_back(std::move(rankings));
            policy.table.probabilities.push_back(table[r].at("probs").get<std::vector<double>>());
        }
        return policy;
    }
    if (j.contains("epsilon")) policy.epsilon = j.at("epsilon").get<double>();
    if (j.contains("alpha")) policy.alpha = alpha_from_json(j.at("alpha"));
    if (j.contains("mixture_weight")) policy.mixture_weight = j.at("mixture_weight").get<double>();
    if (j.contains("score_table")) {
        policy.score.table = matrix_from_json(j.at("score_table"));
        policy.score.table_features = matrix_from_json(j.at("score_rows"));
    } else {
        policy.score.theta_x = vector_from_json(j.at("theta_x"));
        policy.score.theta_a = vector_from_json(j.at("theta_a"));
        policy.score.theta_xa = vector_from_json(j.at("theta_xa"));
        if (j.contains("theta_bilinear")) policy.score.bilinear = matrix_from_json(j.at("theta_bilinear"));
    }
    return policy;
}

}  // namespace rankope
