#include "rankope/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

namespace rankope {

using nlohmann::json;

std::string to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::Ips: return "ips";
        case EstimatorKind::Iips: return "iips";
        case EstimatorKind::Rips: return "rips";
        case EstimatorKind::Cips: return "cips";
        case EstimatorKind::Cdr: return "cdr";
    }
    return "unknown";
}

EstimatorKind estimator_kind_from_string(const std::string& name) {
    if (name == "ips") return EstimatorKind::Ips;
    if (name == "iips") return EstimatorKind::Iips;
    if (name == "rips") return EstimatorKind::Rips;
    if (name == "cips") return EstimatorKind::Cips;
    if (name == "cdr") return EstimatorKind::Cdr;
    throw std::invalid_argument("unknown estimator: " + name);
}

std::string EstimatorSpec::display_name() const {
    return name.empty() ? to_string(kind) : name;
}

std::string EstimateReport::to_json() const {
    json j;
    j["estimator"] = estimator;
    j["provider"] = provider;
    j["estimate"] = estimate;
    j["n"] = n_used;
    j["skipped_terms"] = skipped_terms;
    j["weight_max"] = weight_max;
    j["weight_mean"] = weight_mean;
    j["approximate"] = approximate;
    return j.dump();
}

double on_policy_mean(const LoggedDataset& data) {
    if (data.records.empty()) throw std::invalid_argument("on_policy_mean: empty dataset");
    double total = 0.0;
    for (const auto& record : data.records) {
        for (double r : record.observed_rewards) total += r;
    }
    return total / static_cast<double>(data.size());
}

namespace {

struct Accumulator {
    double total = 0.0;           // sum of per-record estimates
    long skipped = 0;
    double weight_max = 0.0;
    double weight_sum = 0.0;
    long weight_terms = 0;
    double sn_weighted = 0.0;     // self-normalisation accumulators
    double sn_weight_mass = 0.0;
    long sn_clicks = 0;

    void saw_weight(double w) {
        weight_max = std::max(weight_max, w);
        weight_sum += w;
        ++weight_terms;
    }
};

// Click-weight lookup with the provider-dependent zero-denominator rule.
// Returns false when the term must be skipped as zero.
bool click_weight(double numerator, double denominator, bool exact_provider,
                  const WeightPolicy& policy, const CipsOptions& options, double* out) {
    double den = denominator;
    if (exact_provider) {
        if (den <= 0.0) return false;
    } else {
        den = std::max(den, policy.denominator_floor);
    }
    double w = numerator / den;
    if (options.clip) w = std::min(w, *options.clip);
    *out = w;
    return true;
}

}  // namespace

std::vector<EstimateReport> evaluate_estimators(const LoggedDataset& data, const PolicyPair& pair,
                                                const std::vector<EstimatorSpec>& specs) {
    if (data.records.empty()) {
        throw std::invalid_argument("evaluate_estimators: empty dataset");
    }
    const int k_len = data.ranking_length;

    bool needs_ranking_prob = false;
    bool needs_position_marginals = false;
    bool needs_prefix = false;
    std::vector<const ClickProbProvider*> providers;  // unique, order of first use
    EnumerationOptions position_options;
    for (const auto& spec : specs) {
        switch (spec.kind) {
            case EstimatorKind::Ips: needs_ranking_prob = true; break;
            case EstimatorKind::Iips:
                needs_position_marginals = true;
                position_options = spec.enumeration;
                break;
            case EstimatorKind::Rips: needs_prefix = true; break;
            case EstimatorKind::Cips:
            case EstimatorKind::Cdr:
                if (spec.clicks == nullptr) {
                    throw std::invalid_argument(spec.display_name() +
                                                ": click probability provider required");
                }
                if (spec.kind == EstimatorKind::Cdr && spec.reward == nullptr) {
                    throw std::invalid_argument("cdr: reward predictor required");
                }
                if (std::find(providers.begin(), providers.end(), spec.clicks.get()) ==
                    providers.end()) {
                    providers.push_back(spec.clicks.get());
                }
                break;
        }
    }

    std::vector<Accumulator> acc(specs.size());
    bool position_marginals_approx = false;

    for (const auto& record : data.records) {
        const ContextVector& x = record.context;
        const Ranking& ranking = record.ranking;

        double reward_sum = 0.0;
        for (double r : record.observed_rewards) reward_sum += r;

        double target_ranking_prob = 0.0;
        double logging_ranking_prob = 0.0;
        if (needs_ranking_prob) {
            target_ranking_prob = ranking_probability(pair.target, x, ranking);
            logging_ranking_prob = ranking_probability(pair.logging, x, ranking);
        }

        Eigen::MatrixXd target_positions, logging_positions;
        if (needs_position_marginals) {
            bool approx_t = false, approx_l = false;
            target_positions = position_marginal_table(pair.target, x, position_options, &approx_t);
            logging_positions =
                position_marginal_table(pair.logging, x, position_options, &approx_l);
            position_marginals_approx |= approx_t || approx_l;
        }

        std::vector<double> target_prefix, logging_prefix;
        if (needs_prefix) {
            target_prefix.resize(static_cast<std::size_t>(k_len));
            logging_prefix.resize(static_cast<std::size_t>(k_len));
            const PreparedPolicy target(pair.target, x), logging(pair.logging, x);
            for (int k = 1; k <= k_len; ++k) {
                const std::span<const ActionId> prefix(ranking.slots.data(),
                                                       static_cast<std::size_t>(k));
                target_prefix[static_cast<std::size_t>(k - 1)] = target.prefix_probability(prefix);
                logging_prefix[static_cast<std::size_t>(k - 1)] = logging.prefix_probability(prefix);
            }
        }

        // Provider marginals under both policies, one evaluation per provider.
        std::unordered_map<const ClickProbProvider*, std::pair<Eigen::VectorXd, Eigen::VectorXd>>
            marginals;
        for (const ClickProbProvider* provider : providers) {
            marginals.emplace(provider, std::make_pair(provider->marginals(x, pair.target),
                                                       provider->marginals(x, pair.logging)));
        }

        for (std::size_t s = 0; s < specs.size(); ++s) {
            const EstimatorSpec& spec = specs[s];
            Accumulator& a = acc[s];
            switch (spec.kind) {
                case EstimatorKind::Ips: {
                    if (logging_ranking_prob <= 0.0) {
                        ++a.skipped;
                        break;
                    }
                    const double w = target_ranking_prob / logging_ranking_prob;
                    a.saw_weight(w);
                    a.total += w * reward_sum;
                    break;
                }
                case EstimatorKind::Iips: {
                    for (int k = 0; k < k_len; ++k) {
                        if (!record.clicks[static_cast<std::size_t>(k)]) continue;
                        const ActionId at_k = ranking.slots[static_cast<std::size_t>(k)];
                        const double den = logging_positions(at_k, k);
                        if (den <= 0.0) {
                            ++a.skipped;
                            continue;
                        }
                        const double w = target_positions(at_k, k) / den;
                        a.saw_weight(w);
                        a.total += w * record.observed_rewards[static_cast<std::size_t>(k)];
                    }
                    break;
                }
                case EstimatorKind::Rips: {
                    for (int k = 0; k < k_len; ++k) {
                        if (!record.clicks[static_cast<std::size_t>(k)]) continue;
                        const double den = logging_prefix[static_cast<std::size_t>(k)];
                        if (den <= 0.0) {
                            ++a.skipped;
                            continue;
                        }
                        const double w = target_prefix[static_cast<std::size_t>(k)] / den;
                        a.saw_weight(w);
                        a.total += w * record.observed_rewards[static_cast<std::size_t>(k)];
                    }
                    break;
                }
                case EstimatorKind::Cips:
                case EstimatorKind::Cdr: {
                    const auto& [target_marginal, logging_marginal] =
                        marginals.at(spec.clicks.get());
                    const bool exact_provider = spec.clicks->exact();
                    double record_total = 0.0;
                    // Only clicked actions carry observable reward; the sum
                    // over the full action set reduces to the clicked slots.
                    for (int k = 0; k < k_len; ++k) {
                        if (!record.clicks[static_cast<std::size_t>(k)]) continue;
                        const ActionId clicked = ranking.slots[static_cast<std::size_t>(k)];
                        double w = 0.0;
                        if (!click_weight(target_marginal(clicked), logging_marginal(clicked),
                                          exact_provider, spec.weights, spec.options, &w)) {
                            ++a.skipped;
                            continue;
                        }
                        a.saw_weight(w);
                        record_total += w * record.observed_rewards[static_cast<std::size_t>(k)];
                        a.sn_weight_mass += w;
                        ++a.sn_clicks;
                    }
                    a.sn_weighted += record_total;
                    if (spec.kind == EstimatorKind::Cdr) {
                        for (ActionId act = 0; act < data.action_count; ++act) {
                            const double model_reward = spec.reward->predict(x, act);
                            record_total += target_marginal(act) * model_reward;
                            const double ranked_click = spec.clicks->per_ranking(x, act, ranking);
                            if (ranked_click == 0.0) continue;
                            double w = 0.0;
                            if (!click_weight(target_marginal(act), logging_marginal(act),
                                              exact_provider, spec.weights, spec.options, &w)) {
                                ++a.skipped;
                                continue;
                            }
                            record_total -= w * ranked_click * model_reward;
                        }
                    }
                    a.total += record_total;
                    break;
                }
            }
        }
    }

    const double n = static_cast<double>(data.size());
    std::vector<EstimateReport> reports;
    reports.reserve(specs.size());
    for (std::size_t s = 0; s < specs.size(); ++s) {
        const EstimatorSpec& spec = specs[s];
        const Accumulator& a = acc[s];
        EstimateReport report;
        report.estimator = spec.display_name();
        report.n_used = static_cast<int>(data.size());
        report.skipped_terms = a.skipped;
        report.weight_max = a.weight_max;
        report.weight_mean = a.weight_terms > 0 ? a.weight_sum / a.weight_terms : 0.0;
        if (spec.kind == EstimatorKind::Cips && spec.options.self_normalized) {
            report.estimate = a.sn_weight_mass > 0.0
                                  ? a.sn_weighted / a.sn_weight_mass * (a.sn_clicks / n)
                                  : 0.0;
        } else {
            report.estimate = a.total / n;
        }
        if (spec.clicks != nullptr) {
            report.provider = spec.clicks->kind();
            report.approximate = spec.clicks->approximate();
        }
        if (spec.kind == EstimatorKind::Iips) {
            report.approximate = position_marginals_approx;
        }
        if (!std::isfinite(report.estimate)) {
            throw std::runtime_error(report.estimator + ": non-finite estimate");
        }
        reports.push_back(std::move(report));
    }
    return reports;
}

namespace {

EstimateReport single(const LoggedDataset& data, const PolicyPair& pair, EstimatorSpec spec) {
    return evaluate_estimators(data, pair, {std::move(spec)}).front();
}

}  // namespace

EstimateReport estimate_ips(const LoggedDataset& data, const PolicyPair& pair) {
    EstimatorSpec spec;
    spec.kind = EstimatorKind::Ips;
    return single(data, pair, std::move(spec));
}

EstimateReport estimate_iips(const LoggedDataset& data, const PolicyPair& pair,
                             const EnumerationOptions& options) {
    EstimatorSpec spec;
    spec.kind = EstimatorKind::Iips;
    spec.enumeration = options;
    return single(data, pair, std::move(spec));
}

EstimateReport estimate_rips(const LoggedDataset& data, const PolicyPair& pair) {
    EstimatorSpec spec;
    spec.kind = EstimatorKind::Rips;
    return single(data, pair, std::move(spec));
}

EstimateReport estimate_cips(const LoggedDataset& data, const PolicyPair& pair,
                             const ClickProbProvider& clicks, const WeightPolicy& weights,
                             const CipsOptions& options, const EnumerationOptions& enumeration) {
    EstimatorSpec spec;
    spec.kind = EstimatorKind::Cips;
    spec.clicks = std::shared_ptr<const ClickProbProvider>(&clicks, [](const ClickProbProvider*) {});
    spec.weights = weights;
    spec.options = options;
    spec.enumeration = enumeration;
    return single(data, pair, std::move(spec));
}

EstimateReport estimate_cdr(const LoggedDataset& data, const PolicyPair& pair,
                            const ClickProbProvider& clicks, const RewardPredictor& reward,
                            const WeightPolicy& weights, const EnumerationOptions& enumeration) {
    EstimatorSpec spec;
    spec.kind = EstimatorKind::Cdr;
    spec.clicks = std::shared_ptr<const ClickProbProvider>(&clicks, [](const ClickProbProvider*) {});
    spec.reward = std::shared_ptr<const RewardPredictor>(&reward, [](const RewardPredictor*) {});
    spec.weights = weights;
    spec.enumeration = enumeration;
    return single(data, pair, std::move(spec));
}

}  // namespace rankope
