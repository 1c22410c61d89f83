#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rankope/core.hpp"
#include "rankope/rng.hpp"

namespace rankope {

class RngStream;

// Per-action score s(x,a). Two backing forms:
//  - linear:  theta_x.x + theta_a[a] + theta_xa[a] + x.bilinear[:,a]
//    (bilinear may be empty; the plain three-term form is the common case)
//  - tabular: table(row(x), a) for contexts drawn from a finite feature table
struct ScoreFunction {
    Eigen::VectorXd theta_x;
    Eigen::VectorXd theta_a;
    Eigen::VectorXd theta_xa;
    Eigen::MatrixXd bilinear;        // d_x x |A|, empty means zero
    Eigen::MatrixXd table;           // rows x |A|, empty means linear form
    Eigen::MatrixXd table_features;  // rows x d, resolves contexts for `table`

    bool tabular() const { return table.size() > 0; }
};

double score(const ScoreFunction& fn, const ContextVector& x, ActionId a);
Eigen::VectorXd score_all(const ScoreFunction& fn, const ContextVector& x, int action_count);

enum class PolicyKind {
    PlackettLuce,
    GreedyDeterministic,
    EpsilonGreedy,
    ThresholdMixed,  // Plackett-Luce when x(0) > alpha, greedy otherwise
    Mixture,         // per-position blend of epsilon-greedy and softmax factors
    Tabular,
};

std::string to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& name);

// Explicit distribution over rankings for each context row.
struct TabularPolicyTable {
    Eigen::MatrixXd context_features;            // rows x d
    std::vector<std::vector<Ranking>> rankings;  // per row, probability > 0 entries only
    std::vector<std::vector<double>> probabilities;

    int resolve(const ContextVector& x) const;
};

struct PolicySpec {
    PolicyKind kind = PolicyKind::PlackettLuce;
    int action_count = 0;
    int ranking_length = 0;
    ScoreFunction score;
    double epsilon = 0.0;        // EpsilonGreedy / Mixture
    double alpha = std::numeric_limits<double>::infinity();  // ThresholdMixed
    double mixture_weight = 0.5;  // Mixture: weight on the epsilon-greedy factor
    TabularPolicyTable table;     // Tabular only
};

struct PolicyPair {
    PolicySpec logging;
    PolicySpec target;
};

// Caches the per-context state (scores, greedy order, resolved branch) so the
// probability queries below are cheap inside enumeration loops.
class PreparedPolicy {
public:
    PreparedPolicy(const PolicySpec& policy, const ContextVector& x);

    double ranking_probability(const Ranking& ranking) const;
    double prefix_probability(std::span<const ActionId> prefix) const;
    Ranking sample(RngStream& rng) const;

    int action_count() const { return policy_->action_count; }
    int ranking_length() const { return policy_->ranking_length; }

private:
    enum class Branch { PlackettLuce, Greedy, EpsilonGreedy, Mixture, Tabular };

    double sequential_factor(ActionId a, std::span<const ActionId> prefix) const;
    ActionId greedy_next(const std::vector<bool>& used) const;

    const PolicySpec* policy_;
    const ContextVector* context_;
    Branch branch_;
    Eigen::VectorXd scores_;
    Eigen::VectorXd exp_scores_;  // exp(score - max), PL/Mixture branches
    double exp_total_ = 0.0;
    std::vector<int> greedy_order_;  // actions sorted by descending score, ties to lowest id
    int table_row_ = -1;
};

// Exact probability of emitting `ranking` for context x.
double ranking_probability(const PolicySpec& policy, const ContextVector& x, const Ranking& ranking);

Ranking sample_ranking(const PolicySpec& policy, const ContextVector& x, RngStream& rng);

// Controls for marginal queries that need the ranking space. Beyond `cap`
// the query either falls back to Monte Carlo (when allowed) or throws.
struct EnumerationOptions {
    long cap = kEnumerationCap;
    bool allow_monte_carlo = false;
    int mc_samples = 100000;
    std::uint64_t mc_seed = 0;
};

// P(action a shown at position k), k 1-based.
double position_marginal(const PolicySpec& policy, const ContextVector& x, ActionId a, int k,
                         const EnumerationOptions& options = {}, bool* approximate = nullptr);

// All position marginals at once: entry (a, k-1) = P(a shown at position k).
Eigen::MatrixXd position_marginal_table(const PolicySpec& policy, const ContextVector& x,
                                        const EnumerationOptions& options = {},
                                        bool* approximate = nullptr);

// Internal-friendly overload reusing a shared enumeration of the ranking space.
Eigen::MatrixXd position_marginal_table(const PolicySpec& policy, const ContextVector& x,
                                        const std::vector<Ranking>& rankings);

// Total probability of rankings beginning with `prefix` (duplicate-free, length <= K).
double prefix_marginal(const PolicySpec& policy, const ContextVector& x,
                       std::span<const ActionId> prefix);

// Positive-probability support; its complement in the K-permutation space is
// the unsupported set that drives the ranking-wise estimator's bias.
std::vector<std::pair<Ranking, double>> support_set(const PolicySpec& policy,
                                                    const ContextVector& x,
                                                    long cap = kEnumerationCap);

std::string policy_to_json(const PolicySpec& policy);
PolicySpec policy_from_json(const std::string& text);

}  // namespace rankope
