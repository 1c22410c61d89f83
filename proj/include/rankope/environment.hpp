#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rankope/core.hpp"
#include "rankope/policies.hpp"
#include "rankope/rng.hpp"

namespace rankope {

// Ground-truth world: expected click probability and expected potential reward
// for every (context, ranking, position). Source of all oracle quantities.
class EnvironmentModel {
public:
    virtual ~EnvironmentModel() = default;

    virtual int context_dim() const = 0;
    virtual int action_count() const = 0;
    virtual int ranking_length() const = 0;

    // q_c(x, A, k) and q_r(x, A, k); k is 1-based.
    virtual double expected_click(const ContextVector& x, const Ranking& ranking, int k) const = 0;
    virtual double expected_potential_reward(const ContextVector& x, const Ranking& ranking,
                                             int k) const = 0;

    // Action-level expected potential reward q_r(x, a). Exact whenever
    // reward_independent() holds; otherwise the interaction-free base value.
    virtual double action_reward(const ContextVector& x, ActionId a) const = 0;

    // True when q_r depends on the ranking only through the action itself.
    virtual bool reward_independent() const = 0;

    // Standard deviation of the Gaussian potential-reward noise.
    virtual double reward_sigma() const = 0;
};

struct SyntheticConfig {
    int context_dim = 10;
    int action_count = 6;
    int ranking_length = 6;
    double lambda = 0.5;  // strength of cross-item reward interaction
    double reward_sigma = 1.0;
};

// Fully synthetic world. Click probability at position k is
//   (1/k) * sigmoid(base_click(x, A(k)) + sum_{l != k} W_c(A(l), A(k)) / |k-l|)
// and the potential reward is
//   base_reward(x, A(k)) + lambda * sum_{l != k} W_r(A(l), A(k)) / |k-l|,
// with linear-plus-bilinear base functions over (x, one-hot action).
class SyntheticEnvironment final : public EnvironmentModel {
public:
    SyntheticConfig config;
    Eigen::MatrixXd w_click;   // |A| x |A|, zero diagonal, entries U[-3, 3]
    Eigen::MatrixXd w_reward;  // |A| x |A|, zero diagonal, entries U[-1, 1]
    Eigen::MatrixXd m_click;   // d_x x |A|, U[-1, 1]
    Eigen::MatrixXd m_reward;
    Eigen::VectorXd theta_click_x, theta_reward_x;  // d_x, U[-1, 1]
    Eigen::VectorXd theta_click_a, theta_reward_a;  // |A|, U[-1, 1]

    double base_click(const ContextVector& x, ActionId a) const;
    double base_reward(const ContextVector& x, ActionId a) const;
    Eigen::VectorXd base_click_all(const ContextVector& x) const;
    Eigen::VectorXd base_reward_all(const ContextVector& x) const;

    int context_dim() const override { return config.context_dim; }
    int action_count() const override { return config.action_count; }
    int ranking_length() const override { return config.ranking_length; }
    double expected_click(const ContextVector& x, const Ranking& ranking, int k) const override;
    double expected_potential_reward(const ContextVector& x, const Ranking& ranking,
                                     int k) const override;
    double action_reward(const ContextVector& x, ActionId a) const override {
        return base_reward(x, a);
    }
    bool reward_independent() const override { return config.lambda == 0.0; }
    double reward_sigma() const override { return config.reward_sigma; }

    std::string params_to_json() const;
};

SyntheticEnvironment build_synthetic(const SyntheticConfig& config, RngStream& rng);

// Dense user-item matrix plus optional raw context features, as read from CSV.
struct InteractionMatrix {
    Eigen::MatrixXd values;        // contexts x actions
    Eigen::MatrixXd raw_features;  // contexts x f; empty means "use values"
    std::vector<std::string> row_ids;
    std::vector<std::string> col_ids;
};

// CSV layout: header row of action ids (first cell ignored), then one row per
// context: id followed by real values. The optional sidecar uses the same
// layout for raw context features and must carry identical row ids.
InteractionMatrix load_interaction_matrix(const std::string& path,
                                          const std::string& features_path = "");

InteractionMatrix subsample(const InteractionMatrix& matrix, int rows, int cols, RngStream& rng);

// Semi-synthetic world: q_r comes straight from an interaction matrix and the
// click probability is 1 - eta above the relevance threshold, eta below it,
// with eta ~ U[0, 0.5] drawn independently per cell. Position-independent.
class SemiSyntheticEnvironment final : public EnvironmentModel {
public:
    Eigen::MatrixXd reward_matrix;  // contexts x actions
    Eigen::MatrixXd click_matrix;   // contexts x actions, entries in (0, 1)
    Eigen::MatrixXd eta;            // contexts x actions, entries in [0, 0.5)
    double threshold = 2.0;
    double sigma = 1.0;
    Eigen::MatrixXd features;  // contexts x d_reduced, principal-component projection
    int k_length = 0;

    int resolve(const ContextVector& x) const;

    int context_dim() const override { return static_cast<int>(features.cols()); }
    int action_count() const override { return static_cast<int>(reward_matrix.cols()); }
    int ranking_length() const override { return k_length; }
    double expected_click(const ContextVector& x, const Ranking& ranking, int k) const override;
    double expected_potential_reward(const ContextVector& x, const Ranking& ranking,
                                     int k) const override;
    double action_reward(const ContextVector& x, ActionId a) const override;
    bool reward_independent() const override { return true; }
    double reward_sigma() const override { return sigma; }
};

SemiSyntheticEnvironment build_semisynthetic(const InteractionMatrix& matrix, int k_length,
                                             int d_reduced, double threshold, RngStream& rng);

// Fully enumerated world over a finite context set: click probabilities are
// free tables over (context, ranking, position) and rewards depend only on
// (context, action). Used for worked examples and exactness checks.
class TabularEnvironment final : public EnvironmentModel {
public:
    Eigen::MatrixXd features;            // contexts x d
    std::vector<Eigen::MatrixXd> click;  // per context: rankings (lex order) x K
    Eigen::MatrixXd reward;              // contexts x actions
    double sigma = 1.0;
    int actions = 0;
    int k_length = 0;

    int resolve(const ContextVector& x) const;
    ContextVector context(int row) const;

    int context_dim() const override { return static_cast<int>(features.cols()); }
    int action_count() const override { return actions; }
    int ranking_length() const override { return k_length; }
    double expected_click(const ContextVector& x, const Ranking& ranking, int k) const override;
    double expected_potential_reward(const ContextVector& x, const Ranking& ranking,
                                     int k) const override;
    double action_reward(const ContextVector& x, ActionId a) const override;
    bool reward_independent() const override { return true; }
    double reward_sigma() const override { return sigma; }
};

// q_c and q_r for every (ranking, position) at a fixed context.
struct OutcomeTable {
    Eigen::MatrixXd click;   // rankings x K
    Eigen::MatrixXd reward;  // rankings x K
};

OutcomeTable tabulate_outcomes(const EnvironmentModel& env, const ContextVector& x,
                               const std::vector<Ranking>& rankings);

// p_c(x, a, A): expected click on `a` at its position in A, 0 when unranked.
double click_prob_of_action(const EnvironmentModel& env, const ContextVector& x, ActionId a,
                            const Ranking& ranking);

// p_c(x, a, policy) for every action in one pass over the ranking space.
Eigen::VectorXd marginal_click_probs(const EnvironmentModel& env, const PolicySpec& policy,
                                     const ContextVector& x, const EnumerationOptions& options = {},
                                     bool* approximate = nullptr);

double marginal_click_prob(const EnvironmentModel& env, const PolicySpec& policy,
                           const ContextVector& x, ActionId a,
                           const EnumerationOptions& options = {}, bool* approximate = nullptr);

// Independent Bernoulli clicks and Gaussian potential rewards per position.
std::pair<std::vector<std::uint8_t>, std::vector<double>> sample_interaction(
    const EnvironmentModel& env, const ContextVector& x, const Ranking& ranking, RngStream& rng);

// Where contexts come from: a standard normal vector or a uniform table row.
class ContextSource {
public:
    static ContextSource standard_normal(int dim);
    static ContextSource table_rows(Eigen::MatrixXd rows);

    ContextVector draw(RngStream& rng) const;
    std::vector<ContextVector> draw_many(int n, RngStream& rng) const;
    int dim() const { return dim_; }

private:
    Eigen::MatrixXd rows_;  // empty for the normal source
    int dim_ = 0;
};

LoggedDataset generate_logged_dataset(const EnvironmentModel& env, const PolicySpec& logging,
                                      int n, const ContextSource& source, RngStream& rng,
                                      const std::string& seed_info = "");

// V(policy) over an explicit evaluation context sample, by exact enumeration
// of the ranking space per context. Clicks and rewards are independent given
// (x, A), so each position contributes q_c * q_r.
double true_policy_value(const EnvironmentModel& env, const PolicySpec& target,
                         std::span<const ContextVector> contexts, long cap = kEnumerationCap);

enum class LoggingScore {
    Random,          // theta entries U[0, 1]
    ClickBaseNoise,  // base click score plus per-action standard normal noise
};

// Threshold-mixed logging policy: Plackett-Luce when x(0) > alpha, greedy
// otherwise, over a randomly scored f_0.
PolicySpec build_logging_policy(int context_dim, int action_count, int k, double alpha,
                                RngStream& rng);
PolicySpec build_logging_policy(const SyntheticEnvironment& env, double alpha, LoggingScore kind,
                                RngStream& rng);

// Epsilon-greedy target over a value-aligned score (click base plus reward
// base), which outranks a randomly scored logging policy in expectation.
PolicySpec build_target_policy(const SyntheticEnvironment& env, double epsilon);
PolicySpec build_target_policy(const SemiSyntheticEnvironment& env, double epsilon);

}  // namespace rankope
