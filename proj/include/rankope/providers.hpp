#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

#include "rankope/core.hpp"
#include "rankope/environment.hpp"
#include "rankope/models.hpp"
#include "rankope/policies.hpp"

namespace rankope {

// Source of click probabilities for the click-weighted estimators: the true
// environment, a fitted regressor, or a noise-corrupted oracle. Exposes both
// the per-ranking probability p_c(x, a, A) and the policy marginal
// p_c(x, a, policy). exact() selects the zero-denominator rule: exact
// providers skip unsupported terms as zero, estimated ones get a floor.
class ClickProbProvider {
public:
    virtual ~ClickProbProvider() = default;

    virtual double per_ranking(const ContextVector& x, ActionId a, const Ranking& ranking) const = 0;
    virtual Eigen::VectorXd marginals(const ContextVector& x, const PolicySpec& policy) const = 0;
    virtual std::string kind() const = 0;
    virtual bool exact() const = 0;

    // True when any marginal so far fell back to Monte Carlo.
    virtual bool approximate() const { return false; }
};

class TrueClickProvider final : public ClickProbProvider {
public:
    explicit TrueClickProvider(const EnvironmentModel& env, EnumerationOptions options = {})
        : env_(&env), options_(options) {}

    double per_ranking(const ContextVector& x, ActionId a, const Ranking& ranking) const override {
        return click_prob_of_action(*env_, x, a, ranking);
    }
    Eigen::VectorXd marginals(const ContextVector& x, const PolicySpec& policy) const override {
        bool approx = false;
        Eigen::VectorXd out = marginal_click_probs(*env_, policy, x, options_, &approx);
        if (approx) used_monte_carlo_.store(true, std::memory_order_relaxed);
        return out;
    }
    std::string kind() const override { return "true"; }
    bool exact() const override { return true; }
    bool approximate() const override { return used_monte_carlo_.load(std::memory_order_relaxed); }

private:
    const EnvironmentModel* env_;
    EnumerationOptions options_;
    mutable std::atomic<bool> used_monte_carlo_{false};
};

// Fitted network: depends on the ranking only through the action's position,
// so the policy marginal reduces to a position-marginal weighted sum.
class RegressorClickProvider final : public ClickProbProvider {
public:
    explicit RegressorClickProvider(ClickRegressor model, EnumerationOptions options = {})
        : model_(std::move(model)), options_(options) {}

    double per_ranking(const ContextVector& x, ActionId a, const Ranking& ranking) const override {
        const auto pos = action_position(ranking, a);
        return pos ? model_.predict(x, a, *pos) : 0.0;
    }
    Eigen::VectorXd marginals(const ContextVector& x, const PolicySpec& policy) const override {
        bool approx = false;
        const Eigen::MatrixXd positions = position_marginal_table(policy, x, options_, &approx);
        if (approx) used_monte_carlo_.store(true, std::memory_order_relaxed);
        return (positions.array() * model_.predict_grid(x).array()).rowwise().sum();
    }
    std::string kind() const override { return "estimated"; }
    bool exact() const override { return false; }
    bool approximate() const override { return used_monte_carlo_.load(std::memory_order_relaxed); }

    const ClickRegressor& model() const { return model_; }

private:
    ClickRegressor model_;
    EnumerationOptions options_;
    mutable std::atomic<bool> used_monte_carlo_{false};
};

// Noise-corrupted truth; the corrupted value depends on the full ranking, so
// marginals are computed by ranking enumeration.
class NoisyClickProvider final : public ClickProbProvider {
public:
    explicit NoisyClickProvider(NoisyClickOracle oracle, EnumerationOptions options = {})
        : oracle_(std::move(oracle)), options_(options) {}

    double per_ranking(const ContextVector& x, ActionId a, const Ranking& ranking) const override {
        return oracle_.per_ranking(x, a, ranking);
    }
    Eigen::VectorXd marginals(const ContextVector& x, const PolicySpec& policy) const override;
    std::string kind() const override;
    bool exact() const override { return false; }

private:
    NoisyClickOracle oracle_;
    EnumerationOptions options_;
};

// Memoises marginals per (policy, context); meant for the enumeration oracle,
// which revisits the same few contexts thousands of times. Not thread-safe.
class CachingClickProvider final : public ClickProbProvider {
public:
    explicit CachingClickProvider(const ClickProbProvider& inner) : inner_(&inner) {}

    double per_ranking(const ContextVector& x, ActionId a, const Ranking& ranking) const override {
        return inner_->per_ranking(x, a, ranking);
    }
    Eigen::VectorXd marginals(const ContextVector& x, const PolicySpec& policy) const override;
    std::string kind() const override { return inner_->kind(); }
    bool exact() const override { return inner_->exact(); }
    bool approximate() const override { return inner_->approximate(); }

private:
    const ClickProbProvider* inner_;
    mutable std::unordered_map<std::uint64_t, Eigen::VectorXd> cache_;
};

}  // namespace rankope
