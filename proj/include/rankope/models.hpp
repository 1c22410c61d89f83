#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rankope/core.hpp"
#include "rankope/environment.hpp"
#include "rankope/rng.hpp"

namespace rankope {

struct ClickModelConfig {
    int hidden = 32;
    int epochs = 500;
    double step = 0.05;
    double init_range = 0.1;  // weights start U[-init_range, init_range]
    double p_min = 1e-3;      // predictions clamp to [p_min, 1 - p_min]
};

// Click-probability regressor: feedforward net on (context, one-hot action,
// one-hot position) with two tanh hidden layers and a logistic output,
// trained by full-batch gradient descent on binary cross-entropy over every
// (record, position) pair. The feature encoding deliberately omits the rest
// of the ranking; marginalisation over a policy then only needs position
// marginals.
class ClickRegressor {
public:
    static ClickRegressor fit(const LoggedDataset& data, const ClickModelConfig& config,
                              RngStream& rng);

    // Clamped to [p_min, 1 - p_min]; k is 1-based.
    double predict(const ContextVector& x, ActionId a, int k) const;

    // Pre-clamp logit, for diagnostics.
    double logit(const ContextVector& x, ActionId a, int k) const;

    // predictions for all (action, position) pairs at one context: (a, k-1).
    Eigen::MatrixXd predict_grid(const ContextVector& x) const;

    const std::vector<double>& loss_history() const { return loss_history_; }

    // Design matrix with one row per (record, position) and the click labels.
    static std::pair<Eigen::MatrixXd, Eigen::VectorXd> training_rows(const LoggedDataset& data);

    // Flat parameter access plus loss/gradient at the current parameters,
    // used by the finite-difference gradient check.
    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& flat);
    double loss(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels) const;
    Eigen::VectorXd loss_gradient(const Eigen::MatrixXd& features,
                                  const Eigen::VectorXd& labels) const;

    std::string to_json() const;
    static ClickRegressor from_json(const std::string& text);

    ClickModelConfig config;
    int dim_context = 0;
    int n_actions = 0;
    int n_positions = 0;
    Eigen::MatrixXd w1;  // d_in x H
    Eigen::RowVectorXd b1;
    Eigen::MatrixXd w2;  // H x H
    Eigen::RowVectorXd b2;
    Eigen::VectorXd w3;  // H
    double b3 = 0.0;

private:
    Eigen::VectorXd forward_logits(const Eigen::MatrixXd& features) const;
    std::vector<double> loss_history_;
};

// Ridge regression of the observed potential reward on (context, one-hot
// action), restricted to clicked positions; rewards are only visible there.
class RewardRegressor {
public:
    static RewardRegressor fit(const LoggedDataset& data, double ridge = 1e-3,
                               bool interactions = false);

    double predict(const ContextVector& x, ActionId a) const;

    double ridge = 1e-3;
    bool interactions = false;  // adds x (x) one-hot(a) cross features
    int dim_context = 0;
    int n_actions = 0;
    Eigen::VectorXd coefficients;
    double intercept = 0.0;
};

// The true environment click probability plus bounded tabular noise:
// U[-delta, delta], keyed deterministically by (context bits, action,
// position), clamped to [p_min, 1 - p_min]. delta = 0 returns the exact truth.
class NoisyClickOracle {
public:
    NoisyClickOracle(const EnvironmentModel& env, double delta, std::uint64_t noise_seed,
                     double p_min = 1e-3);

    double per_ranking(const ContextVector& x, ActionId a, const Ranking& ranking) const;
    double delta() const { return delta_; }
    const EnvironmentModel& env() const { return *env_; }

private:
    double noise(const ContextVector& x, ActionId a, int k) const;

    const EnvironmentModel* env_;
    double delta_;
    std::uint64_t seed_;
    double p_min_;
};

// Anything that predicts q_r(x, a) for the doubly robust estimator.
class RewardPredictor {
public:
    virtual ~RewardPredictor() = default;
    virtual double predict(const ContextVector& x, ActionId a) const = 0;
    virtual std::string kind() const = 0;
};

class FittedReward final : public RewardPredictor {
public:
    explicit FittedReward(RewardRegressor model) : model_(std::move(model)) {}
    double predict(const ContextVector& x, ActionId a) const override {
        return model_.predict(x, a);
    }
    std::string kind() const override { return "ridge"; }

private:
    RewardRegressor model_;
};

class OracleReward final : public RewardPredictor {
public:
    explicit OracleReward(const EnvironmentModel& env) : env_(&env) {}
    double predict(const ContextVector& x, ActionId a) const override {
        return env_->action_reward(x, a);
    }
    std::string kind() const override { return "oracle"; }

private:
    const EnvironmentModel* env_;
};

// True q_r plus additive U[-amplitude, amplitude] noise keyed by (context
// bits, action); amplitude 0 reproduces the truth.
class NoisyReward final : public RewardPredictor {
public:
    NoisyReward(const EnvironmentModel& env, double amplitude, std::uint64_t noise_seed)
        : env_(&env), amplitude_(amplitude), seed_(noise_seed) {}
    double predict(const ContextVector& x, ActionId a) const override;
    std::string kind() const override;

private:
    const EnvironmentModel* env_;
    double amplitude_;
    std::uint64_t seed_;
};

class ZeroReward final : public RewardPredictor {
public:
    double predict(const ContextVector&, ActionId) const override { return 0.0; }
    std::string kind() const override { return "zero"; }
};

}  // namespace rankope
