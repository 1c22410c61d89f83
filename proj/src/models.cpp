#include "rankope/models.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace rankope {

using nlohmann::json;

namespace {

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Deterministic noise in [-1, 1) keyed by the context's bit pattern and a tag.
double keyed_unit_noise(std::uint64_t seed, const ContextVector& x, std::uint64_t tag) {
    std::uint64_t h = fnv1a64(x.values.data(), static_cast<std::size_t>(x.values.size()) * sizeof(double));
    h = mix64(h ^ mix64(tag) ^ seed);
    return 2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0;
}

}  // namespace

std::pair<Eigen::MatrixXd, Eigen::VectorXd> ClickRegressor::training_rows(
    const LoggedDataset& data) {
    const int d = data.context_dim;
    const int n_actions = data.action_count;
    const int k_len = data.ranking_length;
    const Eigen::Index rows = static_cast<Eigen::Index>(data.size()) * k_len;
    Eigen::MatrixXd features = Eigen::MatrixXd::Zero(rows, d + n_actions + k_len);
    Eigen::VectorXd labels(rows);
    Eigen::Index row = 0;
    for (const auto& record : data.records) {
        for (int k = 0; k < k_len; ++k, ++row) {
            features.block(row, 0, 1, d) = record.context.values.transpose();
            features(row, d + record.ranking.slots[static_cast<std::size_t>(k)]) = 1.0;
            features(row, d + n_actions + k) = 1.0;
            labels(row) = record.clicks[static_cast<std::size_t>(k)];
        }
    }
    return {std::move(features), std::move(labels)};
}

Eigen::VectorXd ClickRegressor::forward_logits(const Eigen::MatrixXd& features) const {
    const Eigen::MatrixXd a1 = ((features * w1).rowwise() + b1).array().tanh();
    const Eigen::MatrixXd a2 = ((a1 * w2).rowwise() + b2).array().tanh();
    return (a2 * w3).array() + b3;
}

double ClickRegressor::loss(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels) const {
    const Eigen::VectorXd z = forward_logits(features);
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        total += softplus(z(i)) - labels(i) * z(i);
    }
    return total / static_cast<double>(z.size());
}

Eigen::VectorXd ClickRegressor::loss_gradient(const Eigen::MatrixXd& features,
                                              const Eigen::VectorXd& labels) const {
    const Eigen::Index rows = features.rows();
    const Eigen::MatrixXd a1 = ((features * w1).rowwise() + b1).array().tanh();
    const Eigen::MatrixXd a2 = ((a1 * w2).rowwise() + b2).array().tanh();
    Eigen::VectorXd dz3 = (a2 * w3).array() + b3;
    for (Eigen::Index i = 0; i < rows; ++i) {
        dz3(i) = (stable_sigmoid(dz3(i)) - labels(i)) / static_cast<double>(rows);
    }
    const Eigen::VectorXd g_w3 = a2.transpose() * dz3;
    const double g_b3 = dz3.sum();
    Eigen::MatrixXd dz2 = dz3 * w3.transpose();
    dz2.array() *= 1.0 - a2.array().square();
    const Eigen::MatrixXd g_w2 = a1.transpose() * dz2;
    const Eigen::RowVectorXd g_b2 = dz2.colwise().sum();
    Eigen::MatrixXd dz1 = dz2 * w2.transpose();
    dz1.array() *= 1.0 - a1.array().square();
    const Eigen::MatrixXd g_w1 = features.transpose() * dz1;
    const Eigen::RowVectorXd g_b1 = dz1.colwise().sum();

    Eigen::VectorXd flat(w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + 1);
    Eigen::Index at = 0;
    auto put_matrix = [&](const Eigen::MatrixXd& m) {
        flat.segment(at, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
        at += m.size();
    };
    put_matrix(g_w1);
    flat.segment(at, g_b1.size()) = g_b1.transpose();
    at += g_b1.size();
    put_matrix(g_w2);
    flat.segment(at, g_b2.size()) = g_b2.transpose();
    at += g_b2.size();
    flat.segment(at, g_w3.size()) = g_w3;
    at += g_w3.size();
    flat(at) = g_b3;
    return flat;
}

Eigen::VectorXd ClickRegressor::parameters() const {
    Eigen::VectorXd flat(w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + 1);
    Eigen::Index at = 0;
    auto put = [&](const double* data, Eigen::Index size) {
        flat.segment(at, size) = Eigen::Map<const Eigen::VectorXd>(data, size);
        at += size;
    };
    put(w1.data(), w1.size());
    put(b1.data(), b1.size());
    put(w2.data(), w2.size());
    put(b2.data(), b2.size());
    put(w3.data(), w3.size());
    flat(at) = b3;
    return flat;
}

void ClickRegressor::set_parameters(const Eigen::VectorXd& flat) {
    Eigen::Index at = 0;
    auto take = [&](double* data, Eigen::Index size) {
        Eigen::Map<Eigen::VectorXd>(data, size) = flat.segment(at, size);
        at += size;
    };
    take(w1.data(), w1.size());
    take(b1.data(), b1.size());
    take(w2.data(), w2.size());
    take(b2.data(), b2.size());
    take(w3.data(), w3.size());
    b3 = flat(at);
}

ClickRegressor ClickRegressor::fit(const LoggedDataset& data, const ClickModelConfig& config,
                                   RngStream& rng) {
    if (data.records.empty()) throw std::invalid_argument("click model: empty dataset");
    ClickRegressor model;
    model.config = config;
    model.dim_context = data.context_dim;
    model.n_actions = data.action_count;
    model.n_positions = data.ranking_length;
    const int d_in = model.dim_context + model.n_actions + model.n_positions;
    const int h = config.hidden;
    auto init_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                m(r, c) = rng.uniform(-config.init_range, config.init_range);
            }
        }
        return m;
    };
    model.w1 = init_matrix(d_in, h);
    model.b1 = init_matrix(1, h);
    model.w2 = init_matrix(h, h);
    model.b2 = init_matrix(1, h);
    model.w3 = init_matrix(h, 1);
    model.b3 = rng.uniform(-config.init_range, config.init_range);

    auto [features, labels] = training_rows(data);
    const Eigen::Index rows = features.rows();
    const double inv_rows = 1.0 / static_cast<double>(rows);

    Eigen::MatrixXd a1(rows, h), a2(rows, h), dz1(rows, h), dz2(rows, h);
    Eigen::VectorXd dz3(rows);
    model.loss_history_.reserve(static_cast<std::size_t>(config.epochs));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        a1.noalias() = features * model.w1;
        a1.rowwise() += model.b1;
        a1 = a1.array().tanh();
        a2.noalias() = a1 * model.w2;
        a2.rowwise() += model.b2;
        a2 = a2.array().tanh();
        dz3.noalias() = a2 * model.w3;
        dz3.array() += model.b3;

        double loss = 0.0;
        for (Eigen::Index i = 0; i < rows; ++i) {
            const double z = dz3(i);
            loss += softplus(z) - labels(i) * z;
            dz3(i) = (stable_sigmoid(z) - labels(i)) * inv_rows;
        }
        loss *= inv_rows;
        if (!std::isfinite(loss)) {
            throw std::runtime_error("click model diverged (non-finite loss) at epoch " +
                                     std::to_string(epoch) + "; config: hidden=" +
                                     std::to_string(config.hidden) + " epochs=" +
                                     std::to_string(config.epochs) + " step=" +
                                     std::to_string(config.step));
        }
        model.loss_history_.push_back(loss);

        const Eigen::VectorXd g_w3 = a2.transpose() * dz3;
        const double g_b3 = dz3.sum();
        dz2.noalias() = dz3 * model.w3.transpose();
        dz2.array() *= 1.0 - a2.array().square();
        const Eigen::MatrixXd g_w2 = a1.transpose() * dz2;
        const Eigen::RowVectorXd g_b2 = dz2.colwise().sum();
        dz1.noalias() = dz2 * model.w2.transpose();
        dz1.array() *= 1.0 - a1.array().square();
        const Eigen::MatrixXd g_w1 = features.transpose() * dz1;
        const Eigen::RowVectorXd g_b1 = dz1.colwise().sum();

        model.w1 -= config.step * g_w1;
        model.b1 -= config.step * g_b1;
        model.w2 -= config.step * g_w2;
        model.b2 -= config.step * g_b2;
        model.w3 -= config.step * g_w3;
        model.b3 -= config.step * g_b3;
    }
    return model;
}

namespace {

Eigen::VectorXd encode_click_features(int d, int n_actions, int n_positions,
                                      const ContextVector& x, ActionId a, int k) {
    Eigen::VectorXd features = Eigen::VectorXd::Zero(d + n_actions + n_positions);
    features.head(d) = x.values;
    features(d + a) = 1.0;
    features(d + n_actions + (k - 1)) = 1.0;
    return features;
}

}  // namespace

double ClickRegressor::logit(const ContextVector& x, ActionId a, int k) const {
    const Eigen::VectorXd f = encode_click_features(dim_context, n_actions, n_positions, x, a, k);
    const Eigen::VectorXd a1 = (w1.transpose() * f + b1.transpose()).array().tanh();
    const Eigen::VectorXd a2 = (w2.transpose() * a1 + b2.transpose()).array().tanh();
    return w3.dot(a2) + b3;
}

double ClickRegressor::predict(const ContextVector& x, ActionId a, int k) const {
    const double p = stable_sigmoid(logit(x, a, k));
    return std::clamp(p, config.p_min, 1.0 - config.p_min);
}

Eigen::MatrixXd ClickRegressor::predict_grid(const ContextVector& x) const {
    const Eigen::Index rows = static_cast<Eigen::Index>(n_actions) * n_positions;
    Eigen::MatrixXd features = Eigen::MatrixXd::Zero(rows, dim_context + n_actions + n_positions);
    Eigen::Index row = 0;
    for (int a = 0; a < n_actions; ++a) {
        for (int k = 0; k < n_positions; ++k, ++row) {
            features.block(row, 0, 1, dim_context) = x.values.transpose();
            features(row, dim_context + a) = 1.0;
            features(row, dim_context + n_actions + k) = 1.0;
        }
    }
    const Eigen::VectorXd z = forward_logits(features);
    Eigen::MatrixXd grid(n_actions, n_positions);
    row = 0;
    for (int a = 0; a < n_actions; ++a) {
        for (int k = 0; k < n_positions; ++k, ++row) {
            grid(a, k) = std::clamp(stable_sigmoid(z(row)), config.p_min, 1.0 - config.p_min);
        }
    }
    return grid;
}

std::string ClickRegressor::to_json() const {
    auto matrix = [](const Eigen::MatrixXd& m) {
        json rows = json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(row);
        }
        return rows;
    };
    json j;
    j["config"] = {{"hidden", config.hidden},
                   {"epochs", config.epochs},
                   {"step", config.step},
                   {"init_range", config.init_range},
                   {"p_min", config.p_min}};
    j["dim_context"] = dim_context;
    j["n_actions"] = n_actions;
    j["n_positions"] = n_positions;
    j["w1"] = matrix(w1);
    j["b1"] = matrix(b1);
    j["w2"] = matrix(w2);
    j["b2"] = matrix(b2);
    j["w3"] = matrix(w3);
    j["b3"] = b3;
    return j.dump();
}

ClickRegressor ClickRegressor::from_json(const std::string& text) {
    const json j = json::parse(text);
    auto matrix = [&](const char* key) {
        const auto rows = j.at(key).get<std::vector<std::vector<double>>>();
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                          rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t c = 0; c < rows[r].size(); ++c) {
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
            }
        }
        return m;
    };
    ClickRegressor model;
    const auto& cfg = j.at("config");
    model.config.hidden = cfg.at("hidden").get<int>();
    model.config.epochs = cfg.at("epochs").get<int>();
    model.config.step = cfg.at("step").get<double>();
    model.config.init_range = cfg.at("init_range").get<double>();
    model.config.p_min = cfg.at("p_min").get<double>();
    model.dim_context = j.at("dim_context").get<int>();
    model.n_actions = j.at("n_actions").get<int>();
    model.n_positions = j.at("n_positions").get<int>();
    model.w1 = matrix("w1");
    model.b1 = matrix("b1").row(0);
    model.w2 = matrix("w2");
    model.b2 = matrix("b2").row(0);
    model.w3 = matrix("w3").col(0);
    model.b3 = j.at("b3").get<double>();
    return model;
}

RewardRegressor RewardRegressor::fit(const LoggedDataset& data, double ridge, bool interactions) {
    RewardRegressor model;
    model.ridge = ridge;
    model.interactions = interactions;
    model.dim_context = data.context_dim;
    model.n_actions = data.action_count;
    const int d = data.context_dim;
    const int p = d + data.action_count + (interactions ? d * data.action_count : 0);

    std::vector<std::pair<const LoggedRecord*, int>> clicked;
    for (const auto& record : data.records) {
        for (int k = 0; k < data.ranking_length; ++k) {
            if (record.clicks[static_cast<std::size_t>(k)]) clicked.emplace_back(&record, k);
        }
    }
    if (clicked.empty()) {
        throw std::runtime_error(
            "reward model: no clicked positions in the dataset, so no potential reward is "
            "observable");
    }
    Eigen::MatrixXd phi(static_cast<Eigen::Index>(clicked.size()), p + 1);
    Eigen::VectorXd y(static_cast<Eigen::Index>(clicked.size()));
    for (std::size_t i = 0; i < clicked.size(); ++i) {
        const auto& [record, k] = clicked[i];
        const ActionId a = record->ranking.slots[static_cast<std::size_t>(k)];
        auto row = phi.row(static_cast<Eigen::Index>(i));
        row.setZero();
        row.head(d) = record->context.values.transpose();
        row(d + a) = 1.0;
        if (interactions) {
            row.segment(d + data.action_count + static_cast<Eigen::Index>(a) * d, d) =
                record->context.values.transpose();
        }
        row(p) = 1.0;  // intercept column, unpenalised
        y(static_cast<Eigen::Index>(i)) = record->observed_rewards[static_cast<std::size_t>(k)];
    }
    Eigen::MatrixXd gram = phi.transpose() * phi;
    for (int i = 0; i < p; ++i) gram(i, i) += ridge;
    const Eigen::VectorXd solution = gram.ldlt().solve(phi.transpose() * y);
    model.coefficients = solution.head(p);
    model.intercept = solution(p);
    return model;
}

double RewardRegressor::predict(const ContextVector& x, ActionId a) const {
    const int d = dim_context;
    double value = intercept + coefficients.head(d).dot(x.values) + coefficients(d + a);
    if (interactions) {
        value += coefficients.segment(d + n_actions + static_cast<Eigen::Index>(a) * d, d)
                     .dot(x.values);
    }
    return value;
}

NoisyClickOracle::NoisyClickOracle(const EnvironmentModel& env, double delta,
                                   std::uint64_t noise_seed, double p_min)
    : env_(&env), delta_(delta), seed_(noise_seed), p_min_(p_min) {}

double NoisyClickOracle::noise(const ContextVector& x, ActionId a, int k) const {
    const std::uint64_t tag =
        static_cast<std::uint64_t>(a) * 1024ull + static_cast<std::uint64_t>(k);
    return keyed_unit_noise(seed_, x, tag);
}

double NoisyClickOracle::per_ranking(const ContextVector& x, ActionId a,
                                     const Ranking& ranking) const {
    const auto pos = action_position(ranking, a);
    if (!pos) return 0.0;
    const double truth = env_->expected_click(x, ranking, *pos);
    if (delta_ == 0.0) return truth;
    return std::clamp(truth + delta_ * noise(x, a, *pos), p_min_, 1.0 - p_min_);
}

double NoisyReward::predict(const ContextVector& x, ActionId a) const {
    if (amplitude_ == 0.0) return env_->action_reward(x, a);
    return env_->action_reward(x, a) +
           amplitude_ * keyed_unit_noise(seed_, x, static_cast<std::uint64_t>(a));
}

std::string NoisyReward::kind() const {
    return "noisy_oracle(" + std::to_string(amplitude_) + ")";
}

}  // namespace rankope
