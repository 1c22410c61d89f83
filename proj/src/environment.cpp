#include "rankope/environment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "rankope/parallel.hpp"

namespace rankope {

using nlohmann::json;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Cross-item interaction at position k (1-based): sum over the other
// positions, discounted by inverse rank distance.
double interaction_sum(const Eigen::MatrixXd& w, const Ranking& ranking, int k) {
    double total = 0.0;
    const ActionId at_k = ranking.slots[static_cast<std::size_t>(k - 1)];
    for (int l = 1; l <= ranking.length(); ++l) {
        if (l == k) continue;
        total += w(ranking.slots[static_cast<std::size_t>(l - 1)], at_k) / std::abs(k - l);
    }
    return total;
}

int resolve_feature_row(const Eigen::MatrixXd& features, const ContextVector& x, const char* what) {
    if (x.row_id >= 0 && x.row_id < features.rows()) return x.row_id;
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
        if (features.cols() == x.values.size() && features.row(r).transpose() == x.values) {
            return static_cast<int>(r);
        }
    }
    throw std::runtime_error(std::string(what) + ": context does not match any table row");
}

}  // namespace

double SyntheticEnvironment::base_click(const ContextVector& x, ActionId a) const {
    return x.values.dot(m_click.col(a)) + theta_click_x.dot(x.values) + theta_click_a(a);
}

double SyntheticEnvironment::base_reward(const ContextVector& x, ActionId a) const {
    return x.values.dot(m_reward.col(a)) + theta_reward_x.dot(x.values) + theta_reward_a(a);
}

Eigen::VectorXd SyntheticEnvironment::base_click_all(const ContextVector& x) const {
    Eigen::VectorXd out = m_click.transpose() * x.values;
    out.array() += theta_click_x.dot(x.values);
    out += theta_click_a;
    return out;
}

Eigen::VectorXd SyntheticEnvironment::base_reward_all(const ContextVector& x) const {
    Eigen::VectorXd out = m_reward.transpose() * x.values;
    out.array() += theta_reward_x.dot(x.values);
    out += theta_reward_a;
    return out;
}

double SyntheticEnvironment::expected_click(const ContextVector& x, const Ranking& ranking,
                                            int k) const {
    const ActionId a = ranking.slots[static_cast<std::size_t>(k - 1)];
    return sigmoid(base_click(x, a) + interaction_sum(w_click, ranking, k)) / k;
}

double SyntheticEnvironment::expected_potential_reward(const ContextVector& x,
                                                       const Ranking& ranking, int k) const {
    const ActionId a = ranking.slots[static_cast<std::size_t>(k - 1)];
    return base_reward(x, a) + config.lambda * interaction_sum(w_reward, ranking, k);
}

std::string SyntheticEnvironment::params_to_json() const {
    auto matrix = [](const Eigen::MatrixXd& m) {
        json rows = json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
            rows.push_back(row);
        }
        return rows;
    };
    auto vector = [](const Eigen::VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    json j;
    j["context_dim"] = config.context_dim;
    j["action_count"] = config.action_count;
    j["K"] = config.ranking_length;
    j["lambda"] = config.lambda;
    j["reward_sigma"] = config.reward_sigma;
    j["w_click"] = matrix(w_click);
    j["w_reward"] = matrix(w_reward);
    j["m_click"] = matrix(m_click);
    j["m_reward"] = matrix(m_reward);
    j["theta_click_x"] = vector(theta_click_x);
    j["theta_click_a"] = vector(theta_click_a);
    j["theta_reward_x"] = vector(theta_reward_x);
    j["theta_reward_a"] = vector(theta_reward_a);
    return j.dump();
}

SyntheticEnvironment build_synthetic(const SyntheticConfig& config, RngStream& rng) {
    if (config.context_dim < 1 || config.action_count < 2 || config.ranking_length < 1 ||
        config.ranking_length > config.action_count) {
        throw std::invalid_argument("build_synthetic: need d_x >= 1, |A| >= 2, 1 <= K <= |A|");
    }
    SyntheticEnvironment env;
    env.config = config;
    const int n = config.action_count;
    const int d = config.context_dim;
    auto draw_interaction = [&](double lo, double hi) {
        Eigen::MatrixXd w(n, n);
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                // Self-interaction never applies in a valid ranking; keep the
                // diagonal identically zero.
                w(r, c) = r == c ? 0.0 : rng.uniform(lo, hi);
            }
        }
        return w;
    };
    auto draw_matrix = [&](int rows, int cols) {
        Eigen::MatrixXd m(rows, cols);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-1.0, 1.0);
        }
        return m;
    };
    auto draw_vector = [&](int size) {
        Eigen::VectorXd v(size);
        for (int i = 0; i < size; ++i) v(i) = rng.uniform(-1.0, 1.0);
        return v;
    };
    env.w_click = draw_interaction(-3.0, 3.0);
    env.w_reward = draw_interaction(-1.0, 1.0);
    env.m_click = draw_matrix(d, n);
    env.m_reward = draw_matrix(d, n);
    env.theta_click_x = draw_vector(d);
    env.theta_click_a = draw_vector(n);
    env.theta_reward_x = draw_vector(d);
    env.theta_reward_a = draw_vector(n);
    return env;
}

namespace {

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

Eigen::MatrixXd parse_numeric_block(const std::vector<std::vector<std::string>>& rows,
                                    std::vector<std::string>* row_ids, const std::string& path) {
    if (rows.size() < 2) throw std::runtime_error(path + ": need a header and at least one row");
    const std::size_t cols = rows[0].size() - 1;
    Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size() - 1),
                           static_cast<Eigen::Index>(cols));
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != cols + 1) {
            throw std::runtime_error(path + ": row " + std::to_string(r + 1) +
                                     " has " + std::to_string(rows[r].size()) + " cells, expected " +
                                     std::to_string(cols + 1));
        }
        if (row_ids != nullptr) row_ids->push_back(rows[r][0]);
        for (std::size_t c = 1; c <= cols; ++c) {
            double v = 0.0;
            try {
                v = std::stod(rows[r][c]);
            } catch (const std::exception&) {
                throw std::runtime_error(path + ": cell (" + std::to_string(r + 1) + "," +
                                         std::to_string(c + 1) + ") is not numeric: " + rows[r][c]);
            }
            if (!std::isfinite(v)) {
                throw std::runtime_error(path + ": non-finite entry at row " + std::to_string(r + 1));
            }
            values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)) = v;
        }
    }
    return values;
}

}  // namespace

InteractionMatrix load_interaction_matrix(const std::string& path,
                                          const std::string& features_path) {
    InteractionMatrix out;
    const auto rows = read_csv(path);
    out.values = parse_numeric_block(rows, &out.row_ids, path);
    for (std::size_t c = 1; c < rows[0].size(); ++c) out.col_ids.push_back(rows[0][c]);
    if (!features_path.empty()) {
        std::vector<std::string> feature_ids;
        const auto feature_rows = read_csv(features_path);
        out.raw_features = parse_numeric_block(feature_rows, &feature_ids, features_path);
        if (feature_ids != out.row_ids) {
            throw std::runtime_error(features_path + ": row ids do not match " + path);
        }
    }
    return out;
}

namespace {

std::vector<int> sample_indices(int total, int wanted, RngStream& rng) {
    std::vector<int> all(static_cast<std::size_t>(total));
    std::iota(all.begin(), all.end(), 0);
    if (wanted <= 0 || wanted >= total) return all;
    for (int i = 0; i < wanted; ++i) {
        const int j = i + rng.uniform_int(total - i);
        std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
    }
    all.resize(static_cast<std::size_t>(wanted));
    std::sort(all.begin(), all.end());
    return all;
}

}  // namespace

InteractionMatrix subsample(const InteractionMatrix& matrix, int rows, int cols, RngStream& rng) {
    const auto row_idx = sample_indices(static_cast<int>(matrix.values.rows()), rows, rng);
    const auto col_idx = sample_indices(static_cast<int>(matrix.values.cols()), cols, rng);
    InteractionMatrix out;
    out.values.resize(static_cast<Eigen::Index>(row_idx.size()),
                      static_cast<Eigen::Index>(col_idx.size()));
    for (std::size_t r = 0; r < row_idx.size(); ++r) {
        for (std::size_t c = 0; c < col_idx.size(); ++c) {
            out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                matrix.values(row_idx[r], col_idx[c]);
        }
        out.row_ids.push_back(matrix.row_ids[static_cast<std::size_t>(row_idx[r])]);
    }
    for (int c : col_idx) out.col_ids.push_back(matrix.col_ids[static_cast<std::size_t>(c)]);
    if (matrix.raw_features.size() > 0) {
        out.raw_features.resize(static_cast<Eigen::Index>(row_idx.size()), matrix.raw_features.cols());
        for (std::size_t r = 0; r < row_idx.size(); ++r) {
            out.raw_features.row(static_cast<Eigen::Index>(r)) = matrix.raw_features.row(row_idx[r]);
        }
    }
    return out;
}

namespace {

// Principal-component projection to d dimensions. Component signs are fixed
// by making each column's largest-magnitude loading positive.
Eigen::MatrixXd pca_project(const Eigen::MatrixXd& raw, int d) {
    const Eigen::Index n = raw.rows();
    const Eigen::MatrixXd centered = raw.rowwise() - raw.colwise().mean();
    const Eigen::MatrixXd cov =
        centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(n - 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    const int keep = std::min<int>(d, static_cast<int>(raw.cols()));
    Eigen::MatrixXd components(raw.cols(), keep);
    for (int i = 0; i < keep; ++i) {
        Eigen::VectorXd v = solver.eigenvectors().col(raw.cols() - 1 - i);  // descending variance
        Eigen::Index peak = 0;
        v.cwiseAbs().maxCoeff(&peak);
        if (v(peak) < 0) v = -v;
        components.col(i) = v;
    }
    return centered * components;
}

}  // namespace

SemiSyntheticEnvironment build_semisynthetic(const InteractionMatrix& matrix, int k_length,
                                             int d_reduced, double threshold, RngStream& rng) {
    SemiSyntheticEnvironment env;
    env.reward_matrix = matrix.values;
    env.threshold = threshold;
    env.k_length = k_length;
    if (k_length < 1 || k_length > env.action_count()) {
        throw std::invalid_argument("build_semisynthetic: need 1 <= K <= action count");
    }
    const Eigen::Index rows = matrix.values.rows();
    const Eigen::Index cols = matrix.values.cols();
    env.eta.resize(rows, cols);
    env.click_matrix.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            const double eta = std::max(rng.uniform(0.0, 0.5), 1e-12);
            env.eta(r, c) = eta;
            env.click_matrix(r, c) = matrix.values(r, c) > threshold ? 1.0 - eta : eta;
        }
    }
    env.features = pca_project(
        matrix.raw_features.size() > 0 ? matrix.raw_features : matrix.values, d_reduced);
    return env;
}

int SemiSyntheticEnvironment::resolve(const ContextVector& x) const {
    return resolve_feature_row(features, x, "semi-synthetic environment");
}

double SemiSyntheticEnvironment::expected_click(const ContextVector& x, const Ranking& ranking,
                                                int k) const {
    return click_matrix(resolve(x), ranking.slots[static_cast<std::size_t>(k - 1)]);
}

double SemiSyntheticEnvironment::expected_potential_reward(const ContextVector& x,
                                                           const Ranking& ranking, int k) const {
    return reward_matrix(resolve(x), ranking.slots[static_cast<std::size_t>(k - 1)]);
}

double SemiSyntheticEnvironment::action_reward(const ContextVector& x, ActionId a) const {
    return reward_matrix(resolve(x), a);
}

int TabularEnvironment::resolve(const ContextVector& x) const {
    return resolve_feature_row(features, x, "tabular environment");
}

ContextVector TabularEnvironment::context(int row) const {
    return ContextVector{features.row(row).transpose(), row};
}

double TabularEnvironment::expected_click(const ContextVector& x, const Ranking& ranking,
                                          int k) const {
    const int row = resolve(x);
    const long idx = ranking_lex_index(ranking, actions);
    return click[static_cast<std::size_t>(row)](idx, k - 1);
}

double TabularEnvironment::expected_potential_reward(const ContextVector& x,
                                                     const Ranking& ranking, int k) const {
    return reward(resolve(x), ranking.slots[static_cast<std::size_t>(k - 1)]);
}

double TabularEnvironment::action_reward(const ContextVector& x, ActionId a) const {
    return reward(resolve(x), a);
}

OutcomeTable tabulate_outcomes(const EnvironmentModel& env, const ContextVector& x,
                               const std::vector<Ranking>& rankings) {
    OutcomeTable table;
    const int k_len = env.ranking_length();
    table.click.resize(static_cast<Eigen::Index>(rankings.size()), k_len);
    table.reward.resize(static_cast<Eigen::Index>(rankings.size()), k_len);
    for (std::size_t r = 0; r < rankings.size(); ++r) {
        for (int k = 1; k <= k_len; ++k) {
            table.click(static_cast<Eigen::Index>(r), k - 1) = env.expected_click(x, rankings[r], k);
            table.reward(static_cast<Eigen::Index>(r), k - 1) =
                env.expected_potential_reward(x, rankings[r], k);
        }
    }
    return table;
}

double click_prob_of_action(const EnvironmentModel& env, const ContextVector& x, ActionId a,
                            const Ranking& ranking) {
    const auto pos = action_position(ranking, a);
    return pos ? env.expected_click(x, ranking, *pos) : 0.0;
}

Eigen::VectorXd marginal_click_probs(const EnvironmentModel& env, const PolicySpec& policy,
                                     const ContextVector& x, const EnumerationOptions& options,
                                     bool* approximate) {
    if (approximate != nullptr) *approximate = false;
    const int n = env.action_count();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    const long total = permutation_count(n, env.ranking_length());
    if (total <= options.cap) {
        const auto rankings = enumerate_rankings(n, env.ranking_length(), options.cap);
        const PreparedPolicy prepared(policy, x);
        for (const Ranking& ranking : rankings) {
            const double p = prepared.ranking_probability(ranking);
            if (p == 0.0) continue;
            for (int k = 1; k <= ranking.length(); ++k) {
                out(ranking.slots[static_cast<std::size_t>(k - 1)]) +=
                    p * env.expected_click(x, ranking, k);
            }
        }
        return out;
    }
    if (!options.allow_monte_carlo) {
        throw std::runtime_error("marginal click probabilities: ranking space " +
                                 std::to_string(total) + " exceeds cap " +
                                 std::to_string(options.cap) +
                                 " and Monte Carlo fallback is disabled");
    }
    if (approximate != nullptr) *approximate = true;
    RngStream rng(options.mc_seed);
    const PreparedPolicy prepared(policy, x);
    for (int s = 0; s < options.mc_samples; ++s) {
        const Ranking ranking = prepared.sample(rng);
        for (int k = 1; k <= ranking.length(); ++k) {
            out(ranking.slots[static_cast<std::size_t>(k - 1)]) +=
                env.expected_click(x, ranking, k);
        }
    }
    out /= static_cast<double>(options.mc_samples);
    return out;
}

double marginal_click_prob(const EnvironmentModel& env, const PolicySpec& policy,
                           const ContextVector& x, ActionId a, const EnumerationOptions& options,
                           bool* approximate) {
    return marginal_click_probs(env, policy, x, options, approximate)(a);
}

std::pair<std::vector<std::uint8_t>, std::vector<double>> sample_interaction(
    const EnvironmentModel& env, const ContextVector& x, const Ranking& ranking, RngStream& rng) {
    const int k_len = ranking.length();
    std::vector<std::uint8_t> clicks(static_cast<std::size_t>(k_len));
    std::vector<double> rewards(static_cast<std::size_t>(k_len));
    for (int k = 1; k <= k_len; ++k) {
        clicks[static_cast<std::size_t>(k - 1)] =
            rng.bernoulli(env.expected_click(x, ranking, k)) ? 1 : 0;
    }
    for (int k = 1; k <= k_len; ++k) {
        rewards[static_cast<std::size_t>(k - 1)] =
            rng.normal(env.expected_potential_reward(x, ranking, k), env.reward_sigma());
    }
    return {std::move(clicks), std::move(rewards)};
}

ContextSource ContextSource::standard_normal(int dim) {
    ContextSource source;
    source.dim_ = dim;
    return source;
}

ContextSource ContextSource::table_rows(Eigen::MatrixXd rows) {
    ContextSource source;
    source.dim_ = static_cast<int>(rows.cols());
    source.rows_ = std::move(rows);
    return source;
}

ContextVector ContextSource::draw(RngStream& rng) const {
    if (rows_.size() > 0) {
        const int r = rng.uniform_int(static_cast<int>(rows_.rows()));
        return ContextVector{rows_.row(r).transpose(), r};
    }
    Eigen::VectorXd values(dim_);
    for (int i = 0; i < dim_; ++i) values(i) = rng.normal();
    return ContextVector{std::move(values), -1};
}

std::vector<ContextVector> ContextSource::draw_many(int n, RngStream& rng) const {
    std::vector<ContextVector> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(draw(rng));
    return out;
}

LoggedDataset generate_logged_dataset(const EnvironmentModel& env, const PolicySpec& logging,
                                      int n, const ContextSource& source, RngStream& rng,
                                      const std::string& seed_info) {
    if (n < 1) throw std::invalid_argument("generate_logged_dataset: need n >= 1");
    LoggedDataset data;
    data.action_count = env.action_count();
    data.ranking_length = env.ranking_length();
    data.context_dim = source.dim();
    data.seed_info = seed_info;
    data.records.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        LoggedRecord record;
        record.context = source.draw(rng);
        record.ranking = sample_ranking(logging, record.context, rng);
        auto [clicks, rewards] = sample_interaction(env, record.context, record.ranking, rng);
        record.clicks = std::move(clicks);
        record.observed_rewards.resize(record.clicks.size());
        for (std::size_t k = 0; k < record.clicks.size(); ++k) {
            record.observed_rewards[k] = record.clicks[k] ? rewards[k] : 0.0;
        }
        data.records.push_back(std::move(record));
    }
    return data;
}

double true_policy_value(const EnvironmentModel& env, const PolicySpec& target,
                         std::span<const ContextVector> contexts, long cap) {
    if (contexts.empty()) throw std::invalid_argument("true_policy_value: empty context sample");
    const auto rankings = enumerate_rankings(env.action_count(), env.ranking_length(), cap);
    std::vector<double> per_context(contexts.size(), 0.0);
    parallel_for(static_cast<int>(contexts.size()), [&](int i) {
        const ContextVector& x = contexts[static_cast<std::size_t>(i)];
        const PreparedPolicy prepared(target, x);
        double value = 0.0;
        for (const Ranking& ranking : rankings) {
            const double p = prepared.ranking_probability(ranking);
            if (p == 0.0) continue;
            double ranking_value = 0.0;
            for (int k = 1; k <= ranking.length(); ++k) {
                ranking_value +=
                    env.expected_click(x, ranking, k) * env.expected_potential_reward(x, ranking, k);
            }
            value += p * ranking_value;
        }
        per_context[static_cast<std::size_t>(i)] = value;
    });
    double total = 0.0;
    for (double v : per_context) total += v;
    return total / static_cast<double>(contexts.size());
}

PolicySpec build_logging_policy(int context_dim, int action_count, int k, double alpha,
                                RngStream& rng) {
    PolicySpec policy;
    policy.kind = PolicyKind::ThresholdMixed;
    policy.action_count = action_count;
    policy.ranking_length = k;
    policy.alpha = alpha;
    auto draw = [&](int size) {
        Eigen::VectorXd v(size);
        for (int i = 0; i < size; ++i) v(i) = rng.uniform();
        return v;
    };
    policy.score.theta_x = draw(context_dim);
    policy.score.theta_a = draw(action_count);
    policy.score.theta_xa = draw(action_count);
    return policy;
}

PolicySpec build_logging_policy(const SyntheticEnvironment& env, double alpha, LoggingScore kind,
                                RngStream& rng) {
    if (kind == LoggingScore::Random) {
        return build_logging_policy(env.context_dim(), env.action_count(), env.ranking_length(),
                                    alpha, rng);
    }
    PolicySpec policy;
    policy.kind = PolicyKind::ThresholdMixed;
    policy.action_count = env.action_count();
    policy.ranking_length = env.ranking_length();
    policy.alpha = alpha;
    policy.score.theta_x = env.theta_click_x;
    policy.score.theta_a = env.theta_click_a;
    policy.score.bilinear = env.m_click;
    Eigen::VectorXd noise(env.action_count());
    for (int a = 0; a < env.action_count(); ++a) noise(a) = rng.normal();
    policy.score.theta_xa = noise;
    return policy;
}

PolicySpec build_target_policy(const SyntheticEnvironment& env, double epsilon) {
    if (epsilon < 0.0 || epsilon > 1.0) {
        throw std::invalid_argument("build_target_policy: epsilon must lie in [0, 1]");
    }
    PolicySpec policy;
    policy.kind = PolicyKind::EpsilonGreedy;
    policy.action_count = env.action_count();
    policy.ranking_length = env.ranking_length();
    policy.epsilon = epsilon;
    policy.score.theta_x = env.theta_click_x + env.theta_reward_x;
    policy.score.theta_a = env.theta_click_a + env.theta_reward_a;
    policy.score.theta_xa = Eigen::VectorXd::Zero(env.action_count());
    policy.score.bilinear = env.m_click + env.m_reward;
    return policy;
}

PolicySpec build_target_policy(const SemiSyntheticEnvironment& env, double epsilon) {
    if (epsilon < 0.0 || epsilon > 1.0) {
        throw std::invalid_argument("build_target_policy: epsilon must lie in [0, 1]");
    }
    PolicySpec policy;
    policy.kind = PolicyKind::EpsilonGreedy;
    policy.action_count = env.action_count();
    policy.ranking_length = env.ranking_length();
    policy.epsilon = epsilon;
    policy.score.table = env.click_matrix + env.reward_matrix;
    policy.score.table_features = env.features;
    return policy;
}

}  // namespace rankope
