#include "rankope/providers.hpp"

#include <sstream>

namespace rankope {

Eigen::VectorXd NoisyClickProvider::marginals(const ContextVector& x,
                                              const PolicySpec& policy) const {
    const int n = policy.action_count;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    const long total = permutation_count(n, policy.ranking_length);
    if (total > options_.cap) {
        if (!options_.allow_monte_carlo) {
            throw std::runtime_error("noisy click marginals: ranking space exceeds cap " +
                                     std::to_string(options_.cap));
        }
        RngStream rng(options_.mc_seed);
        const PreparedPolicy prepared(policy, x);
        for (int s = 0; s < options_.mc_samples; ++s) {
            const Ranking ranking = prepared.sample(rng);
            for (int k = 0; k < ranking.length(); ++k) {
                const ActionId a = ranking.slots[static_cast<std::size_t>(k)];
                out(a) += oracle_.per_ranking(x, a, ranking);
            }
        }
        out /= static_cast<double>(options_.mc_samples);
        return out;
    }
    const PreparedPolicy prepared(policy, x);
    for (const Ranking& ranking : enumerate_rankings(n, policy.ranking_length, options_.cap)) {
        const double p = prepared.ranking_probability(ranking);
        if (p == 0.0) continue;
        for (int k = 0; k < ranking.length(); ++k) {
            const ActionId a = ranking.slots[static_cast<std::size_t>(k)];
            out(a) += p * oracle_.per_ranking(x, a, ranking);
        }
    }
    return out;
}

std::string NoisyClickProvider::kind() const {
    std::ostringstream out;
    out << "noisy(" << oracle_.delta() << ")";
    return out.str();
}

Eigen::VectorXd CachingClickProvider::marginals(const ContextVector& x,
                                                const PolicySpec& policy) const {
    std::uint64_t key = fnv1a64(x.values.data(),
                                static_cast<std::size_t>(x.values.size()) * sizeof(double));
    key = mix64(key ^ reinterpret_cast<std::uintptr_t>(&policy) ^
                static_cast<std::uint64_t>(x.row_id + 1));
    const auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Eigen::VectorXd value = inner_->marginals(x, policy);
    cache_.emplace(key, value);
    return value;
}

}  // namespace rankope
