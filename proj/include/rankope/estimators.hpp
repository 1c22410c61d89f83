#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rankope/core.hpp"
#include "rankope/models.hpp"
#include "rankope/policies.hpp"
#include "rankope/providers.hpp"

namespace rankope {

enum class EstimatorKind { Ips, Iips, Rips, Cips, Cdr };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& name);

// Zero-denominator handling: exact providers skip the term as zero (counted);
// estimated providers get their denominator floored.
struct WeightPolicy {
    double denominator_floor = 1e-3;
};

struct CipsOptions {
    std::optional<double> clip;   // cap applied to each click weight
    bool self_normalized = false;

    // Self-normalisation divides the weighted click-reward sum by the weight
    // mass over clicked terms and rescales by the observed click count, so an
    // identity policy pair still returns the plain sample mean.
};

struct EstimatorSpec {
    EstimatorKind kind = EstimatorKind::Ips;
    std::string name;  // display name; defaults to the kind
    std::shared_ptr<const ClickProbProvider> clicks;  // Cips / Cdr
    std::shared_ptr<const RewardPredictor> reward;    // Cdr
    WeightPolicy weights;
    CipsOptions options;
    EnumerationOptions enumeration;

    std::string display_name() const;
};

struct EstimateReport {
    std::string estimator;
    std::string provider = "none";
    double estimate = 0.0;
    int n_used = 0;
    long skipped_terms = 0;
    double weight_max = 0.0;
    double weight_mean = 0.0;
    bool approximate = false;

    std::string to_json() const;
};

// Evaluates every estimator in one pass over the dataset; per-record work
// (policy probabilities, position-marginal tables, provider marginals) is
// computed once and shared. Per-record terms are summed in record order.
std::vector<EstimateReport> evaluate_estimators(const LoggedDataset& data, const PolicyPair& pair,
                                                const std::vector<EstimatorSpec>& specs);

EstimateReport estimate_ips(const LoggedDataset& data, const PolicyPair& pair);
EstimateReport estimate_iips(const LoggedDataset& data, const PolicyPair& pair,
                             const EnumerationOptions& options = {});
EstimateReport estimate_rips(const LoggedDataset& data, const PolicyPair& pair);
EstimateReport estimate_cips(const LoggedDataset& data, const PolicyPair& pair,
                             const ClickProbProvider& clicks, const WeightPolicy& weights = {},
                             const CipsOptions& options = {},
                             const EnumerationOptions& enumeration = {});
EstimateReport estimate_cdr(const LoggedDataset& data, const PolicyPair& pair,
                            const ClickProbProvider& clicks, const RewardPredictor& reward,
                            const WeightPolicy& weights = {},
                            const EnumerationOptions& enumeration = {});

// On-policy sample mean of the per-record click-reward sum.
double on_policy_mean(const LoggedDataset& data);

}  // namespace rankope
