#pragma once

#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "rankope/analysis.hpp"
#include "rankope/environment.hpp"

namespace rankope {

inline constexpr const char* kVersion = "rankope 0.1.0";

// Configuration problems surface as this type so the CLI can map them to a
// dedicated exit code; messages carry the offending field path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class SweepAxis { N, K, Lambda, Alpha, Epsilon, Delta, RewardNoise };

std::string to_string(SweepAxis axis);
SweepAxis axis_from_string(const std::string& name);
std::vector<double> default_grid(SweepAxis axis);

struct EnvironmentConfig {
    std::string kind = "synthetic";  // synthetic | semisynthetic
    SyntheticConfig synthetic;
    std::string matrix_path;
    std::string features_path;
    int subsample_rows = 0;  // 0 keeps everything
    int subsample_cols = 0;
    double threshold = 2.0;
    int reduced_dim = 10;
    int ranking_length = 6;  // semi-synthetic K
};

struct PolicyConfig {
    double alpha = std::numeric_limits<double>::infinity();
    double epsilon = 0.3;
    LoggingScore logging_score = LoggingScore::Random;
    bool mixture_target = false;  // per-position blend of epsilon-greedy and softmax
    double mixture_weight = 0.5;
};

struct DataConfig {
    int n = 1000;
    int seeds = 100;
    std::uint64_t master_seed = 20260809;
    int eval_contexts = 100000;  // synthetic evaluation sample for V(pi)
};

struct ExperimentConfig {
    EnvironmentConfig environment;
    PolicyConfig policies;
    DataConfig data;
    std::vector<EstimatorPlan> estimators;
    ClickModelConfig click_model;
    EnumerationOptions enumeration;
    SweepAxis axis = SweepAxis::N;
    std::vector<double> grid = default_grid(SweepAxis::N);
    bool record_timing = true;
    int bootstrap_resamples = 1000;
    double bootstrap_level = 0.95;
    int selection_trials = 100;
};

ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& config);

// One fully built sweep point: the environment, both policies, the context
// source for logging, and the fixed evaluation sample behind V(pi).
struct BuiltWorld {
    std::shared_ptr<EnvironmentModel> env;
    PolicyPair pair;
    ContextSource source;
    std::vector<ContextVector> eval_contexts;
    std::string env_fingerprint;       // hash of drawn environment parameters
    std::string policy_fingerprint;    // hash of drawn logging-policy scores
    std::string contexts_fingerprint;  // hash of the evaluation sample
    double deterministic_fraction = 1.0;
};

// Returns a copy of the config with the axis value substituted into the field
// the axis controls (data size, ranking length, interaction strength,
// logging threshold, target epsilon, provider noise, reward-model noise).
ExperimentConfig apply_axis(ExperimentConfig config, SweepAxis axis, double value);

// Deterministically rebuilds the world for one sweep point. All random draws
// come from fixed substreams of the master seed, so two calls agree and
// non-axis draws are identical across grid values.
BuiltWorld build_world(const ExperimentConfig& config);

ReplicationConfig replication_config(const ExperimentConfig& config);

struct ResultRow {
    double sweep_value = 0.0;
    std::string estimator;
    std::string provider;
    MetricTriple metrics;
    int seeds = 0;
    double seconds = 0.0;
};

struct SweepResult {
    std::vector<ResultRow> rows;
    std::string manifest_json;
};

SweepResult run_sweep(const ExperimentConfig& config);

std::string rows_to_csv(const std::vector<ResultRow>& rows);
std::string rows_to_json(const std::vector<ResultRow>& rows);
std::vector<ResultRow> rows_from_json(const std::string& text);

// Writes results.csv / results.json / one SVG per metric, then manifest.json
// with a digest of every emitted file. format: csv | json | svg | all.
void emit_outputs(const SweepResult& result, const std::string& out_dir,
                  const std::string& format);

struct SelectionRow {
    double sweep_value = 0.0;
    std::string estimator;
    std::string provider;
    int trials = 0;
    int correct = 0;
    double accuracy = 0.0;
    double v_target = 0.0;
    double v_logging = 0.0;
};

struct SelectionSweep {
    std::vector<SelectionRow> rows;
    std::string manifest_json;
};

SelectionSweep run_selection(const ExperimentConfig& config);
std::string selection_to_csv(const std::vector<SelectionRow>& rows);
void emit_selection(const SelectionSweep& result, const std::string& out_dir);

// The embedded worked example: one context, three actions, K = 3, a point
// mass logging policy and a tabulated target policy, with the click table
// the importance-weight references were derived from.
struct ToyExample {
    std::shared_ptr<TabularEnvironment> env;
    PolicyPair pair;
};

ToyExample toy_example();

struct ToyCheck {
    std::string name;
    double recomputed = 0.0;
    double reference = 0.0;
    // Flagged entries are the documented discrepancy: the reference table's
    // value disagrees with exact enumeration, so the check passes on the
    // recomputed value and reports the tabulated one beside it.
    bool flagged = false;
    double gap = 0.0;
    bool pass = false;
};

std::vector<ToyCheck> verify_toy();

std::string format_toy_report(const std::vector<ToyCheck>& checks);
std::string format_identity_report(const std::vector<IdentityCheck>& checks);

}  // namespace rankope
