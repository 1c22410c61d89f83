#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rankope {

using ActionId = int;

// Context features. row_id is set when the context came from a finite table
// (semi-synthetic users, toy worlds) and -1 for sampled continuous contexts.
struct ContextVector {
    Eigen::VectorXd values;
    int row_id = -1;
};

// An ordered K-permutation of action ids; the unit a policy emits.
struct Ranking {
    std::vector<ActionId> slots;

    int length() const { return static_cast<int>(slots.size()); }
    bool operator==(const Ranking& other) const { return slots == other.slots; }
};

// nullopt means the ranking is a valid K-permutation over [0, action_count);
// otherwise a description naming the violated rule.
std::optional<std::string> validate_ranking(const Ranking& ranking, int action_count, int k);

// Throws std::invalid_argument on violation.
void require_valid_ranking(const Ranking& ranking, int action_count, int k);

// 1-based position of `a` in the ranking, or nullopt when unranked
// (possible only when K < |A|).
std::optional<int> action_position(const Ranking& ranking, ActionId a);

// One logged interaction. observed_rewards carries the censored product CR:
// position k holds R(k) when clicks[k] == 1 and exactly 0 otherwise.
struct LoggedRecord {
    ContextVector context;
    Ranking ranking;
    std::vector<std::uint8_t> clicks;
    std::vector<double> observed_rewards;
};

// Observed (click-censored) reward attributed to action `a`:
// its slot's observed reward when ranked and clicked, 0 otherwise.
double observed_click_reward(const LoggedRecord& record, ActionId a);

struct LoggedDataset {
    std::vector<LoggedRecord> records;
    int action_count = 0;
    int ranking_length = 0;
    int context_dim = 0;
    std::string seed_info;

    std::size_t size() const { return records.size(); }

    // Checks every record against the declared dimensions, the permutation
    // invariant, and reward censoring. Throws on the first violation.
    void validate() const;
};

// Line-delimited JSON: a header object followed by one record object per line.
void save_jsonl(const LoggedDataset& data, const std::string& path);
LoggedDataset load_jsonl(const std::string& path);

// Number of K-permutations of |A| actions, i.e. |A|!/(|A|-K)!.
long permutation_count(int action_count, int k);

// Exact enumeration is only attempted up to this many rankings (P(8,8)).
inline constexpr long kEnumerationCap = 40320;

// All K-permutations over [0, action_count) in lexicographic order.
// Throws when the space exceeds `cap`.
std::vector<Ranking> enumerate_rankings(int action_count, int k, long cap = kEnumerationCap);

// Index of a valid ranking within the lexicographic enumeration above.
long ranking_lex_index(const Ranking& ranking, int action_count);

}  // namespace rankope
