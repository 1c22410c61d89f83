#include "rankope/core.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace rankope {

using nlohmann::json;

std::optional<std::string> validate_ranking(const Ranking& ranking, int action_count, int k) {
    if (ranking.length() != k) {
        return "wrong length: ranking has " + std::to_string(ranking.length()) +
               " slots, expected " + std::to_string(k);
    }
    std::vector<bool> seen(static_cast<std::size_t>(action_count), false);
    for (ActionId a : ranking.slots) {
        if (a < 0 || a >= action_count) {
            return "out-of-range action: id " + std::to_string(a) + " not in [0, " +
                   std::to_string(action_count) + ")";
        }
        if (seen[static_cast<std::size_t>(a)]) {
            return "duplicate action: id " + std::to_string(a) + " appears twice";
        }
        seen[static_cast<std::size_t>(a)] = true;
    }
    return std::nullopt;
}

void require_valid_ranking(const Ranking& ranking, int action_count, int k) {
    if (auto violation = validate_ranking(ranking, action_count, k)) {
        throw std::invalid_argument("invalid ranking: " + *violation);
    }
}

std::optional<int> action_position(const Ranking& ranking, ActionId a) {
    for (int i = 0; i < ranking.length(); ++i) {
        if (ranking.slots[static_cast<std::size_t>(i)] == a) return i + 1;
    }
    return std::nullopt;
}

double observed_click_reward(const LoggedRecord& record, ActionId a) {
    const auto pos = action_position(record.ranking, a);
    if (!pos) return 0.0;
    const auto idx = static_cast<std::size_t>(*pos - 1);
    if (record.clicks[idx] == 0) return 0.0;
    return record.observed_rewards[idx];
}

void LoggedDataset::validate() const {
    std::size_t i = 0;
    for (const auto& record : records) {
        if (record.context.values.size() != context_dim) {
            throw std::runtime_error("record " + std::to_string(i) + ": context dimension " +
                                     std::to_string(record.context.values.size()) +
                                     " != declared " + std::to_string(context_dim));
        }
        if (!record.context.values.allFinite()) {
            throw std::runtime_error("record " + std::to_string(i) + ": non-finite context entry");
        }
        if (auto violation = validate_ranking(record.ranking, action_count, ranking_length)) {
            throw std::runtime_error("record " + std::to_string(i) + ": " + *violation);
        }
        const auto k = static_cast<std::size_t>(ranking_length);
        if (record.clicks.size() != k || record.observed_rewards.size() != k) {
            throw std::runtime_error("record " + std::to_string(i) + ": click/reward length mismatch");
        }
        for (std::size_t p = 0; p < k; ++p) {
            if (record.clicks[p] != 0 && record.clicks[p] != 1) {
                throw std::runtime_error("record " + std::to_string(i) + ": click entry not 0/1");
            }
            if (record.clicks[p] == 0 && record.observed_rewards[p] != 0.0) {
                throw std::runtime_error("record " + std::to_string(i) +
                                         ": nonzero reward at unclicked position " + std::to_string(p + 1));
            }
            if (!std::isfinite(record.observed_rewards[p])) {
                throw std::runtime_error("record " + std::to_string(i) + ": non-finite reward");
            }
        }
        ++i;
    }
}

void save_jsonl(const LoggedDataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    json header = {{"action_count", data.action_count},
                   {"K", data.ranking_length},
                   {"d_x", data.context_dim},
                   {"seed_info", data.seed_info}};
    out << header.dump() << '\n';
    for (const auto& record : data.records) {
        json line;
        line["context"] = std::vector<double>(record.context.values.data(),
                                              record.context.values.data() + record.context.values.size());
        line["ranking"] = record.ranking.slots;
        line["clicks"] = std::vector<int>(record.clicks.begin(), record.clicks.end());
        line["observed_rewards"] = record.observed_rewards;
        out << line.dump() << '\n';
    }
}

LoggedDataset load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path);
    const json header = json::parse(line);
    LoggedDataset data;
    data.action_count = header.at("action_count").get<int>();
    data.ranking_length = header.at("K").get<int>();
    data.context_dim = header.at("d_x").get<int>();
    data.seed_info = header.value("seed_info", "");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        LoggedRecord record;
        const auto ctx = j.at("context").get<std::vector<double>>();
        record.context.values = Eigen::Map<const Eigen::VectorXd>(ctx.data(),
                                                                  static_cast<Eigen::Index>(ctx.size()));
        record.ranking.slots = j.at("ranking").get<std::vector<int>>();
        const auto clicks = j.at("clicks").get<std::vector<int>>();
        record.clicks.assign(clicks.begin(), clicks.end());
        record.observed_rewards = j.at("observed_rewards").get<std::vector<double>>();
        data.records.push_back(std::move(record));
    }
    data.validate();
    return data;
}

long permutation_count(int action_count, int k) {
    long count = 1;
    for (int i = 0; i < k; ++i) count *= action_count - i;
    return count;
}

namespace {

void extend(std::vector<Ranking>& out, Ranking& prefix, std::vector<bool>& used, int action_count, int k) {
    if (prefix.length() == k) {
        out.push_back(prefix);
        return;
    }
    for (ActionId a = 0; a < action_count; ++a) {
        if (used[static_cast<std::size_t>(a)]) continue;
        used[static_cast<std::size_t>(a)] = true;
        prefix.slots.push_back(a);
        extend(out, prefix, used, action_count, k);
        prefix.slots.pop_back();
        used[static_cast<std::size_t>(a)] = false;
    }
}

}  // namespace

long ranking_lex_index(const Ranking& ranking, int action_count) {
    const int k = ranking.length();
    std::vector<bool> used(static_cast<std::size_t>(action_count), false);
    long index = 0;
    for (int pos = 0; pos < k; ++pos) {
        const ActionId a = ranking.slots[static_cast<std::size_t>(pos)];
        int smaller_unused = 0;
        for (ActionId b = 0; b < a; ++b) {
            if (!used[static_cast<std::size_t>(b)]) ++smaller_unused;
        }
        index += smaller_unused * permutation_count(action_count - pos - 1, k - pos - 1);
        used[static_cast<std::size_t>(a)] = true;
    }
    return index;
}

std::vector<Ranking> enumerate_rankings(int action_count, int k, long cap) {
    if (k < 1 || k > action_count) {
        throw std::invalid_argument("enumerate_rankings: need 1 <= K <= action_count");
    }
    const long total = permutation_count(action_count, k);
    if (total > cap) {
        throw std::runtime_error("ranking space " + std::to_string(total) +
                                 " exceeds enumeration cap " + std::to_string(cap));
    }
    std::vector<Ranking> out;
    out.reserve(static_cast<std::size_t>(total));
    Ranking prefix;
    std::vector<bool> used(static_cast<std::size_t>(action_count), false);
    extend(out, prefix, used, action_count, k);
    return out;
}

}  // namespace rankope
