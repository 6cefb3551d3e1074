#pragma once

// Preference-evaluation statistics: Kendall's coefficient of concordance,
// average ranks per condition, Wilcoxon signed-rank test and Pearson's r.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace lamp::evalstats {

class StatsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Condition { LLMGenerated, WriterEdited, LLMEditedOracle, LLMEditedFull };

inline constexpr std::array<Condition, 4> kAllConditions = {
    Condition::LLMGenerated, Condition::WriterEdited, Condition::LLMEditedOracle,
    Condition::LLMEditedFull};

inline std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::LLMGenerated: return "LLMGenerated";
    case Condition::WriterEdited: return "WriterEdited";
    case Condition::LLMEditedOracle: return "LLMEditedOracle";
    case Condition::LLMEditedFull: return "LLMEditedFull";
  }
  return "?";
}

inline std::optional<Condition> parse_condition(std::string_view s) {
  for (auto c : kAllConditions) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

/// One judge's ranking of a shuffled triplet.
struct PreferenceJudgment {
  std::string triplet_id;
  std::string judge;
  std::map<int, Condition> condition_of_rank;  // rank 1..3 -> condition
  std::vector<Condition> display_order;        // slot A, B, C

  friend bool operator==(const PreferenceJudgment&, const PreferenceJudgment&) = default;
};

inline void validate(const PreferenceJudgment& j) {
  const std::string who = "judgment (" + j.triplet_id + ", " + j.judge + ")";
  if (j.condition_of_rank.size() != 3) throw StatsError(who + ": expected exactly 3 ranks");
  std::set<Condition> seen;
  for (int r = 1; r <= 3; ++r) {
    auto it = j.condition_of_rank.find(r);
    if (it == j.condition_of_rank.end()) throw StatsError(who + ": ranks are not a permutation of 1..3");
    if (!seen.insert(it->second).second) throw StatsError(who + ": condition ranked twice");
  }
  if (!seen.count(Condition::WriterEdited) || !seen.count(Condition::LLMGenerated)) {
    throw StatsError(who + ": WriterEdited and LLMGenerated must both be present");
  }
  if (!j.display_order.empty()) {
    std::set<Condition> shown(j.display_order.begin(), j.display_order.end());
    if (j.display_order.size() != 3 || shown != seen) {
      throw StatsError(who + ": display_order must list the three ranked conditions");
    }
  }
}

inline void check_permutation(const std::vector<int>& row, std::size_t n) {
  if (row.size() != n) throw StatsError("rank row has wrong length");
  std::vector<bool> seen(n + 1, false);
  for (int r : row) {
    if (r < 1 || static_cast<std::size_t>(r) > n || seen[static_cast<std::size_t>(r)]) {
      throw StatsError("rank row is not a permutation of 1..n");
    }
    seen[static_cast<std::size_t>(r)] = true;
  }
}

/// Kendall's W for an m-judge x n-item matrix of untied ranks.
inline double kendalls_w(const std::vector<std::vector<int>>& rankings) {
  const std::size_t m = rankings.size();
  if (m < 2) throw StatsError("Kendall's W needs at least 2 judges");
  const std::size_t n = rankings.front().size();
  if (n < 2) throw StatsError("Kendall's W needs at least 2 items");
  std::vector<double> sums(n, 0.0);
  for (const auto& row : rankings) {
    check_permutation(row, n);
    for (std::size_t i = 0; i < n; ++i) sums[i] += row[i];
  }
  const double mean = static_cast<double>(m) * static_cast<double>(n + 1) / 2.0;
  double s = 0.0;
  for (double r : sums) s += (r - mean) * (r - mean);
  const double md = static_cast<double>(m), nd = static_cast<double>(n);
  return 12.0 * s / (md * md * (nd * nd * nd - nd));
}

struct AgreementReport {
  std::vector<std::pair<std::string, double>> per_triplet_w;
  double mean_w = 0.0;
  std::size_t n_judgments = 0;
  std::string aggregation = "mean-per-triplet";
};

/// Per-triplet W over the judges of each triplet, averaged across triplets.
inline AgreementReport mean_agreement(const std::vector<PreferenceJudgment>& judgments) {
  std::map<std::string, std::vector<const PreferenceJudgment*>> by_triplet;
  for (const auto& j : judgments) {
    validate(j);
    by_triplet[j.triplet_id].push_back(&j);
  }
  AgreementReport rep;
  rep.n_judgments = judgments.size();
  if (by_triplet.empty()) return rep;
  std::optional<std::size_t> judges_per_triplet;
  double total = 0.0;
  for (const auto& [tid, js] : by_triplet) {
    if (js.size() < 2) throw StatsError("triplet '" + tid + "' has fewer than 2 judges");
    if (judges_per_triplet && *judges_per_triplet != js.size()) {
      throw StatsError("triplet '" + tid + "' has " + std::to_string(js.size()) +
                       " judges; expected " + std::to_string(*judges_per_triplet));
    }
    judges_per_triplet = js.size();
    // Items are the conditions of the first judgment, in a fixed order.
    std::vector<Condition> items;
    for (const auto& [r, c] : js.front()->condition_of_rank) items.push_back(c);
    std::sort(items.begin(), items.end());
    std::vector<std::vector<int>> matrix;
    for (const auto* j : js) {
      std::vector<int> row;
      for (auto c : items) {
        auto it = std::find_if(j->condition_of_rank.begin(), j->condition_of_rank.end(),
                               [c](const auto& kv) { return kv.second == c; });
        if (it == j->condition_of_rank.end()) {
          throw StatsError("triplet '" + tid + "': judges ranked different condition sets");
        }
        row.push_back(it->first);
      }
      matrix.push_back(std::move(row));
    }
    double w = kendalls_w(matrix);
    rep.per_triplet_w.emplace_back(tid, w);
    total += w;
  }
  rep.mean_w = total / static_cast<double>(rep.per_triplet_w.size());
  return rep;
}

inline std::map<Condition, double> average_ranks(const std::vector<PreferenceJudgment>& judgments) {
  if (judgments.empty()) throw StatsError("no judgments");
  std::map<Condition, std::pair<double, std::size_t>> acc;
  for (const auto& j : judgments) {
    validate(j);
    for (const auto& [rank, c] : j.condition_of_rank) {
      acc[c].first += rank;
      ++acc[c].second;
    }
  }
  std::map<Condition, double> out;
  for (const auto& [c, sn] : acc) out[c] = sn.first / static_cast<double>(sn.second);
  return out;
}

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W-)
  double w_plus = 0.0;
  double w_minus = 0.0;
  double p_value = 1.0;    // two-sided
  std::size_t n_used = 0;  // pairs with non-zero difference
  bool exact = true;
  bool degenerate = false;
  std::string zero_handling = "discard";
};

/// Signed ranks of the non-zero differences, ties averaged. Ranks are doubled
/// so that average ranks stay integral.
inline std::vector<std::pair<std::int64_t, bool>> doubled_signed_ranks(
    const std::vector<std::pair<double, double>>& pairs, std::vector<std::size_t>* tie_sizes = nullptr) {
  std::vector<std::pair<double, bool>> d;  // |diff|, positive
  for (const auto& [a, b] : pairs) {
    double diff = a - b;
    if (diff != 0.0) d.emplace_back(std::fabs(diff), diff > 0);
  }
  std::sort(d.begin(), d.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  std::vector<std::pair<std::int64_t, bool>> out(d.size());
  std::size_t i = 0;
  while (i < d.size()) {
    std::size_t k = i;
    while (k + 1 < d.size() && d[k + 1].first == d[i].first) ++k;
    // ranks i+1..k+1 averaged, doubled: (i+1 + k+1)
    const auto doubled = static_cast<std::int64_t>(i + k + 2);
    for (std::size_t t = i; t <= k; ++t) out[t] = {doubled, d[t].second};
    if (tie_sizes && k > i) tie_sizes->push_back(k - i + 1);
    i = k + 1;
  }
  return out;
}

inline constexpr std::size_t kWilcoxonExactMaxN = 25;

inline WilcoxonResult wilcoxon_signed_rank(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) throw StatsError("Wilcoxon test needs at least one pair");
  std::vector<std::size_t> ties;
  auto ranks = doubled_signed_ranks(pairs, &ties);
  WilcoxonResult res;
  res.n_used = ranks.size();
  if (ranks.empty()) {
    res.degenerate = true;
    res.p_value = 1.0;
    return res;
  }
  std::int64_t plus2 = 0, total2 = 0;
  for (const auto& [r, pos] : ranks) {
    total2 += r;
    if (pos) plus2 += r;
  }
  const std::int64_t minus2 = total2 - plus2;
  res.w_plus = static_cast<double>(plus2) / 2.0;
  res.w_minus = static_cast<double>(minus2) / 2.0;
  res.statistic = std::min(res.w_plus, res.w_minus);
  const std::int64_t t2 = std::min(plus2, minus2);
  const std::size_t n = ranks.size();

  if (n <= kWilcoxonExactMaxN) {
    // Distribution of the doubled positive-rank sum over all 2^n sign
    // assignments, accumulated as counts (an exact enumeration by DP).
    std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
    count[0] = 1.0;
    std::int64_t reach = 0;
    for (const auto& [r, pos] : ranks) {
      reach += r;
      for (std::int64_t s = reach; s >= r; --s) {
        count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - r)];
      }
    }
    double tail = 0.0;
    for (std::int64_t s = 0; s <= t2; ++s) tail += count[static_cast<std::size_t>(s)];
    res.p_value = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(n)));
    res.exact = true;
    return res;
  }

  res.exact = false;
  const double nd = static_cast<double>(n);
  const double mean = nd * (nd + 1.0) / 4.0;
  double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0;
  for (std::size_t t : ties) {
    const double td = static_cast<double>(t);
    var -= (td * td * td - td) / 48.0;
  }
  if (var <= 0.0) {
    res.p_value = 1.0;
    return res;
  }
  const double z = std::max(0.0, std::fabs(res.statistic - mean) - 0.5) / std::sqrt(var);
  res.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return res;
}

inline double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw StatsError("pearson_r: lists differ in length");
  if (x.size() < 2) throw StatsError("pearson_r: need at least 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw StatsError("pearson_r: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Paired ranks of two conditions across judgments that contain both.
inline std::vector<std::pair<double, double>> paired_ranks(const std::vector<PreferenceJudgment>& judgments,
                                                           Condition a, Condition b) {
  std::vector<std::pair<double, double>> out;
  for (const auto& j : judgments) {
    std::optional<int> ra, rb;
    for (const auto& [rank, c] : j.condition_of_rank) {
      if (c == a) ra = rank;
      if (c == b) rb = rank;
    }
    if (ra && rb) out.emplace_back(*ra, *rb);
  }
  return out;
}

// ---- JSONL interchange (annotation-service export) ------------------------

inline nlohmann::ordered_json to_json(const PreferenceJudgment& j) {
  nlohmann::ordered_json out;
  out["triplet_id"] = j.triplet_id;
  out["judge"] = j.judge;
  out["condition_of_rank"] = nlohmann::ordered_json::object();
  for (const auto& [rank, c] : j.condition_of_rank) {
    out["condition_of_rank"][std::to_string(rank)] = std::string(to_string(c));
  }
  out["display_order"] = nlohmann::ordered_json::array();
  for (auto c : j.display_order) out["display_order"].push_back(std::string(to_string(c)));
  return out;
}

inline PreferenceJudgment judgment_from_json(const nlohmann::json& j) {
  auto condition = [](const nlohmann::json& v) {
    if (!v.is_string()) throw StatsError("condition must be a string");
    auto c = parse_condition(v.get<std::string>());
    if (!c) throw StatsError("unknown condition '" + v.get<std::string>() + "'");
    return *c;
  };
  if (!j.is_object()) throw StatsError("judgment must be a JSON object");
  PreferenceJudgment out;
  try {
    out.triplet_id = j.at("triplet_id").get<std::string>();
    out.judge = j.at("judge").get<std::string>();
    for (const auto& [k, v] : j.at("condition_of_rank").items()) {
      int rank = std::stoi(k);
      out.condition_of_rank[rank] = condition(v);
    }
    if (auto it = j.find("display_order"); it != j.end()) {
      for (const auto& v : *it) out.display_order.push_back(condition(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw StatsError(std::string("malformed judgment: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw StatsError("malformed judgment: rank keys must be integers");
  }
  validate(out);
  return out;
}

}  // namespace lamp::evalstats
