#include "xtrial/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <tuple>

#include "xtrial/matching.hpp"
#include "xtrial/rng.hpp"

namespace xtrial::design {

double DistanceConfig::weight(const std::string& field) const {
    auto it = weights.find(field);
    return it == weights.end() ? 1.0 : it->second;
}

DistanceConfig DistanceConfig::defaults() {
    DistanceConfig cfg;
    cfg.numeric_fields = {"baseline", "class_year"};
    cfg.categorical_fields = {"math_adv"};
    return cfg;
}

RosterStats RosterStats::compute(const Roster& roster, const DistanceConfig& cfg) {
    RosterStats out;
    for (const auto& field : cfg.numeric_fields) {
        if (cfg.weight(field) < 0.0) throw DataError("negative weight for field " + field);
        std::vector<double> values;
        values.reserve(roster.size());
        for (const auto& s : roster.students) values.push_back(covariate_value(s, field));
        if (values.size() < 2) {
            out.degenerate_fields.push_back(field);
            out.warnings.push_back("field " + field + ": fewer than 2 students, ignored");
            continue;
        }
        const auto ms = stats::mean_sd(values);
        if (ms.sd <= 0.0) {
            out.degenerate_fields.push_back(field);
            out.warnings.push_back("field " + field + ": zero variance, ignored in distances");
            continue;
        }
        out.numeric[field] = ms;
    }
    for (const auto& field : cfg.categorical_fields) {
        if (cfg.weight(field) < 0.0) throw DataError("negative weight for field " + field);
    }
    return out;
}

std::vector<std::vector<std::size_t>> block(const Roster& roster) {
    using Key = std::tuple<std::string, int, int, int>;
    std::map<Key, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < roster.size(); ++i) {
        const Student& s = roster.students[i];
        groups[{s.term, s.gender, s.urm, s.ap_stats}].push_back(i);
    }
    std::vector<std::vector<std::size_t>> blocks;
    blocks.reserve(groups.size());
    for (auto& [key, members] : groups) {
        std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            return roster.students[a].id < roster.students[b].id;
        });
        blocks.push_back(std::move(members));
    }
    return blocks;
}

double covariate_distance(const Student& a, const Student& b, const DistanceConfig& cfg,
                          const RosterStats& stats) {
    double ss = 0.0;
    for (const auto& field : cfg.numeric_fields) {
        auto it = stats.numeric.find(field);
        if (it == stats.numeric.end()) continue;  // degenerate field
        const double za = (covariate_value(a, field) - it->second.mean) / it->second.sd;
        const double zb = (covariate_value(b, field) - it->second.mean) / it->second.sd;
        const double d = za - zb;
        ss += cfg.weight(field) * d * d;
    }
    for (const auto& field : cfg.categorical_fields) {
        const double d = covariate_value(a, field) - covariate_value(b, field);
        ss += cfg.weight(field) * d * d;
    }
    return std::sqrt(ss);
}

namespace {

// Integer scaling for exact matching; also leaves room for the per-student
// tie-break weights used in odd blocks.
std::vector<std::vector<std::int64_t>> scale_costs(
    const std::vector<std::vector<double>>& dist, std::int64_t multiplier) {
    const std::size_t n = dist.size();
    double max_cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) max_cost = std::max(max_cost, std::fabs(dist[i][j]));
        }
    }
    const double scale = max_cost > 0.0 ? std::ldexp(1.0, 40) / max_cost : 1.0;
    std::vector<std::vector<std::int64_t>> scaled(n, std::vector<std::int64_t>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) scaled[i][j] = std::llround(dist[i][j] * scale) * multiplier;
        }
    }
    return scaled;
}

}  // namespace

PairingResult optimal_pairing(std::size_t block_size,
                              const std::vector<std::vector<double>>& dist,
                              const std::vector<std::string>& ids) {
    if (dist.size() != block_size || ids.size() != block_size) {
        throw DataError("optimal_pairing: size mismatch");
    }
    PairingResult out;
    if (block_size == 0) return out;
    if (block_size == 1) {
        out.leftover = 0;
        return out;
    }

    const bool odd = block_size % 2 != 0;
    if (!odd) {
        const auto cost = scale_costs(dist, 1);
        const auto mate = matching::min_weight_perfect_matching_int(cost);
        for (std::size_t i = 0; i < block_size; ++i) {
            const auto j = static_cast<std::size_t>(mate[i]);
            if (i < j) {
                out.pairs.emplace_back(i, j);
                out.total_cost += dist[i][j];
            }
        }
        return out;
    }

    // Odd block: add a phantom member whose edges carry only a tiny
    // id-rank tie-break. The member matched to it is dropped, so the
    // solver minimizes (residual cost, dropped id rank) lexicographically.
    // Members are already id-sorted, so rank == index.
    const std::size_t n = block_size + 1;
    auto cost = scale_costs(dist, static_cast<std::int64_t>(n));
    for (auto& row : cost) row.push_back(0);
    cost.emplace_back(n, 0);
    for (std::size_t i = 0; i < block_size; ++i) {
        cost[i][block_size] = static_cast<std::int64_t>(i);
        cost[block_size][i] = static_cast<std::int64_t>(i);
    }
    const auto mate = matching::min_weight_perfect_matching_int(cost);
    out.leftover = static_cast<std::size_t>(mate[block_size]);
    for (std::size_t i = 0; i < block_size; ++i) {
        const auto j = static_cast<std::size_t>(mate[i]);
        if (j == block_size) continue;
        if (i < j) {
            out.pairs.emplace_back(i, j);
            out.total_cost += dist[i][j];
        }
    }
    return out;
}

Design assign_arms(const std::vector<std::pair<std::string, std::string>>& pairs,
                   const std::vector<std::string>& leftovers, std::uint64_t seed, int units,
                   bool paper_mode) {
    const auto patterns = admissible_patterns(units, paper_mode);

    // Complementary families, each represented by its lexicographically
    // smaller member. Paper mode: {CTCT/TCTC} and {CTTC/TCCT}.
    std::vector<ArmPattern> family_reps;
    std::set<std::string> seen;
    for (const auto& p : patterns) {
        if (seen.insert(p.family()).second) family_reps.push_back(ArmPattern::parse(p.family()));
    }

    // Canonical processing order so the coin stream is independent of how
    // the pairing was produced.
    std::vector<std::pair<std::string, std::string>> ordered = pairs;
    for (auto& pr : ordered) {
        if (pr.second < pr.first) std::swap(pr.first, pr.second);
    }
    std::sort(ordered.begin(), ordered.end());
    std::vector<std::string> ordered_leftovers = leftovers;
    std::sort(ordered_leftovers.begin(), ordered_leftovers.end());

    Design design;
    design.seed = seed;
    design.units = units;
    design.paper_mode = paper_mode;
    design.pairs = ordered;
    design.leftovers = ordered_leftovers;

    rng::Engine coin(rng::splitmix64(seed));
    for (const auto& [a, b] : ordered) {
        const auto& rep = family_reps[coin.below(family_reps.size())];
        const bool a_gets_rep = coin.coin();
        design.assignment[a] = a_gets_rep ? rep : rep.complement();
        design.assignment[b] = a_gets_rep ? rep.complement() : rep;
    }
    for (const auto& id : ordered_leftovers) {
        design.assignment[id] = patterns[coin.below(patterns.size())];
    }
    return design;
}

Design make_design(const Roster& roster, const DistanceConfig& cfg, std::uint64_t seed,
                   int units, bool paper_mode) {
    const auto violations = validate_roster(roster);
    if (!violations.empty()) {
        throw DataError("invalid roster: " + violations.front() +
                        (violations.size() > 1
                             ? " (+" + std::to_string(violations.size() - 1) + " more)"
                             : ""));
    }
    const auto roster_stats = RosterStats::compute(roster, cfg);
    const auto blocks = block(roster);

    std::vector<std::pair<std::string, std::string>> pairs;
    std::vector<std::string> leftovers;
    std::vector<std::vector<std::string>> block_ids;
    for (const auto& members : blocks) {
        const std::size_t bn = members.size();
        std::vector<std::string> ids;
        ids.reserve(bn);
        for (const auto idx : members) ids.push_back(roster.students[idx].id);
        block_ids.push_back(ids);

        std::vector<std::vector<double>> dist(bn, std::vector<double>(bn, 0.0));
        for (std::size_t i = 0; i < bn; ++i) {
            for (std::size_t j = i + 1; j < bn; ++j) {
                const double d = covariate_distance(roster.students[members[i]],
                                                    roster.students[members[j]], cfg,
                                                    roster_stats);
                dist[i][j] = d;
                dist[j][i] = d;
            }
        }
        const auto pairing = optimal_pairing(bn, dist, ids);
        for (const auto& [i, j] : pairing.pairs) pairs.emplace_back(ids[i], ids[j]);
        if (pairing.leftover) leftovers.push_back(ids[*pairing.leftover]);
    }

    Design design = assign_arms(pairs, leftovers, seed, units, paper_mode);
    design.blocks = std::move(block_ids);
    return design;
}

namespace {

struct PatternGroups {
    std::vector<std::string> names;                       // sorted pattern strings
    std::map<std::string, std::size_t> index;             // pattern -> group
    std::vector<std::vector<std::size_t>> members;        // roster indices
};

PatternGroups group_by_pattern(const Design& design, const Roster& roster) {
    PatternGroups g;
    const auto expected = admissible_patterns(design.units, design.paper_mode);
    for (const auto& p : expected) g.names.push_back(p.str());
    std::sort(g.names.begin(), g.names.end());
    for (std::size_t i = 0; i < g.names.size(); ++i) g.index[g.names[i]] = i;
    g.members.resize(g.names.size());
    for (std::size_t i = 0; i < roster.size(); ++i) {
        const auto it = design.assignment.find(roster.students[i].id);
        if (it == design.assignment.end()) {
            throw DataError("student \"" + roster.students[i].id + "\" is not assigned");
        }
        const auto gi = g.index.find(it->second.str());
        if (gi == g.index.end()) {
            throw DataError("pattern " + it->second.str() + " is not admissible here");
        }
        g.members[gi->second].push_back(i);
    }
    for (std::size_t k = 0; k < g.names.size(); ++k) {
        if (g.members[k].empty()) {
            throw DataError("arm-pattern group " + g.names[k] + " is empty");
        }
    }
    return g;
}

// One-way ANOVA F across groups of values.
BalanceRow anova_row(const std::string& covariate,
                     const std::vector<std::vector<double>>& groups) {
    std::size_t n = 0;
    double grand = 0.0;
    for (const auto& g : groups) {
        n += g.size();
        grand = std::accumulate(g.begin(), g.end(), grand);
    }
    grand /= static_cast<double>(n);
    double ssb = 0.0, ssw = 0.0;
    for (const auto& g : groups) {
        const double gm =
            std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
        ssb += static_cast<double>(g.size()) * (gm - grand) * (gm - grand);
        for (const double v : g) ssw += (v - gm) * (v - gm);
    }
    const int df1 = static_cast<int>(groups.size()) - 1;
    const int df2 = static_cast<int>(n - groups.size());
    if (df1 < 1 || df2 < 1) throw DataError("anova: not enough groups or observations");
    BalanceRow row{covariate, "anova_f", 0.0, df1, df2, 1.0};
    if (ssw <= 0.0) {
        row.stat = ssb > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        row.p = ssb > 0.0 ? 0.0 : 1.0;
        return row;
    }
    row.stat = (ssb / df1) / (ssw / df2);
    row.p = stats::f_tail(row.stat, df1, df2);
    return row;
}

// Chi-square independence test on a groups x categories count table.
// Categories with zero total count are dropped.
BalanceRow chisq_row(const std::string& covariate,
                     const std::vector<std::map<int, std::size_t>>& counts) {
    std::set<int> category_set;
    for (const auto& g : counts) {
        for (const auto& [cat, cnt] : g) {
            if (cnt > 0) category_set.insert(cat);
        }
    }
    const std::vector<int> categories(category_set.begin(), category_set.end());
    const std::size_t r = counts.size();
    const std::size_t c = categories.size();
    if (c < 2) {
        // Constant covariate: nothing to test.
        return {covariate, "chisq", 0.0, 0, 0, 1.0};
    }
    std::vector<double> row_tot(r, 0.0), col_tot(c, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            const auto it = counts[i].find(categories[j]);
            const double o = it == counts[i].end() ? 0.0 : static_cast<double>(it->second);
            row_tot[i] += o;
            col_tot[j] += o;
            total += o;
        }
    }
    double x2 = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            const double expected = row_tot[i] * col_tot[j] / total;
            if (expected <= 0.0) continue;
            const auto it = counts[i].find(categories[j]);
            const double o = it == counts[i].end() ? 0.0 : static_cast<double>(it->second);
            x2 += (o - expected) * (o - expected) / expected;
        }
    }
    const int df = static_cast<int>((r - 1) * (c - 1));
    return {covariate, "chisq", x2, df, 0, stats::chisq_tail(x2, df)};
}

}  // namespace

std::vector<BalanceRow> balance_report(const Design& design, const Roster& roster,
                                       const std::map<std::string, double>& baseline_scores) {
    const auto groups = group_by_pattern(design, roster);

    std::vector<BalanceRow> rows;

    std::vector<std::vector<double>> baseline(groups.names.size());
    for (std::size_t k = 0; k < groups.members.size(); ++k) {
        for (const auto idx : groups.members[k]) {
            const auto& s = roster.students[idx];
            const auto it = baseline_scores.find(s.id);
            baseline[k].push_back(it != baseline_scores.end() ? it->second : s.baseline);
        }
    }
    rows.push_back(anova_row("baseline", baseline));

    auto count_table = [&](const std::string& field) {
        std::vector<std::map<int, std::size_t>> counts(groups.members.size());
        for (std::size_t k = 0; k < groups.members.size(); ++k) {
            for (const auto idx : groups.members[k]) {
                const int v =
                    static_cast<int>(covariate_value(roster.students[idx], field));
                counts[k][v] += 1;
            }
        }
        return counts;
    };
    rows.push_back(chisq_row("class_year", count_table("class_year")));
    for (const std::string field : {"gender", "urm", "ap_stats", "math_adv"}) {
        rows.push_back(chisq_row(field, count_table(field)));
    }
    return rows;
}

ProjectionData figure1_data(const Design& design, const Roster& roster,
                            std::uint64_t strawman_seed) {
    const std::size_t n = roster.size();
    if (n < 2) throw DataError("figure1_data: need at least 2 students");

    const auto& fields = covariate_fields();
    stats::Matrix encoded(n, fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) {
            col[i] = covariate_value(roster.students[i], fields[j]);
        }
        const auto ms = stats::mean_sd(col);
        for (std::size_t i = 0; i < n; ++i) {
            encoded(i, j) = ms.sd > 0.0 ? (col[i] - ms.mean) / ms.sd : 0.0;
        }
    }
    const int k = static_cast<int>(std::min<std::size_t>(3, fields.size()));
    const auto scores = stats::pca_project(encoded, k);

    ProjectionData out;
    out.ids.reserve(n);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) {
        out.ids.push_back(roster.students[i].id);
        index[roster.students[i].id] = i;
        std::array<double, 3> row{0.0, 0.0, 0.0};
        for (int c = 0; c < k; ++c) row[static_cast<std::size_t>(c)] = scores(i, c);
        out.scores.push_back(row);
    }

    auto edge_length = [&](std::size_t a, std::size_t b) {
        double ss = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            const double d = out.scores[a][c] - out.scores[b][c];
            ss += d * d;
        }
        return std::sqrt(ss);
    };

    double matched_total = 0.0;
    for (const auto& [a, b] : design.pairs) {
        const auto ia = index.find(a);
        const auto ib = index.find(b);
        if (ia == index.end() || ib == index.end()) {
            throw DataError("design pair references unknown student");
        }
        out.matched_edges.emplace_back(ia->second, ib->second);
        matched_total += edge_length(ia->second, ib->second);
    }

    // Complete-randomization strawman: shuffle and pair consecutively.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng::Engine gen(rng::splitmix64(strawman_seed ^ 0xf1f1f1f1f1f1f1f1ULL));
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[gen.below(i)]);
    }
    double random_total = 0.0;
    for (std::size_t i = 0; i + 1 < n; i += 2) {
        out.random_edges.emplace_back(order[i], order[i + 1]);
        random_total += edge_length(order[i], order[i + 1]);
    }

    if (!out.matched_edges.empty()) {
        out.matched_mean_edge_length = matched_total / static_cast<double>(out.matched_edges.size());
    }
    if (!out.random_edges.empty()) {
        out.random_mean_edge_length = random_total / static_cast<double>(out.random_edges.size());
    }
    return out;
}

}  // namespace xtrial::design
