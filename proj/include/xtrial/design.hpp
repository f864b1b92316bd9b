#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xtrial/core.hpp"
#include "xtrial/stats.hpp"

// Blocking, optimal non-bipartite matching of similar students, complementary
// arm assignment and covariate-balance reporting.

namespace xtrial::design {

struct DistanceConfig {
    std::vector<std::string> numeric_fields;      // z-scored before use
    std::vector<std::string> categorical_fields;  // used as 0/1 indicators
    std::map<std::string, double> weights;        // per-field, default 1

    double weight(const std::string& field) const;

    // Matching covariates from the study protocol: baseline score, class
    // year (ordinal) and math background. Blocking covers the rest.
    static DistanceConfig defaults();
};

// z-scoring statistics for the numeric distance fields, computed once per
// roster. Zero-variance fields are flagged and contribute no distance.
struct RosterStats {
    std::map<std::string, stats::MeanSd> numeric;
    std::vector<std::string> degenerate_fields;
    std::vector<std::string> warnings;

    static RosterStats compute(const Roster& roster, const DistanceConfig& cfg);
};

// Partition of roster indices by the exact stratum tuple (term, gender, urm,
// ap_stats); blocks ordered by tuple, students ordered by id within a block.
std::vector<std::vector<std::size_t>> block(const Roster& roster);

double covariate_distance(const Student& a, const Student& b, const DistanceConfig& cfg,
                          const RosterStats& stats);

struct PairingResult {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // indices into the block
    std::optional<std::size_t> leftover;
    double total_cost = 0.0;
};

// Globally optimal minimum-cost pairing of a block. For odd blocks the
// dropped student is the one whose removal yields the cheapest optimal
// matching, ties broken by smallest id. `dist(i, j)` indexes block members.
PairingResult optimal_pairing(std::size_t block_size,
                              const std::vector<std::vector<double>>& dist,
                              const std::vector<std::string>& ids);

// Full design pipeline: block, pair within blocks, assign complementary arms.
Design make_design(const Roster& roster, const DistanceConfig& cfg, std::uint64_t seed,
                   int units = 4, bool paper_mode = true);

// Arm assignment alone, for a given pairing. Pairs get complementary
// patterns; each leftover draws a uniform admissible pattern.
Design assign_arms(const std::vector<std::pair<std::string, std::string>>& pairs,
                   const std::vector<std::string>& leftovers, std::uint64_t seed, int units,
                   bool paper_mode);

struct BalanceRow {
    std::string covariate;
    std::string test;  // "anova_f" or "chisq"
    double stat = 0.0;
    int df1 = 0;
    int df2 = 0;  // 0 for chi-square
    double p = 1.0;
};

// Table-style balance diagnostics across the arm-pattern groups: one-way
// ANOVA for the baseline score, chi-square independence for class year and
// the binary covariates.
std::vector<BalanceRow> balance_report(const Design& design, const Roster& roster,
                                       const std::map<std::string, double>& baseline_scores);

struct ProjectionData {
    std::vector<std::string> ids;                   // roster order
    std::vector<std::array<double, 3>> scores;      // top-3 component scores
    std::vector<std::pair<std::size_t, std::size_t>> matched_edges;
    std::vector<std::pair<std::size_t, std::size_t>> random_edges;
    double matched_mean_edge_length = 0.0;
    double random_mean_edge_length = 0.0;
};

// Per-student top-3 PCA scores of the standardized covariates plus pair
// edges for the matched design and for a uniformly random strawman pairing.
ProjectionData figure1_data(const Design& design, const Roster& roster,
                            std::uint64_t strawman_seed);

}  // namespace xtrial::design
