#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xtrial/core.hpp"
#include "xtrial/stats.hpp"

// Standardized-score effect estimation for crossover data: per-exam
// control-group z-scores, per-student treated-minus-control differences,
// asymptotic and permutation inference, plus the diagnostic battery
// (pooling, compliance, quarter, carryover, heterogeneity).

namespace xtrial::analysis {

using ExamFilter = std::function<bool(const ExamMeta&)>;

ExamFilter quiz_filter();
ExamFilter final_filter();

struct StandardizedScores {
    // (student_id, exam_id) -> z-score
    std::map<std::pair<std::string, std::string>, double> z;
    std::map<std::string, double> control_mu;
    std::map<std::string, double> control_sigma;
};

// z = (Y - mu_hat) / sigma_hat with mu_hat, sigma_hat from control-group
// scores only. Throws DataError listing every exam with fewer than two
// control scores or zero control variance.
StandardizedScores standardize(const ScoreTable& scores, const Design& design);

struct StudentDiff {
    std::string student_id;
    double d = 0.0;
    int n_treat = 0;
    int n_control = 0;
    std::string term;
};

struct DiffResult {
    std::vector<StudentDiff> diffs;
    std::vector<std::string> excluded;  // students missing a treated or control side
};

// One difference per student with at least one treated and one control exam
// passing the filter; term is taken from the contributing exams.
DiffResult student_diffs(const StandardizedScores& z, const ScoreTable& scores,
                         const Design& design, const ExamFilter& filter);

// Mean difference, sd-based standard error, t statistic and asymptotic
// two-sided p. Throws on n < 2 or zero spread.
EffectReport effect_estimate(const std::vector<StudentDiff>& diffs,
                             bool one_sided = false);

struct PermutationResult {
    double p = 1.0;
    std::vector<double> replicates;  // sampled null D-bar values
    bool pair_structure_used = true;
};

// Randomization test mirroring the design's coins: each pair's members swap
// patterns with probability 1/2 (negating both their differences), unpaired
// students flip individually. Add-one two-sided p.
PermutationResult permutation_test(const std::vector<StudentDiff>& diffs,
                                   const Design& design, int n_perm, std::uint64_t seed);

// effect_estimate + permutation_test in one report.
EffectReport analyze_diffs(const std::vector<StudentDiff>& diffs, const Design& design,
                           int n_perm, std::uint64_t seed, bool one_sided = false);

// Concatenates per-term differences; student ids must be disjoint.
std::vector<StudentDiff> pool_terms(
    const std::map<std::string, std::vector<StudentDiff>>& diffs_by_term);

struct CompliancePartition {
    std::vector<StudentDiff> compliers;
    std::vector<StudentDiff> noncompliers;
};

CompliancePartition compliance_filter(const std::vector<StudentDiff>& diffs,
                                      const std::vector<ComplianceRecord>& records,
                                      int threshold);

struct SensitivityRow {
    int threshold = 0;
    int n_compliers = 0;
    double compliance_rate = 0.0;
    std::optional<EffectReport> short_term;
    std::optional<EffectReport> long_term;
    std::optional<EffectReport> noncomplier_short;
};

std::vector<SensitivityRow> compliance_sensitivity(
    const std::vector<StudentDiff>& short_diffs,
    const std::optional<std::vector<StudentDiff>>& long_diffs,
    const std::vector<ComplianceRecord>& records, const std::vector<int>& thresholds);

struct TwoSampleT {
    double t = 0.0;
    double df = 0.0;  // Welch-Satterthwaite
    double p = 1.0;
    std::string group_a, group_b;
    double mean_a = 0.0, mean_b = 0.0;
    int n_a = 0, n_b = 0;
};

// Welch two-sample t-test of the differences between the two terms.
TwoSampleT quarter_effect_test(
    const std::map<std::string, std::vector<StudentDiff>>& diffs_by_term);

struct CarryoverReport {
    stats::FTest anova;            // across all arm-pattern groups
    stats::FTest family_contrast;  // alternating vs nested pattern families
    std::vector<std::string> dropped_groups;
};

CarryoverReport carryover_test(const std::vector<StudentDiff>& diffs, const Design& design);

struct HeterogeneityReport {
    stats::FTest full_model;       // all covariates vs intercept-only
    stats::FTest gender_only;
    stats::FTest race_only;
    stats::FTest baseline_linear;
    std::vector<std::string> columns;          // full-model column names
    std::vector<std::string> dropped_columns;  // constant columns removed
    // Figure data: per student baseline, difference, linear and loess fits.
    std::vector<std::string> student_ids;
    std::vector<double> baseline;
    std::vector<double> d;
    std::vector<double> linear_fit;
    std::vector<double> loess_fit;
};

HeterogeneityReport heterogeneity(const std::vector<StudentDiff>& diffs,
                                  const Roster& roster);

struct EffectCell {
    double d = 0.0;
    double se = 0.0;
    int n = 0;
};

struct EffectTableRow {
    std::string factor;
    bool randomized = false;  // true for the treatment rows
    std::optional<EffectCell> overall;
    std::map<std::string, EffectCell> by_term;
};

// Effect-size summary: treatment rows from the crossover estimator plus
// observational correlate rows (standardized baseline-score gaps).
std::vector<EffectTableRow> effect_table(
    const std::vector<StudentDiff>& short_diffs,
    const std::optional<std::vector<StudentDiff>>& long_diffs, const Roster& roster,
    const std::map<std::string, double>& baseline_scores);

}  // namespace xtrial::analysis
