#include "xtrial/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "xtrial/rng.hpp"

namespace xtrial::analysis {

ExamFilter quiz_filter() {
    return [](const ExamMeta& e) { return e.kind == ExamKind::Quiz; };
}

ExamFilter final_filter() {
    return [](const ExamMeta& e) { return e.kind == ExamKind::FinalSection; };
}

StandardizedScores standardize(const ScoreTable& scores, const Design& design) {
    StandardizedScores out;
    std::vector<std::string> bad_exams;
    for (const auto& exam : scores.exams) {
        std::vector<double> control;
        for (const auto& [key, y] : scores.values) {
            if (key.second != exam.exam_id) continue;
            if (!treatment_of(design, exam, key.first)) control.push_back(y);
        }
        if (control.size() < 2) {
            bad_exams.push_back(exam.exam_id + " (fewer than 2 control scores)");
            continue;
        }
        const auto ms = stats::mean_sd(control);
        if (ms.sd <= 0.0) {
            bad_exams.push_back(exam.exam_id + " (zero control variance)");
            continue;
        }
        out.control_mu[exam.exam_id] = ms.mean;
        out.control_sigma[exam.exam_id] = ms.sd;
    }
    if (!bad_exams.empty()) {
        std::string msg = "standardize: cannot standardize exam(s):";
        for (const auto& e : bad_exams) msg += " " + e;
        throw DataError(msg);
    }
    for (const auto& [key, y] : scores.values) {
        const auto mu = out.control_mu.find(key.second);
        if (mu == out.control_mu.end()) {
            throw DataError("standardize: score references unknown exam \"" + key.second + "\"");
        }
        out.z[key] = (y - mu->second) / out.control_sigma.at(key.second);
    }
    return out;
}

DiffResult student_diffs(const StandardizedScores& z, const ScoreTable& scores,
                         const Design& design, const ExamFilter& filter) {
    struct Acc {
        double treat_sum = 0.0;
        int treat_n = 0;
        double control_sum = 0.0;
        int control_n = 0;
        std::string term;
    };
    std::map<std::string, Acc> acc;
    for (const auto& exam : scores.exams) {
        if (!filter(exam)) continue;
        for (const auto& [key, zij] : z.z) {
            if (key.second != exam.exam_id) continue;
            auto& a = acc[key.first];
            if (a.term.empty()) a.term = exam.term;
            if (treatment_of(design, exam, key.first)) {
                a.treat_sum += zij;
                a.treat_n += 1;
            } else {
                a.control_sum += zij;
                a.control_n += 1;
            }
        }
    }
    DiffResult out;
    for (const auto& [id, a] : acc) {
        if (a.treat_n < 1 || a.control_n < 1) {
            out.excluded.push_back(id);
            continue;
        }
        StudentDiff d;
        d.student_id = id;
        d.d = a.treat_sum / a.treat_n - a.control_sum / a.control_n;
        d.n_treat = a.treat_n;
        d.n_control = a.control_n;
        d.term = a.term;
        out.diffs.push_back(std::move(d));
    }
    return out;
}

EffectReport effect_estimate(const std::vector<StudentDiff>& diffs, bool one_sided) {
    if (diffs.size() < 2) {
        throw NumericError("effect_estimate: need at least 2 student differences");
    }
    std::vector<double> values;
    values.reserve(diffs.size());
    for (const auto& d : diffs) values.push_back(d.d);
    const bool all_equal =
        std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; });
    const auto ms = stats::mean_sd(values);
    if (all_equal || ms.sd <= 0.0) {
        throw NumericError("effect_estimate: all differences are identical (zero spread)");
    }
    EffectReport report;
    report.n_used = static_cast<int>(values.size());
    report.d_bar = ms.mean;
    report.se = ms.sd / std::sqrt(static_cast<double>(values.size()));
    report.t_stat = report.d_bar / report.se;
    report.df = report.n_used - 1;
    const double two_sided = stats::t_tail_two_sided(report.t_stat, report.df);
    report.p_asymptotic = one_sided
                              ? (report.t_stat >= 0.0 ? two_sided / 2.0 : 1.0 - two_sided / 2.0)
                              : two_sided;
    return report;
}

PermutationResult permutation_test(const std::vector<StudentDiff>& diffs,
                                   const Design& design, int n_perm, std::uint64_t seed) {
    if (n_perm < 100) throw NumericError("permutation_test: need at least 100 replicates");
    if (diffs.empty()) throw NumericError("permutation_test: no differences");

    // Flip units: members of a pair flip together, everyone else alone.
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < diffs.size(); ++i) index[diffs[i].student_id] = i;

    std::vector<std::vector<std::size_t>> flip_units;
    std::vector<bool> claimed(diffs.size(), false);
    for (const auto& [a, b] : design.pairs) {
        const auto ia = index.find(a);
        const auto ib = index.find(b);
        if (ia != index.end() && ib != index.end()) {
            flip_units.push_back({ia->second, ib->second});
            claimed[ia->second] = true;
            claimed[ib->second] = true;
        }
    }
    PermutationResult out;
    out.pair_structure_used = !flip_units.empty();
    for (std::size_t i = 0; i < diffs.size(); ++i) {
        if (!claimed[i]) flip_units.push_back({i});
    }

    const double n = static_cast<double>(diffs.size());
    double observed = 0.0;
    for (const auto& d : diffs) observed += d.d;
    observed /= n;

    // Per-unit sums; a replicate only needs one coin per unit.
    std::vector<double> unit_sums;
    unit_sums.reserve(flip_units.size());
    for (const auto& unit : flip_units) {
        double s = 0.0;
        for (const auto i : unit) s += diffs[i].d;
        unit_sums.push_back(s);
    }

    out.replicates.resize(static_cast<std::size_t>(n_perm));
    int at_least_as_extreme = 0;
    const double threshold = std::fabs(observed);
    for (int r = 0; r < n_perm; ++r) {
        rng::Engine gen(rng::derive(seed, static_cast<std::uint64_t>(r)));
        double total = 0.0;
        for (const double s : unit_sums) total += gen.coin() ? s : -s;
        const double dbar = total / n;
        out.replicates[static_cast<std::size_t>(r)] = dbar;
        if (std::fabs(dbar) >= threshold - 1e-15) ++at_least_as_extreme;
    }
    out.p = (1.0 + at_least_as_extreme) / (1.0 + n_perm);
    return out;
}

EffectReport analyze_diffs(const std::vector<StudentDiff>& diffs, const Design& design,
                           int n_perm, std::uint64_t seed, bool one_sided) {
    EffectReport report = effect_estimate(diffs, one_sided);
    if (n_perm > 0) {
        const auto perm = permutation_test(diffs, design, n_perm, seed);
        report.p_permutation = perm.p;
        report.n_permutations = n_perm;
    }
    return report;
}

std::vector<StudentDiff> pool_terms(
    const std::map<std::string, std::vector<StudentDiff>>& diffs_by_term) {
    std::vector<StudentDiff> out;
    std::set<std::string> seen;
    for (const auto& [term, diffs] : diffs_by_term) {
        for (const auto& d : diffs) {
            if (!seen.insert(d.student_id).second) {
                throw DataError("pool_terms: student \"" + d.student_id +
                                "\" appears in more than one term");
            }
            out.push_back(d);
        }
    }
    return out;
}

CompliancePartition compliance_filter(const std::vector<StudentDiff>& diffs,
                                      const std::vector<ComplianceRecord>& records,
                                      int threshold) {
    std::map<std::string, int> completed;
    for (const auto& r : records) completed[r.student_id] = r.completed;
    CompliancePartition out;
    for (const auto& d : diffs) {
        const auto it = completed.find(d.student_id);
        if (it == completed.end()) {
            throw DataError("compliance_filter: no record for student \"" + d.student_id +
                            "\"");
        }
        (it->second >= threshold ? out.compliers : out.noncompliers).push_back(d);
    }
    return out;
}

std::vector<SensitivityRow> compliance_sensitivity(
    const std::vector<StudentDiff>& short_diffs,
    const std::optional<std::vector<StudentDiff>>& long_diffs,
    const std::vector<ComplianceRecord>& records, const std::vector<int>& thresholds) {
    std::vector<SensitivityRow> rows;
    for (const int threshold : thresholds) {
        SensitivityRow row;
        row.threshold = threshold;
        const auto part = compliance_filter(short_diffs, records, threshold);
        row.n_compliers = static_cast<int>(part.compliers.size());
        row.compliance_rate = short_diffs.empty()
                                  ? 0.0
                                  : static_cast<double>(part.compliers.size()) /
                                        static_cast<double>(short_diffs.size());
        if (part.compliers.size() >= 2) {
            row.short_term = effect_estimate(part.compliers);
        }
        if (part.noncompliers.size() >= 2) {
            try {
                row.noncomplier_short = effect_estimate(part.noncompliers);
            } catch (const NumericError&) {
                // zero spread among a couple of noncompliers: leave empty
            }
        }
        if (long_diffs) {
            const auto long_part = compliance_filter(*long_diffs, records, threshold);
            if (long_part.compliers.size() >= 2) {
                row.long_term = effect_estimate(long_part.compliers);
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

TwoSampleT quarter_effect_test(
    const std::map<std::string, std::vector<StudentDiff>>& diffs_by_term) {
    if (diffs_by_term.size() != 2) {
        throw DataError("quarter_effect_test: exactly two terms required, got " +
                        std::to_string(diffs_by_term.size()));
    }
    auto it = diffs_by_term.begin();
    const auto& [term_a, diffs_a] = *it;
    ++it;
    const auto& [term_b, diffs_b] = *it;
    if (diffs_a.size() < 2 || diffs_b.size() < 2) {
        throw DataError("quarter_effect_test: each term needs at least 2 differences");
    }
    std::vector<double> a, b;
    for (const auto& d : diffs_a) a.push_back(d.d);
    for (const auto& d : diffs_b) b.push_back(d.d);
    const auto ma = stats::mean_sd(a);
    const auto mb = stats::mean_sd(b);
    const double va = ma.sd * ma.sd / static_cast<double>(a.size());
    const double vb = mb.sd * mb.sd / static_cast<double>(b.size());

    TwoSampleT out;
    out.group_a = term_a;
    out.group_b = term_b;
    out.mean_a = ma.mean;
    out.mean_b = mb.mean;
    out.n_a = static_cast<int>(a.size());
    out.n_b = static_cast<int>(b.size());
    if (va + vb <= 0.0) {
        out.t = 0.0;
        out.df = static_cast<double>(a.size() + b.size() - 2);
        out.p = 1.0;
        return out;
    }
    out.t = (ma.mean - mb.mean) / std::sqrt(va + vb);
    out.df = (va + vb) * (va + vb) /
             (va * va / (static_cast<double>(a.size()) - 1.0) +
              vb * vb / (static_cast<double>(b.size()) - 1.0));
    out.p = stats::t_tail_two_sided(out.t, out.df);
    return out;
}

namespace {

stats::FTest anova_groups(const std::vector<std::vector<double>>& groups) {
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
    stats::FTest out;
    out.df1 = static_cast<int>(groups.size()) - 1;
    out.df2 = static_cast<int>(n - groups.size());
    if (out.df1 < 1 || out.df2 < 1) {
        throw DataError("carryover anova: not enough groups or observations");
    }
    if (ssw <= 0.0) {
        out.f = ssb > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        out.p = ssb > 0.0 ? 0.0 : 1.0;
        return out;
    }
    out.f = (ssb / out.df1) / (ssw / out.df2);
    out.p = stats::f_tail(out.f, out.df1, out.df2);
    return out;
}

}  // namespace

CarryoverReport carryover_test(const std::vector<StudentDiff>& diffs, const Design& design) {
    std::map<std::string, std::vector<double>> by_pattern;
    std::map<std::string, std::vector<double>> by_family;
    for (const auto& d : diffs) {
        const auto it = design.assignment.find(d.student_id);
        if (it == design.assignment.end()) {
            throw DataError("carryover_test: student \"" + d.student_id + "\" not assigned");
        }
        by_pattern[it->second.str()].push_back(d.d);
        by_family[it->second.family()].push_back(d.d);
    }

    CarryoverReport out;
    std::vector<std::vector<double>> pattern_groups;
    for (auto& [name, values] : by_pattern) {
        if (values.size() < 2) {
            out.dropped_groups.push_back(name);
        } else {
            pattern_groups.push_back(std::move(values));
        }
    }
    if (pattern_groups.size() < 2) {
        throw DataError("carryover_test: fewer than 2 usable arm-pattern groups");
    }
    out.anova = anova_groups(pattern_groups);

    std::vector<std::vector<double>> family_groups;
    for (auto& [name, values] : by_family) {
        if (values.size() >= 2) family_groups.push_back(std::move(values));
    }
    if (family_groups.size() >= 2) {
        out.family_contrast = anova_groups(family_groups);
    } else {
        out.family_contrast = stats::FTest{0.0, 0, 0, 1.0};
    }
    return out;
}

HeterogeneityReport heterogeneity(const std::vector<StudentDiff>& diffs,
                                  const Roster& roster) {
    if (diffs.size() < 12) {
        throw DataError("heterogeneity: too few differences for the regression");
    }
    const std::size_t n = diffs.size();
    std::vector<const Student*> students;
    students.reserve(n);
    for (const auto& d : diffs) {
        const Student* s = roster.find(d.student_id);
        if (s == nullptr) {
            throw DataError("heterogeneity: student \"" + d.student_id + "\" not in roster");
        }
        students.push_back(s);
    }

    std::vector<double> y;
    y.reserve(n);
    for (const auto& d : diffs) y.push_back(d.d);

    struct Column {
        std::string name;
        std::vector<double> values;
    };
    std::vector<Column> columns;
    auto add_column = [&](const std::string& name, auto&& getter) {
        Column col;
        col.name = name;
        col.values.reserve(n);
        for (const Student* s : students) col.values.push_back(getter(*s));
        columns.push_back(std::move(col));
    };
    add_column("gender", [](const Student& s) { return double(s.gender); });
    add_column("urm", [](const Student& s) { return double(s.urm); });
    add_column("ap_stats", [](const Student& s) { return double(s.ap_stats); });
    add_column("math_adv", [](const Student& s) { return double(s.math_adv); });
    add_column("baseline", [](const Student& s) { return s.baseline; });
    for (const ClassYear year : {ClassYear::Sophomore, ClassYear::Junior, ClassYear::Senior,
                                 ClassYear::Graduate}) {
        add_column("class_year_" + to_string(year), [year](const Student& s) {
            return s.class_year == year ? 1.0 : 0.0;
        });
    }

    HeterogeneityReport out;

    // Constant columns (e.g. a class year with no students) carry no
    // information; drop them rather than report a spurious singularity.
    std::vector<Column> kept;
    for (auto& col : columns) {
        const double first = col.values.front();
        const bool constant = std::all_of(col.values.begin(), col.values.end(),
                                          [&](double v) { return v == first; });
        if (constant) {
            out.dropped_columns.push_back(col.name);
        } else {
            kept.push_back(std::move(col));
        }
    }

    auto fit_model = [&](const std::vector<const Column*>& cols) {
        stats::Matrix x(n, cols.size() + 1);
        for (std::size_t i = 0; i < n; ++i) x(i, 0) = 1.0;
        for (std::size_t j = 0; j < cols.size(); ++j) {
            for (std::size_t i = 0; i < n; ++i) x(i, j + 1) = cols[j]->values[i];
        }
        try {
            return stats::ols(x, y);
        } catch (const stats::RankDeficientError& e) {
            const std::string name =
                e.column == 0 ? std::string("intercept")
                              : cols[static_cast<std::size_t>(e.column - 1)]->name;
            throw stats::RankDeficientError(
                e.column, "heterogeneity: column \"" + name + "\" is collinear");
        }
    };

    stats::Matrix intercept_only(n, 1, 1.0);
    const auto null_fit = stats::ols(intercept_only, y);

    std::vector<const Column*> full_cols;
    for (const auto& col : kept) {
        full_cols.push_back(&col);
        out.columns.push_back(col.name);
    }
    out.full_model = stats::f_test_nested(fit_model(full_cols), null_fit);

    auto marginal = [&](const std::string& name) -> stats::FTest {
        for (const auto& col : kept) {
            if (col.name == name) return stats::f_test_nested(fit_model({&col}), null_fit);
        }
        return stats::FTest{0.0, 0, 0, 1.0};  // covariate constant in this sample
    };
    out.gender_only = marginal("gender");
    out.race_only = marginal("urm");
    out.baseline_linear = marginal("baseline");

    out.student_ids.reserve(n);
    out.baseline.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.student_ids.push_back(diffs[i].student_id);
        out.baseline.push_back(students[i]->baseline);
    }
    out.d = y;

    // Straight line and loess for the baseline-vs-effect figure.
    {
        stats::Matrix x(n, 2);
        for (std::size_t i = 0; i < n; ++i) {
            x(i, 0) = 1.0;
            x(i, 1) = out.baseline[i];
        }
        bool constant_baseline = true;
        for (std::size_t i = 1; i < n; ++i) {
            if (out.baseline[i] != out.baseline[0]) constant_baseline = false;
        }
        if (constant_baseline) {
            const double m = stats::mean(y);
            out.linear_fit.assign(n, m);
            out.loess_fit.assign(n, m);
        } else {
            const auto line = stats::ols(x, y);
            out.linear_fit.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                out.linear_fit[i] = line.coefficients[0] + line.coefficients[1] * out.baseline[i];
            }
            out.loess_fit = stats::loess(out.baseline, y);
        }
    }
    return out;
}

namespace {

std::optional<EffectCell> standardized_gap(const std::vector<double>& group1,
                                           const std::vector<double>& group0) {
    if (group1.size() < 2 || group0.size() < 2) return std::nullopt;
    const auto m1 = stats::mean_sd(group1);
    const auto m0 = stats::mean_sd(group0);
    const double n1 = static_cast<double>(group1.size());
    const double n0 = static_cast<double>(group0.size());
    const double pooled_var =
        ((n1 - 1.0) * m1.sd * m1.sd + (n0 - 1.0) * m0.sd * m0.sd) / (n1 + n0 - 2.0);
    if (pooled_var <= 0.0) return std::nullopt;
    EffectCell cell;
    cell.n = static_cast<int>(group1.size() + group0.size());
    cell.d = (m1.mean - m0.mean) / std::sqrt(pooled_var);
    cell.se = std::sqrt((n1 + n0) / (n1 * n0) + cell.d * cell.d / (2.0 * (n1 + n0)));
    return cell;
}

std::optional<EffectCell> effect_cell(const std::vector<StudentDiff>& diffs) {
    if (diffs.size() < 2) return std::nullopt;
    try {
        const auto report = effect_estimate(diffs);
        return EffectCell{report.d_bar, report.se, report.n_used};
    } catch (const NumericError&) {
        return std::nullopt;
    }
}

}  // namespace

std::vector<EffectTableRow> effect_table(
    const std::vector<StudentDiff>& short_diffs,
    const std::optional<std::vector<StudentDiff>>& long_diffs, const Roster& roster,
    const std::map<std::string, double>& baseline_scores) {
    const auto terms = roster.terms();

    auto treatment_row = [&](const std::string& factor,
                             const std::vector<StudentDiff>& diffs) {
        EffectTableRow row;
        row.factor = factor;
        row.randomized = true;
        row.overall = effect_cell(diffs);
        for (const auto& term : terms) {
            std::vector<StudentDiff> subset;
            for (const auto& d : diffs) {
                if (d.term == term) subset.push_back(d);
            }
            if (const auto cell = effect_cell(subset)) row.by_term[term] = *cell;
        }
        return row;
    };

    std::vector<EffectTableRow> rows;
    rows.push_back(treatment_row("peer_assessment_short", short_diffs));
    if (long_diffs) rows.push_back(treatment_row("peer_assessment_long", *long_diffs));

    auto baseline_of = [&](const Student& s) {
        const auto it = baseline_scores.find(s.id);
        return it != baseline_scores.end() ? it->second : s.baseline;
    };

    for (const std::string field : {"gender", "urm", "ap_stats", "math_adv", "upperclassman"}) {
        EffectTableRow row;
        row.factor = field;
        row.randomized = false;

        auto split = [&](const std::string& term) {
            std::pair<std::vector<double>, std::vector<double>> groups;
            for (const auto& s : roster.students) {
                if (!term.empty() && s.term != term) continue;
                (covariate_value(s, field) != 0.0 ? groups.first : groups.second)
                    .push_back(baseline_of(s));
            }
            return groups;
        };
        {
            const auto [g1, g0] = split("");
            row.overall = standardized_gap(g1, g0);
        }
        for (const auto& term : terms) {
            const auto [g1, g0] = split(term);
            if (const auto cell = standardized_gap(g1, g0)) row.by_term[term] = *cell;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace xtrial::analysis
