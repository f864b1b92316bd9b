#include "xtrial/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

#include "xtrial/rng.hpp"

namespace xtrial::sim {

namespace {

// Table-3-like covariate marginals.
constexpr double kMaleRate = 0.38;
constexpr double kUrmRate = 0.28;
constexpr double kApStatsRate = 0.19;
constexpr double kMathAdvRate = 0.36;
constexpr double kClassYearCdf[5] = {0.17, 0.41, 0.68, 0.98, 1.0};
constexpr double kAutumnShare = 0.4;

double draw_noise(rng::Engine& gen, NoiseFamily family, double variance) {
    if (variance <= 0.0) return 0.0;
    if (family == NoiseFamily::Normal) return std::sqrt(variance) * gen.normal();
    const double half_width = std::sqrt(3.0 * variance);
    return half_width * (2.0 * gen.uniform() - 1.0);
}

std::string student_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%04d", i + 1);
    return buf;
}

}  // namespace

void SimScenario::finalize() {
    const std::size_t want =
        static_cast<std::size_t>(m_units) * (with_finals ? 2 : 1);
    while (exam_mu.size() < want) exam_mu.push_back(70.0);
    while (exam_sigma.size() < want) exam_sigma.push_back(20.0);
}

void SimScenario::validate() const {
    if (n_students < 2) throw DataError("scenario: n_students must be >= 2");
    if (m_units < 2 || m_units % 2 != 0) {
        throw DataError("scenario: m_units must be even and >= 2");
    }
    if (!(theta_var >= 0.0 && theta_var <= 1.0)) {
        throw DataError("scenario: theta_var must be in [0,1]");
    }
    if (!(noncompliance_rate >= 0.0 && noncompliance_rate <= 1.0)) {
        throw DataError("scenario: noncompliance_rate must be in [0,1]");
    }
    if (terms != 1 && terms != 2) throw DataError("scenario: terms must be 1 or 2");
    const std::size_t want =
        static_cast<std::size_t>(m_units) * (with_finals ? 2 : 1);
    if (exam_mu.size() != want || exam_sigma.size() != want) {
        throw DataError("scenario: exam_mu/exam_sigma must have length " +
                        std::to_string(want));
    }
    for (const double s : exam_sigma) {
        if (!(s > 0.0)) throw DataError("scenario: exam_sigma entries must be positive");
    }
    for (const auto& [field, extra] : tau_by_covariate) {
        covariate_value(Student{}, field);  // throws on unknown field
        (void)extra;
    }
}

SimResult simulate(const SimScenario& scenario_in) {
    SimScenario scenario = scenario_in;
    scenario.finalize();
    scenario.validate();

    const int n = scenario.n_students;
    const int m = scenario.m_units;

    SimResult out;
    out.truth.tau = scenario.tau;
    out.truth.carryover_delta = scenario.carryover_delta;

    // Covariates, latent abilities, compliance.
    rng::Engine cov_gen(rng::derive(scenario.seed, 1));
    rng::Engine theta_gen(rng::derive(scenario.seed, 2));
    rng::Engine compliance_gen(rng::derive(scenario.seed, 3));
    const int n_autumn =
        scenario.terms == 2 ? static_cast<int>(std::lround(kAutumnShare * n)) : n;

    const int assigned = 3 * m;
    for (int i = 0; i < n; ++i) {
        Student s;
        s.id = student_id(i);
        s.gender = cov_gen.uniform() < kMaleRate ? 1 : 0;
        s.urm = cov_gen.uniform() < kUrmRate ? 1 : 0;
        s.ap_stats = cov_gen.uniform() < kApStatsRate ? 1 : 0;
        s.math_adv = cov_gen.uniform() < kMathAdvRate ? 1 : 0;
        const double u = cov_gen.uniform();
        int year = 0;
        while (year < 4 && u >= kClassYearCdf[year]) ++year;
        s.class_year = static_cast<ClassYear>(year);
        s.term = (scenario.terms == 2 && i >= n_autumn) ? "winter" : "autumn";

        const double theta = draw_noise(theta_gen, scenario.noise, scenario.theta_var);
        out.truth.theta[s.id] = theta;

        // Baseline instrument: same latent ability, its own noise draw,
        // first exam's scale. Not part of the treated units.
        const double mu0 = scenario.exam_mu.front();
        const double sigma0 = scenario.exam_sigma.front();
        const double eps0 = draw_noise(theta_gen, scenario.noise, scenario.eps_var());
        s.baseline = std::max(0.0, sigma0 * (theta + eps0) + mu0);

        const bool noncomplier = compliance_gen.uniform() < scenario.noncompliance_rate;
        out.truth.noncomplier[s.id] = noncomplier;
        double tau_i = noncomplier ? 0.0 : scenario.tau;
        if (!noncomplier) {
            for (const auto& [field, extra] : scenario.tau_by_covariate) {
                tau_i += extra * covariate_value(s, field);
            }
        }
        out.truth.tau_i[s.id] = tau_i;

        ComplianceRecord rec;
        rec.student_id = s.id;
        rec.assigned = assigned;
        if (noncomplier) {
            // whole missed weeks: counts in multiples of 3 below the usual cut
            rec.completed = 3 * static_cast<int>(compliance_gen.below(
                                    static_cast<std::uint64_t>(assigned / 3)));
        } else {
            const double miss_u = compliance_gen.uniform();
            rec.completed = assigned - (miss_u < 0.8 ? 0 : (miss_u < 0.9 ? 1 : 2));
        }
        out.compliance.push_back(rec);
        out.roster.students.push_back(std::move(s));
    }

    out.design = design::make_design(out.roster, design::DistanceConfig::defaults(),
                                     rng::derive(scenario.seed, 4), m, scenario.paper_mode);

    // Exams: per term, one quiz per unit plus optional final sections.
    std::vector<std::string> terms{"autumn"};
    if (scenario.terms == 2) terms.push_back("winter");
    for (const auto& term : terms) {
        for (int unit = 1; unit <= m; ++unit) {
            ExamMeta quiz;
            quiz.exam_id = term + "_quiz" + std::to_string(unit);
            quiz.unit = unit;
            quiz.term = term;
            quiz.kind = ExamKind::Quiz;
            const double mu = scenario.exam_mu[static_cast<std::size_t>(unit - 1)];
            const double sigma = scenario.exam_sigma[static_cast<std::size_t>(unit - 1)];
            // generous ceiling: the generative model is unbounded above
            quiz.points = std::ceil((mu + 8.0 * sigma) / 10.0) * 10.0;
            out.scores.exams.push_back(quiz);
            if (scenario.with_finals) {
                ExamMeta fin = quiz;
                fin.exam_id = term + "_final" + std::to_string(unit);
                fin.kind = ExamKind::FinalSection;
                const std::size_t k = static_cast<std::size_t>(m + unit - 1);
                fin.points = std::ceil((scenario.exam_mu[k] + 8.0 * scenario.exam_sigma[k]) /
                                       10.0) *
                             10.0;
                out.scores.exams.push_back(fin);
            }
        }
    }

    for (int i = 0; i < n; ++i) {
        const Student& s = out.roster.students[i];
        const double theta = out.truth.theta.at(s.id);
        const double tau_i = out.truth.tau_i.at(s.id);
        const ArmPattern& pattern = out.design.assignment.at(s.id);
        rng::Engine eps_gen(rng::derive(scenario.seed, 1000 + static_cast<std::uint64_t>(i)));
        for (const auto& exam : out.scores.exams) {
            if (exam.term != s.term) continue;
            const bool treated = pattern.treated(exam.unit);
            const std::size_t scale_idx = static_cast<std::size_t>(
                exam.kind == ExamKind::Quiz ? exam.unit - 1 : m + exam.unit - 1);
            const double mu = scenario.exam_mu[scale_idx];
            const double sigma = scenario.exam_sigma[scale_idx];
            const double eps = draw_noise(eps_gen, scenario.noise, scenario.eps_var());
            double z = theta + eps + (treated ? tau_i : 0.0);
            if (scenario.carryover_delta != 0.0 && exam.unit > 1 &&
                pattern.treated(exam.unit - 1)) {
                z += scenario.carryover_delta;
            }
            const double y = std::clamp(sigma * z + mu, 0.0, exam.points);
            out.scores.set(s.id, exam.exam_id, y);
        }
    }
    return out;
}

EffectReport quiz_effect(const SimResult& sim, int n_perm, std::uint64_t perm_seed) {
    const auto z = analysis::standardize(sim.scores, sim.design);
    const auto diffs =
        analysis::student_diffs(z, sim.scores, sim.design, analysis::quiz_filter());
    return analysis::analyze_diffs(diffs.diffs, sim.design, n_perm, perm_seed);
}

std::vector<PowerRow> power_curve(const SimScenario& base, const std::vector<double>& taus,
                                  const std::vector<int>& ns, double alpha, int n_reps) {
    if (n_reps < 100) throw DataError("power_curve: need at least 100 replicates");
    std::vector<PowerRow> rows;
    for (const double tau : taus) {
        for (const int n : ns) {
            std::vector<int> rejected(static_cast<std::size_t>(n_reps), 0);
            const unsigned n_threads =
                std::max(1u, std::min(std::thread::hardware_concurrency(), 8u));
            std::vector<std::thread> workers;
            std::atomic<int> next{0};
            for (unsigned t = 0; t < n_threads; ++t) {
                workers.emplace_back([&]() {
                    for (int r = next.fetch_add(1); r < n_reps; r = next.fetch_add(1)) {
                        SimScenario scenario = base;
                        scenario.tau = tau;
                        scenario.n_students = n;
                        scenario.seed = rng::derive(
                            base.seed, 0x7000000 + static_cast<std::uint64_t>(r) +
                                           997 * static_cast<std::uint64_t>(rows.size()));
                        const auto sim = simulate(scenario);
                        const auto report = quiz_effect(sim);
                        rejected[static_cast<std::size_t>(r)] =
                            report.p_asymptotic <= alpha ? 1 : 0;
                    }
                });
            }
            for (auto& w : workers) w.join();
            PowerRow row;
            row.tau = tau;
            row.n = n;
            row.reps = n_reps;
            row.alpha = alpha;
            int total = 0;
            for (const int r : rejected) total += r;
            row.power = static_cast<double>(total) / n_reps;
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace xtrial::sim
