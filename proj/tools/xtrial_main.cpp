// xtrial — design and analyze matched-pairs crossover trials.
//
// Subcommands:
//   design    roster -> design file, balance report, pairing-projection data
//   analyze   design + scores -> effect-size table, permutation distribution
//   diagnose  quarter/carryover/heterogeneity/compliance diagnostics
//   simulate  scenario -> synthetic dataset in the same file formats
//   power     scenario grid -> rejection-rate table
//
// Every command is deterministic given its inputs, flags and seed, and
// writes a manifest.txt with input digests next to its outputs.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "xtrial/analysis.hpp"
#include "xtrial/core.hpp"
#include "xtrial/design.hpp"
#include "xtrial/io.hpp"
#include "xtrial/simulate.hpp"
#include "xtrial/stats.hpp"

namespace fs = std::filesystem;
using namespace xtrial;

namespace {

std::string fmt(double v) {
    char buf[40];
    for (const int precision : {15, 16, 17}) {
        std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

std::uint64_t default_seed() {
    if (const char* env = std::getenv("XTRIAL_SEED")) {
        return std::strtoull(env, nullptr, 10);
    }
    return 12345;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

void write_effect_rows(std::ofstream& out, const std::vector<analysis::EffectTableRow>& rows,
                       const std::map<std::string, EffectReport>& inference) {
    out << "factor,randomized,scope,n,d,se,t,df,p_asymptotic,p_permutation,n_permutations\n";
    auto cell_row = [&](const analysis::EffectTableRow& row, const std::string& scope,
                        const analysis::EffectCell& cell) {
        out << row.factor << ',' << (row.randomized ? 1 : 0) << ',' << scope << ',' << cell.n
            << ',' << fmt(cell.d) << ',' << fmt(cell.se);
        const auto inf = row.randomized && scope == "overall" ? inference.find(row.factor)
                                                              : inference.end();
        if (inf != inference.end()) {
            const auto& r = inf->second;
            out << ',' << fmt(r.t_stat) << ',' << r.df << ',' << fmt(r.p_asymptotic) << ','
                << (r.p_permutation ? fmt(*r.p_permutation) : std::string()) << ','
                << r.n_permutations;
        } else {
            out << ",,,,,";
        }
        out << '\n';
    };
    for (const auto& row : rows) {
        if (row.overall) cell_row(row, "overall", *row.overall);
        for (const auto& [term, cell] : row.by_term) cell_row(row, term, cell);
    }
}

struct AnalyzeInputs {
    Design design;
    ScoreTable scores;
    std::optional<Roster> roster;
    std::optional<std::vector<ComplianceRecord>> compliance;
};

AnalyzeInputs load_analysis_inputs(const std::string& design_path,
                                   const std::string& scores_path,
                                   const std::string& exams_path,
                                   const std::string& roster_path,
                                   const std::string& compliance_path,
                                   std::vector<std::string>& warnings) {
    AnalyzeInputs in;
    io::ReadOptions opts{&warnings};
    in.design = io::read_design(design_path);
    in.scores = io::read_scores(scores_path, io::read_exams(exams_path, opts), opts);
    if (!roster_path.empty()) in.roster = io::read_roster(roster_path, opts);
    if (!compliance_path.empty()) in.compliance = io::read_compliance(compliance_path, opts);
    return in;
}

int cmd_design(const std::string& roster_path, const std::string& out_dir,
               std::uint64_t seed, int units, const std::string& mode) {
    std::vector<std::string> warnings;
    const Roster roster = io::read_roster(roster_path, {&warnings});
    const bool paper_mode = mode == "paper";
    const auto cfg = design::DistanceConfig::defaults();
    const auto stats = design::RosterStats::compute(roster, cfg);
    warnings.insert(warnings.end(), stats.warnings.begin(), stats.warnings.end());
    print_warnings(warnings);

    const Design design = design::make_design(roster, cfg, seed, units, paper_mode);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    io::write_design(design, (dir / "design.txt").string());

    {
        auto out = open_out(dir / "balance.csv");
        out << "covariate,test,stat,df1,df2,p\n";
        for (const auto& row : design::balance_report(design, roster, {})) {
            out << row.covariate << ',' << row.test << ',' << fmt(row.stat) << ',' << row.df1
                << ',' << row.df2 << ',' << fmt(row.p) << '\n';
        }
    }
    {
        const auto fig = design::figure1_data(design, roster, seed);
        auto points = open_out(dir / "figure1_points.csv");
        points << "student_id,pc1,pc2,pc3\n";
        for (std::size_t i = 0; i < fig.ids.size(); ++i) {
            points << fig.ids[i] << ',' << fmt(fig.scores[i][0]) << ',' << fmt(fig.scores[i][1])
                   << ',' << fmt(fig.scores[i][2]) << '\n';
        }
        auto edges = open_out(dir / "figure1_edges.csv");
        edges << "pairing,student_a,student_b,length\n";
        auto edge_rows = [&](const char* label, const auto& list) {
            for (const auto& [a, b] : list) {
                double ss = 0.0;
                for (int c = 0; c < 3; ++c) {
                    const double d = fig.scores[a][static_cast<std::size_t>(c)] -
                                     fig.scores[b][static_cast<std::size_t>(c)];
                    ss += d * d;
                }
                edges << label << ',' << fig.ids[a] << ',' << fig.ids[b] << ','
                      << fmt(std::sqrt(ss)) << '\n';
            }
        };
        edge_rows("matched", fig.matched_edges);
        edge_rows("random", fig.random_edges);
        std::cout << "mean edge length: matched " << fmt(fig.matched_mean_edge_length)
                  << ", random " << fmt(fig.random_mean_edge_length) << "\n";
    }
    io::RunManifest::make("design", {roster_path}, seed).write((dir / "manifest.txt").string());
    std::cout << "design written to " << (dir / "design.txt").string() << "\n";
    return 0;
}

int cmd_analyze(const AnalyzeInputs& in, const std::vector<std::string>& input_paths,
                const std::string& out_dir, int threshold, int permutations,
                std::uint64_t seed, bool one_sided) {
    const auto z = analysis::standardize(in.scores, in.design);
    auto short_res = analysis::student_diffs(z, in.scores, in.design, analysis::quiz_filter());
    auto long_res = analysis::student_diffs(z, in.scores, in.design, analysis::final_filter());
    for (const auto& id : short_res.excluded) {
        std::cerr << "warning: student " << id << " lacks a treated or control quiz score\n";
    }

    if (in.compliance) {
        const auto short_part =
            analysis::compliance_filter(short_res.diffs, *in.compliance, threshold);
        short_res.diffs = short_part.compliers;
        if (!long_res.diffs.empty()) {
            const auto long_part =
                analysis::compliance_filter(long_res.diffs, *in.compliance, threshold);
            long_res.diffs = long_part.compliers;
        }
    }
    if (short_res.diffs.size() < 2) throw DataError("fewer than 2 usable student differences");

    std::map<std::string, EffectReport> inference;
    inference["peer_assessment_short"] =
        analysis::analyze_diffs(short_res.diffs, in.design, permutations, seed, one_sided);
    std::optional<std::vector<analysis::StudentDiff>> long_diffs;
    if (long_res.diffs.size() >= 2) {
        long_diffs = long_res.diffs;
        inference["peer_assessment_long"] = analysis::analyze_diffs(
            long_res.diffs, in.design, permutations, seed + 1, one_sided);
    }

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    {
        auto out = open_out(dir / "effect_report.csv");
        std::vector<analysis::EffectTableRow> rows;
        if (in.roster) {
            rows = analysis::effect_table(short_res.diffs, long_diffs, *in.roster, {});
        } else {
            // No roster: emit the treatment rows only.
            auto push = [&](const std::string& factor,
                            const std::vector<analysis::StudentDiff>& diffs) {
                analysis::EffectTableRow row;
                row.factor = factor;
                row.randomized = true;
                const auto& report = inference.at(factor);
                row.overall = analysis::EffectCell{report.d_bar, report.se, report.n_used};
                rows.push_back(std::move(row));
                (void)diffs;
            };
            push("peer_assessment_short", short_res.diffs);
            if (long_diffs) push("peer_assessment_long", *long_diffs);
        }
        write_effect_rows(out, rows, inference);
    }
    if (permutations > 0) {
        auto out = open_out(dir / "permutation_distribution.csv");
        out << "analysis,kind,replicate,d_bar\n";
        auto emit = [&](const std::string& label, const std::vector<analysis::StudentDiff>& d,
                        std::uint64_t perm_seed) {
            const auto perm = analysis::permutation_test(d, in.design, permutations, perm_seed);
            if (!perm.pair_structure_used) {
                std::cerr << "warning: design has no usable pairs; permutation test fell "
                             "back to per-student flips\n";
            }
            out << label << ",observed,," << fmt(inference.at(label).d_bar) << '\n';
            for (std::size_t r = 0; r < perm.replicates.size(); ++r) {
                out << label << ",replicate," << r << ',' << fmt(perm.replicates[r]) << '\n';
            }
        };
        emit("peer_assessment_short", short_res.diffs, seed);
        if (long_diffs) emit("peer_assessment_long", *long_diffs, seed + 1);
    }
    {
        auto out = open_out(dir / "score_distributions.csv");
        out << "exam_id,term,unit,kind,arm,student_id,score\n";
        for (const auto& exam : in.scores.exams) {
            for (const auto& [key, y] : in.scores.values) {
                if (key.second != exam.exam_id) continue;
                const bool treated = treatment_of(in.design, exam, key.first);
                out << exam.exam_id << ',' << exam.term << ',' << exam.unit << ','
                    << to_string(exam.kind) << ',' << (treated ? "treatment" : "control")
                    << ',' << key.first << ',' << fmt(y) << '\n';
            }
        }
    }
    io::RunManifest::make("analyze", input_paths, seed).write((dir / "manifest.txt").string());
    const auto& main_report = inference.at("peer_assessment_short");
    std::cout << "short-term effect d = " << fmt(main_report.d_bar) << " (se "
              << fmt(main_report.se) << "), t(" << main_report.df << ") = "
              << fmt(main_report.t_stat) << ", p " << fmt(main_report.p_asymptotic) << "\n";
    return 0;
}

int cmd_diagnose(const AnalyzeInputs& in, const std::vector<std::string>& input_paths,
                 const std::string& out_dir, const std::vector<int>& thresholds,
                 std::uint64_t seed) {
    if (!in.roster) throw DataError("diagnose requires --roster");
    const auto z = analysis::standardize(in.scores, in.design);
    const auto short_res =
        analysis::student_diffs(z, in.scores, in.design, analysis::quiz_filter());
    const auto long_res =
        analysis::student_diffs(z, in.scores, in.design, analysis::final_filter());
    if (short_res.diffs.size() < 2) throw DataError("fewer than 2 usable student differences");

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    std::map<std::string, std::vector<analysis::StudentDiff>> by_term;
    for (const auto& d : short_res.diffs) by_term[d.term].push_back(d);
    {
        auto out = open_out(dir / "quarter_test.csv");
        out << "term_a,term_b,n_a,n_b,mean_a,mean_b,t,df,p\n";
        if (by_term.size() == 2) {
            const auto q = analysis::quarter_effect_test(by_term);
            out << q.group_a << ',' << q.group_b << ',' << q.n_a << ',' << q.n_b << ','
                << fmt(q.mean_a) << ',' << fmt(q.mean_b) << ',' << fmt(q.t) << ','
                << fmt(q.df) << ',' << fmt(q.p) << '\n';
        } else {
            std::cerr << "warning: quarter test needs exactly 2 terms, found "
                      << by_term.size() << "; skipped\n";
        }
    }
    {
        const auto carry = analysis::carryover_test(short_res.diffs, in.design);
        for (const auto& g : carry.dropped_groups) {
            std::cerr << "warning: carryover test dropped group " << g << " (fewer than 2)\n";
        }
        auto out = open_out(dir / "carryover.csv");
        out << "test,f,df1,df2,p\n";
        out << "pattern_anova," << fmt(carry.anova.f) << ',' << carry.anova.df1 << ','
            << carry.anova.df2 << ',' << fmt(carry.anova.p) << '\n';
        out << "family_contrast," << fmt(carry.family_contrast.f) << ','
            << carry.family_contrast.df1 << ',' << carry.family_contrast.df2 << ','
            << fmt(carry.family_contrast.p) << '\n';
    }
    {
        const auto het = analysis::heterogeneity(short_res.diffs, *in.roster);
        for (const auto& c : het.dropped_columns) {
            std::cerr << "warning: heterogeneity dropped constant column " << c << "\n";
        }
        auto out = open_out(dir / "heterogeneity.csv");
        out << "model,f,df1,df2,p\n";
        auto row = [&](const char* name, const stats::FTest& f) {
            out << name << ',' << fmt(f.f) << ',' << f.df1 << ',' << f.df2 << ',' << fmt(f.p)
                << '\n';
        };
        row("full", het.full_model);
        row("gender_only", het.gender_only);
        row("race_only", het.race_only);
        row("baseline_linear", het.baseline_linear);

        auto fig = open_out(dir / "figure6_baseline_effect.csv");
        fig << "student_id,baseline,d,linear_fit,loess_fit\n";
        for (std::size_t i = 0; i < het.student_ids.size(); ++i) {
            fig << het.student_ids[i] << ',' << fmt(het.baseline[i]) << ',' << fmt(het.d[i])
                << ',' << fmt(het.linear_fit[i]) << ',' << fmt(het.loess_fit[i]) << '\n';
        }
    }
    if (in.compliance) {
        std::optional<std::vector<analysis::StudentDiff>> long_diffs;
        if (long_res.diffs.size() >= 2) long_diffs = long_res.diffs;
        const auto rows = analysis::compliance_sensitivity(short_res.diffs, long_diffs,
                                                           *in.compliance, thresholds);
        auto out = open_out(dir / "compliance_sensitivity.csv");
        out << "threshold,n_compliers,compliance_rate,d_short,se_short,d_long,se_long,"
               "noncomplier_d,noncomplier_t,noncomplier_p\n";
        for (const auto& row : rows) {
            out << row.threshold << ',' << row.n_compliers << ',' << fmt(row.compliance_rate);
            auto cell = [&](const std::optional<EffectReport>& r, bool with_t) {
                if (r) {
                    out << ',' << fmt(r->d_bar) << ',' << fmt(r->se);
                    if (with_t) out << ',' << fmt(r->t_stat) << ',' << fmt(r->p_asymptotic);
                } else {
                    out << ",,";
                    if (with_t) out << ",,";
                }
            };
            cell(row.short_term, false);
            cell(row.long_term, false);
            if (row.noncomplier_short) {
                out << ',' << fmt(row.noncomplier_short->d_bar) << ','
                    << fmt(row.noncomplier_short->t_stat) << ','
                    << fmt(row.noncomplier_short->p_asymptotic);
            } else {
                out << ",,,";
            }
            out << '\n';
        }

        auto hist = open_out(dir / "figure5_compliance_hist.csv");
        hist << "term,completed,count\n";
        std::map<std::pair<std::string, int>, int> counts;
        for (const auto& rec : *in.compliance) {
            const Student* s = in.roster->find(rec.student_id);
            counts[{s != nullptr ? s->term : std::string("unknown"), rec.completed}] += 1;
        }
        for (const auto& [key, count] : counts) {
            hist << key.first << ',' << key.second << ',' << count << '\n';
        }
    }
    io::RunManifest::make("diagnose", input_paths, seed).write((dir / "manifest.txt").string());
    std::cout << "diagnostics written to " << out_dir << "\n";
    return 0;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir) {
    std::vector<std::string> warnings;
    const auto scenario = io::read_scenario(scenario_path, {&warnings});
    print_warnings(warnings);
    const auto sim = sim::simulate(scenario);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    io::write_roster(sim.roster, (dir / "roster.csv").string());
    io::write_exams(sim.scores.exams, (dir / "exams.csv").string());
    io::write_scores(sim.scores, (dir / "scores.csv").string());
    io::write_compliance(sim.compliance, (dir / "compliance.csv").string());
    io::write_design(sim.design, (dir / "design.txt").string());
    {
        auto out = open_out(dir / "truth.csv");
        out << "student_id,theta,tau_i,noncomplier\n";
        for (const auto& s : sim.roster.students) {
            out << s.id << ',' << fmt(sim.truth.theta.at(s.id)) << ','
                << fmt(sim.truth.tau_i.at(s.id)) << ','
                << (sim.truth.noncomplier.at(s.id) ? 1 : 0) << '\n';
        }
    }
    io::RunManifest::make("simulate", {scenario_path}, scenario.seed)
        .write((dir / "manifest.txt").string());
    std::cout << "simulated " << sim.roster.size() << " students into " << out_dir << "\n";
    return 0;
}

int cmd_power(const std::string& scenario_path, const std::vector<double>& taus,
              const std::vector<int>& ns, double alpha, int reps,
              const std::string& out_path) {
    std::vector<std::string> warnings;
    const auto base = io::read_scenario(scenario_path, {&warnings});
    print_warnings(warnings);
    const auto rows = sim::power_curve(base, taus.empty() ? std::vector<double>{base.tau} : taus,
                                       ns.empty() ? std::vector<int>{base.n_students} : ns,
                                       alpha, reps);
    auto out = open_out(out_path);
    out << "tau,n,reps,alpha,power\n";
    for (const auto& row : rows) {
        out << fmt(row.tau) << ',' << row.n << ',' << row.reps << ',' << fmt(row.alpha) << ','
            << fmt(row.power) << '\n';
    }
    const fs::path manifest = fs::path(out_path).parent_path() / "manifest.txt";
    io::RunManifest::make("power", {scenario_path}, base.seed).write(manifest.string());
    std::cout << "power table written to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"matched-pairs crossover trial design and analysis"};
    app.require_subcommand(1);

    // design
    auto* design_cmd = app.add_subcommand("design", "block, pair and randomize a roster");
    std::string roster_path, out_dir = "out", mode = "paper";
    std::uint64_t seed = default_seed();
    int units = 4;
    design_cmd->add_option("--roster", roster_path, "roster csv")->required();
    design_cmd->add_option("--out-dir", out_dir, "output directory");
    design_cmd->add_option("--seed", seed, "randomization seed");
    design_cmd->add_option("--units", units, "study units (even)");
    design_cmd->add_option("--mode", mode, "paper|general")
        ->check(CLI::IsMember({"paper", "general"}));

    // shared analysis inputs
    std::string design_path, scores_path, exams_path, roster_opt, compliance_path;
    auto add_analysis_inputs = [&](CLI::App* cmd, bool roster_required) {
        cmd->add_option("--design", design_path, "design file")->required();
        cmd->add_option("--scores", scores_path, "scores csv")->required();
        cmd->add_option("--exams", exams_path, "exam metadata csv")->required();
        auto* r = cmd->add_option("--roster", roster_opt, "roster csv");
        if (roster_required) r->required();
        cmd->add_option("--compliance", compliance_path, "compliance csv");
    };

    auto* analyze_cmd = app.add_subcommand("analyze", "estimate the treatment effect");
    add_analysis_inputs(analyze_cmd, false);
    int threshold = 10, permutations = 10000;
    bool one_sided = false;
    analyze_cmd->add_option("--out-dir", out_dir, "output directory");
    analyze_cmd->add_option("--threshold", threshold, "compliance threshold (completed >=)");
    analyze_cmd->add_option("--permutations", permutations, "permutation replicates (0 = off)");
    analyze_cmd->add_option("--seed", seed, "permutation seed");
    analyze_cmd->add_flag("--one-sided", one_sided, "report one-sided asymptotic p");

    auto* diagnose_cmd = app.add_subcommand("diagnose", "run the diagnostic battery");
    add_analysis_inputs(diagnose_cmd, true);
    std::vector<int> thresholds{8, 10, 12};
    diagnose_cmd->add_option("--out-dir", out_dir, "output directory");
    diagnose_cmd->add_option("--thresholds", thresholds, "compliance thresholds to sweep");
    diagnose_cmd->add_option("--seed", seed, "seed recorded in the manifest");

    auto* simulate_cmd = app.add_subcommand("simulate", "generate a synthetic dataset");
    std::string scenario_path;
    simulate_cmd->add_option("--scenario", scenario_path, "scenario file")->required();
    simulate_cmd->add_option("--out-dir", out_dir, "output directory");

    auto* power_cmd = app.add_subcommand("power", "Monte Carlo power table");
    std::vector<double> taus;
    std::vector<int> ns;
    double alpha = 0.05;
    int reps = 200;
    std::string power_out = "power.csv";
    power_cmd->add_option("--scenario", scenario_path, "base scenario file")->required();
    power_cmd->add_option("--taus", taus, "effect sizes to sweep");
    power_cmd->add_option("--ns", ns, "sample sizes to sweep");
    power_cmd->add_option("--alpha", alpha, "test level");
    power_cmd->add_option("--reps", reps, "replicates per grid point");
    power_cmd->add_option("--out", power_out, "output csv path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (design_cmd->parsed()) {
            return cmd_design(roster_path, out_dir, seed, units, mode);
        }
        if (analyze_cmd->parsed() || diagnose_cmd->parsed()) {
            std::vector<std::string> warnings;
            std::vector<std::string> inputs = {design_path, scores_path, exams_path};
            if (!roster_opt.empty()) inputs.push_back(roster_opt);
            if (!compliance_path.empty()) inputs.push_back(compliance_path);
            const auto in = load_analysis_inputs(design_path, scores_path, exams_path,
                                                 roster_opt, compliance_path, warnings);
            print_warnings(warnings);
            if (analyze_cmd->parsed()) {
                return cmd_analyze(in, inputs, out_dir, threshold, permutations, seed,
                                   one_sided);
            }
            return cmd_diagnose(in, inputs, out_dir, thresholds, seed);
        }
        if (simulate_cmd->parsed()) {
            return cmd_simulate(scenario_path, out_dir);
        }
        if (power_cmd->parsed()) {
            return cmd_power(scenario_path, taus, ns, alpha, reps, power_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
