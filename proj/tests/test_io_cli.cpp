#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "test_support.hpp"
#include "xtrial/io.hpp"
#include "xtrial/simulate.hpp"

using namespace xtrial;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("xtrial_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void spit(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(XTRIAL_CLI_PATH) + " " + args + " 2>/dev/null";
    return std::system(cmd.c_str());
}

}  // namespace

TEST_CASE("roster round trip") {
    TempDir dir;
    const auto roster = testsup::make_roster(25, 5, 2);
    io::write_roster(roster, dir.file("roster.csv"));
    const auto back = io::read_roster(dir.file("roster.csv"));
    REQUIRE(back.size() == roster.size());
    for (std::size_t i = 0; i < roster.size(); ++i) {
        CHECK(back.students[i].id == roster.students[i].id);
        CHECK(back.students[i].gender == roster.students[i].gender);
        CHECK(back.students[i].urm == roster.students[i].urm);
        CHECK(back.students[i].ap_stats == roster.students[i].ap_stats);
        CHECK(back.students[i].math_adv == roster.students[i].math_adv);
        CHECK(back.students[i].class_year == roster.students[i].class_year);
        CHECK(back.students[i].baseline == roster.students[i].baseline);
        CHECK(back.students[i].term == roster.students[i].term);
    }
}

TEST_CASE("roster reader is strict") {
    TempDir dir;
    SUBCASE("missing required column is fatal") {
        spit(dir.file("r.csv"),
             "student_id,urm,ap_stats,math_adv,class_year,baseline,term\n"
             "s1,0,0,0,junior,70,autumn\n");
        CHECK_THROWS_WITH_AS(io::read_roster(dir.file("r.csv")),
                             doctest::Contains("gender"), DataError);
    }
    SUBCASE("unknown column warns") {
        spit(dir.file("r.csv"),
             "student_id,gender,urm,ap_stats,math_adv,class_year,baseline,term,shoe_size\n"
             "s1,0,0,0,0,junior,70,autumn,42\n");
        std::vector<std::string> warnings;
        const auto roster = io::read_roster(dir.file("r.csv"), {&warnings});
        CHECK(roster.size() == 1);
        REQUIRE(warnings.size() == 1);
        CHECK(warnings[0].find("shoe_size") != std::string::npos);
    }
    SUBCASE("malformed row reports its line number") {
        spit(dir.file("r.csv"),
             "student_id,gender,urm,ap_stats,math_adv,class_year,baseline,term\n"
             "s1,0,0,0,0,junior,70,autumn\n"
             "s2,0,0,0,0,junior,not_a_number,autumn\n");
        CHECK_THROWS_WITH_AS(io::read_roster(dir.file("r.csv")), doctest::Contains(":3"),
                             DataError);
    }
    SUBCASE("duplicate ids are rejected") {
        spit(dir.file("r.csv"),
             "student_id,gender,urm,ap_stats,math_adv,class_year,baseline,term\n"
             "s1,0,0,0,0,junior,70,autumn\n"
             "s1,1,0,0,0,senior,80,autumn\n");
        CHECK_THROWS_AS(io::read_roster(dir.file("r.csv")), DataError);
    }
}

TEST_CASE("score table io") {
    TempDir dir;
    std::vector<ExamMeta> exams;
    ExamMeta e;
    e.exam_id = "q1";
    e.unit = 1;
    e.term = "autumn";
    e.kind = ExamKind::Quiz;
    e.points = 100.0;
    exams.push_back(e);

    SUBCASE("empty score file gives an empty table") {
        spit(dir.file("s.csv"), "student_id,exam_id,score\n");
        const auto table = io::read_scores(dir.file("s.csv"), exams);
        CHECK(table.values.empty());
        CHECK(table.exams.size() == 1);
    }
    SUBCASE("score above the exam maximum errors with the row") {
        spit(dir.file("s.csv"), "student_id,exam_id,score\ns1,q1,110\n");
        CHECK_THROWS_WITH_AS(io::read_scores(dir.file("s.csv"), exams),
                             doctest::Contains(":2"), DataError);
    }
    SUBCASE("unknown exam errors") {
        spit(dir.file("s.csv"), "student_id,exam_id,score\ns1,q9,50\n");
        CHECK_THROWS_AS(io::read_scores(dir.file("s.csv"), exams), DataError);
    }
    SUBCASE("round trip preserves every value bit-exactly") {
        ScoreTable table;
        table.exams = exams;
        table.set("s1", "q1", 67.123456789012345);
        table.set("s2", "q1", 100.0 / 3.0);
        io::write_scores(table, dir.file("s.csv"));
        const auto back = io::read_scores(dir.file("s.csv"), exams);
        CHECK(back.values == table.values);
    }
}

TEST_CASE("design round trip") {
    TempDir dir;
    const auto roster = testsup::make_roster(41, 9);
    const auto d =
        design::make_design(roster, design::DistanceConfig::defaults(), 321, 4, true);
    io::write_design(d, dir.file("design.txt"));
    const auto back = io::read_design(dir.file("design.txt"));
    CHECK(back.seed == d.seed);
    CHECK(back.units == d.units);
    CHECK(back.paper_mode == d.paper_mode);
    CHECK(back.blocks == d.blocks);
    CHECK(back.pairs == d.pairs);
    CHECK(back.leftovers == d.leftovers);
    REQUIRE(back.assignment.size() == d.assignment.size());
    for (const auto& [id, p] : d.assignment) {
        CHECK(back.assignment.at(id) == p);
    }
    CHECK(validate_design(back, roster).empty());
}

TEST_CASE("scenario round trip") {
    TempDir dir;
    sim::SimScenario s;
    s.n_students = 123;
    s.tau = 0.115;
    s.theta_var = 0.6;
    s.noncompliance_rate = 0.17;
    s.carryover_delta = 0.25;
    s.tau_by_covariate["gender"] = 0.1;
    s.terms = 2;
    s.with_finals = true;
    s.noise = sim::NoiseFamily::Uniform;
    s.seed = 999;
    s.finalize();
    io::write_scenario(s, dir.file("scenario.txt"));
    const auto back = io::read_scenario(dir.file("scenario.txt"));
    CHECK(back.n_students == s.n_students);
    CHECK(back.tau == s.tau);
    CHECK(back.theta_var == s.theta_var);
    CHECK(back.exam_mu == s.exam_mu);
    CHECK(back.exam_sigma == s.exam_sigma);
    CHECK(back.noncompliance_rate == s.noncompliance_rate);
    CHECK(back.carryover_delta == s.carryover_delta);
    CHECK(back.tau_by_covariate == s.tau_by_covariate);
    CHECK(back.terms == s.terms);
    CHECK(back.with_finals == s.with_finals);
    CHECK(back.noise == s.noise);
    CHECK(back.seed == s.seed);
}

TEST_CASE("simulator outputs survive the full file round trip") {
    TempDir dir;
    sim::SimScenario scenario;
    scenario.n_students = 60;
    scenario.tau = 0.2;
    scenario.seed = 77;
    const auto s = sim::simulate(scenario);
    io::write_roster(s.roster, dir.file("roster.csv"));
    io::write_exams(s.scores.exams, dir.file("exams.csv"));
    io::write_scores(s.scores, dir.file("scores.csv"));
    io::write_compliance(s.compliance, dir.file("compliance.csv"));
    io::write_design(s.design, dir.file("design.txt"));

    const auto roster = io::read_roster(dir.file("roster.csv"));
    const auto exams = io::read_exams(dir.file("exams.csv"));
    const auto scores = io::read_scores(dir.file("scores.csv"), exams);
    const auto compliance = io::read_compliance(dir.file("compliance.csv"));
    const auto d = io::read_design(dir.file("design.txt"));

    CHECK(roster.size() == s.roster.size());
    CHECK(scores.values == s.scores.values);
    CHECK(compliance.size() == s.compliance.size());
    // an analysis on the round-tripped files matches the in-memory one
    const auto z1 = analysis::standardize(s.scores, s.design);
    const auto z2 = analysis::standardize(scores, d);
    const auto r1 = analysis::student_diffs(z1, s.scores, s.design, analysis::quiz_filter());
    const auto r2 = analysis::student_diffs(z2, scores, d, analysis::quiz_filter());
    const auto e1 = analysis::effect_estimate(r1.diffs);
    const auto e2 = analysis::effect_estimate(r2.diffs);
    CHECK(e1.d_bar == doctest::Approx(e2.d_bar).epsilon(1e-12));
    CHECK(e1.se == doctest::Approx(e2.se).epsilon(1e-12));
}

TEST_CASE("file digests are reproducible and content-sensitive") {
    TempDir dir;
    spit(dir.file("a.txt"), "hello\n");
    spit(dir.file("b.txt"), "hello\n");
    spit(dir.file("c.txt"), "hello!\n");
    CHECK(io::file_digest(dir.file("a.txt")) == io::file_digest(dir.file("b.txt")));
    CHECK(io::file_digest(dir.file("a.txt")) != io::file_digest(dir.file("c.txt")));
}

TEST_CASE("cli: simulate then analyze end to end") {
    TempDir dir;
    sim::SimScenario scenario;
    scenario.n_students = 200;
    scenario.tau = 0.3;
    scenario.seed = 2026;
    scenario.with_finals = true;
    scenario.finalize();
    io::write_scenario(scenario, dir.file("scenario.txt"));

    REQUIRE(run_cli("simulate --scenario " + dir.file("scenario.txt") + " --out-dir " +
                    dir.file("data")) == 0);
    REQUIRE(fs::exists(dir.file("data/roster.csv")));
    REQUIRE(fs::exists(dir.file("data/manifest.txt")));

    REQUIRE(run_cli("analyze --design " + dir.file("data/design.txt") + " --scores " +
                    dir.file("data/scores.csv") + " --exams " + dir.file("data/exams.csv") +
                    " --roster " + dir.file("data/roster.csv") + " --compliance " +
                    dir.file("data/compliance.csv") + " --permutations 2000 --seed 5" +
                    " --out-dir " + dir.file("out")) == 0);
    const auto report = slurp(dir.file("out/effect_report.csv"));
    CHECK(report.find("peer_assessment_short") != std::string::npos);
    CHECK(report.find("peer_assessment_long") != std::string::npos);
    CHECK(report.find("gender") != std::string::npos);
    CHECK(fs::exists(dir.file("out/permutation_distribution.csv")));
    CHECK(fs::exists(dir.file("out/score_distributions.csv")));

    // the recovered effect is near the planted tau
    std::ifstream in(dir.file("out/effect_report.csv"));
    std::string line;
    std::getline(in, line);  // header
    REQUIRE(std::getline(in, line));
    // factor,randomized,scope,n,d,...
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    CHECK(field == "peer_assessment_short");
    std::getline(ss, field, ',');
    std::getline(ss, field, ',');
    CHECK(field == "overall");
    std::getline(ss, field, ',');
    std::getline(ss, field, ',');
    const double d_hat = std::stod(field);
    CHECK(std::fabs(d_hat - 0.3) < 0.1);
}

TEST_CASE("cli: design is byte-identical under the same seed") {
    TempDir dir;
    const auto roster = testsup::make_roster(70, 3);
    io::write_roster(roster, dir.file("roster.csv"));
    REQUIRE(run_cli("design --roster " + dir.file("roster.csv") + " --seed 42 --out-dir " +
                    dir.file("d1")) == 0);
    REQUIRE(run_cli("design --roster " + dir.file("roster.csv") + " --seed 42 --out-dir " +
                    dir.file("d2")) == 0);
    CHECK(slurp(dir.file("d1/design.txt")) == slurp(dir.file("d2/design.txt")));
    CHECK(slurp(dir.file("d1/balance.csv")) == slurp(dir.file("d2/balance.csv")));
    CHECK(slurp(dir.file("d1/figure1_edges.csv")) == slurp(dir.file("d2/figure1_edges.csv")));

    REQUIRE(run_cli("design --roster " + dir.file("roster.csv") + " --seed 43 --out-dir " +
                    dir.file("d3")) == 0);
    CHECK(slurp(dir.file("d1/design.txt")) != slurp(dir.file("d3/design.txt")));
}

TEST_CASE("cli: analyze without permutations omits the permutation output") {
    TempDir dir;
    sim::SimScenario scenario;
    scenario.n_students = 80;
    scenario.tau = 0.1;
    scenario.seed = 11;
    io::write_scenario(scenario, dir.file("scenario.txt"));
    REQUIRE(run_cli("simulate --scenario " + dir.file("scenario.txt") + " --out-dir " +
                    dir.file("data")) == 0);
    REQUIRE(run_cli("analyze --design " + dir.file("data/design.txt") + " --scores " +
                    dir.file("data/scores.csv") + " --exams " + dir.file("data/exams.csv") +
                    " --permutations 0 --out-dir " + dir.file("out")) == 0);
    CHECK_FALSE(fs::exists(dir.file("out/permutation_distribution.csv")));
    const auto report = slurp(dir.file("out/effect_report.csv"));
    // the permutation column is empty in the overall row
    std::istringstream in(report);
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    CHECK(line.substr(line.size() - 2) == ",0");  // n_permutations = 0
}

TEST_CASE("cli: diagnose emits the full battery") {
    TempDir dir;
    sim::SimScenario scenario;
    scenario.n_students = 240;
    scenario.tau = 0.2;
    scenario.terms = 2;
    scenario.noncompliance_rate = 0.15;
    scenario.seed = 1234;
    io::write_scenario(scenario, dir.file("scenario.txt"));
    REQUIRE(run_cli("simulate --scenario " + dir.file("scenario.txt") + " --out-dir " +
                    dir.file("data")) == 0);
    REQUIRE(run_cli("diagnose --design " + dir.file("data/design.txt") + " --scores " +
                    dir.file("data/scores.csv") + " --exams " + dir.file("data/exams.csv") +
                    " --roster " + dir.file("data/roster.csv") + " --compliance " +
                    dir.file("data/compliance.csv") + " --out-dir " + dir.file("diag")) == 0);
    for (const char* name :
         {"quarter_test.csv", "carryover.csv", "heterogeneity.csv",
          "compliance_sensitivity.csv", "figure5_compliance_hist.csv",
          "figure6_baseline_effect.csv", "manifest.txt"}) {
        CHECK(fs::exists(dir.file(std::string("diag/") + name)));
    }
    const auto quarter = slurp(dir.file("diag/quarter_test.csv"));
    CHECK(quarter.find("autumn") != std::string::npos);
    const auto sens = slurp(dir.file("diag/compliance_sensitivity.csv"));
    CHECK(sens.find("8,") != std::string::npos);
    CHECK(sens.find("10,") != std::string::npos);
    CHECK(sens.find("12,") != std::string::npos);
}

TEST_CASE("cli: power writes the grid") {
    TempDir dir;
    sim::SimScenario scenario;
    scenario.n_students = 60;
    scenario.seed = 5;
    io::write_scenario(scenario, dir.file("scenario.txt"));
    REQUIRE(run_cli("power --scenario " + dir.file("scenario.txt") +
                    " --taus 0 0.4 --ns 60 --reps 100 --out " + dir.file("power.csv")) == 0);
    const auto table = slurp(dir.file("power.csv"));
    CHECK(table.find("tau,n,reps,alpha,power") != std::string::npos);
    CHECK(std::count(table.begin(), table.end(), '\n') == 3);  // header + 2 rows
}

TEST_CASE("cli: bad inputs fail with nonzero status") {
    TempDir dir;
    spit(dir.file("bad.csv"), "student_id,gender\ns1,0\n");
    CHECK(run_cli("design --roster " + dir.file("bad.csv") + " --out-dir " +
                  dir.file("out")) != 0);
    CHECK(run_cli("analyze --design /nonexistent --scores /nx --exams /nx") != 0);
}
