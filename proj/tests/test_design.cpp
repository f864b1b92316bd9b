#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "oracle_helpers.hpp"
#include "test_support.hpp"
#include "xtrial/design.hpp"
#include "xtrial/rng.hpp"

using namespace xtrial;
using testsup::make_roster;
using testsup::make_student;

TEST_CASE("validate_roster flags duplicates and bad fields") {
    Roster roster;
    roster.students.push_back(make_student("s1", 0, 0, 0, 0, ClassYear::Freshman, 70));
    roster.students.push_back(make_student("s1", 1, 0, 0, 0, ClassYear::Senior, 80));
    const auto violations = validate_roster(roster);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].find("s1") != std::string::npos);

    CHECK(validate_roster(Roster{}).empty());

    Roster bad;
    bad.students.push_back(make_student("x", 2, 0, 0, 0, ClassYear::Freshman, 70));
    bad.students.back().baseline = std::nan("");
    CHECK(validate_roster(bad).size() == 2);
}

TEST_CASE("validate_roster accepts a realistic synthetic roster") {
    CHECK(validate_roster(make_roster(148, 7)).empty());
}

TEST_CASE("blocking partitions by the stratum tuple") {
    SUBCASE("identical covariates collapse to one block") {
        Roster roster;
        for (int i = 0; i < 6; ++i) {
            roster.students.push_back(
                make_student("s" + std::to_string(i), 1, 0, 1, 0, ClassYear::Junior, 70.0 + i));
        }
        const auto blocks = design::block(roster);
        REQUIRE(blocks.size() == 1);
        CHECK(blocks[0].size() == 6);
    }
    SUBCASE("all tuples give singleton blocks") {
        Roster roster;
        int i = 0;
        for (const int g : {0, 1}) {
            for (const int u : {0, 1}) {
                for (const int a : {0, 1}) {
                    roster.students.push_back(make_student("s" + std::to_string(i++), g, u, a,
                                                           0, ClassYear::Freshman, 70));
                }
            }
        }
        const auto blocks = design::block(roster);
        CHECK(blocks.size() == 8);
        for (const auto& b : blocks) CHECK(b.size() == 1);
    }
    SUBCASE("148-row synthetic roster partitions") {
        const auto roster = make_roster(148, 3);
        const auto blocks = design::block(roster);
        std::size_t total = 0;
        std::set<std::size_t> seen;
        for (const auto& b : blocks) {
            total += b.size();
            for (const auto idx : b) CHECK(seen.insert(idx).second);
        }
        CHECK(total == 148);
    }
    SUBCASE("terms never share a block") {
        const auto roster = make_roster(60, 4, 2);
        for (const auto& b : design::block(roster)) {
            std::set<std::string> terms;
            for (const auto idx : b) terms.insert(roster.students[idx].term);
            CHECK(terms.size() == 1);
        }
    }
}

TEST_CASE("covariate distance") {
    const auto cfg = design::DistanceConfig::defaults();
    const auto roster = make_roster(30, 11);
    const auto rs = design::RosterStats::compute(roster, cfg);

    SUBCASE("identity and symmetry") {
        for (std::size_t i = 0; i < 10; ++i) {
            CHECK(design::covariate_distance(roster.students[i], roster.students[i], cfg, rs) ==
                  doctest::Approx(0.0));
            for (std::size_t j = 0; j < 10; ++j) {
                CHECK(design::covariate_distance(roster.students[i], roster.students[j], cfg,
                                                 rs) ==
                      doctest::Approx(design::covariate_distance(
                          roster.students[j], roster.students[i], cfg, rs)));
            }
        }
    }
    SUBCASE("hand-computed two-covariate example") {
        design::DistanceConfig two;
        two.numeric_fields = {"baseline"};
        two.categorical_fields = {"math_adv"};
        two.weights["baseline"] = 2.0;
        Roster mini;
        mini.students.push_back(make_student("a", 0, 0, 0, 0, ClassYear::Freshman, 60));
        mini.students.push_back(make_student("b", 0, 0, 0, 1, ClassYear::Freshman, 80));
        const auto ms = design::RosterStats::compute(mini, two);
        // baseline mean 70, sd sqrt(200); z-gap = 20/sqrt(200); math gap = 1
        const double zgap = 20.0 / std::sqrt(200.0);
        const double want = std::sqrt(2.0 * zgap * zgap + 1.0);
        CHECK(design::covariate_distance(mini.students[0], mini.students[1], two, ms) ==
              doctest::Approx(want).epsilon(1e-12));
    }
    SUBCASE("zero-variance numeric field warns and contributes nothing") {
        Roster flat;
        flat.students.push_back(make_student("a", 0, 0, 0, 0, ClassYear::Freshman, 70));
        flat.students.push_back(make_student("b", 0, 0, 0, 1, ClassYear::Senior, 70));
        const auto ms = design::RosterStats::compute(flat, cfg);
        CHECK(ms.warnings.size() == 1);
        CHECK(ms.warnings[0].find("baseline") != std::string::npos);
        // distance reduces to the class-year + math components
        const double d =
            design::covariate_distance(flat.students[0], flat.students[1], cfg, ms);
        const double zy = 3.0 / std::sqrt(4.5);  // class-year z gap: sd of {0,3} is sqrt(4.5)
        CHECK(d == doctest::Approx(std::sqrt(zy * zy + 1.0)));
    }
}

TEST_CASE("optimal pairing") {
    SUBCASE("two students form the single pair") {
        const std::vector<std::vector<double>> dist{{0, 1}, {1, 0}};
        const auto result = design::optimal_pairing(2, dist, {"a", "b"});
        REQUIRE(result.pairs.size() == 1);
        CHECK_FALSE(result.leftover.has_value());
    }
    SUBCASE("four students verified against all 3 matchings") {
        std::vector<std::vector<double>> dist(4, std::vector<double>(4, 0.0));
        auto set = [&](std::size_t i, std::size_t j, double v) {
            dist[i][j] = v;
            dist[j][i] = v;
        };
        set(0, 1, 1.0);
        set(2, 3, 1.5);
        set(0, 2, 2.0);
        set(1, 3, 2.0);
        set(0, 3, 1.9);
        set(1, 2, 1.9);
        const auto result = design::optimal_pairing(4, dist, {"a", "b", "c", "d"});
        CHECK(result.total_cost == doctest::Approx(oracle::exhaustive_min_matching(dist)));
        std::set<std::pair<std::size_t, std::size_t>> got(result.pairs.begin(),
                                                          result.pairs.end());
        CHECK(got.count({0, 1}) == 1);
        CHECK(got.count({2, 3}) == 1);
    }
    SUBCASE("10 random students match the 945-matching brute force") {
        rng::Engine gen(5150);
        for (int rep = 0; rep < 25; ++rep) {
            std::vector<std::vector<double>> dist(10, std::vector<double>(10, 0.0));
            for (std::size_t i = 0; i < 10; ++i) {
                for (std::size_t j = i + 1; j < 10; ++j) {
                    dist[i][j] = dist[j][i] = gen.uniform() * 5.0;
                }
            }
            std::vector<std::string> ids;
            for (int i = 0; i < 10; ++i) ids.push_back("s" + std::to_string(i));
            const auto result = design::optimal_pairing(10, dist, ids);
            CHECK(result.total_cost ==
                  doctest::Approx(oracle::exhaustive_min_matching(dist)).epsilon(1e-9));
            CHECK_FALSE(result.leftover.has_value());
        }
    }
    SUBCASE("odd block drops the cost-minimizing student") {
        // 5 points on a line; dropping the far-right one is optimal
        const std::vector<double> xs{0.0, 0.1, 5.0, 5.1, 100.0};
        std::vector<std::vector<double>> dist(5, std::vector<double>(5, 0.0));
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 5; ++j) dist[i][j] = std::fabs(xs[i] - xs[j]);
        }
        const auto result = design::optimal_pairing(5, dist, {"a", "b", "c", "d", "e"});
        REQUIRE(result.leftover.has_value());
        CHECK(*result.leftover == 4);
        CHECK(result.total_cost == doctest::Approx(0.2));
        // brute force over drops
        double best = 1e18;
        for (std::size_t drop = 0; drop < 5; ++drop) {
            std::vector<std::vector<double>> sub;
            for (std::size_t i = 0; i < 5; ++i) {
                if (i == drop) continue;
                std::vector<double> row;
                for (std::size_t j = 0; j < 5; ++j) {
                    if (j != drop) row.push_back(dist[i][j]);
                }
                sub.push_back(row);
            }
            best = std::min(best, oracle::exhaustive_min_matching(sub));
        }
        CHECK(result.total_cost == doctest::Approx(best));
    }
    SUBCASE("leftover ties break toward the smallest id") {
        // three clones: every drop leaves a zero-cost pair
        std::vector<std::vector<double>> dist(3, std::vector<double>(3, 0.0));
        const auto result = design::optimal_pairing(3, dist, {"s1", "s2", "s3"});
        REQUIRE(result.leftover.has_value());
        CHECK(*result.leftover == 0);  // ids are sorted, index 0 = smallest
    }
    SUBCASE("random odd blocks agree with drop-by-drop brute force") {
        rng::Engine gen(616);
        for (int rep = 0; rep < 20; ++rep) {
            const std::size_t n = 5 + 2 * gen.below(3);  // 5,7,9
            std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = i + 1; j < n; ++j) {
                    dist[i][j] = dist[j][i] = gen.uniform();
                }
            }
            std::vector<std::string> ids;
            for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));
            const auto result = design::optimal_pairing(n, dist, ids);
            double best = 1e18;
            for (std::size_t drop = 0; drop < n; ++drop) {
                std::vector<std::vector<double>> sub;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i == drop) continue;
                    std::vector<double> row;
                    for (std::size_t j = 0; j < n; ++j) {
                        if (j != drop) row.push_back(dist[i][j]);
                    }
                    sub.push_back(row);
                }
                best = std::min(best, oracle::exhaustive_min_matching(sub));
            }
            CHECK(result.total_cost == doctest::Approx(best).epsilon(1e-9));
        }
    }
}

TEST_CASE("arm assignment") {
    SUBCASE("pairs always receive complementary patterns") {
        for (const std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
            const auto design = design::assign_arms({{"a", "b"}}, {}, seed, 4, true);
            const auto& pa = design.assignment.at("a");
            const auto& pb = design.assignment.at("b");
            CHECK(pa.complement() == pb);
        }
    }
    SUBCASE("deterministic given the seed") {
        const std::vector<std::pair<std::string, std::string>> pairs{{"a", "b"}, {"c", "d"}};
        const auto d1 = design::assign_arms(pairs, {"e"}, 777, 4, true);
        const auto d2 = design::assign_arms(pairs, {"e"}, 777, 4, true);
        for (const auto& [id, p] : d1.assignment) CHECK(d2.assignment.at(id) == p);
    }
    SUBCASE("every student treated in exactly half the units") {
        const auto design = design::assign_arms({{"a", "b"}, {"c", "d"}}, {"e"}, 31, 4, true);
        for (const auto& [id, p] : design.assignment) {
            CHECK(p.treated_count() == 2);
        }
    }
    SUBCASE("pattern marginals are uniform over rerandomizations") {
        std::vector<std::pair<std::string, std::string>> pairs;
        for (int i = 0; i < 74; ++i) {
            pairs.emplace_back("a" + std::to_string(i), "b" + std::to_string(i));
        }
        std::map<std::string, std::map<std::string, int>> counts;
        const int reps = 10000;
        for (int r = 0; r < reps; ++r) {
            const auto design =
                design::assign_arms(pairs, {}, 42000 + static_cast<std::uint64_t>(r), 4, true);
            for (const auto& [id, p] : design.assignment) counts[id][p.str()] += 1;
        }
        for (const auto& [id, by_pattern] : counts) {
            for (const std::string pat : {"TCTC", "CTCT", "TCCT", "CTTC"}) {
                const auto it = by_pattern.find(pat);
                const double freq =
                    it == by_pattern.end() ? 0.0 : static_cast<double>(it->second) / reps;
                CHECK(std::fabs(freq - 0.25) < 0.02);
            }
        }
    }
    SUBCASE("paper mode admits exactly the four study patterns") {
        const auto patterns = admissible_patterns(4, true);
        std::set<std::string> names;
        for (const auto& p : patterns) names.insert(p.str());
        CHECK(names == std::set<std::string>{"TCTC", "CTCT", "TCCT", "CTTC"});
        CHECK_THROWS_AS(admissible_patterns(6, true), DataError);
    }
    SUBCASE("general mode uses all balanced patterns") {
        const auto patterns = admissible_patterns(6, false);
        CHECK(patterns.size() == 20);  // C(6,3)
        const auto design = design::assign_arms({{"a", "b"}}, {}, 5, 6, false);
        CHECK(design.assignment.at("a").treated_count() == 3);
        CHECK(design.assignment.at("a").complement() == design.assignment.at("b"));
    }
}

TEST_CASE("make_design satisfies the structural invariants") {
    const auto roster = make_roster(101, 21);
    const auto cfg = design::DistanceConfig::defaults();
    const auto d = design::make_design(roster, cfg, 99, 4, true);
    CHECK(validate_design(d, roster).empty());

    // pairs never cross blocks; at most one leftover per block
    std::map<std::string, std::size_t> block_of;
    for (std::size_t b = 0; b < d.blocks.size(); ++b) {
        for (const auto& id : d.blocks[b]) block_of[id] = b;
    }
    for (const auto& [a, b] : d.pairs) {
        CHECK(block_of.at(a) == block_of.at(b));
    }
    std::map<std::size_t, int> leftovers_per_block;
    for (const auto& id : d.leftovers) leftovers_per_block[block_of.at(id)] += 1;
    for (const auto& [b, count] : leftovers_per_block) CHECK(count <= 1);
}

TEST_CASE("pairing is invariant to roster row order") {
    auto roster = make_roster(40, 77);
    const auto cfg = design::DistanceConfig::defaults();
    const auto d1 = design::make_design(roster, cfg, 4242, 4, true);

    std::reverse(roster.students.begin(), roster.students.end());
    const auto d2 = design::make_design(roster, cfg, 4242, 4, true);

    std::set<std::pair<std::string, std::string>> p1(d1.pairs.begin(), d1.pairs.end());
    std::set<std::pair<std::string, std::string>> p2(d2.pairs.begin(), d2.pairs.end());
    CHECK(p1 == p2);
    CHECK(d1.leftovers == d2.leftovers);
    for (const auto& [id, p] : d1.assignment) CHECK(d2.assignment.at(id) == p);
}

TEST_CASE("balance report") {
    SUBCASE("identical groups show no imbalance") {
        // four clone-pairs make every pattern group identical
        Roster roster;
        std::vector<std::pair<std::string, std::string>> pairs;
        for (int i = 0; i < 4; ++i) {
            const std::string a = "a" + std::to_string(i);
            const std::string b = "b" + std::to_string(i);
            roster.students.push_back(make_student(a, 0, 0, 0, 0, ClassYear::Junior, 70));
            roster.students.push_back(make_student(b, 0, 0, 0, 0, ClassYear::Junior, 70));
            pairs.emplace_back(a, b);
        }
        Design d;
        d.units = 4;
        d.paper_mode = true;
        d.pairs = pairs;
        d.assignment["a0"] = ArmPattern::parse("TCTC");
        d.assignment["b0"] = ArmPattern::parse("CTCT");
        d.assignment["a1"] = ArmPattern::parse("TCCT");
        d.assignment["b1"] = ArmPattern::parse("CTTC");
        d.assignment["a2"] = ArmPattern::parse("TCTC");
        d.assignment["b2"] = ArmPattern::parse("CTCT");
        d.assignment["a3"] = ArmPattern::parse("TCCT");
        d.assignment["b3"] = ArmPattern::parse("CTTC");
        const auto rows = design::balance_report(d, roster, {});
        for (const auto& row : rows) {
            CHECK(row.stat == doctest::Approx(0.0));
            CHECK(row.p == doctest::Approx(1.0));
        }
        const auto& anova = rows.front();
        CHECK(anova.test == "anova_f");
        CHECK(anova.df1 == 3);
    }
    SUBCASE("class-year chi-square df is (groups-1)(levels-1)") {
        const auto roster = make_roster(200, 8);  // 200 draws hit all 5 levels
        const auto d =
            design::make_design(roster, design::DistanceConfig::defaults(), 5, 4, true);
        const auto rows = design::balance_report(d, roster, {});
        const auto year_row = std::find_if(
            rows.begin(), rows.end(), [](const auto& r) { return r.covariate == "class_year"; });
        REQUIRE(year_row != rows.end());
        CHECK(year_row->df1 == 12);
        const auto gender_row = std::find_if(
            rows.begin(), rows.end(), [](const auto& r) { return r.covariate == "gender"; });
        CHECK(gender_row->df1 == 3);
    }
    SUBCASE("empty pattern group errors") {
        Roster roster;
        roster.students.push_back(make_student("a", 0, 0, 0, 0, ClassYear::Junior, 70));
        roster.students.push_back(make_student("b", 0, 0, 0, 0, ClassYear::Junior, 75));
        Design d;
        d.units = 4;
        d.paper_mode = true;
        d.assignment["a"] = ArmPattern::parse("TCTC");
        d.assignment["b"] = ArmPattern::parse("CTCT");
        CHECK_THROWS_AS(design::balance_report(d, roster, {}), DataError);
    }
}

TEST_CASE("matched randomization balances no worse than complete randomization") {
    rng::Engine gen(1001);
    const auto roster = make_roster(80, 13);
    const auto cfg = design::DistanceConfig::defaults();
    const auto patterns = admissible_patterns(4, true);
    double matched_mean_p = 0.0, complete_mean_p = 0.0;
    const int reps = 120;
    for (int r = 0; r < reps; ++r) {
        const auto d = design::make_design(roster, cfg, 30000 + r, 4, true);
        matched_mean_p += design::balance_report(d, roster, {}).front().p;

        Design complete;
        complete.units = 4;
        complete.paper_mode = true;
        for (const auto& s : roster.students) {
            complete.assignment[s.id] = patterns[gen.below(4)];
        }
        try {
            complete_mean_p += design::balance_report(complete, roster, {}).front().p;
        } catch (const DataError&) {
            complete_mean_p += 1.0;  // an empty group: treat as balanced for the comparison
        }
    }
    matched_mean_p /= reps;
    complete_mean_p /= reps;
    CHECK(matched_mean_p >= complete_mean_p - 0.05);
}

TEST_CASE("figure1 projection data") {
    SUBCASE("clone pairs give zero-length matched edges") {
        Roster roster;
        rng::Engine gen(5);
        for (int i = 0; i < 10; ++i) {
            const auto base = make_student(
                "c" + std::to_string(2 * i), gen.coin(), gen.coin(), gen.coin(), gen.coin(),
                static_cast<ClassYear>(gen.below(5)), 50.0 + static_cast<double>(gen.below(40)));
            auto clone = base;
            clone.id = "c" + std::to_string(2 * i + 1);
            roster.students.push_back(base);
            roster.students.push_back(clone);
        }
        const auto d =
            design::make_design(roster, design::DistanceConfig::defaults(), 3, 4, true);
        const auto fig = design::figure1_data(d, roster, 3);
        CHECK(fig.ids.size() == roster.size());
        CHECK(fig.matched_mean_edge_length == doctest::Approx(0.0).epsilon(1e-9));
        for (const auto& [a, b] : fig.matched_edges) {
            for (std::size_t c = 0; c < 3; ++c) {
                CHECK(fig.scores[a][c] == doctest::Approx(fig.scores[b][c]).epsilon(1e-9));
            }
        }
    }
    SUBCASE("matched edges are shorter than random ones on a real roster") {
        const auto roster = make_roster(100, 17);
        const auto d =
            design::make_design(roster, design::DistanceConfig::defaults(), 11, 4, true);
        const auto fig = design::figure1_data(d, roster, 11);
        CHECK(fig.ids.size() == 100);
        CHECK(fig.matched_mean_edge_length < fig.random_mean_edge_length);
    }
}
