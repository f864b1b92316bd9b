#pragma once

// Shared test fixtures: synthetic rosters with realistic covariate mixes.

#include <string>
#include <vector>

#include "xtrial/core.hpp"
#include "xtrial/rng.hpp"

namespace testsup {

inline xtrial::Student make_student(const std::string& id, int gender, int urm, int ap,
                                    int math, xtrial::ClassYear year, double baseline,
                                    const std::string& term = "autumn") {
    xtrial::Student s;
    s.id = id;
    s.gender = gender;
    s.urm = urm;
    s.ap_stats = ap;
    s.math_adv = math;
    s.class_year = year;
    s.baseline = baseline;
    s.term = term;
    return s;
}

inline xtrial::Roster make_roster(int n, std::uint64_t seed, int terms = 1) {
    xtrial::rng::Engine gen(xtrial::rng::splitmix64(seed));
    xtrial::Roster roster;
    for (int i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "t%04d", i);
        const double u = gen.uniform();
        const int year = u < 0.17 ? 0 : u < 0.41 ? 1 : u < 0.68 ? 2 : u < 0.98 ? 3 : 4;
        roster.students.push_back(make_student(
            id, gen.uniform() < 0.38 ? 1 : 0, gen.uniform() < 0.28 ? 1 : 0,
            gen.uniform() < 0.19 ? 1 : 0, gen.uniform() < 0.36 ? 1 : 0,
            static_cast<xtrial::ClassYear>(year), 50.0 + 30.0 * gen.uniform(),
            (terms == 2 && i % 5 < 2) ? "winter" : "autumn"));
    }
    return roster;
}

}  // namespace testsup
