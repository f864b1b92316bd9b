#include "xtrial/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace xtrial {

std::string to_string(ClassYear y) {
    switch (y) {
        case ClassYear::Freshman: return "freshman";
        case ClassYear::Sophomore: return "sophomore";
        case ClassYear::Junior: return "junior";
        case ClassYear::Senior: return "senior";
        case ClassYear::Graduate: return "graduate";
    }
    return "freshman";
}

std::optional<ClassYear> parse_class_year(const std::string& text) {
    if (text == "freshman") return ClassYear::Freshman;
    if (text == "sophomore") return ClassYear::Sophomore;
    if (text == "junior") return ClassYear::Junior;
    if (text == "senior") return ClassYear::Senior;
    if (text == "graduate") return ClassYear::Graduate;
    return std::nullopt;
}

const Student* Roster::find(const std::string& id) const {
    for (const auto& s : students) {
        if (s.id == id) return &s;
    }
    return nullptr;
}

std::vector<std::string> Roster::terms() const {
    std::set<std::string> seen;
    for (const auto& s : students) seen.insert(s.term);
    return {seen.begin(), seen.end()};
}

double covariate_value(const Student& s, const std::string& field) {
    if (field == "gender") return s.gender;
    if (field == "urm") return s.urm;
    if (field == "ap_stats") return s.ap_stats;
    if (field == "math_adv") return s.math_adv;
    if (field == "class_year") return static_cast<double>(s.class_year);
    if (field == "baseline") return s.baseline;
    if (field == "upperclassman") return s.upperclassman() ? 1.0 : 0.0;
    throw DataError("unknown covariate field: " + field);
}

const std::vector<std::string>& covariate_fields() {
    static const std::vector<std::string> fields = {
        "gender", "urm", "ap_stats", "math_adv", "class_year", "baseline"};
    return fields;
}

std::vector<std::string> validate_roster(const Roster& roster) {
    std::vector<std::string> violations;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < roster.students.size(); ++i) {
        const Student& s = roster.students[i];
        const std::string where = "student[" + std::to_string(i) + "]";
        if (s.id.empty()) violations.push_back(where + ": empty id");
        if (!seen.insert(s.id).second) {
            violations.push_back(where + ": duplicate id \"" + s.id + "\"");
        }
        auto check_binary = [&](int v, const char* name) {
            if (v != 0 && v != 1) {
                violations.push_back(where + " (\"" + s.id + "\"): " + name +
                                     " must be 0 or 1, got " + std::to_string(v));
            }
        };
        check_binary(s.gender, "gender");
        check_binary(s.urm, "urm");
        check_binary(s.ap_stats, "ap_stats");
        check_binary(s.math_adv, "math_adv");
        const int year = static_cast<int>(s.class_year);
        if (year < 0 || year > 4) {
            violations.push_back(where + " (\"" + s.id + "\"): class_year out of range");
        }
        if (!std::isfinite(s.baseline)) {
            violations.push_back(where + " (\"" + s.id + "\"): baseline is not finite");
        }
    }
    return violations;
}

ArmPattern ArmPattern::parse(const std::string& text) {
    std::vector<std::uint8_t> slots;
    slots.reserve(text.size());
    for (char ch : text) {
        if (ch == 'T') {
            slots.push_back(1);
        } else if (ch == 'C') {
            slots.push_back(0);
        } else {
            throw DataError("arm pattern must contain only T/C, got \"" + text + "\"");
        }
    }
    if (slots.empty()) throw DataError("arm pattern is empty");
    return ArmPattern(std::move(slots));
}

int ArmPattern::treated_count() const {
    int n = 0;
    for (auto s : slots_) n += s != 0;
    return n;
}

ArmPattern ArmPattern::complement() const {
    std::vector<std::uint8_t> flipped(slots_.size());
    for (std::size_t i = 0; i < slots_.size(); ++i) flipped[i] = slots_[i] ? 0 : 1;
    return ArmPattern(std::move(flipped));
}

std::string ArmPattern::str() const {
    std::string out;
    out.reserve(slots_.size());
    for (auto s : slots_) out.push_back(s ? 'T' : 'C');
    return out;
}

std::string ArmPattern::family() const {
    return std::min(str(), complement().str());
}

std::vector<ArmPattern> admissible_patterns(int m, bool paper_mode) {
    if (m < 2 || m % 2 != 0) throw DataError("unit count must be even and >= 2");
    if (paper_mode && m != 4) throw DataError("paper mode requires 4 units");
    if (paper_mode) {
        return {ArmPattern::parse("TCTC"), ArmPattern::parse("CTCT"),
                ArmPattern::parse("TCCT"), ArmPattern::parse("CTTC")};
    }
    std::vector<ArmPattern> out;
    for (std::uint32_t bits = 0; bits < (1u << m); ++bits) {
        std::vector<std::uint8_t> slots(static_cast<std::size_t>(m));
        int count = 0;
        for (int j = 0; j < m; ++j) {
            slots[static_cast<std::size_t>(j)] = (bits >> j) & 1u;
            count += (bits >> j) & 1u;
        }
        if (count == m / 2) out.emplace_back(std::move(slots));
    }
    std::sort(out.begin(), out.end(),
              [](const ArmPattern& a, const ArmPattern& b) { return a.str() < b.str(); });
    return out;
}

std::vector<std::string> validate_design(const Design& design, const Roster& roster) {
    std::vector<std::string> violations;

    std::map<std::string, int> block_count;
    for (const auto& block : design.blocks) {
        for (const auto& id : block) block_count[id] += 1;
    }
    for (const auto& s : roster.students) {
        auto it = block_count.find(s.id);
        if (it == block_count.end()) {
            violations.push_back("student \"" + s.id + "\" missing from blocks");
        } else if (it->second != 1) {
            violations.push_back("student \"" + s.id + "\" appears in " +
                                 std::to_string(it->second) + " blocks");
        }
    }

    std::map<std::string, int> paired_count;
    for (const auto& [a, b] : design.pairs) {
        paired_count[a] += 1;
        paired_count[b] += 1;
    }
    for (const auto& [id, count] : paired_count) {
        if (count > 1) {
            violations.push_back("student \"" + id + "\" appears in " +
                                 std::to_string(count) + " pairs");
        }
    }
    for (const auto& id : design.leftovers) {
        if (paired_count.count(id)) {
            violations.push_back("leftover student \"" + id + "\" is also paired");
        }
    }

    for (const auto& s : roster.students) {
        auto it = design.assignment.find(s.id);
        if (it == design.assignment.end()) {
            violations.push_back("student \"" + s.id + "\" has no arm pattern");
        } else if (!it->second.balanced()) {
            violations.push_back("student \"" + s.id + "\" has unbalanced pattern " +
                                 it->second.str());
        }
    }

    for (const auto& [a, b] : design.pairs) {
        auto ia = design.assignment.find(a);
        auto ib = design.assignment.find(b);
        if (ia == design.assignment.end() || ib == design.assignment.end()) continue;
        if (ia->second.complement() != ib->second) {
            violations.push_back("pair (" + a + ", " + b + ") patterns are not complementary: " +
                                 ia->second.str() + " vs " + ib->second.str());
        }
    }
    return violations;
}

std::string to_string(ExamKind k) {
    return k == ExamKind::Quiz ? "quiz" : "final_section";
}

std::optional<ExamKind> parse_exam_kind(const std::string& text) {
    if (text == "quiz") return ExamKind::Quiz;
    if (text == "final_section") return ExamKind::FinalSection;
    return std::nullopt;
}

const ExamMeta* ScoreTable::exam(const std::string& exam_id) const {
    for (const auto& e : exams) {
        if (e.exam_id == exam_id) return &e;
    }
    return nullptr;
}

std::optional<double> ScoreTable::score(const std::string& student_id,
                                        const std::string& exam_id) const {
    auto it = values.find({student_id, exam_id});
    if (it == values.end()) return std::nullopt;
    return it->second;
}

void ScoreTable::set(const std::string& student_id, const std::string& exam_id, double y) {
    values[{student_id, exam_id}] = y;
}

bool treatment_of(const Design& design, const ExamMeta& exam, const std::string& student_id) {
    auto it = design.assignment.find(student_id);
    if (it == design.assignment.end()) {
        throw DataError("student \"" + student_id + "\" has no arm assignment");
    }
    if (exam.unit < 1 || exam.unit > it->second.units()) {
        throw DataError("exam \"" + exam.exam_id + "\" unit " + std::to_string(exam.unit) +
                        " outside the design's " + std::to_string(it->second.units()) +
                        " units");
    }
    return it->second.treated(exam.unit);
}

}  // namespace xtrial
