#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Core domain types for matched-pairs crossover trials. Plain value types,
// immutable by convention after construction; all algorithms live in the
// stats/design/analysis/sim modules.

namespace xtrial {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input data failed validation (bad file, inconsistent ids, ...).
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// A numerical routine was called outside its domain.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

enum class ClassYear : int {
    Freshman = 0,
    Sophomore = 1,
    Junior = 2,
    Senior = 3,
    Graduate = 4,
};

std::string to_string(ClassYear y);
std::optional<ClassYear> parse_class_year(const std::string& text);

struct Student {
    std::string id;
    int gender = 0;     // 1 = male
    int urm = 0;        // 1 = underrepresented minority
    int ap_stats = 0;   // 1 = passed a prior statistics course
    int math_adv = 0;   // 1 = took a course beyond calculus
    ClassYear class_year = ClassYear::Freshman;
    double baseline = 0.0;  // baseline exam score, raw points
    std::string term;

    // junior/senior/graduate
    bool upperclassman() const { return static_cast<int>(class_year) >= 2; }
};

struct Roster {
    std::vector<Student> students;

    std::size_t size() const { return students.size(); }
    bool empty() const { return students.empty(); }
    const Student* find(const std::string& id) const;
    std::vector<std::string> terms() const;  // distinct term labels, sorted
};

// Named covariate accessor used by distance configs, balance tests and the
// heterogeneity regression. "upperclassman" is the derived binary indicator.
double covariate_value(const Student& s, const std::string& field);
const std::vector<std::string>& covariate_fields();  // all primitive fields

std::vector<std::string> validate_roster(const Roster& roster);

// Sequence of unit assignments, one slot per study unit, T or C.
class ArmPattern {
public:
    ArmPattern() = default;
    explicit ArmPattern(std::vector<std::uint8_t> slots) : slots_(std::move(slots)) {}

    static ArmPattern parse(const std::string& text);  // e.g. "TCTC"

    int units() const { return static_cast<int>(slots_.size()); }
    // unit is 1-based, matching ExamMeta::unit
    bool treated(int unit) const { return slots_.at(static_cast<std::size_t>(unit - 1)) != 0; }
    int treated_count() const;
    bool balanced() const { return units() > 0 && 2 * treated_count() == units(); }

    ArmPattern complement() const;
    std::string str() const;

    // Lexicographically smaller of {pattern, complement}; identifies the
    // complementary family the pattern belongs to.
    std::string family() const;

    friend bool operator==(const ArmPattern& a, const ArmPattern& b) { return a.slots_ == b.slots_; }
    friend bool operator!=(const ArmPattern& a, const ArmPattern& b) { return !(a == b); }

private:
    std::vector<std::uint8_t> slots_;
};

// All balanced patterns of length m, sorted by string. In paper mode (m=4)
// the admissible set is restricted to the four alternating/nested patterns.
std::vector<ArmPattern> admissible_patterns(int m, bool paper_mode);

struct Design {
    std::uint64_t seed = 0;
    int units = 4;
    bool paper_mode = true;
    std::vector<std::vector<std::string>> blocks;
    std::vector<std::pair<std::string, std::string>> pairs;  // each stored id_a < id_b
    std::vector<std::string> leftovers;
    std::map<std::string, ArmPattern> assignment;
};

// Structural invariants: coverage, disjointness, pair complementarity,
// balanced patterns. Returns violations; empty means valid.
std::vector<std::string> validate_design(const Design& design, const Roster& roster);

enum class ExamKind { Quiz, FinalSection };

std::string to_string(ExamKind k);
std::optional<ExamKind> parse_exam_kind(const std::string& text);

struct ExamMeta {
    std::string exam_id;
    int unit = 1;  // 1-based study unit the exam concludes
    std::string term;
    ExamKind kind = ExamKind::Quiz;
    double points = 100.0;
};

struct ScoreTable {
    std::vector<ExamMeta> exams;
    // (student_id, exam_id) -> raw score in points
    std::map<std::pair<std::string, std::string>, double> values;

    const ExamMeta* exam(const std::string& exam_id) const;
    std::optional<double> score(const std::string& student_id, const std::string& exam_id) const;
    void set(const std::string& student_id, const std::string& exam_id, double y);
};

// Treatment indicator W for a (student, exam) cell, derived from the design
// via the exam's unit. Throws DataError if the student has no assignment.
bool treatment_of(const Design& design, const ExamMeta& exam, const std::string& student_id);

struct ComplianceRecord {
    std::string student_id;
    int completed = 0;
    int assigned = 12;
};

struct EffectReport {
    double d_bar = 0.0;  // standardized effect, control-SD units
    double se = 0.0;
    int n_used = 0;
    double t_stat = 0.0;
    int df = 0;
    double p_asymptotic = 1.0;
    std::optional<double> p_permutation;
    int n_permutations = 0;
};

}  // namespace xtrial
