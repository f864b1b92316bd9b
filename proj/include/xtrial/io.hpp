#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xtrial/core.hpp"
#include "xtrial/simulate.hpp"

// File formats. All tabular data is plain comma-separated UTF-8 text with a
// header row and no quoting (ids and labels must not contain commas or
// newlines). Designs and scenarios use a sectioned key/value text format.
// Readers are strict: unknown columns warn, missing required columns fail,
// malformed rows fail with their line number.

namespace xtrial::io {

struct ReadOptions {
    std::vector<std::string>* warnings = nullptr;  // optional sink
};

Roster read_roster(const std::string& path, ReadOptions opts = {});
void write_roster(const Roster& roster, const std::string& path);

// Exam metadata: exam_id,unit,term,kind,points
std::vector<ExamMeta> read_exams(const std::string& path, ReadOptions opts = {});
void write_exams(const std::vector<ExamMeta>& exams, const std::string& path);

// Scores: student_id,exam_id,score — range-checked against the exam metadata.
ScoreTable read_scores(const std::string& path, const std::vector<ExamMeta>& exams,
                       ReadOptions opts = {});
void write_scores(const ScoreTable& scores, const std::string& path);

std::vector<ComplianceRecord> read_compliance(const std::string& path, ReadOptions opts = {});
void write_compliance(const std::vector<ComplianceRecord>& records, const std::string& path);

Design read_design(const std::string& path);
void write_design(const Design& design, const std::string& path);

sim::SimScenario read_scenario(const std::string& path, ReadOptions opts = {});
void write_scenario(const sim::SimScenario& scenario, const std::string& path);

// 64-bit FNV-1a content digest, hex encoded.
std::string file_digest(const std::string& path);

struct RunManifest {
    std::string tool_version;
    std::string command;
    std::vector<std::pair<std::string, std::string>> input_digests;  // path, digest
    std::uint64_t seed = 0;
    std::string timestamp;  // ISO-8601 UTC

    static RunManifest make(const std::string& command,
                            const std::vector<std::string>& input_paths, std::uint64_t seed);
    void write(const std::string& path) const;
};

extern const char* kToolVersion;

}  // namespace xtrial::io
