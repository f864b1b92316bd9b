#include "xtrial/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

namespace xtrial::io {

const char* kToolVersion = "1.0.0";

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

// Shortest decimal text that round-trips the double exactly.
std::string fmt_double(double v) {
    char buf[40];
    for (const int precision : {15, 16, 17}) {
        std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

double parse_double(const std::string& text, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw DataError(where + ": bad number \"" + text + "\"");
    }
}

long parse_long(const std::string& text, const std::string& where) {
    try {
        std::size_t used = 0;
        const long v = std::stol(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw DataError(where + ": bad integer \"" + text + "\"");
    }
}

std::uint64_t parse_u64(const std::string& text, const std::string& where) {
    try {
        std::size_t used = 0;
        const std::uint64_t v = std::stoull(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw DataError(where + ": bad unsigned integer \"" + text + "\"");
    }
}

class CsvReader {
public:
    CsvReader(const std::string& path, const std::vector<std::string>& required,
              ReadOptions opts)
        : path_(path) {
        in_.open(path);
        if (!in_) throw DataError("cannot open " + path);
        std::string header;
        if (!std::getline(in_, header)) throw DataError(path + ": empty file");
        if (!header.empty() && header.back() == '\r') header.pop_back();
        const auto names = split(header, ',');
        for (std::size_t i = 0; i < names.size(); ++i) {
            const std::string name = trim(names[i]);
            columns_[name] = i;
            if (std::find(required.begin(), required.end(), name) == required.end() &&
                opts.warnings != nullptr) {
                opts.warnings->push_back(path + ": unknown column \"" + name + "\" ignored");
            }
        }
        n_columns_ = names.size();
        for (const auto& name : required) {
            if (!columns_.count(name)) {
                throw DataError(path + ": missing required column \"" + name + "\"");
            }
        }
        line_number_ = 1;
    }

    bool next_row() {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_number_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (trim(line).empty()) continue;
            fields_ = split(line, ',');
            if (fields_.size() != n_columns_) {
                throw DataError(where() + ": expected " + std::to_string(n_columns_) +
                                " fields, got " + std::to_string(fields_.size()));
            }
            return true;
        }
        return false;
    }

    std::string field(const std::string& column) const {
        return trim(fields_.at(columns_.at(column)));
    }

    std::string where() const { return path_ + ":" + std::to_string(line_number_); }

private:
    std::string path_;
    std::ifstream in_;
    std::map<std::string, std::size_t> columns_;
    std::size_t n_columns_ = 0;
    std::vector<std::string> fields_;
    std::size_t line_number_ = 0;
};

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // \n line endings everywhere
    if (!out) throw DataError("cannot write " + path);
    return out;
}

int parse_binary(const std::string& text, const std::string& where, const char* name) {
    const long v = parse_long(text, where);
    if (v != 0 && v != 1) {
        throw DataError(where + ": " + name + " must be 0 or 1, got " + text);
    }
    return static_cast<int>(v);
}

}  // namespace

Roster read_roster(const std::string& path, ReadOptions opts) {
    static const std::vector<std::string> required = {
        "student_id", "gender", "urm", "ap_stats", "math_adv",
        "class_year", "baseline", "term"};
    CsvReader reader(path, required, opts);
    Roster roster;
    while (reader.next_row()) {
        Student s;
        s.id = reader.field("student_id");
        if (s.id.empty()) throw DataError(reader.where() + ": empty student_id");
        s.gender = parse_binary(reader.field("gender"), reader.where(), "gender");
        s.urm = parse_binary(reader.field("urm"), reader.where(), "urm");
        s.ap_stats = parse_binary(reader.field("ap_stats"), reader.where(), "ap_stats");
        s.math_adv = parse_binary(reader.field("math_adv"), reader.where(), "math_adv");
        const auto year = parse_class_year(reader.field("class_year"));
        if (!year) {
            throw DataError(reader.where() + ": bad class_year \"" +
                            reader.field("class_year") + "\"");
        }
        s.class_year = *year;
        s.baseline = parse_double(reader.field("baseline"), reader.where());
        s.term = reader.field("term");
        roster.students.push_back(std::move(s));
    }
    const auto violations = validate_roster(roster);
    if (!violations.empty()) throw DataError(path + ": " + violations.front());
    return roster;
}

void write_roster(const Roster& roster, const std::string& path) {
    auto out = open_out(path);
    out << "student_id,gender,urm,ap_stats,math_adv,class_year,baseline,term\n";
    for (const auto& s : roster.students) {
        out << s.id << ',' << s.gender << ',' << s.urm << ',' << s.ap_stats << ','
            << s.math_adv << ',' << to_string(s.class_year) << ',' << fmt_double(s.baseline)
            << ',' << s.term << '\n';
    }
}

std::vector<ExamMeta> read_exams(const std::string& path, ReadOptions opts) {
    static const std::vector<std::string> required = {"exam_id", "unit", "term", "kind",
                                                      "points"};
    CsvReader reader(path, required, opts);
    std::vector<ExamMeta> exams;
    while (reader.next_row()) {
        ExamMeta e;
        e.exam_id = reader.field("exam_id");
        if (e.exam_id.empty()) throw DataError(reader.where() + ": empty exam_id");
        for (const auto& other : exams) {
            if (other.exam_id == e.exam_id) {
                throw DataError(reader.where() + ": duplicate exam_id \"" + e.exam_id + "\"");
            }
        }
        e.unit = static_cast<int>(parse_long(reader.field("unit"), reader.where()));
        if (e.unit < 1) throw DataError(reader.where() + ": unit must be >= 1");
        e.term = reader.field("term");
        const auto kind = parse_exam_kind(reader.field("kind"));
        if (!kind) {
            throw DataError(reader.where() + ": bad kind \"" + reader.field("kind") + "\"");
        }
        e.kind = *kind;
        e.points = parse_double(reader.field("points"), reader.where());
        if (!(e.points > 0.0)) throw DataError(reader.where() + ": points must be positive");
        exams.push_back(std::move(e));
    }
    return exams;
}

void write_exams(const std::vector<ExamMeta>& exams, const std::string& path) {
    auto out = open_out(path);
    out << "exam_id,unit,term,kind,points\n";
    for (const auto& e : exams) {
        out << e.exam_id << ',' << e.unit << ',' << e.term << ',' << to_string(e.kind) << ','
            << fmt_double(e.points) << '\n';
    }
}

ScoreTable read_scores(const std::string& path, const std::vector<ExamMeta>& exams,
                       ReadOptions opts) {
    static const std::vector<std::string> required = {"student_id", "exam_id", "score"};
    CsvReader reader(path, required, opts);
    ScoreTable table;
    table.exams = exams;
    while (reader.next_row()) {
        const std::string sid = reader.field("student_id");
        const std::string eid = reader.field("exam_id");
        const double y = parse_double(reader.field("score"), reader.where());
        const ExamMeta* exam = table.exam(eid);
        if (exam == nullptr) {
            throw DataError(reader.where() + ": unknown exam_id \"" + eid + "\"");
        }
        if (y < 0.0 || y > exam->points) {
            throw DataError(reader.where() + ": score " + fmt_double(y) + " outside [0, " +
                            fmt_double(exam->points) + "] for exam \"" + eid + "\"");
        }
        if (table.values.count({sid, eid})) {
            throw DataError(reader.where() + ": duplicate score for (" + sid + ", " + eid +
                            ")");
        }
        table.set(sid, eid, y);
    }
    return table;
}

void write_scores(const ScoreTable& scores, const std::string& path) {
    auto out = open_out(path);
    out << "student_id,exam_id,score\n";
    for (const auto& [key, y] : scores.values) {
        out << key.first << ',' << key.second << ',' << fmt_double(y) << '\n';
    }
}

std::vector<ComplianceRecord> read_compliance(const std::string& path, ReadOptions opts) {
    static const std::vector<std::string> required = {"student_id", "completed", "assigned"};
    CsvReader reader(path, required, opts);
    std::vector<ComplianceRecord> records;
    while (reader.next_row()) {
        ComplianceRecord r;
        r.student_id = reader.field("student_id");
        r.completed = static_cast<int>(parse_long(reader.field("completed"), reader.where()));
        r.assigned = static_cast<int>(parse_long(reader.field("assigned"), reader.where()));
        if (r.assigned < 1) throw DataError(reader.where() + ": assigned must be positive");
        if (r.completed < 0 || r.completed > r.assigned) {
            throw DataError(reader.where() + ": completed must be in [0, assigned]");
        }
        records.push_back(std::move(r));
    }
    return records;
}

void write_compliance(const std::vector<ComplianceRecord>& records, const std::string& path) {
    auto out = open_out(path);
    out << "student_id,completed,assigned\n";
    for (const auto& r : records) {
        out << r.student_id << ',' << r.completed << ',' << r.assigned << '\n';
    }
}

void write_design(const Design& design, const std::string& path) {
    auto out = open_out(path);
    out << "format=design/v1\n";
    out << "seed=" << design.seed << '\n';
    out << "units=" << design.units << '\n';
    out << "mode=" << (design.paper_mode ? "paper" : "general") << '\n';
    out << "[blocks]\n";
    for (std::size_t b = 0; b < design.blocks.size(); ++b) {
        for (const auto& id : design.blocks[b]) out << b << ',' << id << '\n';
    }
    out << "[pairs]\n";
    for (const auto& [a, bb] : design.pairs) out << a << ',' << bb << '\n';
    out << "[leftovers]\n";
    for (const auto& id : design.leftovers) out << id << '\n';
    out << "[assignment]\n";
    for (const auto& [id, pattern] : design.assignment) {
        out << id << ',' << pattern.str() << '\n';
    }
}

Design read_design(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    Design design;
    std::string line;
    std::string section;
    std::size_t line_number = 0;
    bool format_seen = false;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string text = trim(line);
        if (text.empty() || text.front() == '#') continue;
        const std::string where = path + ":" + std::to_string(line_number);
        if (text.front() == '[') {
            section = text;
            continue;
        }
        if (section.empty()) {
            const auto eq = text.find('=');
            if (eq == std::string::npos) throw DataError(where + ": expected key=value");
            const std::string key = text.substr(0, eq);
            const std::string value = text.substr(eq + 1);
            if (key == "format") {
                if (value != "design/v1") throw DataError(where + ": unsupported format");
                format_seen = true;
            } else if (key == "seed") {
                design.seed = parse_u64(value, where);
            } else if (key == "units") {
                design.units = static_cast<int>(parse_long(value, where));
            } else if (key == "mode") {
                if (value != "paper" && value != "general") {
                    throw DataError(where + ": mode must be paper or general");
                }
                design.paper_mode = value == "paper";
            } else {
                throw DataError(where + ": unknown key \"" + key + "\"");
            }
        } else if (section == "[blocks]") {
            const auto fields = split(text, ',');
            if (fields.size() != 2) throw DataError(where + ": expected block,student_id");
            const auto b = static_cast<std::size_t>(parse_long(fields[0], where));
            if (design.blocks.size() <= b) design.blocks.resize(b + 1);
            design.blocks[b].push_back(trim(fields[1]));
        } else if (section == "[pairs]") {
            const auto fields = split(text, ',');
            if (fields.size() != 2) throw DataError(where + ": expected id_a,id_b");
            design.pairs.emplace_back(trim(fields[0]), trim(fields[1]));
        } else if (section == "[leftovers]") {
            design.leftovers.push_back(text);
        } else if (section == "[assignment]") {
            const auto fields = split(text, ',');
            if (fields.size() != 2) throw DataError(where + ": expected id,pattern");
            try {
                design.assignment[trim(fields[0])] = ArmPattern::parse(trim(fields[1]));
            } catch (const DataError& e) {
                throw DataError(where + ": " + e.what());
            }
        } else {
            throw DataError(where + ": unknown section " + section);
        }
    }
    if (!format_seen) throw DataError(path + ": missing format=design/v1 line");
    for (const auto& [id, pattern] : design.assignment) {
        if (pattern.units() != design.units) {
            throw DataError(path + ": pattern length mismatch for \"" + id + "\"");
        }
    }
    return design;
}

void write_scenario(const sim::SimScenario& scenario, const std::string& path) {
    auto out = open_out(path);
    out << "format=scenario/v1\n";
    out << "n_students=" << scenario.n_students << '\n';
    out << "m_units=" << scenario.m_units << '\n';
    out << "tau=" << fmt_double(scenario.tau) << '\n';
    out << "theta_var=" << fmt_double(scenario.theta_var) << '\n';
    auto write_vec = [&](const char* key, const std::vector<double>& v) {
        out << key << '=';
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) out << ';';
            out << fmt_double(v[i]);
        }
        out << '\n';
    };
    write_vec("exam_mu", scenario.exam_mu);
    write_vec("exam_sigma", scenario.exam_sigma);
    out << "noncompliance_rate=" << fmt_double(scenario.noncompliance_rate) << '\n';
    out << "carryover_delta=" << fmt_double(scenario.carryover_delta) << '\n';
    for (const auto& [field, extra] : scenario.tau_by_covariate) {
        out << "tau_" << field << '=' << fmt_double(extra) << '\n';
    }
    out << "terms=" << scenario.terms << '\n';
    out << "with_finals=" << (scenario.with_finals ? "true" : "false") << '\n';
    out << "noise=" << (scenario.noise == sim::NoiseFamily::Normal ? "normal" : "uniform")
        << '\n';
    out << "mode=" << (scenario.paper_mode ? "paper" : "general") << '\n';
    out << "seed=" << scenario.seed << '\n';
}

sim::SimScenario read_scenario(const std::string& path, ReadOptions opts) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    sim::SimScenario scenario;
    std::string line;
    std::size_t line_number = 0;
    bool format_seen = false;
    auto parse_vec = [](const std::string& value, const std::string& where) {
        std::vector<double> out;
        if (trim(value).empty()) return out;
        for (const auto& item : split(value, ';')) out.push_back(parse_double(trim(item), where));
        return out;
    };
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string text = trim(line);
        if (text.empty() || text.front() == '#') continue;
        const std::string where = path + ":" + std::to_string(line_number);
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw DataError(where + ": expected key=value");
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (key == "format") {
            if (value != "scenario/v1") throw DataError(where + ": unsupported format");
            format_seen = true;
        } else if (key == "n_students") {
            scenario.n_students = static_cast<int>(parse_long(value, where));
        } else if (key == "m_units") {
            scenario.m_units = static_cast<int>(parse_long(value, where));
        } else if (key == "tau") {
            scenario.tau = parse_double(value, where);
        } else if (key == "theta_var") {
            scenario.theta_var = parse_double(value, where);
        } else if (key == "exam_mu") {
            scenario.exam_mu = parse_vec(value, where);
        } else if (key == "exam_sigma") {
            scenario.exam_sigma = parse_vec(value, where);
        } else if (key == "noncompliance_rate") {
            scenario.noncompliance_rate = parse_double(value, where);
        } else if (key == "carryover_delta") {
            scenario.carryover_delta = parse_double(value, where);
        } else if (key.rfind("tau_", 0) == 0) {
            scenario.tau_by_covariate[key.substr(4)] = parse_double(value, where);
        } else if (key == "terms") {
            scenario.terms = static_cast<int>(parse_long(value, where));
        } else if (key == "with_finals") {
            if (value != "true" && value != "false") {
                throw DataError(where + ": with_finals must be true or false");
            }
            scenario.with_finals = value == "true";
        } else if (key == "noise") {
            if (value == "normal") {
                scenario.noise = sim::NoiseFamily::Normal;
            } else if (value == "uniform") {
                scenario.noise = sim::NoiseFamily::Uniform;
            } else {
                throw DataError(where + ": noise must be normal or uniform");
            }
        } else if (key == "mode") {
            if (value != "paper" && value != "general") {
                throw DataError(where + ": mode must be paper or general");
            }
            scenario.paper_mode = value == "paper";
        } else if (key == "seed") {
            scenario.seed = parse_u64(value, where);
        } else if (opts.warnings != nullptr) {
            opts.warnings->push_back(where + ": unknown key \"" + key + "\" ignored");
        }
    }
    if (!format_seen) throw DataError(path + ": missing format=scenario/v1 line");
    scenario.finalize();
    scenario.validate();
    return scenario;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    char hex[32];
    std::snprintf(hex, sizeof(hex), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return hex;
}

RunManifest RunManifest::make(const std::string& command,
                              const std::vector<std::string>& input_paths,
                              std::uint64_t seed) {
    RunManifest m;
    m.tool_version = kToolVersion;
    m.command = command;
    m.seed = seed;
    for (const auto& p : input_paths) m.input_digests.emplace_back(p, file_digest(p));
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    m.timestamp = buf;
    return m;
}

void RunManifest::write(const std::string& path) const {
    auto out = open_out(path);
    out << "tool_version=" << tool_version << '\n';
    out << "command=" << command << '\n';
    out << "seed=" << seed << '\n';
    out << "timestamp=" << timestamp << '\n';
    for (const auto& [p, digest] : input_digests) {
        out << "input=" << p << '=' << digest << '\n';
    }
}

}  // namespace xtrial::io
