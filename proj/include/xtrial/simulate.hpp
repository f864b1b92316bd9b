#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xtrial/analysis.hpp"
#include "xtrial/core.hpp"
#include "xtrial/design.hpp"

// Generative model for synthetic trials: latent student ability plus
// exam-specific difficulty/discrimination, a constant standardized treatment
// effect, and knobs for noncompliance, carryover and effect heterogeneity.
// Output uses the same types as ingested data, so the analysis pipeline
// cannot tell the difference.

namespace xtrial::sim {

enum class NoiseFamily { Normal, Uniform };

struct SimScenario {
    int n_students = 300;
    int m_units = 4;
    double tau = 0.0;            // standardized effect
    double theta_var = 0.7;      // between-student share; eps_var = 1 - theta_var
    std::vector<double> exam_mu;     // per study unit; finals appended when enabled
    std::vector<double> exam_sigma;
    double noncompliance_rate = 0.0;
    double carryover_delta = 0.0;  // z-units added to the unit after a treated unit
    std::map<std::string, double> tau_by_covariate;  // extra effect per indicator
    int terms = 1;
    bool with_finals = false;
    NoiseFamily noise = NoiseFamily::Normal;
    std::uint64_t seed = 0;
    bool paper_mode = true;

    double eps_var() const { return 1.0 - theta_var; }
    // Fills exam_mu/exam_sigma with defaults (70, 20) to the required length.
    void finalize();
    void validate() const;
};

struct TruthRecord {
    std::map<std::string, double> theta;
    std::map<std::string, double> tau_i;
    std::map<std::string, bool> noncomplier;
    double tau = 0.0;
    double carryover_delta = 0.0;
};

struct SimResult {
    Roster roster;
    Design design;
    ScoreTable scores;
    std::vector<ComplianceRecord> compliance;
    TruthRecord truth;
};

SimResult simulate(const SimScenario& scenario);

struct PowerRow {
    double tau = 0.0;
    int n = 0;
    int reps = 0;
    double alpha = 0.05;
    double power = 0.0;
};

// Rejection rate of the asymptotic test over simulated replicates for each
// (tau, n) grid point.
std::vector<PowerRow> power_curve(const SimScenario& base, const std::vector<double>& taus,
                                  const std::vector<int>& ns, double alpha, int n_reps);

// Quiz-analysis shortcut used by power/calibration loops.
EffectReport quiz_effect(const SimResult& sim, int n_perm = 0, std::uint64_t perm_seed = 0);

}  // namespace xtrial::sim
