// End-to-end experiment pipelines: exact dynamics vs the derived master
// equation, the dephasing/RMT cross-check, lambda-scaling studies, parameter
// sweeps, and artifact persistence.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ebme/config.hpp"
#include "ebme/expansion.hpp"
#include "ebme/master.hpp"

namespace ebme {

EnvironmentOperators build_environment(const ExperimentConfig& cfg);

struct RateFit {
    double rate = 0.0;
    bool valid = false;
    bool decayed = false;  // envelope actually reached 1/e within the horizon
};

// Log-linear fit of an exponentially decaying magnitude, restricted to the
// stretch above max(y0 e^-2, 3 * saturation floor).
RateFit fit_exponential_rate(const std::vector<double>& times, const std::vector<double>& mags);

std::vector<double> compare_trajectories(const std::vector<double>& times_a,
                                         const std::vector<Matrix>& a,
                                         const std::vector<double>& times_b,
                                         const std::vector<Matrix>& b);

struct TauScanPoint {
    double tau = 0.0;
    double max_trace_distance = 0.0;
    double condition_ratio_min = 0.0;
    double me_rate = 0.0;
};

struct ComparisonReport {
    std::string config_hash;
    std::uint64_t seed = 0;

    std::vector<double> times;
    std::vector<double> trace_distance;
    double horizon = 0.0;  // 1/e time of the fitted exact decoherence
    double max_trace_distance_horizon = 0.0;

    double fitted_rate_exact = 0.0;
    double fitted_rate_me = 0.0;
    double predicted_rate_rmt = 0.0;
    bool rate_check_applicable = false;

    double tau = 0.0;
    std::size_t slices = 0;
    double w_f = 0.0;
    bool w_f_flagged = false;
    double f0 = 0.0;
    double beta = 0.0;
    double eta_diag = 0.0;
    double h0_ie = 0.0;
    double slope0_ie = 0.0;
    double slope0_ie2 = 0.0;
    double window_width_ratio = 0.0;
    double m_gamma = 0.0;
    double h4_mean_abs_final = 0.0;  // |H^IE(4)|_phi at the last slice, pair-averaged

    double max_partition_residual = 0.0;
    double max_conjugation_residual = 0.0;
    double max_dual_route_residual = 0.0;
    double me_trace_drift = 0.0;
    double me_min_eigenvalue = 0.0;
    bool weights_disjoint_fallback = false;

    FluctuationReport fluct;
    std::vector<TauScanPoint> tau_scan;

    bool trace_ok = false;
    bool rate_ok = false;
    bool pass = false;
    std::vector<std::string> failures;
};

nlohmann::json report_to_json(const ComparisonReport& r);
ComparisonReport report_from_json(const nlohmann::json& j);
void save_report(const ComparisonReport& r, const std::string& path);
ComparisonReport load_report(const std::string& path);

nlohmann::json eth_stats_to_json(const EthStatistics& stats);
EthStatistics eth_stats_from_json(const nlohmann::json& j);

// Everything the pipeline produced, for callers that want more than the
// report (tests, diagnostics).
struct RunArtifacts {
    TotalModel model;
    SpectralData env_spectral;
    Matrix h_int_eig;
    EthStatistics stats;
    DiagonalFit diag_ie2;
    EnergyWindow window;
    Vector env_state;
    std::vector<double> times;
    std::vector<Matrix> exact_rho;
    std::vector<GTermLedger> ledgers;
    WeightTable weights;
    LindbladSpec me_spec;
    std::vector<Matrix> me_rho;
};

ComparisonReport run_pipeline(const ExperimentConfig& cfg, const std::string& out_dir,
                              RunArtifacts* artifacts = nullptr);

struct DephasingReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    double delta = 0.0;     // Delta_{01} of the effective system coupling
    double delta_e = 0.0;   // environment spectral span
    double w_f = 0.0;
    double f0 = 0.0;
    double fitted_rate = 0.0;
    double predicted_rate_rmt = 0.0;
    double rate_ratio = 0.0;
    double me_vs_analytic_max_err = 0.0;
    double tau_used = 0.0;
    bool rate_ok = false;
    bool pass = false;
};

DephasingReport run_dephasing_study(const ExperimentConfig& cfg, const std::string& out_dir);

struct LambdaStudyReport {
    std::vector<double> sizes;
    int seeds = 0;
    double probe_time = 0.0;
    LambdaFit at_t0;
    LambdaFit evolved;
};

LambdaStudyReport run_lambda_study(const ExperimentConfig& cfg, const std::string& out_dir);

struct SweepResult {
    std::vector<ComparisonReport> reports;
    std::optional<LambdaFit> lambda;
    bool all_pass = false;
};

SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace ebme
