// Experiment configuration: a small sectioned key-value text format with
// scalars and flat arrays, plus the typed ExperimentConfig it loads into.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ebme/eth.hpp"
#include "ebme/model.hpp"

namespace ebme {

// Raw parsed file: section -> key -> value string.
class ConfigFile {
public:
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_text(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long get_int(const std::string& section, const std::string& key, long fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<double> get_array(const std::string& section, const std::string& key,
                                  const std::vector<double>& fallback) const;

    // normalized text (sorted sections and keys) used for hashing
    std::string canonical_text() const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

enum class SweepMode { Full, Lambda };

struct ExperimentConfig {
    // model
    Eigen::Index d_s = 2;
    RealVector e_s;
    Matrix h_is;
    double coupling = 1.0;
    bool renormalize_model = true;
    EnvironmentSpec environment;
    std::string he_path, hie_path;  // explicit-matrix environments

    // analysis
    EthOptions eth;
    double window_mass = 0.99;

    // dynamics
    double t_total = 10.0;
    double tau = -1.0;  // -1 -> 1 / w_f
    double dt = 0.01;
    double init_center = std::numeric_limits<double>::quiet_NaN();  // NaN -> window center
    double init_width = 1.0;
    Vector system_state;

    // comparison
    double ratio_threshold = 10.0;
    double rate_tolerance = 0.25;
    double trace_distance_max = 0.08;
    bool tau_scan_on_failure = true;
    // gate the fitted rate against pi Delta^2 f0^2: "auto" restricts the
    // check to GOE environments, where the flat-band formula applies
    enum class RateCheck { Auto, On, Off };
    RateCheck rate_check = RateCheck::Auto;

    // sweep
    std::string sweep_parameter;
    std::vector<double> sweep_values;
    int sweep_seeds = 1;
    SweepMode sweep_mode = SweepMode::Full;
    int workers = 1;

    // output
    std::string out_dir = "out";

    std::uint64_t seed = 1;

    std::string canonical_text;  // normalized config the instance was built from
    std::string hash() const;
};

ExperimentConfig load_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

}  // namespace ebme
