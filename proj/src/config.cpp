#include "ebme/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ebme {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& raw, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(raw, &used);
        if (trim(raw.substr(used)).empty()) return v;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument("config: cannot parse number '" + raw + "' at " + where);
}

}  // namespace

ConfigFile ConfigFile::parse_text(const std::string& text) {
    ConfigFile f;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::invalid_argument("config: malformed section header on line " +
                                            std::to_string(lineno));
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: expected key = value on line " +
                                        std::to_string(lineno));
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw std::invalid_argument("config: empty key on line " + std::to_string(lineno));
        }
        f.sections_[section][key] = value;
    }
    return f;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return fallback;
    const auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
    if (!has(section, key)) return fallback;
    return parse_double(get_string(section, key, ""), section + "." + key);
}

long ConfigFile::get_int(const std::string& section, const std::string& key,
                         long fallback) const {
    if (!has(section, key)) return fallback;
    const double v = get_double(section, key, 0.0);
    const long out = std::lround(v);
    if (std::abs(v - static_cast<double>(out)) > 1e-9) {
        throw std::invalid_argument("config: " + section + "." + key + " must be an integer");
    }
    return out;
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
    if (!has(section, key)) return fallback;
    std::string v = get_string(section, key, "");
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw std::invalid_argument("config: " + section + "." + key + " must be a boolean");
}

std::vector<double> ConfigFile::get_array(const std::string& section, const std::string& key,
                                          const std::vector<double>& fallback) const {
    if (!has(section, key)) return fallback;
    std::string raw = get_string(section, key, "");
    if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') {
        throw std::invalid_argument("config: " + section + "." + key +
                                    " must be an array like [1, 2, 3]");
    }
    raw = raw.substr(1, raw.size() - 2);
    std::vector<double> out;
    std::string item;
    std::istringstream in(raw);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(parse_double(item, section + "." + key));
    }
    return out;
}

std::string ConfigFile::canonical_text() const {
    std::ostringstream out;
    for (const auto& [section, kv] : sections_) {
        out << '[' << section << "]\n";
        for (const auto& [key, value] : kv) out << key << " = " << value << '\n';
    }
    return out.str();
}

std::string ExperimentConfig::hash() const {
    std::ostringstream out;
    out << std::hex << fnv1a(canonical_text);
    return out.str();
}

ExperimentConfig load_config_text(const std::string& text) {
    const ConfigFile f = ConfigFile::parse_text(text);
    ExperimentConfig c;
    c.canonical_text = f.canonical_text();

    c.d_s = f.get_int("model", "d_s", 2);
    if (c.d_s < 1) throw std::invalid_argument("config: d_s must be positive");
    {
        std::vector<double> es = f.get_array("model", "e_s", {-0.5, 0.5});
        if (static_cast<Eigen::Index>(es.size()) != c.d_s) {
            throw std::invalid_argument("config: e_s length must equal d_s");
        }
        c.e_s = Eigen::Map<RealVector>(es.data(), es.size());
    }
    {
        std::vector<double> flat = f.get_array("model", "h_is", {1.0, 0.0, 0.0, -1.0});
        if (static_cast<Eigen::Index>(flat.size()) != c.d_s * c.d_s) {
            throw std::invalid_argument("config: h_is must hold d_s*d_s row-major entries");
        }
        c.h_is.resize(c.d_s, c.d_s);
        for (Eigen::Index a = 0; a < c.d_s; ++a) {
            for (Eigen::Index b = 0; b < c.d_s; ++b) c.h_is(a, b) = flat[a * c.d_s + b];
        }
    }
    c.coupling = f.get_double("model", "coupling", 1.0);
    c.renormalize_model = f.get_bool("model", "renormalize", true);

    const std::string kind = f.get_string("environment", "kind", "goe");
    if (kind == "goe") {
        c.environment.kind = EnvironmentKind::Goe;
    } else if (kind == "spin_chain") {
        c.environment.kind = EnvironmentKind::SpinChain;
    } else if (kind == "explicit") {
        c.environment.kind = EnvironmentKind::ExplicitMatrix;
    } else {
        throw std::invalid_argument("config: unknown environment kind '" + kind + "'");
    }
    c.environment.dim = f.get_int("environment", "d_e", 256);
    c.environment.chain.j = f.get_double("environment", "j", 1.0);
    c.environment.chain.g = f.get_double("environment", "g", 0.9045);
    c.environment.chain.h = f.get_double("environment", "h", 0.8090);
    c.environment.chain.edge = f.get_double("environment", "edge", 0.0);
    c.environment.chain.site = f.get_int("environment", "site", -1);
    c.environment.goe.variance = f.get_double("environment", "variance", -1.0);
    c.he_path = f.get_string("environment", "he_path", "");
    c.hie_path = f.get_string("environment", "hie_path", "");

    c.eth.window_fraction = f.get_double("analysis", "window_fraction", 0.6);
    c.eth.e0_bins = f.get_int("analysis", "e0_bins", 8);
    c.eth.omega_bin_spacings = f.get_double("analysis", "omega_bin_spacings", 20.0);
    c.eth.movavg_half_width = f.get_int("analysis", "movavg_half_width", -1);
    c.eth.dos_smoothing = f.get_double("analysis", "dos_smoothing", -1.0);
    c.eth.eta_band = f.get_int("analysis", "eta_band", 20);
    c.window_mass = f.get_double("analysis", "window_mass", 0.99);

    c.t_total = f.get_double("dynamics", "t_total", 10.0);
    c.tau = f.get_double("dynamics", "tau", -1.0);
    c.dt = f.get_double("dynamics", "dt", 0.01);
    const std::string center = f.get_string("dynamics", "init_center", "auto");
    c.init_center = center == "auto" ? std::numeric_limits<double>::quiet_NaN()
                                     : parse_double(center, "dynamics.init_center");
    c.init_width = f.get_double("dynamics", "init_width", 1.0);
    {
        std::vector<double> amps(c.d_s, 0.0);
        amps[0] = 1.0;
        amps = f.get_array("dynamics", "system_state", amps);
        if (static_cast<Eigen::Index>(amps.size()) != c.d_s) {
            throw std::invalid_argument("config: system_state length must equal d_s");
        }
        c.system_state.resize(c.d_s);
        for (Eigen::Index i = 0; i < c.d_s; ++i) c.system_state(i) = amps[i];
        const double norm = c.system_state.norm();
        if (norm <= 0.0) throw std::invalid_argument("config: system_state must be nonzero");
        c.system_state /= norm;
    }

    c.ratio_threshold = f.get_double("comparison", "ratio_threshold", 10.0);
    c.rate_tolerance = f.get_double("comparison", "rate_tolerance", 0.25);
    c.trace_distance_max = f.get_double("comparison", "trace_distance_max", 0.08);
    c.tau_scan_on_failure = f.get_bool("comparison", "tau_scan", true);
    const std::string rate_check = f.get_string("comparison", "rate_check", "auto");
    if (rate_check == "auto") {
        c.rate_check = ExperimentConfig::RateCheck::Auto;
    } else if (rate_check == "on") {
        c.rate_check = ExperimentConfig::RateCheck::On;
    } else if (rate_check == "off") {
        c.rate_check = ExperimentConfig::RateCheck::Off;
    } else {
        throw std::invalid_argument("config: rate_check must be auto, on, or off");
    }

    c.sweep_parameter = f.get_string("sweep", "parameter", "");
    {
        const std::vector<double> vals = f.get_array("sweep", "values", {});
        c.sweep_values = vals;
    }
    c.sweep_seeds = static_cast<int>(f.get_int("sweep", "seeds", 1));
    const std::string mode = f.get_string("sweep", "mode", "full");
    if (mode == "full") {
        c.sweep_mode = SweepMode::Full;
    } else if (mode == "lambda") {
        c.sweep_mode = SweepMode::Lambda;
    } else {
        throw std::invalid_argument("config: sweep mode must be 'full' or 'lambda'");
    }
    c.workers = static_cast<int>(f.get_int("sweep", "workers", 1));

    c.out_dir = f.get_string("output", "directory", "out");
    c.seed = static_cast<std::uint64_t>(f.get_int("seed", "value", 1));
    c.environment.seed = c.seed;
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_config_text(buf.str());
}

}  // namespace ebme
