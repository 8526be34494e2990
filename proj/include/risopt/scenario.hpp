#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "risopt/random.hpp"

namespace risopt {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

inline double distance(const Vec3& a, const Vec3& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

/// Axis-aligned rectangle on the horizontal plane where users are dropped.
/// User height is fixed; a degenerate rectangle (single point) is allowed.
struct UserRegion {
    double x_min = 55.0;
    double x_max = 95.0;
    double y_min = -20.0;
    double y_max = 20.0;
    static constexpr double height = 1.5;
};

/// Static simulation scenario: geometry, array sizes and RF budget.
/// Immutable after construction; safe to share across Monte Carlo workers.
///
/// Default placement puts the BS-RIS distance near 100 m and every user
/// 20-100 m from both endpoints, so the direct and reflected aggregate
/// attenuations stay within one order of magnitude of each other.
struct ScenarioConfig {
    Vec3 bs_position{0.0, 0.0, 25.0};
    Vec3 ris_position{100.0, 0.0, 40.0};
    UserRegion user_region{};
    int n_bs_antennas = 16;
    int n_ris_elements = 32;
    int n_users = 10;
    double carrier_hz = 3e9; // recorded for documentation; no formula uses it
    double bandwidth_hz = 20e6;
    double noise_figure_db = 9.0;
    double ris_loss_rho = 1.0;
    double p_max_watts = 10.0;
    double pathloss_const_exp = 3.53;
    double pathloss_distance_exp = 3.76;
    // Deterministic per-user link-existence flags; empty means "all present".
    std::vector<int> i_direct;
    std::vector<int> i_reflected;

    void validate() const;
    double noise_power_watts() const;
    int direct_flag(int k) const { return i_direct.empty() ? 1 : i_direct.at(k); }
    int reflected_flag(int k) const { return i_reflected.empty() ? 1 : i_reflected.at(k); }
};

/// Thermal noise power over bandwidth `bandwidth_hz` with the given receiver
/// noise figure, from a -174 dBm/Hz noise spectral density.
inline double noise_power(double bandwidth_hz, double noise_figure_db) {
    if (!(bandwidth_hz > 0.0))
        throw std::invalid_argument("noise_power: bandwidth must be positive");
    const double dbm = -174.0 + 10.0 * std::log10(bandwidth_hz) + noise_figure_db;
    return std::pow(10.0, (dbm - 30.0) / 10.0);
}

/// Linear power attenuation of the reflected BS-RIS-user path, distances in
/// meters. Exponents default to the 10^-3.53 / d^3.76 urban model.
inline double path_loss_reflected(double d_bs_ris, double d_ris_k,
                                  double const_exp = 3.53, double dist_exp = 3.76) {
    if (!(d_bs_ris > 0.0) || !(d_ris_k > 0.0))
        throw std::invalid_argument("path_loss_reflected: distances must be positive");
    return std::pow(10.0, -const_exp) / std::pow(d_bs_ris + d_ris_k, dist_exp);
}

/// Linear power attenuation of the direct BS-user path.
inline double path_loss_direct(double d_bs_k,
                               double const_exp = 3.53, double dist_exp = 3.76) {
    if (!(d_bs_k > 0.0))
        throw std::invalid_argument("path_loss_direct: distance must be positive");
    return std::pow(10.0, -const_exp) / std::pow(d_bs_k, dist_exp);
}

inline double ScenarioConfig::noise_power_watts() const {
    return noise_power(bandwidth_hz, noise_figure_db);
}

inline void ScenarioConfig::validate() const {
    if (n_bs_antennas < 1 || n_ris_elements < 1 || n_users < 1)
        throw std::invalid_argument("scenario: antenna/element/user counts must be >= 1");
    if (!(carrier_hz > 0.0) || !(bandwidth_hz > 0.0))
        throw std::invalid_argument("scenario: carrier and bandwidth must be positive");
    if (!(p_max_watts > 0.0))
        throw std::invalid_argument("scenario: power budget must be positive");
    if (!(ris_loss_rho > 0.0) || ris_loss_rho > 1.0)
        throw std::invalid_argument("scenario: ris_loss_rho must lie in (0, 1]");
    if (user_region.x_min > user_region.x_max || user_region.y_min > user_region.y_max)
        throw std::invalid_argument("scenario: user_region bounds are inverted");
    if (!(UserRegion::height < bs_position.z) || !(UserRegion::height < ris_position.z))
        throw std::invalid_argument("scenario: user region must lie strictly below BS and RIS");
    for (const auto* flags : {&i_direct, &i_reflected}) {
        if (!flags->empty() && static_cast<int>(flags->size()) != n_users)
            throw std::invalid_argument("scenario: link-flag list length must equal n_users");
        for (int f : *flags)
            if (f != 0 && f != 1)
                throw std::invalid_argument("scenario: link flags must be 0 or 1");
    }
    for (int k = 0; k < n_users; ++k)
        if (direct_flag(k) == 0 && reflected_flag(k) == 0)
            throw std::invalid_argument("scenario: user " + std::to_string(k) +
                                        " has neither direct nor reflected link");
}

/// K user drop points, i.i.d. uniform over the region at the fixed user
/// height. Consumes exactly 2*K draws from `rng`.
inline std::vector<Vec3> sample_user_positions(const ScenarioConfig& cfg, Rng& rng) {
    cfg.validate();
    std::uniform_real_distribution<double> ux(cfg.user_region.x_min, cfg.user_region.x_max);
    std::uniform_real_distribution<double> uy(cfg.user_region.y_min, cfg.user_region.y_max);
    std::vector<Vec3> pts(static_cast<std::size_t>(cfg.n_users));
    for (auto& p : pts) {
        // Degenerate bounds (min == max) must yield the point itself.
        p.x = cfg.user_region.x_min == cfg.user_region.x_max ? cfg.user_region.x_min : ux(rng);
        p.y = cfg.user_region.y_min == cfg.user_region.y_max ? cfg.user_region.y_min : uy(rng);
        p.z = UserRegion::height;
    }
    return pts;
}

/// Raised on malformed config text (unknown key, bad arity, bad number).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace detail

/// Parses the flat key = value scenario format. Lines are `key = numbers...`;
/// '#' starts a comment; absent keys keep their defaults. Unknown keys are
/// rejected. See the README for the key table.
inline ScenarioConfig load_scenario_config(std::istream& in) {
    std::map<std::string, std::vector<double>> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ConfigError("config: line " + std::to_string(lineno) + " has empty key or value");
        if (kv.count(key))
            throw ConfigError("config: duplicate key '" + key + "'");
        std::istringstream nss(val);
        double d;
        std::vector<double> nums;
        while (nss >> d) nums.push_back(d);
        if (!nss.eof())
            throw ConfigError("config: bad numeric value for key '" + key + "'");
        kv[key] = std::move(nums);
    }

    ScenarioConfig cfg;
    auto take = [&kv](const std::string& key, std::size_t arity) -> const std::vector<double>* {
        auto it = kv.find(key);
        if (it == kv.end()) return nullptr;
        if (it->second.size() != arity)
            throw ConfigError("config: key '" + key + "' expects " + std::to_string(arity) +
                              " value(s), got " + std::to_string(it->second.size()));
        return &it->second;
    };
    auto scalar = [&take](const std::string& key, double& out) {
        if (const auto* v = take(key, 1)) out = (*v)[0];
    };
    auto integer = [&take](const std::string& key, int& out) {
        if (const auto* v = take(key, 1)) {
            if ((*v)[0] != std::floor((*v)[0]))
                throw ConfigError("config: key '" + key + "' must be an integer");
            out = static_cast<int>((*v)[0]);
        }
    };

    integer("n_users", cfg.n_users); // first: indicator lists depend on K
    integer("n_bs_antennas", cfg.n_bs_antennas);
    integer("n_ris_elements", cfg.n_ris_elements);
    if (const auto* v = take("bs_position", 3)) cfg.bs_position = {(*v)[0], (*v)[1], (*v)[2]};
    if (const auto* v = take("ris_position", 3)) cfg.ris_position = {(*v)[0], (*v)[1], (*v)[2]};
    if (const auto* v = take("user_region", 4))
        cfg.user_region = {(*v)[0], (*v)[1], (*v)[2], (*v)[3]};
    scalar("carrier_hz", cfg.carrier_hz);
    scalar("bandwidth_hz", cfg.bandwidth_hz);
    scalar("noise_figure_db", cfg.noise_figure_db);
    scalar("ris_loss_rho", cfg.ris_loss_rho);
    scalar("p_max_watts", cfg.p_max_watts);
    scalar("pathloss_const_exp", cfg.pathloss_const_exp);
    scalar("pathloss_distance_exp", cfg.pathloss_distance_exp);
    for (auto [name, dst] : {std::pair{"i_direct", &cfg.i_direct},
                             std::pair{"i_reflected", &cfg.i_reflected}}) {
        if (auto it = kv.find(name); it != kv.end()) {
            if (static_cast<int>(it->second.size()) != cfg.n_users)
                throw ConfigError(std::string("config: key '") + name + "' expects n_users values");
            dst->clear();
            for (double f : it->second) {
                if (f != 0.0 && f != 1.0)
                    throw ConfigError(std::string("config: key '") + name + "' entries must be 0 or 1");
                dst->push_back(static_cast<int>(f));
            }
        }
    }

    static const std::array<const char*, 15> known = {
        "bs_position", "ris_position", "user_region", "n_bs_antennas", "n_ris_elements",
        "n_users", "carrier_hz", "bandwidth_hz", "noise_figure_db", "ris_loss_rho",
        "p_max_watts", "pathloss_const_exp", "pathloss_distance_exp", "i_direct",
        "i_reflected"};
    for (const auto& [key, unused] : kv) {
        bool ok = false;
        for (const char* k : known)
            if (key == k) { ok = true; break; }
        if (!ok) throw ConfigError("config: unknown key '" + key + "'");
    }

    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

inline ScenarioConfig load_scenario_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    return load_scenario_config(in);
}

/// Writes every key with its effective value, parseable by the loader.
inline void write_scenario_config(const ScenarioConfig& cfg, std::ostream& out) {
    auto num = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    out << "bs_position = " << num(cfg.bs_position.x) << ' ' << num(cfg.bs_position.y) << ' '
        << num(cfg.bs_position.z) << '\n'
        << "ris_position = " << num(cfg.ris_position.x) << ' ' << num(cfg.ris_position.y) << ' '
        << num(cfg.ris_position.z) << '\n'
        << "user_region = " << num(cfg.user_region.x_min) << ' ' << num(cfg.user_region.x_max)
        << ' ' << num(cfg.user_region.y_min) << ' ' << num(cfg.user_region.y_max) << '\n'
        << "n_bs_antennas = " << cfg.n_bs_antennas << '\n'
        << "n_ris_elements = " << cfg.n_ris_elements << '\n'
        << "n_users = " << cfg.n_users << '\n'
        << "carrier_hz = " << num(cfg.carrier_hz) << '\n'
        << "bandwidth_hz = " << num(cfg.bandwidth_hz) << '\n'
        << "noise_figure_db = " << num(cfg.noise_figure_db) << '\n'
        << "ris_loss_rho = " << num(cfg.ris_loss_rho) << '\n'
        << "p_max_watts = " << num(cfg.p_max_watts) << '\n'
        << "pathloss_const_exp = " << num(cfg.pathloss_const_exp) << '\n'
        << "pathloss_distance_exp = " << num(cfg.pathloss_distance_exp) << '\n';
    auto flags = [&out](const char* name, const std::vector<int>& f) {
        if (f.empty()) return;
        out << name << " =";
        for (int v : f) out << ' ' << v;
        out << '\n';
    };
    flags("i_direct", cfg.i_direct);
    flags("i_reflected", cfg.i_reflected);
}

} // namespace risopt
