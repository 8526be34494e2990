#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "risopt/channel.hpp"
#include "risopt/mu_opt.hpp"
#include "risopt/random.hpp"
#include "risopt/scenario.hpp"
#include "risopt/su_opt.hpp"

namespace risopt {

inline constexpr const char* kSuMethods[] = {"NoOpt", "UbMax", "LbMax", "Am"};
inline constexpr const char* kMuMethods[] = {"NoOpt", "OnlyRis", "OnlyPowers", "Joint"};

/// One method's metric on one trial. Single-user metric is SNR in dB;
/// multiuser metric is the geometric-mean SINR in dB.
struct TrialResult {
    int trial = 0;
    std::string method;
    double metric_db = 0.0;
    double wall_seconds = 0.0;
};

/// Empirical CDF support: sorted sample values; the CDF at sorted_values[i]
/// is (i + 1) / size.
struct CdfSeries {
    std::vector<double> sorted_values;

    double probability(std::size_t i) const {
        return static_cast<double>(i + 1) / static_cast<double>(sorted_values.size());
    }
    /// Smallest sample value whose empirical CDF reaches p.
    double quantile(double p) const {
        if (sorted_values.empty()) throw std::invalid_argument("quantile: empty series");
        const auto n = static_cast<double>(sorted_values.size());
        auto idx = static_cast<std::ptrdiff_t>(std::ceil(p * n)) - 1;
        idx = std::clamp<std::ptrdiff_t>(idx, 0, sorted_values.size() - 1);
        return sorted_values[static_cast<std::size_t>(idx)];
    }
    double median() const { return quantile(0.5); }
};

inline CdfSeries cdf(std::vector<double> samples) {
    if (samples.empty()) throw std::invalid_argument("cdf: empty sample set");
    std::sort(samples.begin(), samples.end());
    return {std::move(samples)};
}

struct ExperimentResult {
    std::vector<TrialResult> trials; // grouped by trial, method order fixed
    std::map<std::string, CdfSeries> cdfs;
};

/// Worker count: explicit request, else RISOPT_THREADS, else hardware.
inline unsigned resolve_workers(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("RISOPT_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

namespace detail {

// Runs fn(trial) for every trial index on `workers` threads. Results land in
// per-trial slots, so the outcome is independent of scheduling.
template <typename Fn>
inline std::vector<std::vector<TrialResult>> run_trials(int n_trials, unsigned workers, Fn&& fn) {
    std::vector<std::vector<TrialResult>> slots(static_cast<std::size_t>(n_trials));
    if (workers <= 1 || n_trials == 1) {
        for (int t = 0; t < n_trials; ++t) slots[static_cast<std::size_t>(t)] = fn(t);
        return slots;
    }

    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            const int t = next.fetch_add(1);
            if (t >= n_trials) return;
            try {
                slots[static_cast<std::size_t>(t)] = fn(t);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const unsigned n = std::min<unsigned>(workers, static_cast<unsigned>(n_trials));
    pool.reserve(n);
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
    return slots;
}

inline double require_finite_db(double linear, const std::string& method) {
    const double db = 10.0 * std::log10(linear);
    if (!std::isfinite(db))
        throw std::runtime_error("harness: non-finite metric for method " + method);
    return db;
}

inline VectorXd draw_phases(Eigen::Index n, Rng& rng) {
    std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
    VectorXd phi(n);
    for (Eigen::Index i = 0; i < n; ++i) phi[i] = u(rng);
    return phi;
}

template <typename Fn>
inline TrialResult timed(int trial, const char* method, Fn&& compute_metric_db) {
    const auto start = std::chrono::steady_clock::now();
    const double db = compute_metric_db();
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    return {trial, method, db, elapsed.count()};
}

inline ExperimentResult collect(std::vector<std::vector<TrialResult>> slots) {
    ExperimentResult out;
    std::map<std::string, std::vector<double>> samples;
    for (auto& slot : slots)
        for (auto& r : slot) {
            samples[r.method].push_back(r.metric_db);
            out.trials.push_back(std::move(r));
        }
    for (auto& [method, values] : samples) out.cdfs.emplace(method, cdf(std::move(values)));
    return out;
}

} // namespace detail

struct SuHarnessOptions {
    AmOptions am{};
    unsigned workers = 0; // 0: RISOPT_THREADS env or hardware count
};

/// Single-user experiment: per trial one user drop and one channel draw,
/// shared by all four methods. NoOpt pairs a uniformly random phase vector
/// with its matched-filter beamformer; the alternating maximizer starts from
/// that same random phase vector, so it dominates NoOpt trial by trial.
/// Transmit power is the full budget. Deterministic given (cfg, seed).
inline ExperimentResult run_single_user(const ScenarioConfig& cfg, int n_trials,
                                        std::uint64_t seed, const SuHarnessOptions& opts = {}) {
    if (n_trials < 1) throw std::invalid_argument("run_single_user: n_trials must be >= 1");
    ScenarioConfig su_cfg = cfg;
    su_cfg.n_users = 1;
    if (!su_cfg.i_direct.empty()) su_cfg.i_direct.resize(1);
    if (!su_cfg.i_reflected.empty()) su_cfg.i_reflected.resize(1);
    su_cfg.validate();

    const double p_t = su_cfg.p_max_watts;
    const double sigma2 = su_cfg.noise_power_watts();
    const double rho = su_cfg.ris_loss_rho;

    auto one_trial = [&](int t) {
        Rng rng = make_trial_rng(seed, static_cast<std::uint64_t>(t));
        const auto positions = sample_user_positions(su_cfg, rng);
        const auto real = sample_realization(su_cfg, positions, rng);
        const auto eff = build_effective(real);
        const MatrixXcd& D = eff.D[0];
        const VectorXcd& h_d = eff.g_d[0];
        const RisConfig ris0(rho, detail::draw_phases(su_cfg.n_ris_elements, rng));

        std::vector<TrialResult> out;
        out.push_back(detail::timed(t, "NoOpt", [&] {
            const Beamformer w(composite_channel(eff, 0, ris0));
            return detail::require_finite_db(eval_snr(D, h_d, ris0, w, p_t, sigma2), "NoOpt");
        }));
        out.push_back(detail::timed(t, "UbMax", [&] {
            return detail::require_finite_db(ub_max(D, h_d, rho, p_t, sigma2).snr_linear,
                                             "UbMax");
        }));
        out.push_back(detail::timed(t, "LbMax", [&] {
            return detail::require_finite_db(lb_max(D, h_d, rho, p_t, sigma2).snr_linear,
                                             "LbMax");
        }));
        out.push_back(detail::timed(t, "Am", [&] {
            return detail::require_finite_db(
                alternating_max(D, h_d, ris0, p_t, sigma2, opts.am).snr_linear, "Am");
        }));
        return out;
    };

    return detail::collect(
        detail::run_trials(n_trials, resolve_workers(opts.workers), one_trial));
}

struct MuHarnessOptions {
    JointOptions joint{};
    unsigned workers = 0;
};

/// Multiuser experiment. All four methods see the same realization and the
/// same random phase draw: NoOpt evaluates (random phases, uniform powers);
/// OnlyRis ascends the phases at uniform powers; OnlyPowers allocates powers
/// at the random phases; Joint alternates from the same starting point and
/// takes the better of the two step orderings, so its first inner step
/// reproduces one baseline or the other exactly. Metric is the geometric-mean
/// SINR in dB.
inline ExperimentResult run_multi_user(const ScenarioConfig& cfg, int n_trials,
                                       std::uint64_t seed, const MuHarnessOptions& opts = {}) {
    if (n_trials < 1) throw std::invalid_argument("run_multi_user: n_trials must be >= 1");
    cfg.validate();

    const double p_max = cfg.p_max_watts;
    const double sigma2 = cfg.noise_power_watts();
    const double rho = cfg.ris_loss_rho;
    const int k_users = cfg.n_users;
    const double db_per_log2 = 10.0 * std::log10(2.0) / k_users; // exp2(G/K) in dB

    auto one_trial = [&](int t) {
        Rng rng = make_trial_rng(seed, static_cast<std::uint64_t>(t));
        const auto positions = sample_user_positions(cfg, rng);
        const auto real = sample_realization(cfg, positions, rng);
        const auto eff = build_effective(real);
        const VectorXd phi0 = detail::draw_phases(cfg.n_ris_elements, rng);
        const VectorXd eta0 = PowerAllocation::uniform(k_users, p_max).eta;

        auto metric = [&](double g) {
            if (!std::isfinite(g)) throw std::runtime_error("harness: non-finite objective");
            return g * db_per_log2;
        };

        std::vector<TrialResult> out;
        out.push_back(detail::timed(t, "NoOpt", [&] {
            return metric(detail::objective_from_composites(
                detail::composites_raw(eff, rho, phi0), eta0, sigma2));
        }));
        out.push_back(detail::timed(t, "OnlyRis", [&] {
            auto res = detail::ascend_phases(eff, rho, phi0, eta0, sigma2, opts.joint.phase);
            return metric(res.report.final());
        }));
        out.push_back(detail::timed(t, "OnlyPowers", [&] {
            const auto c = detail::composites_raw(eff, rho, phi0);
            auto [power, rep] =
                power_opt(detail::a_from_composites(c), sigma2, p_max, opts.joint.power, eta0);
            return metric(detail::objective_from_composites(c, power.eta, sigma2));
        }));
        out.push_back(detail::timed(t, "Joint", [&] {
            JointOptions jo = opts.joint;
            jo.init_eta = eta0;
            const RisConfig init(rho, phi0);
            jo.powers_first = false;
            const auto phases_first = joint_optimize(eff, init, sigma2, p_max, jo);
            jo.powers_first = true;
            const auto powers_first = joint_optimize(eff, init, sigma2, p_max, jo);
            return metric(std::max(phases_first.second.final(), powers_first.second.final()));
        }));
        return out;
    };

    return detail::collect(
        detail::run_trials(n_trials, resolve_workers(opts.workers), one_trial));
}

} // namespace risopt
