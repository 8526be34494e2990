#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "risopt/channel.hpp"
#include "risopt/report.hpp"
#include "risopt/su_opt.hpp"

namespace risopt {

using Eigen::MatrixXd;

/// Downlink power split across users, watts.
struct PowerAllocation {
    VectorXd eta;

    static PowerAllocation uniform(int n_users, double p_max) {
        if (n_users < 1 || !(p_max > 0.0))
            throw std::invalid_argument("PowerAllocation: bad arguments");
        return {VectorXd::Constant(n_users, p_max / n_users)};
    }

    void validate(double p_max) const {
        if ((eta.array() < 0.0).any())
            throw std::invalid_argument("PowerAllocation: negative entry");
        if (eta.sum() > p_max * (1.0 + 1e-9))
            throw std::invalid_argument("PowerAllocation: budget exceeded");
    }
};

namespace detail {

inline std::vector<VectorXcd> composites_raw(const EffectiveChannel& eff, double rho,
                                             const VectorXd& phi_raw) {
    VectorXcd pv(phi_raw.size());
    for (Eigen::Index i = 0; i < phi_raw.size(); ++i) pv[i] = std::polar(rho, phi_raw[i]);
    std::vector<VectorXcd> c(eff.D.size());
    for (int k = 0; k < eff.n_users(); ++k) c[k] = eff.D[k] * pv + eff.g_d[k];
    return c;
}

// Sum of per-user log2 SINRs for given composites and powers; -inf when any
// power or composite vanishes (the geometric mean is zero there).
inline double objective_from_composites(const std::vector<VectorXcd>& c, const VectorXd& eta,
                                        double sigma2) {
    const int k_users = static_cast<int>(c.size());
    MatrixXcd inner(k_users, k_users);
    for (int k = 0; k < k_users; ++k)
        for (int l = 0; l < k_users; ++l) inner(k, l) = c[k].dot(c[l]); // c_k^H c_l
    double total = 0.0;
    for (int k = 0; k < k_users; ++k) {
        const double nk = inner(k, k).real();
        if (!(eta[k] > 0.0) || !(nk > 0.0))
            return -std::numeric_limits<double>::infinity();
        double interference = 0.0;
        for (int l = 0; l < k_users; ++l) {
            if (l == k) continue;
            interference += eta[l] * std::norm(inner(k, l)) / inner(l, l).real();
        }
        total += std::log2(eta[k] * nk / (interference + sigma2));
    }
    return total;
}

inline VectorXd grad_from_composites(const EffectiveChannel& eff, double rho,
                                     const VectorXd& phi_raw, const std::vector<VectorXcd>& c,
                                     const VectorXd& eta, double sigma2) {
    const int k_users = static_cast<int>(c.size());
    const Eigen::Index nr = eff.n_ris();

    MatrixXcd inner(k_users, k_users);
    for (int k = 0; k < k_users; ++k)
        for (int l = 0; l < k_users; ++l) inner(k, l) = c[k].dot(c[l]);
    for (int k = 0; k < k_users; ++k)
        if (!(eta[k] > 0.0) || !(inner(k, k).real() > 0.0))
            throw std::domain_error("grad_phi: objective is -inf (zero power or composite)");

    // A[k][l](n) = d_{k,n}^H c_l; the phase derivative of c_k^H c_l is
    // j rho (e^{j phi_n} conj(A[l][k](n)) - e^{-j phi_n} A[k][l](n)).
    std::vector<std::vector<VectorXcd>> A(k_users, std::vector<VectorXcd>(k_users));
    for (int k = 0; k < k_users; ++k)
        for (int l = 0; l < k_users; ++l) A[k][l] = eff.D[k].adjoint() * c[l];

    VectorXcd unit(nr);
    for (Eigen::Index n = 0; n < nr; ++n) unit[n] = std::polar(1.0, phi_raw[n]);

    std::vector<double> denom(k_users);
    for (int k = 0; k < k_users; ++k) {
        double interference = 0.0;
        for (int l = 0; l < k_users; ++l)
            if (l != k) interference += eta[l] * std::norm(inner(k, l)) / inner(l, l).real();
        denom[k] = interference + sigma2;
    }

    auto d_inner = [&](int k, int l, Eigen::Index n) -> Complex {
        return Complex(0.0, rho) *
               (unit[n] * std::conj(A[l][k][n]) - std::conj(unit[n]) * A[k][l][n]);
    };

    const double inv_ln2 = 1.0 / std::log(2.0);
    VectorXd grad = VectorXd::Zero(nr);
    for (Eigen::Index n = 0; n < nr; ++n) {
        double acc = 0.0;
        for (int k = 0; k < k_users; ++k) {
            const double nk = inner(k, k).real();
            const double dnk = d_inner(k, k, n).real();
            double d_interf = 0.0;
            for (int l = 0; l < k_users; ++l) {
                if (l == k) continue;
                const double nl = inner(l, l).real();
                const double dnl = d_inner(l, l, n).real();
                const double m2 = std::norm(inner(k, l));
                const double dm2 = 2.0 * (d_inner(k, l, n) * std::conj(inner(k, l))).real();
                d_interf += eta[l] * (dm2 / nl - m2 * dnl / (nl * nl));
            }
            acc += dnk / nk - d_interf / denom[k];
        }
        grad[n] = inv_ln2 * acc;
    }
    return grad;
}

inline MatrixXd a_from_composites(const std::vector<VectorXcd>& c) {
    const int k_users = static_cast<int>(c.size());
    MatrixXd a(k_users, k_users);
    for (int k = 0; k < k_users; ++k) {
        const double nk = c[k].squaredNorm();
        if (!(nk > 0.0))
            throw std::domain_error("a_coeffs: user " + std::to_string(k) +
                                    " has a zero composite channel");
        a(k, k) = nk;
    }
    for (int k = 0; k < k_users; ++k)
        for (int l = 0; l < k_users; ++l)
            if (l != k) a(k, l) = std::norm(c[k].dot(c[l])) / a(l, l);
    return a;
}

} // namespace detail

/// Channel-matched beamformer of user k: the normalized composite channel.
inline Beamformer cm_beamformer(const EffectiveChannel& eff, int k, const RisConfig& ris) {
    VectorXcd c = composite_channel(eff, k, ris);
    if (!(c.norm() > 0.0))
        throw std::domain_error("cm_beamformer: user " + std::to_string(k) +
                                " has a zero composite channel");
    return Beamformer(std::move(c));
}

/// Cross coupling F(k, l) = eta_l * composite_k^H composite_l. The diagonal is
/// real nonnegative: eta_k ||composite_k||^2.
inline Complex f_coeff(const EffectiveChannel& eff, const RisConfig& ris,
                       const PowerAllocation& power, int k, int l) {
    if (k < 0 || k >= eff.n_users() || l < 0 || l >= eff.n_users())
        throw std::out_of_range("f_coeff: user index out of range");
    const VectorXcd ck = composite_channel(eff, k, ris);
    const VectorXcd cl = composite_channel(eff, l, ris);
    return power.eta[l] * ck.dot(cl);
}

/// Sum over users of log2 SINR under channel-matched beamforming; exp2 of
/// (value / K) is the geometric mean of the per-user SINRs. Returns -inf when
/// any power is zero.
inline double objective_log(const EffectiveChannel& eff, const RisConfig& ris,
                            const PowerAllocation& power, double sigma2) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("objective_log: sigma2 must be positive");
    if (power.eta.size() != eff.n_users())
        throw std::invalid_argument("objective_log: power length disagrees with users");
    const auto c = detail::composites_raw(eff, ris.rho(), ris.phi());
    return detail::objective_from_composites(c, power.eta, sigma2);
}

/// Analytic gradient of objective_log with respect to the phase vector.
inline VectorXd grad_phi(const EffectiveChannel& eff, const RisConfig& ris,
                         const PowerAllocation& power, double sigma2) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("grad_phi: sigma2 must be positive");
    const auto c = detail::composites_raw(eff, ris.rho(), ris.phi());
    return detail::grad_from_composites(eff, ris.rho(), ris.phi(), c, power.eta, sigma2);
}

struct PhaseAscentOptions {
    int max_iter = 200;
    double tol = 1e-7; // relative objective change
    double initial_step = 1.0;
    double shrink = 0.5;
    double sufficient_increase = 1e-4;
    int max_backtracks = 40;
};

namespace detail {

struct PhaseAscentOutcome {
    VectorXd phi_raw;
    OptimizationReport report;
};

// Gradient ascent with Armijo backtracking on the raw (unwrapped) phases.
inline PhaseAscentOutcome ascend_phases(const EffectiveChannel& eff, double rho, VectorXd phi,
                                        const VectorXd& eta, double sigma2,
                                        const PhaseAscentOptions& opts) {
    if (opts.max_iter < 1 || !(opts.initial_step > 0.0) || !(opts.shrink > 0.0) ||
        opts.shrink >= 1.0 || !(opts.sufficient_increase > 0.0) || opts.max_backtracks < 0)
        throw std::invalid_argument("phase_ascent: bad options");

    auto objective = [&](const VectorXd& p) {
        return objective_from_composites(composites_raw(eff, rho, p), eta, sigma2);
    };

    OptimizationReport report;
    double value = objective(phi);
    report.trajectory.push_back(value);
    report.converged = false;

    for (int it = 0; it < opts.max_iter; ++it) {
        const auto c = composites_raw(eff, rho, phi);
        const VectorXd grad = grad_from_composites(eff, rho, phi, c, eta, sigma2);
        if (grad.cwiseAbs().maxCoeff() == 0.0) { // stationary point
            report.converged = true;
            break;
        }

        const double slope = grad.squaredNorm();
        double step = opts.initial_step;
        bool accepted = false;
        VectorXd candidate;
        double cand_value = 0.0;
        for (int bt = 0; bt <= opts.max_backtracks; ++bt) {
            candidate = phi + step * grad;
            cand_value = objective(candidate);
            if (cand_value >= value + opts.sufficient_increase * step * slope) {
                accepted = true;
                break;
            }
            step *= opts.shrink;
        }
        if (!accepted) { // cannot make sufficient progress
            report.converged = false;
            break;
        }

        phi = std::move(candidate);
        report.iterations += 1;
        report.trajectory.push_back(cand_value);
        const double denom = std::max(std::abs(value), std::numeric_limits<double>::min());
        const bool small_change = cand_value - value <= opts.tol * denom;
        value = cand_value;
        if (small_change) {
            report.converged = true;
            break;
        }
    }
    return {std::move(phi), std::move(report)};
}

} // namespace detail

/// RIS state, derived beamformers and current objective of the multiuser
/// optimizer. Beamformers always match the held RIS phases.
struct MuState {
    RisConfig ris;
    PowerAllocation power;
    std::vector<Beamformer> beamformers;
    double objective = 0.0;
};

inline MuState make_mu_state(const EffectiveChannel& eff, RisConfig ris, PowerAllocation power,
                             double sigma2) {
    std::vector<Beamformer> w;
    w.reserve(eff.D.size());
    for (int k = 0; k < eff.n_users(); ++k) w.push_back(cm_beamformer(eff, k, ris));
    const double value = objective_log(eff, ris, power, sigma2);
    return {std::move(ris), std::move(power), std::move(w), value};
}

/// One phase-optimization step: ascends the objective over the phases with the
/// powers held fixed. Phases stay unwrapped while iterating and are wrapped in
/// the returned RisConfig.
inline std::pair<RisConfig, OptimizationReport>
phase_ascent(const EffectiveChannel& eff, const MuState& state, double sigma2,
             const PhaseAscentOptions& opts = {}) {
    auto out = detail::ascend_phases(eff, state.ris.rho(), state.ris.phi(), state.power.eta,
                                     sigma2, opts);
    return {RisConfig(state.ris.rho(), std::move(out.phi_raw)), std::move(out.report)};
}

/// Coupling matrix of the power subproblem: a(k, l) = |c_k^H c_l|^2 / ||c_l||^2
/// with a(k, k) = ||c_k||^2. Requires every composite to be nonzero.
inline MatrixXd a_coeffs(const EffectiveChannel& eff, const RisConfig& ris) {
    return detail::a_from_composites(detail::composites_raw(eff, ris.rho(), ris.phi()));
}

/// Power objective in log2-power coordinates gamma (eta = 2^gamma):
/// sum_k [gamma_k + log2 a(k,k) - log2(sum_{l != k} 2^gamma_l a(k,l) + sigma2)].
/// Concave in gamma.
inline double power_objective_gamma(const MatrixXd& a, double sigma2, const VectorXd& gamma) {
    const int k_users = static_cast<int>(a.rows());
    double total = 0.0;
    for (int k = 0; k < k_users; ++k) {
        double s = sigma2;
        for (int l = 0; l < k_users; ++l)
            if (l != k) s += std::exp2(gamma[l]) * a(k, l);
        total += gamma[k] + std::log2(a(k, k)) - std::log2(s);
    }
    return total;
}

inline VectorXd power_grad_gamma(const MatrixXd& a, double sigma2, const VectorXd& gamma) {
    const int k_users = static_cast<int>(a.rows());
    VectorXd s(k_users);
    for (int k = 0; k < k_users; ++k) {
        s[k] = sigma2;
        for (int l = 0; l < k_users; ++l)
            if (l != k) s[k] += std::exp2(gamma[l]) * a(k, l);
    }
    VectorXd g(k_users);
    for (int m = 0; m < k_users; ++m) {
        double coupling = 0.0;
        for (int k = 0; k < k_users; ++k)
            if (k != m) coupling += a(k, m) / s[k];
        g[m] = 1.0 - std::exp2(gamma[m]) * coupling;
    }
    return g;
}

struct PowerOptOptions {
    int max_iter = 5000;
    double tol = 1e-8; // sup norm of the projected gradient
    double initial_step = 1.0;
    double shrink = 0.5;
    double sufficient_increase = 1e-4;
    int max_backtracks = 60;
};

/// Solves the power subproblem by projected gradient ascent in gamma-space.
/// The iterate is kept on the active budget surface (the objective strictly
/// increases under uniform power up-scaling, so the budget binds at the
/// optimum): every step moves along the component of the gradient tangent to
/// the surface and renormalizes with a uniform gamma shift. Returns strictly
/// positive powers summing to p_max.
inline std::pair<PowerAllocation, OptimizationReport>
power_opt(const MatrixXd& a, double sigma2, double p_max, const PowerOptOptions& opts = {},
          const std::optional<VectorXd>& init_eta = std::nullopt) {
    const int k_users = static_cast<int>(a.rows());
    if (a.cols() != k_users || k_users < 1)
        throw std::invalid_argument("power_opt: coupling matrix must be square");
    if (!(p_max > 0.0) || !(sigma2 > 0.0))
        throw std::invalid_argument("power_opt: p_max and sigma2 must be positive");
    for (int k = 0; k < k_users; ++k) {
        if (!(a(k, k) > 0.0))
            throw std::invalid_argument("power_opt: diagonal couplings must be positive");
        for (int l = 0; l < k_users; ++l)
            if (a(k, l) < 0.0)
                throw std::invalid_argument("power_opt: couplings must be nonnegative");
    }

    VectorXd gamma(k_users);
    if (init_eta) {
        if (init_eta->size() != k_users || (init_eta->array() <= 0.0).any())
            throw std::invalid_argument("power_opt: init powers must be positive");
        for (int k = 0; k < k_users; ++k) gamma[k] = std::log2((*init_eta)[k]);
    } else {
        gamma.setConstant(std::log2(p_max / k_users));
    }
    auto renormalize = [&](VectorXd& g) {
        // Uniform shift puts the point exactly on the budget surface.
        double sum = 0.0;
        for (int k = 0; k < k_users; ++k) sum += std::exp2(g[k]);
        g.array() -= std::log2(sum / p_max);
    };
    renormalize(gamma);

    // Scaling all powers up by a common factor raises every SINR, hence the
    // objective; verified here and again at the returned point.
    const double up = std::log2(1.01);
    if (!(power_objective_gamma(a, sigma2, VectorXd(gamma.array() + up)) >
          power_objective_gamma(a, sigma2, gamma)))
        throw std::logic_error("power_opt: uniform up-scaling failed to increase the objective");

    OptimizationReport report;
    double value = power_objective_gamma(a, sigma2, gamma);
    report.trajectory.push_back(value);
    report.converged = false;

    VectorXd gamma_prev, grad_prev;
    bool have_prev = false;
    for (int it = 0; it < opts.max_iter; ++it) {
        const VectorXd grad = power_grad_gamma(a, sigma2, gamma);
        VectorXd normal(k_users);
        for (int k = 0; k < k_users; ++k) normal[k] = std::exp2(gamma[k]);
        const VectorXd tangent = grad - (grad.dot(normal) / normal.squaredNorm()) * normal;
        if (tangent.cwiseAbs().maxCoeff() <= opts.tol) {
            report.converged = true;
            break;
        }

        // Barzilai-Borwein spectral step, safeguarded by the Armijo test below.
        double step = opts.initial_step;
        if (have_prev) {
            const VectorXd s = gamma - gamma_prev;
            const double sy = s.dot(grad - grad_prev); // negative for a concave objective
            if (sy < 0.0) step = std::clamp(s.squaredNorm() / -sy, 1e-8, 1e8);
        }
        gamma_prev = gamma;
        grad_prev = grad;
        have_prev = true;

        const double slope = tangent.squaredNorm();
        bool accepted = false;
        VectorXd candidate;
        double cand_value = 0.0;
        for (int bt = 0; bt <= opts.max_backtracks; ++bt) {
            candidate = gamma + step * tangent;
            renormalize(candidate);
            cand_value = power_objective_gamma(a, sigma2, candidate);
            if (cand_value >= value + opts.sufficient_increase * step * slope) {
                accepted = true;
                break;
            }
            step *= opts.shrink;
        }
        if (!accepted) break;

        gamma = std::move(candidate);
        value = cand_value;
        report.iterations += 1;
        report.trajectory.push_back(value);
    }

    if (!(power_objective_gamma(a, sigma2, VectorXd(gamma.array() + up)) >
          power_objective_gamma(a, sigma2, gamma)))
        throw std::logic_error("power_opt: budget-activity check failed at the solution");

    PowerAllocation power{VectorXd(k_users)};
    for (int k = 0; k < k_users; ++k) power.eta[k] = std::exp2(gamma[k]);
    return {std::move(power), std::move(report)};
}

struct JointOptions {
    PhaseAscentOptions phase{};
    PowerOptOptions power{};
    int max_outer = 50;
    double tol = 1e-6; // relative outer objective change
    bool powers_first = false;
    std::optional<VectorXd> init_eta; // default: uniform split
};

/// Alternating driver: phase ascent and convex power allocation against the
/// shared objective until its relative change drops below tol. Beamformers in
/// the returned state are re-derived from the final phases.
inline std::pair<MuState, OptimizationReport>
joint_optimize(const EffectiveChannel& eff, const RisConfig& init, double sigma2, double p_max,
               const JointOptions& opts = {}) {
    if (opts.max_outer < 0 || !(opts.tol > 0.0))
        throw std::invalid_argument("joint_optimize: bad options");
    const double rho = init.rho();
    const int k_users = eff.n_users();

    VectorXd phi = init.phi();
    VectorXd eta = opts.init_eta ? *opts.init_eta
                                 : PowerAllocation::uniform(k_users, p_max).eta;

    auto objective = [&]() {
        return detail::objective_from_composites(detail::composites_raw(eff, rho, phi), eta,
                                                 sigma2);
    };

    OptimizationReport report;
    double value = objective();
    report.trajectory.push_back(value);
    report.converged = false;

    for (int outer = 0; outer < opts.max_outer; ++outer) {
        auto phase_step = [&]() {
            auto out = detail::ascend_phases(eff, rho, phi, eta, sigma2, opts.phase);
            phi = std::move(out.phi_raw);
            report.inner_reports.push_back(std::move(out.report));
        };
        auto power_step = [&]() {
            const MatrixXd a =
                detail::a_from_composites(detail::composites_raw(eff, rho, phi));
            auto [power, rep] = power_opt(a, sigma2, p_max, opts.power, eta);
            eta = std::move(power.eta);
            report.inner_reports.push_back(std::move(rep));
        };

        if (opts.powers_first) {
            power_step();
            phase_step();
        } else {
            phase_step();
            power_step();
        }

        const double next = objective();
        report.iterations += 1;
        report.trajectory.push_back(next);
        const double denom = std::max(std::abs(value), std::numeric_limits<double>::min());
        const bool small_change = std::abs(next - value) <= opts.tol * denom;
        value = next;
        if (small_change) {
            report.converged = true;
            break;
        }
    }

    MuState state = make_mu_state(eff, RisConfig(rho, std::move(phi)),
                                  PowerAllocation{std::move(eta)}, sigma2);
    return {std::move(state), std::move(report)};
}

/// Convenience start at phi = 0 with the given loss.
inline std::pair<MuState, OptimizationReport>
joint_optimize(const EffectiveChannel& eff, double rho, double sigma2, double p_max,
               const JointOptions& opts = {}) {
    return joint_optimize(eff, RisConfig::zeros(rho, eff.n_ris()), sigma2, p_max, opts);
}

} // namespace risopt
