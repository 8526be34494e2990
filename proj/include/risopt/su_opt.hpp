#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>

#include "risopt/channel.hpp"
#include "risopt/report.hpp"

namespace risopt {

/// Unit-norm BS precoding vector. Constructed by normalizing a nonzero
/// direction; a zero direction is a degenerate channel.
class Beamformer {
  public:
    explicit Beamformer(VectorXcd direction) : w_(std::move(direction)) {
        const double n = w_.norm();
        if (!(n > 0.0)) throw std::domain_error("Beamformer: zero direction");
        w_ /= n;
    }

    const VectorXcd& vector() const { return w_; }
    Eigen::Index size() const { return w_.size(); }

  private:
    VectorXcd w_;
};

/// Output of a single-user maximizer. `snr_linear` is the SNR achieved by
/// (w, ris) at the solver's (p_t, sigma2); `bound_value`, when present, is the
/// solver's certificate in the same scale (upper bound for ub_max, the
/// alignment lower bound for lb_max). `report` is filled by the iterative
/// solver only.
struct SuSolution {
    Beamformer w;
    RisConfig ris;
    double snr_linear = 0.0;
    std::optional<double> bound_value;
    OptimizationReport report;
};

/// Received SNR (p_t / sigma2) |w^H (D phase_vector + h_d)|^2 for one user
/// with per-user channel pieces D (N_B x N_R) and h_d (N_B).
inline double eval_snr(const MatrixXcd& D, const VectorXcd& h_d, const RisConfig& ris,
                       const Beamformer& w, double p_t, double sigma2) {
    if (!(p_t > 0.0) || !(sigma2 > 0.0))
        throw std::invalid_argument("eval_snr: p_t and sigma2 must be positive");
    if (D.rows() != h_d.size() || D.cols() != ris.size() || w.size() != D.rows())
        throw std::invalid_argument("eval_snr: dimension mismatch");
    const Complex inner = w.vector().dot(D * ris.phase_vector() + h_d);
    return p_t / sigma2 * std::norm(inner);
}

namespace detail {

// Exact maximizer of |w^H (D phase + h_d)|^2 over the phases for fixed w:
// each phase rotates its column's contribution onto the direct term. Returns
// the raw phase vector and the achieved |.|^2 value (unscaled).
struct PhaseAlignment {
    VectorXd phi;
    double value;
};

inline PhaseAlignment align_phases(const MatrixXcd& D, const VectorXcd& h_d,
                                   const Beamformer& w, double rho) {
    const VectorXcd g = D.adjoint() * w.vector(); // g(i) = d_i^H w
    const Complex t = w.vector().dot(h_d);        // w^H h_d
    const double ang_t = std::arg(t);             // arg(0) == 0 by convention
    VectorXd phi(D.cols());
    double sum_abs_g = 0.0;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        phi[i] = std::arg(g[i]) + ang_t;
        sum_abs_g += std::abs(g[i]);
    }
    const double amp = rho * sum_abs_g + std::abs(t);
    return {std::move(phi), amp * amp};
}

} // namespace detail

/// Closed-form maximizer of the SVD-based SNR upper bound. Decomposes D, aligns
/// the phases against each left singular direction, picks the best index and
/// returns its singular vector as the beamformer. `bound_value` is N_B times
/// the best per-index value and dominates the SNR of every feasible (w, phi).
/// Well-defined for D = 0 and for h_d = 0.
inline SuSolution ub_max(const MatrixXcd& D, const VectorXcd& h_d, double rho,
                         double p_t = 1.0, double sigma2 = 1.0) {
    const Eigen::Index nb = D.rows();
    const Eigen::Index rank_cap = std::min(nb, D.cols());
    Eigen::JacobiSVD<MatrixXcd> svd(D, Eigen::ComputeFullU | Eigen::ComputeThinV);
    const auto& U = svd.matrixU();
    const auto& V = svd.matrixV();
    const auto& sv = svd.singularValues();

    // Best aligned value over all N_B left directions; the basis beyond the
    // economy rank carries lambda = 0 and contributes |alpha_i|^2 only.
    Eigen::Index best = 0;
    double best_val = -1.0;
    for (Eigen::Index i = 0; i < nb; ++i) {
        const Complex alpha = U.col(i).dot(h_d);
        const double lambda = i < rank_cap ? sv[i] : 0.0;
        const double sum_abs_v = i < rank_cap ? V.col(i).cwiseAbs().sum() : 0.0;
        const double amp = lambda * rho * sum_abs_v + std::abs(alpha);
        if (amp * amp > best_val) {
            best_val = amp * amp;
            best = i;
        }
    }

    const Complex alpha_best = U.col(best).dot(h_d);
    const double ang_alpha = std::arg(alpha_best);
    VectorXd phi(D.cols());
    for (Eigen::Index n = 0; n < D.cols(); ++n) {
        const Complex v_n = best < rank_cap ? V(n, best) : Complex{0.0, 0.0};
        phi[n] = std::arg(v_n) + ang_alpha;
    }

    const double scale = p_t / sigma2;
    SuSolution sol{Beamformer(U.col(best)), RisConfig(rho, std::move(phi)), 0.0,
                   scale * static_cast<double>(nb) * best_val, {}};
    sol.snr_linear = eval_snr(D, h_d, sol.ris, sol.w, p_t, sigma2);
    return sol;
}

/// Closed-form maximizer of the alignment lower bound: beamforms along the sum
/// of the columns of D plus h_d, then aligns the phases for that beamformer.
/// `bound_value` is rho^2 ||sum_i d_i + h_d||^2, never above the achieved SNR.
/// Requires a nonzero sum direction.
inline SuSolution lb_max(const MatrixXcd& D, const VectorXcd& h_d, double rho,
                         double p_t = 1.0, double sigma2 = 1.0) {
    const VectorXcd direction = D.rowwise().sum() + h_d;
    const double dn = direction.norm();
    if (!(dn > 0.0))
        throw std::domain_error("lb_max: zero column-sum direction (degenerate channel)");
    Beamformer w(direction);
    auto aligned = detail::align_phases(D, h_d, w, rho);

    const double scale = p_t / sigma2;
    SuSolution sol{std::move(w), RisConfig(rho, std::move(aligned.phi)), 0.0,
                   scale * rho * rho * dn * dn, {}};
    sol.snr_linear = eval_snr(D, h_d, sol.ris, sol.w, p_t, sigma2);
    return sol;
}

struct AmOptions {
    double tol = 1e-8; // relative objective change between iterations
    int max_iter = 500;
};

/// Alternating maximization over (w, phi): matched-filter beamformer for the
/// current phases, then exact phase alignment for the current beamformer.
/// Both half-steps are exact coordinate maximizers, so the recorded
/// trajectory never decreases. Starts from `init`.
inline SuSolution alternating_max(const MatrixXcd& D, const VectorXcd& h_d,
                                  const RisConfig& init, double p_t = 1.0, double sigma2 = 1.0,
                                  const AmOptions& opts = {}) {
    if (!(opts.tol > 0.0) || opts.max_iter < 1)
        throw std::invalid_argument("alternating_max: bad options");
    const double rho = init.rho();
    const double scale = p_t / sigma2;

    auto composite = [&](const VectorXd& phi_raw) -> VectorXcd {
        VectorXcd pv(phi_raw.size());
        for (Eigen::Index i = 0; i < phi_raw.size(); ++i) pv[i] = std::polar(rho, phi_raw[i]);
        return D * pv + h_d;
    };

    VectorXd phi = init.phi();
    VectorXcd c = composite(phi);
    if (!(c.norm() > 0.0))
        throw std::domain_error("alternating_max: zero composite channel");
    Beamformer w(c);
    double obj = scale * c.squaredNorm();

    OptimizationReport report;
    report.trajectory.push_back(obj);
    for (int it = 1; it <= opts.max_iter; ++it) {
        report.iterations = it;

        auto aligned = detail::align_phases(D, h_d, w, rho);
        phi = std::move(aligned.phi);
        report.trajectory.push_back(scale * aligned.value);

        c = composite(phi);
        w = Beamformer(c);
        const double obj_w = scale * c.squaredNorm();
        report.trajectory.push_back(obj_w);

        const double denom = std::max(std::abs(obj), std::numeric_limits<double>::min());
        if (std::abs(obj_w - obj) <= opts.tol * denom) {
            obj = obj_w;
            report.converged = true;
            break;
        }
        obj = obj_w;
    }

    SuSolution sol{std::move(w), RisConfig(rho, std::move(phi)), 0.0, std::nullopt,
                   std::move(report)};
    sol.snr_linear = eval_snr(D, h_d, sol.ris, sol.w, p_t, sigma2);
    return sol;
}

/// Convenience start at phi = 0 with the given loss.
inline SuSolution alternating_max(const MatrixXcd& D, const VectorXcd& h_d, double rho,
                                  double p_t = 1.0, double sigma2 = 1.0,
                                  const AmOptions& opts = {}) {
    return alternating_max(D, h_d, RisConfig::zeros(rho, D.cols()), p_t, sigma2, opts);
}

} // namespace risopt
