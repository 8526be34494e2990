#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <istream>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "risopt/random.hpp"
#include "risopt/scenario.hpp"

namespace risopt {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using Complex = std::complex<double>;

inline double wrap_phase(double phi) {
    // remainder() maps into [-pi, pi]; values already inside are untouched.
    return std::remainder(phi, 2.0 * std::numbers::pi);
}

/// RIS state: a common reflection loss rho in (0, 1] and one phase shift per
/// element. Phases are stored wrapped to [-pi, pi]; solvers work on raw phase
/// vectors internally and construct a RisConfig only when reporting.
class RisConfig {
  public:
    RisConfig(double rho, VectorXd phi) : rho_(rho), phi_(std::move(phi)) {
        if (!(rho_ > 0.0) || rho_ > 1.0)
            throw std::invalid_argument("RisConfig: rho must lie in (0, 1]");
        for (Eigen::Index i = 0; i < phi_.size(); ++i) phi_[i] = wrap_phase(phi_[i]);
    }

    static RisConfig zeros(double rho, Eigen::Index n_elements) {
        return RisConfig(rho, VectorXd::Zero(n_elements));
    }

    double rho() const { return rho_; }
    const VectorXd& phi() const { return phi_; }
    Eigen::Index size() const { return phi_.size(); }

    /// The diagonal of the reflection matrix: entries rho * exp(j * phi_i).
    VectorXcd phase_vector() const {
        VectorXcd v(phi_.size());
        for (Eigen::Index i = 0; i < phi_.size(); ++i)
            v[i] = std::polar(rho_, phi_[i]);
        return v;
    }

  private:
    double rho_;
    VectorXd phi_;
};

/// One draw of all random channels plus the deterministic large-scale state.
/// H is RIS->BS (N_B x N_R), h[k] is user k -> RIS (N_R), h_d[k] is user k ->
/// BS (N_B). beta/beta_d hold the linear attenuations, i_reflected/i_direct
/// the link-existence flags. Immutable value object.
struct ChannelRealization {
    MatrixXcd H;
    std::vector<VectorXcd> h;
    std::vector<VectorXcd> h_d;
    std::vector<double> beta;
    std::vector<double> beta_d;
    std::vector<int> i_reflected;
    std::vector<int> i_direct;

    int n_users() const { return static_cast<int>(h.size()); }
    Eigen::Index n_bs() const { return H.rows(); }
    Eigen::Index n_ris() const { return H.cols(); }

    void validate() const {
        const std::size_t k = h.size();
        if (h_d.size() != k || beta.size() != k || beta_d.size() != k ||
            i_reflected.size() != k || i_direct.size() != k)
            throw std::invalid_argument("realization: per-user lists disagree in length");
        for (std::size_t u = 0; u < k; ++u) {
            if (h[u].size() != H.cols() || h_d[u].size() != H.rows())
                throw std::invalid_argument("realization: vector dimensions disagree with H");
            if ((i_reflected[u] != 0 && i_reflected[u] != 1) ||
                (i_direct[u] != 0 && i_direct[u] != 1))
                throw std::invalid_argument("realization: link flags must be 0 or 1");
            if (i_reflected[u] == 0 && i_direct[u] == 0)
                throw std::invalid_argument("realization: user " + std::to_string(u) +
                                            " is unreachable (both links absent)");
            if (beta[u] < 0.0 || beta_d[u] < 0.0)
                throw std::invalid_argument("realization: attenuations must be nonnegative");
        }
    }
};

/// Per-user composite-channel ingredients with attenuation and blocking
/// absorbed: D[k](i,j) = i_reflected * sqrt(beta) * H(i,j) * h[k](j) and
/// g_d[k] = i_direct * sqrt(beta_d) * h_d[k]. With this scaling the composite
/// channel is exactly D[k] * phase_vector + g_d[k].
struct EffectiveChannel {
    std::vector<MatrixXcd> D;
    std::vector<VectorXcd> g_d;

    int n_users() const { return static_cast<int>(D.size()); }
    Eigen::Index n_bs() const { return D.empty() ? 0 : D.front().rows(); }
    Eigen::Index n_ris() const { return D.empty() ? 0 : D.front().cols(); }
};

/// Draws one realization: i.i.d. unit-variance circularly-symmetric complex
/// Gaussian entries for H, every h[k] and every h_d[k]; attenuations from the
/// scenario path-loss model and the BS/RIS/user geometry; link flags from the
/// scenario policy. Draw order is fixed (H row-major, then h[k], then h_d[k]
/// per user) so a seed pins the realization bit-for-bit.
inline ChannelRealization sample_realization(const ScenarioConfig& cfg,
                                             const std::vector<Vec3>& user_positions,
                                             Rng& rng) {
    cfg.validate();
    if (static_cast<int>(user_positions.size()) != cfg.n_users)
        throw std::invalid_argument("sample_realization: positions disagree with n_users");

    const int nb = cfg.n_bs_antennas, nr = cfg.n_ris_elements, k = cfg.n_users;
    ChannelRealization real;
    real.H.resize(nb, nr);
    for (int i = 0; i < nb; ++i)
        for (int j = 0; j < nr; ++j)
            real.H(i, j) = sample_cn(rng);

    const double d_bs_ris = distance(cfg.bs_position, cfg.ris_position);
    real.h.resize(k);
    real.h_d.resize(k);
    real.beta.resize(k);
    real.beta_d.resize(k);
    real.i_reflected.resize(k);
    real.i_direct.resize(k);
    for (int u = 0; u < k; ++u) {
        real.h[u].resize(nr);
        for (int j = 0; j < nr; ++j) real.h[u][j] = sample_cn(rng);
        real.h_d[u].resize(nb);
        for (int i = 0; i < nb; ++i) real.h_d[u][i] = sample_cn(rng);
        real.beta[u] = path_loss_reflected(d_bs_ris, distance(cfg.ris_position, user_positions[u]),
                                           cfg.pathloss_const_exp, cfg.pathloss_distance_exp);
        real.beta_d[u] = path_loss_direct(distance(cfg.bs_position, user_positions[u]),
                                          cfg.pathloss_const_exp, cfg.pathloss_distance_exp);
        real.i_reflected[u] = cfg.reflected_flag(u);
        real.i_direct[u] = cfg.direct_flag(u);
    }
    real.validate();
    return real;
}

/// Folds attenuation and blocking into the per-user D matrices and effective
/// direct channels. A blocked link yields an exactly-zero D or g_d.
inline EffectiveChannel build_effective(const ChannelRealization& real) {
    real.validate();
    EffectiveChannel eff;
    const int k = real.n_users();
    eff.D.resize(k);
    eff.g_d.resize(k);
    for (int u = 0; u < k; ++u) {
        if (real.i_reflected[u]) {
            const double s = std::sqrt(real.beta[u]);
            eff.D[u] = s * (real.H * real.h[u].asDiagonal());
        } else {
            eff.D[u] = MatrixXcd::Zero(real.n_bs(), real.n_ris());
        }
        if (real.i_direct[u]) {
            eff.g_d[u] = std::sqrt(real.beta_d[u]) * real.h_d[u];
        } else {
            eff.g_d[u] = VectorXcd::Zero(real.n_bs());
        }
    }
    return eff;
}

/// Composite BS-side channel of user k under the given RIS state:
/// D[k] * phase_vector + g_d[k].
inline VectorXcd composite_channel(const EffectiveChannel& eff, int k, const RisConfig& ris) {
    if (k < 0 || k >= eff.n_users())
        throw std::out_of_range("composite_channel: user index out of range");
    if (ris.size() != eff.n_ris())
        throw std::invalid_argument("composite_channel: RIS size disagrees with channel");
    return eff.D[k] * ris.phase_vector() + eff.g_d[k];
}

// ---------------------------------------------------------------------------
// Plain-text fixture format: "risopt-realization 1" header, dimensions, then
// one labeled block per array with complex entries as "re im" pairs,
// row-major. Round-trips bit-exactly (printed with max_digits10).

inline void dump_realization(const ChannelRealization& real, std::ostream& out) {
    real.validate();
    out.precision(17);
    out << "risopt-realization 1\n";
    out << "dims " << real.n_bs() << ' ' << real.n_ris() << ' ' << real.n_users() << '\n';
    out << "H";
    for (Eigen::Index i = 0; i < real.H.rows(); ++i)
        for (Eigen::Index j = 0; j < real.H.cols(); ++j)
            out << ' ' << real.H(i, j).real() << ' ' << real.H(i, j).imag();
    out << '\n';
    for (int u = 0; u < real.n_users(); ++u) {
        out << "h " << u;
        for (Eigen::Index j = 0; j < real.h[u].size(); ++j)
            out << ' ' << real.h[u][j].real() << ' ' << real.h[u][j].imag();
        out << '\n';
        out << "h_d " << u;
        for (Eigen::Index i = 0; i < real.h_d[u].size(); ++i)
            out << ' ' << real.h_d[u][i].real() << ' ' << real.h_d[u][i].imag();
        out << '\n';
        out << "beta " << u << ' ' << real.beta[u] << ' ' << real.beta_d[u] << '\n';
        out << "links " << u << ' ' << real.i_reflected[u] << ' ' << real.i_direct[u] << '\n';
    }
}

inline ChannelRealization load_realization(std::istream& in) {
    auto fail = [](const std::string& what) -> void {
        throw std::runtime_error("realization fixture: " + what);
    };
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "risopt-realization" || version != 1) fail("bad header");
    std::string tag;
    Eigen::Index nb = 0, nr = 0;
    int k = 0;
    in >> tag >> nb >> nr >> k;
    if (tag != "dims" || nb < 1 || nr < 1 || k < 1) fail("bad dims");

    ChannelRealization real;
    real.H.resize(nb, nr);
    in >> tag;
    if (tag != "H") fail("expected H block");
    for (Eigen::Index i = 0; i < nb; ++i)
        for (Eigen::Index j = 0; j < nr; ++j) {
            double re, im;
            in >> re >> im;
            real.H(i, j) = {re, im};
        }
    real.h.resize(k);
    real.h_d.resize(k);
    real.beta.resize(k);
    real.beta_d.resize(k);
    real.i_reflected.resize(k);
    real.i_direct.resize(k);
    for (int u = 0; u < k; ++u) {
        int idx;
        in >> tag >> idx;
        if (tag != "h" || idx != u) fail("expected h block for user " + std::to_string(u));
        real.h[u].resize(nr);
        for (Eigen::Index j = 0; j < nr; ++j) {
            double re, im;
            in >> re >> im;
            real.h[u][j] = {re, im};
        }
        in >> tag >> idx;
        if (tag != "h_d" || idx != u) fail("expected h_d block");
        real.h_d[u].resize(nb);
        for (Eigen::Index i = 0; i < nb; ++i) {
            double re, im;
            in >> re >> im;
            real.h_d[u][i] = {re, im};
        }
        in >> tag >> idx >> real.beta[u] >> real.beta_d[u];
        if (tag != "beta" || idx != u) fail("expected beta block");
        in >> tag >> idx >> real.i_reflected[u] >> real.i_direct[u];
        if (tag != "links" || idx != u) fail("expected links block");
    }
    if (!in) fail("truncated input");
    real.validate();
    return real;
}

} // namespace risopt
