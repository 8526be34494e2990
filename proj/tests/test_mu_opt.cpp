#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "risopt/mu_opt.hpp"

using namespace risopt;

namespace {

EffectiveChannel make_eff(int k_users, Eigen::Index nb, Eigen::Index nr, std::mt19937_64& rng,
                          bool with_reflected = true, bool with_direct = true) {
    EffectiveChannel eff;
    for (int k = 0; k < k_users; ++k) {
        eff.D.push_back(with_reflected ? oracles::random_matrix(nb, nr, rng)
                                       : MatrixXcd::Zero(nb, nr));
        eff.g_d.push_back(with_direct ? oracles::random_vector(nb, rng)
                                      : VectorXcd::Zero(nb));
    }
    return eff;
}

// Composites with orthogonal direct channels and no reflected path.
EffectiveChannel orthogonal_eff(int k_users, Eigen::Index nb, Eigen::Index nr) {
    EffectiveChannel eff;
    for (int k = 0; k < k_users; ++k) {
        eff.D.push_back(MatrixXcd::Zero(nb, nr));
        VectorXcd g = VectorXcd::Zero(nb);
        g[k] = Complex(1.5 + k, 0.0);
        eff.g_d.push_back(g);
    }
    return eff;
}

double db(double linear) { return 10.0 * std::log10(linear); }

} // namespace

TEST_CASE("cm_beamformer is the normalized composite", "[mu_opt]") {
    std::mt19937_64 rng(21);
    const auto eff = make_eff(3, 4, 5, rng);
    const RisConfig ris(0.9, oracles::random_phases(5, rng));
    for (int k = 0; k < 3; ++k) {
        const Beamformer w = cm_beamformer(eff, k, ris);
        CHECK(std::abs(w.vector().norm() - 1.0) < 1e-12);
        const VectorXcd c = composite_channel(eff, k, ris);
        const Complex inner = w.vector().dot(c);
        CHECK(inner.real() == Catch::Approx(c.norm()).epsilon(1e-12));
        CHECK(std::abs(inner.imag()) < 1e-12 * c.norm());
    }
}

TEST_CASE("cm_beamformer handles blocked paths", "[mu_opt]") {
    std::mt19937_64 rng(22);
    const auto eff = make_eff(1, 4, 5, rng, false, true); // direct only
    const RisConfig ris = RisConfig::zeros(1.0, 5);
    const Beamformer w = cm_beamformer(eff, 0, ris);
    CHECK((w.vector() - eff.g_d[0] / eff.g_d[0].norm()).norm() < 1e-12);

    EffectiveChannel dead;
    dead.D.push_back(MatrixXcd::Zero(4, 5));
    dead.g_d.push_back(VectorXcd::Zero(4));
    CHECK_THROWS_AS(cm_beamformer(dead, 0, ris), std::domain_error);
}

TEST_CASE("f_coeff diagonal is the scaled composite energy", "[mu_opt]") {
    std::mt19937_64 rng(23);
    const auto eff = make_eff(3, 4, 6, rng);
    const RisConfig ris(1.0, oracles::random_phases(6, rng));
    PowerAllocation power{VectorXd(3)};
    power.eta << 2.0, 0.0, 1.5;

    const Complex f00 = f_coeff(eff, ris, power, 0, 0);
    const double c0 = composite_channel(eff, 0, ris).squaredNorm();
    CHECK(f00.real() == Catch::Approx(2.0 * c0).epsilon(1e-12));
    CHECK(std::abs(f00.imag()) < 1e-12 * f00.real());

    CHECK(f_coeff(eff, ris, power, 0, 1) == Complex(0.0, 0.0)); // zero power

    // Channel part is conjugate-symmetric once powers divide out.
    const Complex f02 = f_coeff(eff, ris, power, 0, 2);
    const Complex f20 = f_coeff(eff, ris, power, 2, 0);
    CHECK(std::abs(f02 / 1.5 - std::conj(f20 / 2.0)) < 1e-12 * std::abs(f02 / 1.5));

    CHECK_THROWS_AS(f_coeff(eff, ris, power, 0, 3), std::out_of_range);
}

TEST_CASE("objective_log: single user has no interference term", "[mu_opt]") {
    std::mt19937_64 rng(24);
    const auto eff = make_eff(1, 4, 5, rng);
    const RisConfig ris(0.8, oracles::random_phases(5, rng));
    PowerAllocation power{VectorXd::Constant(1, 3.0)};
    const double sigma2 = 0.4;
    const double expect =
        std::log2(3.0 * composite_channel(eff, 0, ris).squaredNorm() / sigma2);
    CHECK(objective_log(eff, ris, power, sigma2) == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("objective_log: orthogonal users decouple", "[mu_opt]") {
    const auto eff = orthogonal_eff(3, 4, 2);
    const RisConfig ris = RisConfig::zeros(1.0, 2);
    PowerAllocation power{VectorXd(3)};
    power.eta << 1.0, 2.0, 0.5;
    const double sigma2 = 0.25;
    double expect = 0.0;
    for (int k = 0; k < 3; ++k)
        expect += std::log2(power.eta[k] * eff.g_d[k].squaredNorm() / sigma2);
    CHECK(objective_log(eff, ris, power, sigma2) == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("objective_log matches the explicit SINR assembly", "[mu_opt]") {
    std::mt19937_64 rng(25);
    for (int rep = 0; rep < 10; ++rep) {
        const auto eff = make_eff(3, 4, 6, rng);
        const VectorXd phi = oracles::random_phases(6, rng);
        const RisConfig ris(0.9, phi);
        PowerAllocation power{VectorXd(3)};
        power.eta << 1.2, 0.4, 2.1;
        const double sigma2 = 0.05;

        std::vector<VectorXcd> composites;
        for (int k = 0; k < 3; ++k) composites.push_back(composite_channel(eff, k, ris));
        const auto sinr = oracles::sinr_reference(composites, power.eta, sigma2);
        const double gm = oracles::geometric_mean(sinr);

        const double got = objective_log(eff, ris, power, sigma2);
        CHECK(std::exp2(got / 3.0) == Catch::Approx(gm).epsilon(1e-10));
    }
}

TEST_CASE("objective_log returns -inf for a zero power", "[mu_opt]") {
    std::mt19937_64 rng(26);
    const auto eff = make_eff(2, 3, 4, rng);
    const RisConfig ris = RisConfig::zeros(1.0, 4);
    PowerAllocation power{VectorXd(2)};
    power.eta << 1.0, 0.0;
    CHECK(objective_log(eff, ris, power, 1.0) == -std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(grad_phi(eff, ris, power, 1.0), std::domain_error);
}

TEST_CASE("grad_phi vanishes when no user sees the reflection", "[mu_opt]") {
    std::mt19937_64 rng(27);
    const auto eff = make_eff(3, 4, 8, rng, false, true);
    const RisConfig ris(1.0, oracles::random_phases(8, rng));
    PowerAllocation power{VectorXd::Constant(3, 1.0)};
    const VectorXd g = grad_phi(eff, ris, power, 0.3);
    CHECK(g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("grad_phi matches central finite differences", "[mu_opt]") {
    std::mt19937_64 rng(28);
    auto check_instance = [&](int k_users, Eigen::Index nb, Eigen::Index nr) {
        const auto eff = make_eff(k_users, nb, nr, rng);
        const VectorXd phi = oracles::random_phases(nr, rng);
        PowerAllocation power{VectorXd(k_users)};
        for (int k = 0; k < k_users; ++k) power.eta[k] = 0.5 + k;
        const double sigma2 = 0.2;

        const VectorXd analytic = grad_phi(eff, RisConfig(0.9, phi), power, sigma2);
        const VectorXd numeric = oracles::finite_difference_gradient(
            [&](const VectorXd& p) {
                return objective_log(eff, RisConfig(0.9, p), power, sigma2);
            },
            phi);
        for (Eigen::Index n = 0; n < nr; ++n)
            CHECK(std::abs(analytic[n] - numeric[n]) <=
                  1e-4 * (std::abs(numeric[n]) + 1e-12));
    };
    check_instance(1, 4, 6); // no interference terms
    for (int rep = 0; rep < 8; ++rep) check_instance(3, 4, 8);
}

TEST_CASE("phase_ascent stops instantly at a stationary point", "[mu_opt]") {
    std::mt19937_64 rng(29);
    const auto eff = make_eff(2, 4, 6, rng, false, true); // objective free of phases
    const RisConfig ris(1.0, oracles::random_phases(6, rng));
    const auto state = make_mu_state(eff, ris, PowerAllocation::uniform(2, 4.0), 0.1);
    const auto [out_ris, report] = phase_ascent(eff, state, 0.1);
    CHECK(report.converged);
    CHECK(report.iterations == 0);
    CHECK(report.trajectory.size() == 1);
    CHECK(out_ris.phi() == ris.phi());
}

TEST_CASE("phase_ascent with one user tracks the alternating maximizer", "[mu_opt]") {
    std::mt19937_64 rng(30);
    const auto eff = make_eff(1, 4, 8, rng);
    const double p_t = 2.0, sigma2 = 0.4, rho = 1.0;
    const auto state = make_mu_state(eff, RisConfig::zeros(rho, 8),
                                     PowerAllocation{VectorXd::Constant(1, p_t)}, sigma2);
    PhaseAscentOptions opts;
    opts.max_iter = 2000;
    opts.tol = 1e-12;
    const auto [ris, report] = phase_ascent(eff, state, sigma2, opts);
    const double ascent_snr_db = db(std::exp2(report.final()));

    const auto am = alternating_max(eff.D[0], eff.g_d[0], rho, p_t, sigma2);
    CHECK(ascent_snr_db >= db(std::exp2(state.objective)) - 1e-9); // at least the phi = 0 start
    CHECK(std::abs(ascent_snr_db - db(am.snr_linear)) < 0.2);
}

TEST_CASE("phase_ascent trajectories never decrease", "[mu_opt]") {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 10; ++rep) {
        const auto eff = make_eff(3, 4, 8, rng);
        const auto state = make_mu_state(eff, RisConfig(1.0, oracles::random_phases(8, rng)),
                                         PowerAllocation::uniform(3, 6.0), 0.05);
        const auto [ris, report] = phase_ascent(eff, state, 0.05);
        REQUIRE(report.trajectory.size() >= 1);
        for (std::size_t i = 1; i < report.trajectory.size(); ++i)
            CHECK(report.trajectory[i] >= report.trajectory[i - 1]);
        CHECK(report.final() >= state.objective);
    }
}

TEST_CASE("a_coeffs reproduces the interference terms", "[mu_opt]") {
    std::mt19937_64 rng(32);
    const auto eff = make_eff(3, 4, 6, rng);
    const RisConfig ris(0.85, oracles::random_phases(6, rng));
    PowerAllocation power{VectorXd(3)};
    power.eta << 0.7, 1.4, 2.8;
    const double sigma2 = 0.3;

    const MatrixXd a = a_coeffs(eff, ris);
    double rebuilt = 0.0;
    for (int k = 0; k < 3; ++k) {
        double interference = sigma2;
        for (int l = 0; l < 3; ++l)
            if (l != k) interference += power.eta[l] * a(k, l);
        rebuilt += std::log2(power.eta[k] * a(k, k) / interference);
    }
    CHECK(rebuilt == Catch::Approx(objective_log(eff, ris, power, sigma2)).epsilon(1e-12));

    // Cauchy-Schwarz caps the off-diagonal couplings.
    for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l)
            if (l != k) CHECK(a(k, l) <= a(k, k) * (1.0 + 1e-12));
}

TEST_CASE("a_coeffs edge cases", "[mu_opt]") {
    const auto eff = orthogonal_eff(2, 3, 2);
    const RisConfig ris = RisConfig::zeros(1.0, 2);
    const MatrixXd a = a_coeffs(eff, ris);
    CHECK(a(0, 1) == 0.0);
    CHECK(a(1, 0) == 0.0);
    CHECK(a(0, 0) == Catch::Approx(eff.g_d[0].squaredNorm()).epsilon(1e-12));

    // A user mirroring another reaches the Cauchy-Schwarz equality.
    EffectiveChannel twin;
    twin.D = {MatrixXcd::Zero(3, 2), MatrixXcd::Zero(3, 2)};
    VectorXcd g(3);
    g << Complex(1.0, 0.5), Complex(-0.3, 0.1), Complex(0.0, 2.0);
    twin.g_d = {g, g};
    const MatrixXd at = a_coeffs(twin, ris);
    CHECK(at(0, 1) == Catch::Approx(at(0, 0)).epsilon(1e-12));

    EffectiveChannel dead;
    dead.D = {MatrixXcd::Zero(3, 2)};
    dead.g_d = {VectorXcd::Zero(3)};
    CHECK_THROWS_AS(a_coeffs(dead, ris), std::domain_error);
}

TEST_CASE("power objective is concave in the log-power coordinates", "[mu_opt]") {
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> coupling(0.01, 2.0);
    std::uniform_real_distribution<double> gshift(-3.0, 3.0);
    MatrixXd a(4, 4);
    for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) a(k, l) = coupling(rng) + (k == l ? 2.0 : 0.0);
    const double sigma2 = 0.1;
    for (int rep = 0; rep < 100; ++rep) {
        VectorXd g1(4), g2(4);
        for (int k = 0; k < 4; ++k) {
            g1[k] = gshift(rng);
            g2[k] = gshift(rng);
        }
        const double mid = power_objective_gamma(a, sigma2, 0.5 * (g1 + g2));
        const double avg = 0.5 * (power_objective_gamma(a, sigma2, g1) +
                                  power_objective_gamma(a, sigma2, g2));
        CHECK(mid >= avg - 1e-12);
    }
}

TEST_CASE("power_opt gives everything to a lone user", "[mu_opt]") {
    MatrixXd a(1, 1);
    a << 3.7;
    const auto [power, report] = power_opt(a, 0.2, 5.0);
    CHECK(power.eta[0] == Catch::Approx(5.0).epsilon(1e-12));
    CHECK(report.converged);
}

TEST_CASE("power_opt splits evenly under symmetry", "[mu_opt]") {
    MatrixXd a(2, 2);
    a << 2.0, 0.7, 0.7, 2.0;
    const auto [power, report] = power_opt(a, 0.15, 8.0);
    CHECK(power.eta[0] == Catch::Approx(4.0).epsilon(1e-7));
    CHECK(power.eta[1] == Catch::Approx(4.0).epsilon(1e-7));
    CHECK(power.eta.sum() == Catch::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("power_opt beats the simplex grid and satisfies KKT", "[mu_opt]") {
    std::mt19937_64 rng(34);
    std::uniform_real_distribution<double> diag(0.5, 5.0);
    std::uniform_real_distribution<double> off(0.0, 1.5);
    const double sigma2 = 0.2, p_max = 10.0;
    for (int rep = 0; rep < 10; ++rep) {
        MatrixXd a(2, 2);
        a << diag(rng), off(rng), off(rng), diag(rng);
        const auto [power, report] = power_opt(a, sigma2, p_max);

        CHECK((power.eta.array() > 0.0).all());
        CHECK(std::abs(power.eta.sum() - p_max) <= 1e-9 * p_max);

        VectorXd gamma(2);
        gamma << std::log2(power.eta[0]), std::log2(power.eta[1]);
        const double solved = power_objective_gamma(a, sigma2, gamma);
        const double grid = oracles::power_grid_oracle_k2(a, sigma2, p_max, 2000);
        CHECK(std::exp2(solved) >= std::exp2(grid) * (1.0 - 1e-6));
        CHECK(std::exp2(solved) <= std::exp2(grid) * (1.0 + 2e-2)); // grid resolution band

        // Projected-gradient stationarity at the returned point.
        const VectorXd g = power_grad_gamma(a, sigma2, gamma);
        const VectorXd normal = power.eta;
        const VectorXd tangent = g - (g.dot(normal) / normal.squaredNorm()) * normal;
        CHECK(tangent.cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("power_opt validates its inputs", "[mu_opt]") {
    MatrixXd a(2, 2);
    a << 1.0, 0.1, 0.1, 1.0;
    CHECK_THROWS_AS(power_opt(a, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(power_opt(a, 0.0, 1.0), std::invalid_argument);
    a(0, 0) = 0.0;
    CHECK_THROWS_AS(power_opt(a, 1.0, 1.0), std::invalid_argument);
    a(0, 0) = 1.0;
    a(1, 0) = -0.2;
    CHECK_THROWS_AS(power_opt(a, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("joint_optimize with zero outer rounds returns the start", "[mu_opt]") {
    std::mt19937_64 rng(35);
    const auto eff = make_eff(2, 4, 5, rng);
    const RisConfig init(1.0, oracles::random_phases(5, rng));
    JointOptions opts;
    opts.max_outer = 0;
    const auto [state, report] = joint_optimize(eff, init, 0.1, 4.0, opts);
    CHECK(report.iterations == 0);
    CHECK(state.ris.phi() == init.phi());
    CHECK(state.power.eta == PowerAllocation::uniform(2, 4.0).eta);
    CHECK(state.objective ==
          Catch::Approx(objective_log(eff, init, state.power, 0.1)).epsilon(1e-12));
}

TEST_CASE("joint_optimize dominates both single-block baselines", "[mu_opt]") {
    std::mt19937_64 rng(36);
    for (int rep = 0; rep < 5; ++rep) {
        const auto eff = make_eff(3, 4, 6, rng);
        const double sigma2 = 0.1, p_max = 6.0;
        const VectorXd phi0 = oracles::random_phases(6, rng);
        const RisConfig init(1.0, phi0);
        const VectorXd eta0 = PowerAllocation::uniform(3, p_max).eta;

        // Phase-only baseline = first inner step of the phases-first run.
        const auto phase_only = detail::ascend_phases(eff, 1.0, phi0, eta0, sigma2, {});
        JointOptions opts;
        opts.init_eta = eta0;
        const auto [state_pf, report_pf] = joint_optimize(eff, init, sigma2, p_max, opts);
        CHECK(report_pf.final() >= phase_only.report.final() - 1e-9);

        // Power-only baseline = first inner step of the powers-first run.
        const auto c0 = detail::composites_raw(eff, 1.0, phi0);
        const auto [pw, pw_rep] =
            power_opt(detail::a_from_composites(c0), sigma2, p_max, {}, eta0);
        const double power_only = detail::objective_from_composites(c0, pw.eta, sigma2);
        opts.powers_first = true;
        const auto [state_powf, report_powf] = joint_optimize(eff, init, sigma2, p_max, opts);
        CHECK(report_powf.final() >= power_only - 1e-9);

        for (const auto& rep_outer : {report_pf, report_powf})
            for (std::size_t i = 1; i < rep_outer.trajectory.size(); ++i)
                CHECK(rep_outer.trajectory[i] >=
                      rep_outer.trajectory[i - 1] -
                          1e-12 * std::abs(rep_outer.trajectory[i - 1]));
    }
}

TEST_CASE("joint_optimize default settings approach the long-run solution", "[mu_opt]") {
    std::mt19937_64 rng(37);
    const auto eff = make_eff(2, 4, 4, rng);
    const double sigma2 = 0.05, p_max = 4.0;
    const RisConfig init = RisConfig::zeros(1.0, 4);

    const auto quick = joint_optimize(eff, init, sigma2, p_max, {});

    JointOptions exhaustive;
    exhaustive.tol = 1e-12;
    exhaustive.max_outer = 500;
    exhaustive.phase.max_iter = 2000;
    exhaustive.phase.tol = 1e-13;
    exhaustive.power.tol = 1e-11;
    const auto longrun = joint_optimize(eff, init, sigma2, p_max, exhaustive);

    const double quick_db = db(std::exp2(quick.second.final() / 2.0));
    const double long_db = db(std::exp2(longrun.second.final() / 2.0));
    CHECK(std::abs(quick_db - long_db) < 0.5);
    CHECK(long_db >= quick_db - 1e-9);
}

TEST_CASE("mu state keeps beamformers coherent with its phases", "[mu_opt]") {
    std::mt19937_64 rng(38);
    const auto eff = make_eff(3, 4, 6, rng);
    const auto [state, report] = joint_optimize(eff, 0.9, 0.1, 5.0, {});
    for (int k = 0; k < 3; ++k) {
        const Beamformer expect = cm_beamformer(eff, k, state.ris);
        CHECK((state.beamformers[k].vector() - expect.vector()).norm() < 1e-12);
    }
    state.power.validate(5.0);
    CHECK(std::abs(state.power.eta.sum() - 5.0) <= 1e-9 * 5.0);
}

TEST_CASE("objective_log is invariant to a global channel phase", "[mu_opt]") {
    std::mt19937_64 rng(39);
    auto eff = make_eff(3, 4, 6, rng);
    const RisConfig ris(0.9, oracles::random_phases(6, rng));
    const PowerAllocation power = PowerAllocation::uniform(3, 5.0);
    const double base = objective_log(eff, ris, power, 0.2);

    const Complex rot = std::polar(1.0, -2.31);
    for (int k = 0; k < 3; ++k) {
        eff.D[k] *= rot; // D inherits the rotation of H
        eff.g_d[k] *= rot;
    }
    CHECK(objective_log(eff, ris, power, 0.2) == Catch::Approx(base).epsilon(1e-12));
}
