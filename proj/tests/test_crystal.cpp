#include <doctest.h>

#include <cmath>
#include <random>

#include "ms2d/crystal.hpp"
#include "oracles.hpp"

using namespace ms2d;

namespace {
TrapConfig paper_trap() { return TrapConfig::from_mhz(0.803, 2.284, 0.553); }
}

TEST_CASE("single ion sits at the trap center") {
    auto crystal = solve_equilibrium(paper_trap(), 1);
    CHECK(crystal.positions.norm() == 0.0);
    auto spec = transverse_modes(crystal);
    CHECK(spec.n_modes() == 1);
    CHECK(spec.frequencies(0) == doctest::Approx(paper_trap().omega_y).epsilon(1e-12));
    CHECK(spec.mode_matrix(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("two ions separate along the weak axis at the force-balance distance") {
    auto trap = paper_trap();
    auto crystal = solve_equilibrium(trap, 2, 3);
    // Analytic oracle: m w_z^2 (d/2) = k q^2 / d^2.
    const double d_expected =
        std::cbrt(2.0 * trap.coulomb_coupling() / (trap.ion_mass * trap.omega_z * trap.omega_z));
    const double d = (crystal.positions.row(0) - crystal.positions.row(1)).norm();
    CHECK(d == doctest::Approx(d_expected).epsilon(1e-10));
    CHECK(d == doctest::Approx(5.1248e-6).epsilon(1e-3));  // ~5.1 um
    // Along z, centered.
    CHECK(std::abs(crystal.positions(0, 2)) == doctest::Approx(d / 2).epsilon(1e-9));
    CHECK(std::abs(crystal.positions(0, 0)) < 1e-12);
}

TEST_CASE("four-ion crystal forms a planar rhombus with ~5 um spacing") {
    auto crystal = solve_equilibrium(paper_trap(), 4, 1);
    REQUIRE(crystal.n_ions() == 4);
    auto labels = crystal.lrud();
    // Two ions on the z axis, two on the x axis.
    CHECK(std::abs(crystal.positions(labels.left, 0)) < 1e-9 * 1e-6);
    CHECK(std::abs(crystal.positions(labels.up, 2)) < 1e-9 * 1e-6);
    CHECK(crystal.positions(labels.left, 2) < 0.0);
    CHECK(crystal.positions(labels.up, 0) > 0.0);
    const double adjacent =
        (crystal.positions.row(labels.left) - crystal.positions.row(labels.up)).norm();
    CHECK(adjacent == doctest::Approx(5e-6).epsilon(0.15));
    // Planar.
    CHECK(crystal.positions.col(1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("four-ion transverse modes reproduce the measured drumhead spectrum") {
    auto crystal = solve_equilibrium(paper_trap(), 4, 1);
    auto spec = transverse_modes(crystal);
    const double expected[] = {2.284, 2.216, 2.167, 2.138};  // MHz
    for (int k = 0; k < 4; ++k)
        CHECK(angular_to_mhz(spec.frequencies(k)) ==
              doctest::Approx(expected[k]).epsilon(0).scale(0).epsilon(5e-3 / expected[k]));
    // COM exactly at the transverse trap frequency.
    CHECK(std::abs(spec.frequencies(0) - paper_trap().omega_y) < 1e-9 * paper_trap().omega_y);
    // COM vector is (1,...,1)/2 with the positive sign convention.
    for (int i = 0; i < 4; ++i) CHECK(spec.mode_matrix(i, 0) == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("mode structure matches the gate rules: LR misses mode 4, UD misses mode 2") {
    auto crystal = solve_equilibrium(paper_trap(), 4, 1);
    auto spec = transverse_modes(crystal);
    auto lab = crystal.lrud();
    CHECK(std::abs(spec.mode_matrix(lab.left, 3)) < 1e-10);
    CHECK(std::abs(spec.mode_matrix(lab.right, 3)) < 1e-10);
    CHECK(std::abs(spec.mode_matrix(lab.up, 1)) < 1e-10);
    CHECK(std::abs(spec.mode_matrix(lab.down, 1)) < 1e-10);
    // The pair ions participate in the modes their gates use.
    CHECK(std::abs(spec.mode_matrix(lab.left, 1)) > 0.5);
    CHECK(std::abs(spec.mode_matrix(lab.up, 3)) > 0.5);
}

TEST_CASE("mode matrix is orthonormal and rows are normalized") {
    auto crystal = solve_equilibrium(paper_trap(), 4, 1);
    auto spec = transverse_modes(crystal);
    const Eigen::MatrixXd gram =
        spec.mode_matrix.transpose() * spec.mode_matrix - Eigen::MatrixXd::Identity(4, 4);
    CHECK(gram.cwiseAbs().maxCoeff() < 1e-10);
    for (int i = 0; i < 4; ++i)
        CHECK(spec.mode_matrix.row(i).squaredNorm() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("equilibrium gradient is far below the characteristic force scale") {
    auto trap = paper_trap();
    for (int n : {2, 4, 7}) {
        auto crystal = solve_equilibrium(trap, n, 11);
        const double gmax =
            detail::potential_gradient(trap, crystal.positions).lpNorm<Eigen::Infinity>();
        CHECK(gmax < 1e-9 * trap.ion_mass * trap.omega_z * trap.omega_z * trap.length_scale());
    }
}

TEST_CASE("random perturbations away from equilibrium increase the energy") {
    auto trap = paper_trap();
    auto crystal = solve_equilibrium(trap, 4, 1);
    auto rng = oracle::rng(99);
    std::normal_distribution<double> dist(0.0, 0.005 * trap.length_scale());
    for (int trial = 0; trial < 20; ++trial) {
        Positions delta(4, 3);
        for (int i = 0; i < 4; ++i)
            for (int c = 0; c < 3; ++c) delta(i, c) = dist(rng);
        const double v1 = detail::potential_energy(trap, crystal.positions + delta);
        const double v2 = detail::potential_energy(trap, crystal.positions + 2.0 * delta);
        CHECK(v1 > crystal.potential_energy);
        CHECK(v2 > v1);
    }
}

TEST_CASE("re-solving from a perturbed start returns the same crystal up to reflection") {
    auto trap = paper_trap();
    auto crystal = solve_equilibrium(trap, 4, 1);
    auto rng = oracle::rng(7);
    std::normal_distribution<double> dist(0.0, 0.01 * 5e-6);
    auto start = crystal.positions;
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 3; ++c) start(i, c) += dist(rng);
    auto again = solve_equilibrium_from(trap, start, 5);
    // Match modulo in-plane reflections and relabeling.
    double best = 1e9;
    for (double sx : {1.0, -1.0}) {
        for (double sz : {1.0, -1.0}) {
            double worst = 0.0;
            for (int i = 0; i < 4; ++i) {
                double nearest = 1e9;
                for (int j = 0; j < 4; ++j) {
                    Eigen::Vector3d p = again.positions.row(j);
                    p(0) *= sx;
                    p(2) *= sz;
                    nearest = std::min(nearest,
                                       (p - crystal.positions.row(i).transpose()).norm());
                }
                worst = std::max(worst, nearest);
            }
            best = std::min(best, worst);
        }
    }
    CHECK(best < 1e-8);
}

TEST_CASE("lamb-dicke parameters follow the frequency scaling") {
    auto crystal = solve_equilibrium(paper_trap(), 4, 1);
    auto spec = transverse_modes(crystal);

    SUBCASE("zero wavevector difference gives zero coupling") {
        CHECK(lamb_dicke(spec, 0.0).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("COM eta at 355 nm counter-propagating matches the direct evaluation") {
        // eta = dk sqrt(hbar/(2 m w)), dk = 4 pi/355nm, w = 2 pi x 2.284 MHz.
        CHECK(spec.lamb_dicke(0) == doctest::Approx(0.127).epsilon(5e-3));
    }
    SUBCASE("eta ratio between modes equals sqrt(w'/w)") {
        auto eta = lamb_dicke(spec, default_delta_k);
        for (int k = 1; k < 4; ++k)
            CHECK(eta(k) / eta(0) ==
                  doctest::Approx(std::sqrt(spec.frequencies(0) / spec.frequencies(k)))
                      .epsilon(1e-12));
    }
}

TEST_CASE("unstable transverse confinement raises an instability error") {
    auto crystal = solve_equilibrium(paper_trap(), 4, 1);
    crystal.trap.omega_y = mhz_to_angular(0.5);  // weaker than the in-plane couplings
    CHECK_THROWS_AS(transverse_modes(crystal), InstabilityError);
}

TEST_CASE("trap validation") {
    TrapConfig bad = paper_trap();
    bad.omega_x = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    TrapConfig warned = TrapConfig::from_mhz(2.5, 2.284, 0.553);
    CHECK(!warned.validate().empty());
    CHECK(paper_trap().validate().empty());
    TrapConfig badq = paper_trap();
    badq.mathieu_q = 1.2;
    CHECK_THROWS_AS(badq.validate(), ValidationError);
}

TEST_CASE("solver is deterministic for a fixed seed") {
    auto a = solve_equilibrium(paper_trap(), 4, 42);
    auto b = solve_equilibrium(paper_trap(), 4, 42);
    CHECK((a.positions - b.positions).cwiseAbs().maxCoeff() == 0.0);
}
