#include <doctest.h>

#include <cmath>
#include <random>

#include "ms2d/readout.hpp"
#include "oracles.hpp"

using namespace ms2d;

namespace {

Eigen::VectorXd random_simplex(int dim, std::mt19937_64& rng) {
    std::exponential_distribution<double> expo(1.0);
    Eigen::VectorXd p(dim);
    for (int i = 0; i < dim; ++i) p(i) = expo(rng);
    return p / p.sum();
}

const std::vector<std::pair<int, int>> kRhombusAdjacency{{0, 2}, {0, 3}, {1, 2}, {1, 3}};

}  // namespace

TEST_CASE("confusion matrix construction") {
    SUBCASE("no errors gives the identity") {
        auto cm = build_confusion(3, {0.0, 0.0, {}});
        CHECK((cm.matrix - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("two uncoupled ions give the tensor square of the flip matrix") {
        const double f = 0.07;
        auto cm = build_confusion(2, {f, 0.0, {}});
        Eigen::Matrix2d one;
        one << 1.0 - f, f, f, 1.0 - f;
        for (int prep = 0; prep < 4; ++prep)
            for (int obs = 0; obs < 4; ++obs) {
                const double expect = one(obs & 1, prep & 1) * one(obs >> 1, prep >> 1);
                CHECK(cm.matrix(obs, prep) == doctest::Approx(expect).epsilon(1e-12));
            }
    }
    SUBCASE("crosstalk only brightens dark ions next to bright ones") {
        auto cm = build_confusion(2, {0.0, 0.1, {{0, 1}}});
        // Prepared 01 (ion0 bright): ion1 dark with bright neighbor.
        const int prep = 0b01;
        CHECK(cm.matrix(0b11, prep) == doctest::Approx(0.1));
        CHECK(cm.matrix(0b01, prep) == doctest::Approx(0.9));
        // Prepared dark-dark stays dark.
        CHECK(cm.matrix(0b00, 0b00) == doctest::Approx(1.0));
    }
    SUBCASE("raw calibration counts are normalized per column") {
        Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(4, 4);
        counts << 90, 5, 3, 1, 5, 88, 2, 4, 4, 3, 92, 5, 1, 4, 3, 90;
        auto cm = build_confusion_from_counts(2, counts);
        for (int c = 0; c < 4; ++c) CHECK(cm.matrix.col(c).sum() == doctest::Approx(1.0));
        CHECK_THROWS_AS(build_confusion_from_counts(2, Eigen::MatrixXd::Zero(4, 4)),
                        ValidationError);
    }
    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(build_confusion(2, {0.6, 0.0, {}}), ValidationError);
        CHECK_THROWS_AS(build_confusion(2, {0.0, 0.0, {{0, 5}}}), ValidationError);
    }
}

TEST_CASE("maximum-likelihood recovery") {
    SUBCASE("identity matrix returns the empirical frequencies") {
        auto cm = build_confusion(2, {0.0, 0.0, {}});
        Eigen::VectorXd f(4);
        f << 10, 20, 30, 40;
        auto est = mle_recover(f, cm);
        CHECK((est.probabilities - f / 100.0).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(est.shots == 100);
    }
    SUBCASE("concentrated counts with identity matrix give a unit vector") {
        auto cm = build_confusion(2, {0.0, 0.0, {}});
        Eigen::VectorXd f = Eigen::VectorXd::Zero(4);
        f(2) = 500;
        auto est = mle_recover(f, cm);
        CHECK(est.probabilities(2) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("forward-model round trip at T = 1e6") {
        auto rng = oracle::rng(31);
        auto cm = build_confusion(2, {0.07, 0.0, {}});
        const Eigen::VectorXd p_true = random_simplex(4, rng);
        Eigen::VectorXd f = (cm.matrix * p_true * 1e6).array().round();
        auto est = mle_recover(f, cm);
        CHECK((est.probabilities - p_true).cwiseAbs().maxCoeff() < 1e-3);
    }
    SUBCASE("simplex constraints hold exactly") {
        auto rng = oracle::rng(77);
        auto cm = build_confusion(4, {0.07, 0.01, kRhombusAdjacency});
        const Eigen::VectorXd p_true = random_simplex(16, rng);
        std::mt19937_64 srng(4242);
        const Eigen::VectorXd f =
            detail::sample_multinomial(cm.matrix * p_true, 100000, srng);
        auto est = mle_recover(f, cm);
        CHECK(est.probabilities.minCoeff() >= -1e-12);
        CHECK(est.probabilities.sum() == doctest::Approx(1.0).epsilon(1e-9));
        // Optimality sanity: likelihood at the solution beats the clipped
        // pseudo-inverse estimate.
        Eigen::VectorXd raw = cm.matrix.fullPivLu().solve(f / f.sum());
        raw = raw.cwiseMax(0.0);
        raw /= raw.sum();
        double ll_raw = 0.0;
        const Eigen::VectorXd q = cm.matrix * raw;
        for (int i = 0; i < 16; ++i)
            if (f(i) > 0) ll_raw += f(i) * std::log(std::max(q(i), 1e-300));
        CHECK(est.log_likelihood >= ll_raw - 1e-6 * std::abs(ll_raw));
    }
    SUBCASE("L1 error shrinks like 1/sqrt(T) for well-conditioned matrices") {
        auto rng = oracle::rng(13);
        auto cm = build_confusion(2, {0.05, 0.01, {{0, 1}}});
        const Eigen::VectorXd p_true = random_simplex(4, rng);
        for (std::int64_t shots : {100000LL, 10000000LL}) {
            double worst = 0.0;
            for (int rep = 0; rep < 3; ++rep) {
                std::mt19937_64 srng(9000 + rep);
                const Eigen::VectorXd f =
                    detail::sample_multinomial(cm.matrix * p_true, shots, srng);
                const auto est = mle_recover(f, cm);
                worst = std::max(worst, (est.probabilities - p_true).lpNorm<1>());
            }
            CHECK(worst < 5.0 / std::sqrt(static_cast<double>(shots)));
        }
    }
}

TEST_CASE("monte carlo errors") {
    auto cm = build_confusion(2, {0.0, 0.0, {}});
    PopulationEstimate est;
    est.probabilities = Eigen::VectorXd(4);
    est.probabilities << 0.7, 0.1, 0.15, 0.05;
    est.shots = 20000;

    SUBCASE("identity matrix reproduces multinomial standard errors") {
        const auto se = monte_carlo_errors(est, cm, est.shots, 800, 5);
        for (int i = 0; i < 4; ++i) {
            const double p = est.probabilities(i);
            const double binom = std::sqrt(p * (1.0 - p) / est.shots);
            CHECK(se(i) == doctest::Approx(binom).epsilon(0.15));
        }
    }
    SUBCASE("estimates are stable when doubling the sample count") {
        const auto a = monte_carlo_errors(est, cm, est.shots, 400, 5);
        const auto b = monte_carlo_errors(est, cm, est.shots, 800, 5);
        for (int i = 0; i < 4; ++i) CHECK(a(i) == doctest::Approx(b(i)).epsilon(0.2));
    }
    SUBCASE("errors scale like 1/sqrt(T)") {
        const auto small = monte_carlo_errors(est, cm, 100000, 600, 5);
        const auto big = monte_carlo_errors(est, cm, 10000000, 600, 5);
        for (int i = 0; i < 4; ++i)
            CHECK(big(i) * 10.0 == doctest::Approx(small(i)).epsilon(0.10));
    }
    SUBCASE("reproducible for a fixed seed") {
        const auto a = monte_carlo_errors(est, cm, est.shots, 200, 123);
        const auto b = monte_carlo_errors(est, cm, est.shots, 200, 123);
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("crosstalk infidelity") {
    // 2 pi x 1.04 MHz target, 2 pi x 2.7 kHz neighbor.
    const double val = crosstalk_infidelity(two_pi * 1.04e6, two_pi * 2.7e3);
    CHECK(val == doctest::Approx(2e-5).epsilon(0.2));
    CHECK(crosstalk_infidelity(1.0, 0.0) == 0.0);
    CHECK(crosstalk_infidelity(1.0, 0.02) ==
          doctest::Approx(4.0 * crosstalk_infidelity(1.0, 0.01)).epsilon(1e-12));
}

TEST_CASE("gate error slope fit") {
    SUBCASE("noiseless linear data recovers slope and intercept to 1e-12") {
        std::vector<int> n{1, 3, 5, 7, 9, 11, 13};
        std::vector<double> f;
        for (int k : n) f.push_back(1.0 - 0.014 * k);
        auto fit = fit_gate_error(n, f);
        CHECK(std::abs(fit.error_per_gate - 0.014) < 1e-12);
        CHECK(std::abs(fit.intercept - 1.0) < 1e-12);
    }
    SUBCASE("synthetic noisy series recovers the slope within 3 sigma") {
        auto rng = oracle::rng(7);
        std::normal_distribution<double> noise(0.0, 0.01);
        std::vector<int> n{1, 3, 5, 7, 9, 11, 13};
        const double eps_true = 0.04;
        std::vector<double> f, sd;
        for (int k : n) {
            f.push_back(1.0 - eps_true * k + noise(rng));
            sd.push_back(0.01);
        }
        auto fit = fit_gate_error(n, f, sd);
        CHECK(std::abs(fit.error_per_gate - eps_true) < 3.0 * fit.error_stderr);
    }
    SUBCASE("input validation") {
        CHECK_THROWS_AS(fit_gate_error({1, 3}, {0.9, 0.8}), FitError);
        CHECK_THROWS_AS(fit_gate_error({1, 2, 5}, {0.9, 0.8, 0.7}), ValidationError);
        CHECK_THROWS_AS(fit_gate_error({1, 3, 3}, {0.9, 0.8, 0.7}), ValidationError);
    }
}
