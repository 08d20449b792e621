// Acceptance suite: end-to-end checks of the library against its published
// reference behavior.  Each criterion prints one PASS/FAIL line (with its
// runtime) and the process exits nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "ms2d/cli.hpp"
#include "ms2d/optimize.hpp"
#include "oracles.hpp"

using namespace ms2d;
using oracle::cplx;

namespace {

int failures = 0;

struct Criterion {
    int id;
    std::string detail;
    bool ok = true;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    explicit Criterion(int id) : id(id) {}

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
    void note(const std::string& what) {
        if (!detail.empty()) detail += "; ";
        detail += what;
    }
    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    void finish(double runtime_limit_s, const std::string& summary) {
        const double dt = elapsed();
        if (runtime_limit_s > 0.0 && dt > runtime_limit_s) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += "runtime " + std::to_string(dt) + " s exceeds " +
                      std::to_string(runtime_limit_s) + " s";
        }
        std::printf("%s criterion %2d: %s (%.2f s)%s%s\n", ok ? "PASS" : "FAIL", id,
                    summary.c_str(), dt, detail.empty() ? "" : " -- ", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
};

struct Fixture {
    IonCrystal crystal;
    ModeSpectrum spec;
    LrudLabels lab;
    Fixture()
        : crystal(solve_equilibrium(TrapConfig::from_mhz(0.803, 2.284, 0.553), 4, 1)),
          spec(transverse_modes(crystal)),
          lab(crystal.lrud()) {}
};

double closure_residual(const PulseSequence& seq, const ModeSpectrum& spec) {
    const Eigen::MatrixXcd fin = final_displacements(seq, spec);
    double worst = 0.0;
    for (int k = 0; k < spec.n_modes(); ++k)
        worst = std::max(worst, std::abs(fin(seq.pair[0], k) + fin(seq.pair[1], k)));
    return worst;
}

}  // namespace

// 2. Gate timings from the computed spectrum.
static void criterion_gate_timings(const Fixture& fx) {
    Criterion c(2);
    const auto lr = design_two_segment(fx.spec, {fx.lab.left, fx.lab.right}, TwoSegmentRule::lr);
    const auto ud = design_two_segment(fx.spec, {fx.lab.up, fx.lab.down}, TwoSegmentRule::ud);
    const auto lu = design_alternating_diagonal(fx.spec, {fx.lab.left, fx.lab.up}, 2e-6);
    const double t_lr = lr.total_time * 1e6, t_ud = ud.total_time * 1e6,
                 t_lu = lu.total_time * 1e6;
    char buf[256];
    std::snprintf(buf, sizeof buf, "T_LR=%.3f us, T_UD=%.3f us, T_LU=%.3f us", t_lr, t_ud, t_lu);
    c.require(std::abs(t_lr - 81.6) < 0.5, "LR outside 81.6 +- 0.5 us");
    c.require(std::abs(t_ud - 69.0) < 0.5,
              "UD gate time " + std::to_string(t_ud) +
                  " us vs expected 69.0 +- 0.5 us: the rounded input trap frequencies give a "
                  "f3-f4 splitting of 28.61 kHz, which cannot reproduce the published timing");
    c.require(std::abs(t_lu - 219.1) < 0.5, "LU outside 219.1 +- 0.5 us");
    c.finish(1.0, buf);
}

// 3. Trajectory closure and quadrature agreement.
static void criterion_closure(const Fixture& fx) {
    Criterion c(3);
    const auto lr = scale_to_phase(
        design_two_segment(fx.spec, {fx.lab.left, fx.lab.right}, TwoSegmentRule::lr), fx.spec);
    const auto ud = scale_to_phase(
        design_two_segment(fx.spec, {fx.lab.up, fx.lab.down}, TwoSegmentRule::ud), fx.spec);
    const auto lu = scale_to_phase(
        design_alternating_diagonal(fx.spec, {fx.lab.left, fx.lab.up}, 2e-6), fx.spec);
    double worst = 0.0;
    for (const auto* seq : {&lr, &ud, &lu})
        worst = std::max(worst, closure_residual(*seq, fx.spec));
    c.require(worst < 1e-10,
              "designed-sequence closure residual " + std::to_string(worst) + " >= 1e-10");

    auto rng = oracle::rng(20240917);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double worst_rel = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        Segment s;
        s.start_time = 100e-6 * uni(rng);
        s.duration = (0.5 + 49.5 * uni(rng)) * 1e-6;
        s.rabi_rate = two_pi * 1e5 * (0.1 + uni(rng));
        s.motional_phase = two_pi * uni(rng);
        const double omega = two_pi * 2.2e6;
        const double mu = omega + two_pi * 4e5 * (uni(rng) - 0.5);
        const double eta_b = 0.2 * (uni(rng) - 0.5);
        const double delta = mu - omega;
        const cplx closed = segment_displacement(s, omega, mu, eta_b);
        const cplx quad =
            eta_b * s.rabi_rate / (2.0 * cplx(0.0, 1.0)) *
            oracle::integrate_osc(
                [&](double t) { return std::exp(cplx(0.0, -(delta * t + s.motional_phase))); },
                s.start_time, s.start_time + s.duration, std::abs(delta) * s.duration);
        worst_rel = std::max(worst_rel,
                             std::abs(closed - quad) / std::max(1e-30, std::abs(quad)));
    }
    c.require(worst_rel < 1e-9,
              "quadrature mismatch " + std::to_string(worst_rel) + " >= 1e-9 relative");
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "closure residual %.2e; 1000-segment quadrature agreement %.2e rel", worst,
                  worst_rel);
    c.finish(30.0, buf);
}

// 4. Ideal-gate fidelity from the open-system solver.
static void criterion_ideal_gate(const Fixture& fx) {
    Criterion c(4);
    const auto lr = scale_to_phase(
        design_two_segment(fx.spec, {fx.lab.left, fx.lab.right}, TwoSegmentRule::lr), fx.spec);
    const double theta = two_qubit_phase(lr, fx.spec);
    c.require(std::abs(std::abs(theta) - pi / 4.0) < 1e-9,
              "theta " + std::to_string(theta) + " not at +-pi/4 within 1e-9");
    auto noise = NoiseModel::off(4);
    noise.nbar = Eigen::VectorXd::Constant(4, 0.1);
    SolverOptions opt;
    opt.phonon_cutoff = 6;  // two nearest-detuned modes picked automatically
    const auto res = simulate_open_system(lr, fx.spec, noise, opt);
    c.require(res.fidelity > 0.9999,
              "zero-noise fidelity " + std::to_string(res.fidelity) + " <= 0.9999");
    char buf[120];
    std::snprintf(buf, sizeof buf, "zero-noise LR fidelity %.6f at cutoff 6, |theta|=pi/4%+0.1e",
                  res.fidelity, std::abs(theta) - pi / 4.0);
    c.finish(60.0, buf);
}

// 5. Addressing crosstalk infidelity.
static void criterion_crosstalk() {
    Criterion c(5);
    const double val = crosstalk_infidelity(two_pi * 1.04e6, two_pi * 2.7e3);
    c.require(std::abs(val - 2e-5) < 0.2 * 2e-5,
              "crosstalk " + std::to_string(val) + " outside 2e-5 +- 20%");
    char buf[80];
    std::snprintf(buf, sizeof buf, "pi-pulse crosstalk infidelity %.3e", val);
    c.finish(1.0, buf);
}

// 6. Intensity-fluctuation error.
static void criterion_intensity() {
    Criterion c(6);
    const double val = intensity_error(0.01);
    c.require(std::abs(val - 2.467e-4) < 1e-7,
              "intensity error " + std::to_string(val) + " outside 2.467e-4 +- 1e-7");
    char buf[80];
    std::snprintf(buf, sizeof buf, "(pi^2/4) sigma^2 at sigma=1%%: %.4e", val);
    c.finish(1.0, buf);
}

// 7. Micromotion Rabi reduction.
static void criterion_micromotion() {
    Criterion c(7);
    const double waist = 1.5e-6;
    double worst = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double a = 3.0 * waist * i / 100.0;
        const double quad = oracle::integrate_real(
                                [&](double th) {
                                    const double u = a * std::cos(th) / waist;
                                    return std::exp(-2.0 * u * u);
                                },
                                0.0, two_pi, 1e-14) /
                            two_pi;
        worst = std::max(worst, std::abs(rabi_reduction(a, waist) - quad));
    }
    c.require(worst < 1e-10, "Bessel-quadrature gap " + std::to_string(worst) + " >= 1e-10");
    const double factor = 1.0 / rabi_reduction(5e-6, waist);
    c.require(factor > 7.5 && factor < 9.0,
              "intensity factor " + std::to_string(factor) + " outside [7.5, 9.0]");
    char buf[120];
    std::snprintf(buf, sizeof buf, "closed form vs quadrature %.1e; 1/r at A=5 um: %.2f", worst,
                  factor);
    c.finish(1.0, buf);
}

// 8. Readout MLE round trip.
static void criterion_readout() {
    Criterion c(8);
    auto cm = build_confusion(4, {0.07, 0.01, {{0, 2}, {0, 3}, {1, 2}, {1, 3}}});
    std::mt19937_64 rng(77001);
    std::exponential_distribution<double> expo(1.0);
    Eigen::VectorXd p_true(16);
    for (int i = 0; i < 16; ++i) p_true(i) = expo(rng);
    p_true /= p_true.sum();
    std::mt19937_64 srng(4242);
    const Eigen::VectorXd f = detail::sample_multinomial(cm.matrix * p_true, 1000000, srng);
    const auto est = mle_recover(f, cm);
    const double l1 = (est.probabilities - p_true).lpNorm<1>();
    c.require(l1 < 0.01, "L1 error " + std::to_string(l1) + " >= 0.01");

    auto identity = build_confusion(4, {0.0, 0.0, {}});
    const auto direct = mle_recover(f, identity);
    const double echo = (direct.probabilities - f / f.sum()).cwiseAbs().maxCoeff();
    c.require(echo < 1e-12, "identity-matrix recovery deviates from f/T by " + std::to_string(echo));
    char buf[120];
    std::snprintf(buf, sizeof buf, "L1(p, p*) = %.4f at T=1e6; identity echo %.1e", l1, echo);
    c.finish(10.0, buf);
}

// 9. Gate-error slope fits.
static void criterion_slope_fit() {
    Criterion c(9);
    std::vector<int> n{1, 3, 5, 7, 9, 11, 13};
    std::vector<double> exact;
    for (int k : n) exact.push_back(1.0 - 0.014 * k);
    const auto clean = fit_gate_error(n, exact);
    c.require(std::abs(clean.error_per_gate - 0.014) < 1e-12 &&
                  std::abs(clean.intercept - 1.0) < 1e-12,
              "noiseless fit off by more than 1e-12");

    std::mt19937_64 rng(90210);
    std::normal_distribution<double> noise(0.0, 0.008);
    std::vector<double> noisy, sd;
    for (int k : n) {
        noisy.push_back(1.0 - 0.014 * k + noise(rng));
        sd.push_back(0.008);
    }
    const auto fit = fit_gate_error(n, noisy, sd);
    const double pull = std::abs(fit.error_per_gate - 0.014) / fit.error_stderr;
    c.require(pull < 3.0, "noisy slope pull " + std::to_string(pull) + " sigma >= 3");
    char buf[120];
    std::snprintf(buf, sizeof buf, "noiseless exact; noisy eps=%.4f +- %.4f (pull %.2f sigma)",
                  fit.error_per_gate, fit.error_stderr, pull);
    c.finish(0.0, buf);
}

// 10. Bell-fidelity arithmetic.
static void criterion_bell_arithmetic() {
    Criterion c(10);
    const double f = bell_fidelity(0.996, 0.98);
    c.require(std::abs(f - 0.988) < 1e-15, "bell_fidelity(0.996, 0.98) != 0.988");
    char buf[64];
    std::snprintf(buf, sizeof buf, "(0.996, 0.98) -> %.3f", f);
    c.finish(0.0, buf);
}

// 11. Large-crystal amplitude-modulated gates (stretch).
static void criterion_large_crystal() {
    Criterion c(11);
    const auto trap = TrapConfig::from_mhz(0.7, 3.0, 0.2);
    const auto crystal = solve_equilibrium(trap, 100, 7);
    const auto spec = transverse_modes(crystal);
    c.require(std::abs(angular_to_mhz(spec.frequencies(0)) - 3.0) < 1e-9,
              "100-ion COM mode is not at 3 MHz");
    // Pair: ion nearest the centroid plus its nearest neighbor.
    const auto pair = resolve_pair("center", crystal);
    const Eigen::VectorXd nbar = uniform_nbar(spec.n_modes(), 0.5);
    OptimizeOptions opt;
    opt.robustness_weight = 0.0;

    const double com = spec.frequencies(0);
    double best_alt = 1e300, best_alt_near = 1e300;
    const int points = 15;
    for (int i = 0; i < points; ++i) {
        const double mu = com + two_pi * (5e3 + 35e3 * i / (points - 1));
        const double infid = optimize_amplitudes(spec, pair, 300e-6, 240,
                                                 ModulationStyle::alternating, mu, nbar, opt)
                                 .coherent_infidelity;
        best_alt = std::min(best_alt, infid);
        if (std::abs(mu - (com + two_pi * 19.4e3)) < two_pi * 5e3)
            best_alt_near = std::min(best_alt_near, infid);
    }
    c.require(best_alt < 1e-3,
              "alternating scan minimum " + std::to_string(best_alt) + " >= 1e-3");
    if (best_alt_near >= 1e-4)
        c.note("stretch target 1e-4 near +19.4 kHz not met: " + std::to_string(best_alt_near));

    double best_sim = 1e300;
    for (int i = 0; i < 8; ++i) {
        const double mu = com + two_pi * (5e3 + 35e3 * i / 7.0);
        best_sim = std::min(best_sim,
                            optimize_amplitudes(spec, pair, 300e-6, 120,
                                                ModulationStyle::simultaneous, mu, nbar, opt)
                                .coherent_infidelity);
    }
    c.require(std::isfinite(best_sim), "simultaneous-style curve missing");
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "100-ion alternating scan min %.2e (near +19.4 kHz: %.2e); simultaneous min %.2e",
                  best_alt, best_alt_near, best_sim);
    c.finish(1800.0, buf);
}

// 12. Noise-budget plausibility for the LR gate.
static void criterion_budget(const Fixture& fx) {
    Criterion c(12);
    const auto lr = scale_to_phase(
        design_two_segment(fx.spec, {fx.lab.left, fx.lab.right}, TwoSegmentRule::lr), fx.spec);
    NoiseModel noise;
    noise.heating_rates = Eigen::VectorXd::Constant(4, 10.0);
    noise.heating_rates(0) = 120.0;
    noise.nbar = Eigen::VectorXd::Constant(4, 0.1);
    SolverOptions opt;
    opt.phonon_cutoff = 6;
    const auto budget = error_budget(lr, fx.spec, noise, opt);
    c.require(budget.total > 0.007 && budget.total < 0.028,
              "total " + std::to_string(budget.total) + " outside [0.7%, 2.8%]");
    c.require(budget.contributions.at("laser_dephasing") > budget.contributions.at("heating") &&
                  budget.contributions.at("motional_dephasing") >
                      budget.contributions.at("heating"),
              "dephasing does not dominate heating");
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "total %.4f (laser %.4f, motional %.4f, heating %.5f, intensity %.5f)",
                  budget.total, budget.contributions.at("laser_dephasing"),
                  budget.contributions.at("motional_dephasing"),
                  budget.contributions.at("heating"), budget.contributions.at("intensity"));
    c.finish(0.0, buf);
}

int main() {
    Fixture fx;  // solved once; criterion 1 re-times its own solve below
    {
        // Criterion 1 includes the solve + mode analysis inside its runtime.
        Criterion c(1);
        const auto crystal = solve_equilibrium(TrapConfig::from_mhz(0.803, 2.284, 0.553), 4, 1);
        const auto spec = transverse_modes(crystal);
        const double expected_mhz[4] = {2.284, 2.216, 2.167, 2.138};
        double worst_khz = 0.0;
        for (int k = 0; k < 4; ++k)
            worst_khz = std::max(worst_khz, std::abs(angular_to_mhz(spec.frequencies(k)) -
                                                     expected_mhz[k]) * 1e3);
        c.require(worst_khz < 5.0,
                  "mode deviation " + std::to_string(worst_khz) + " kHz >= 5 kHz");
        const double com_rel =
            std::abs(spec.frequencies(0) - crystal.trap.omega_y) / crystal.trap.omega_y;
        c.require(com_rel < 1e-9, "COM deviates from omega_y by " + std::to_string(com_rel));
        char buf[120];
        std::snprintf(buf, sizeof buf, "drumhead modes within %.3f kHz of the reference set",
                      worst_khz);
        c.finish(1.0, buf);
    }
    criterion_gate_timings(fx);
    criterion_closure(fx);
    criterion_ideal_gate(fx);
    criterion_crosstalk();
    criterion_intensity();
    criterion_micromotion();
    criterion_readout();
    criterion_slope_fit();
    criterion_bell_arithmetic();
    criterion_large_crystal();
    criterion_budget(fx);

    std::printf("%d of 12 criteria passed\n", 12 - failures);
    return failures == 0 ? 0 : 1;
}
