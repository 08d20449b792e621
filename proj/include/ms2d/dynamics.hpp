#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include "ms2d/crystal.hpp"
#include "ms2d/sequence.hpp"

// Spin-dependent displacements, phase-space trajectories and two-qubit phases
// for piecewise-constant pulse sequences, evaluated in closed form in the
// interaction picture of each mode (gaps are no-ops).
//
// Displacements are dimensionless phase-space coordinates:
//   alpha_jk = (eta_k b_jk / 2i) Int Omega_j exp(-i[(mu - w_k) t + phi_m^j]) dt
// and the accumulated two-qubit phase is
//   Theta_ij = -sum_k Im[ Int alpha_ik d(alpha_jk*) + Int alpha_jk d(alpha_ik*) ].

namespace ms2d {

using cplx = std::complex<double>;
inline constexpr cplx imag_unit{0.0, 1.0};

namespace detail {

// E(delta, tau) = Int_0^tau exp(-i delta u) du, series branch near delta = 0.
inline cplx loop_e(double delta, double tau) {
    const double x = delta * tau;
    if (std::abs(x) < 1e-5) {
        const cplx ix(0.0, x);
        return tau * (1.0 + ix / 2.0 - x * x / 6.0 - ix * x * x / 24.0 + x * x * x * x / 120.0);
    }
    return (1.0 - std::exp(cplx(0.0, -x))) / cplx(0.0, delta);
}

// G(delta, tau) = Int_0^tau [Int_0^u exp(-i delta s) ds] exp(+i delta u) du.
// Independent of the interval start time.
inline cplx loop_g(double delta, double tau) {
    const double x = delta * tau;
    if (std::abs(x) < 1e-5) {
        const cplx ix(0.0, x);
        return tau * tau *
               (0.5 + ix / 6.0 - x * x / 24.0 - ix * x * x / 120.0 + x * x * x * x / 720.0);
    }
    const cplx idelta(0.0, delta);
    return ((std::exp(cplx(0.0, x)) - 1.0) / idelta - tau) / idelta;
}

}  // namespace detail

// Closed-form displacement of a single segment on one mode; eta_b is the
// product eta_k * b_jk for the segment's target ion.
inline cplx segment_displacement(const Segment& seg, double mode_freq, double mu, double eta_b) {
    const double delta = mu - mode_freq;
    const cplx prefactor =
        eta_b * seg.rabi_rate / (2.0 * imag_unit) * std::exp(-imag_unit * seg.motional_phase);
    return prefactor * std::exp(cplx(0.0, -delta * seg.start_time)) *
           detail::loop_e(delta, seg.duration);
}

namespace detail {

// Elementary drive interval: both pair ions constant (possibly off).
struct DriveInterval {
    double start, duration;
    double rabi[2] = {0.0, 0.0};
    double phase[2] = {0.0, 0.0};
    int segment_index = -1;  // index into the sorted segment list, -1 for gaps
};

inline std::vector<DriveInterval> split_intervals(const PulseSequence& seq) {
    std::vector<double> cuts;
    for (const auto& s : seq.segments) {
        cuts.push_back(s.start_time);
        cuts.push_back(s.end_time());
    }
    cuts.push_back(0.0);
    cuts.push_back(seq.total_time);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(),
                           [&](double a, double b) { return b - a < 1e-16; }),
               cuts.end());
    std::vector<DriveInterval> out;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        DriveInterval iv{cuts[i], cuts[i + 1] - cuts[i]};
        if (iv.duration <= 0.0) continue;
        const double mid = iv.start + 0.5 * iv.duration;
        for (std::size_t si = 0; si < seq.segments.size(); ++si) {
            const auto& s = seq.segments[si];
            if (s.start_time <= mid && mid < s.end_time()) {
                const int slot = s.target_ion == seq.pair[0] ? 0 : 1;
                iv.rabi[slot] = s.rabi_rate;
                iv.phase[slot] = s.motional_phase;
                if (iv.segment_index < 0) iv.segment_index = static_cast<int>(si);
            }
        }
        out.push_back(iv);
    }
    return out;
}

// Walk the sequence once, accumulating per-pair-ion displacements and the
// per-mode contributions to the two-qubit phase; optionally invoke a sampler
// per interval.
template <typename Sampler>
inline void walk(const PulseSequence& seq, const ModeSpectrum& spec,
                 Eigen::MatrixXcd& alpha,        // 2 x K accumulated displacements
                 Eigen::VectorXd& theta_modes,   // per-mode phase contributions
                 Sampler&& sampler) {
    const int n_modes = spec.n_modes();
    const double mu = seq.detuning;
    alpha = Eigen::MatrixXcd::Zero(2, n_modes);
    theta_modes = Eigen::VectorXd::Zero(n_modes);
    const int ion0 = seq.pair[0], ion1 = seq.pair[1];
    for (const auto& iv : split_intervals(seq)) {
        sampler(iv, alpha);
        for (int k = 0; k < n_modes; ++k) {
            const double delta = mu - spec.frequencies(k);
            const cplx c0 = iv.rabi[0] == 0.0
                                ? cplx(0.0)
                                : spec.lamb_dicke(k) * spec.mode_matrix(ion0, k) * iv.rabi[0] /
                                      (2.0 * imag_unit) * std::exp(-imag_unit * iv.phase[0]);
            const cplx c1 = iv.rabi[1] == 0.0
                                ? cplx(0.0)
                                : spec.lamb_dicke(k) * spec.mode_matrix(ion1, k) * iv.rabi[1] /
                                      (2.0 * imag_unit) * std::exp(-imag_unit * iv.phase[1]);
            if (c0 == cplx(0.0) && c1 == cplx(0.0)) continue;
            const cplx f =
                std::exp(cplx(0.0, -delta * iv.start)) * loop_e(delta, iv.duration);
            theta_modes(k) -=
                std::imag((alpha(0, k) * std::conj(c1) + alpha(1, k) * std::conj(c0)) *
                          std::conj(f));
            theta_modes(k) -=
                2.0 * std::real(c0 * std::conj(c1)) * std::imag(loop_g(delta, iv.duration));
            alpha(0, k) += c0 * f;
            alpha(1, k) += c1 * f;
        }
    }
}

struct WalkResult {
    Eigen::MatrixXcd alpha;       // 2 x K
    Eigen::VectorXd theta_modes;  // per-mode phase contributions
    double theta() const { return theta_modes.sum(); }
};

inline WalkResult walk_summary(const PulseSequence& seq, const ModeSpectrum& spec) {
    WalkResult w;
    walk(seq, spec, w.alpha, w.theta_modes, [](const auto&, const auto&) {});
    return w;
}

inline void check_sequence(const PulseSequence& seq, const ModeSpectrum& spec) {
    seq.validate();
    const int n_ions = static_cast<int>(spec.mode_matrix.rows());
    if (seq.pair[0] < 0 || seq.pair[0] >= n_ions || seq.pair[1] < 0 || seq.pair[1] >= n_ions)
        throw ValidationError("sequence pair indices exceed the spectrum size");
}

}  // namespace detail

// Final alpha_jk(T) for all ions (rows) and modes (columns); rows of
// unaddressed ions are zero.
inline Eigen::MatrixXcd final_displacements(const PulseSequence& seq, const ModeSpectrum& spec) {
    detail::check_sequence(seq, spec);
    const auto w = detail::walk_summary(seq, spec);
    Eigen::MatrixXcd full =
        Eigen::MatrixXcd::Zero(spec.mode_matrix.rows(), spec.n_modes());
    full.row(seq.pair[0]) = w.alpha.row(0);
    full.row(seq.pair[1]) = w.alpha.row(1);
    return full;
}

// Accumulated two-qubit phase Theta between the pair ions.  Sequences that
// drive only one of the two ions accumulate no cross terms and return zero.
inline double two_qubit_phase(const PulseSequence& seq, const ModeSpectrum& spec) {
    detail::check_sequence(seq, spec);
    return detail::walk_summary(seq, spec).theta();
}

struct GateTrajectory {
    Eigen::VectorXd times;                    // sample grid, seconds
    std::vector<int> segment_index;           // active segment per sample, -1 in gaps
    std::vector<Eigen::MatrixXcd> alpha_ion;  // per pair ion: K x S displacements
    Eigen::MatrixXcd alpha_sum;               // K x S, |++> branch (sum over pair ions)
    Eigen::MatrixXcd final_displacements;     // N x K
    double two_qubit_phase = 0.0;
};

inline GateTrajectory trajectory(const PulseSequence& seq, const ModeSpectrum& spec,
                                 int samples_per_segment = 64) {
    detail::check_sequence(seq, spec);
    if (samples_per_segment < 1) throw ValidationError("samples_per_segment must be >= 1");
    const int n_modes = spec.n_modes();
    const int ions[2] = {seq.pair[0], seq.pair[1]};

    std::vector<double> times;
    std::vector<int> seg_idx;
    std::vector<Eigen::Vector2cd> samples_flat;  // per (sample, mode): pair displacements

    Eigen::MatrixXcd alpha;
    Eigen::VectorXd theta_modes;
    std::vector<std::vector<cplx>> traj(2);  // [ion][sample*K + k]
    auto sampler = [&](const detail::DriveInterval& iv, const Eigen::MatrixXcd& acc) {
        const bool driven = iv.rabi[0] != 0.0 || iv.rabi[1] != 0.0;
        const int n_samp = driven ? samples_per_segment : 1;
        for (int s = 1; s <= n_samp; ++s) {
            const double u = iv.duration * s / n_samp;
            times.push_back(iv.start + u);
            seg_idx.push_back(iv.segment_index);
            for (int k = 0; k < n_modes; ++k) {
                const double delta = seq.detuning - spec.frequencies(k);
                const cplx f = std::exp(cplx(0.0, -delta * iv.start)) * detail::loop_e(delta, u);
                for (int a = 0; a < 2; ++a) {
                    cplx c(0.0);
                    if (iv.rabi[a] != 0.0)
                        c = spec.lamb_dicke(k) * spec.mode_matrix(ions[a], k) * iv.rabi[a] /
                            (2.0 * imag_unit) * std::exp(-imag_unit * iv.phase[a]);
                    traj[a].push_back(acc(a, k) + c * f);
                }
            }
        }
    };

    // Leading sample at t = 0.
    times.push_back(0.0);
    seg_idx.push_back(-1);
    for (int k = 0; k < n_modes; ++k)
        for (int a = 0; a < 2; ++a) traj[a].push_back(cplx(0.0));

    detail::walk(seq, spec, alpha, theta_modes, sampler);

    GateTrajectory out;
    const int n_samples = static_cast<int>(times.size());
    out.times = Eigen::Map<Eigen::VectorXd>(times.data(), n_samples);
    out.segment_index = std::move(seg_idx);
    out.alpha_ion.assign(2, Eigen::MatrixXcd::Zero(n_modes, n_samples));
    for (int s = 0; s < n_samples; ++s)
        for (int k = 0; k < n_modes; ++k)
            for (int a = 0; a < 2; ++a) out.alpha_ion[a](k, s) = traj[a][s * n_modes + k];
    out.alpha_sum = out.alpha_ion[0] + out.alpha_ion[1];
    out.final_displacements = Eigen::MatrixXcd::Zero(spec.mode_matrix.rows(), n_modes);
    out.final_displacements.row(seq.pair[0]) = alpha.row(0);
    out.final_displacements.row(seq.pair[1]) = alpha.row(1);
    out.two_qubit_phase = theta_modes.sum();
    return out;
}

inline Eigen::VectorXd uniform_nbar(int n_modes, double value) {
    return Eigen::VectorXd::Constant(n_modes, value);
}

// Bell-state fidelity of the gate output for the |00> input and thermal
// motion, from the residual displacements and the accumulated phase.  Exact
// coherent/thermal average over the four sigma_x branches:
//   F = (1/16) sum_{s,s'} exp(i(Theta - Theta_t)(P_s - P_s'))
//       prod_k exp(i Im(a_k^s conj(a_k^s')) - |a_k^s - a_k^s'|^2 (2 nbar_k + 1)/2)
// with a_k^s = s_i alpha_ik + s_j alpha_jk.  Equals 1 when all alpha(T) = 0
// and Theta matches the target.
inline double coherent_fidelity(const PulseSequence& seq, const ModeSpectrum& spec,
                                const Eigen::VectorXd& nbar,
                                std::optional<double> target = std::nullopt) {
    detail::check_sequence(seq, spec);
    if (nbar.size() != spec.n_modes())
        throw ValidationError("nbar must have one entry per mode");
    const auto w = detail::walk_summary(seq, spec);
    const Eigen::MatrixXcd& alpha = w.alpha;
    const double theta = w.theta();
    const double theta_target = target.value_or(theta < 0.0 ? -pi / 4.0 : pi / 4.0);

    const int branches[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    cplx fsum(0.0);
    for (const auto& s : branches) {
        for (const auto& sp : branches) {
            const int p = s[0] * s[1], pp = sp[0] * sp[1];
            cplx term = std::exp(imag_unit * (theta - theta_target) * double(p - pp));
            for (int k = 0; k < spec.n_modes(); ++k) {
                const cplx as = double(s[0]) * alpha(0, k) + double(s[1]) * alpha(1, k);
                const cplx asp = double(sp[0]) * alpha(0, k) + double(sp[1]) * alpha(1, k);
                const double w = 2.0 * nbar(k) + 1.0;
                term *= std::exp(imag_unit * std::imag(as * std::conj(asp)) -
                                 0.5 * w * std::norm(as - asp));
            }
            fsum += term;
        }
    }
    return fsum.real() / 16.0;
}

struct BellObservables {
    double population_00_11 = 0.0;
    double parity_contrast = 0.0;
    double fidelity = 0.0;
};

// F = population/2 + contrast/2.
inline double bell_fidelity(double population_00_11, double parity_contrast) {
    if (population_00_11 < 0.0 || population_00_11 > 1.0 || parity_contrast < 0.0 ||
        parity_contrast > 1.0)
        throw ValidationError("bell_fidelity inputs must lie in [0, 1]");
    return 0.5 * population_00_11 + 0.5 * parity_contrast;
}

inline BellObservables make_bell_observables(double population, double contrast) {
    return {population, contrast, bell_fidelity(population, contrast)};
}

// |psi> = exp(i theta XX)|00> = cos(theta)|00> + i sin(theta)|11>.
inline Eigen::Vector4cd ideal_bell_state(double theta) {
    Eigen::Vector4cd v = Eigen::Vector4cd::Zero();
    v(0) = std::cos(theta);
    v(3) = imag_unit * std::sin(theta);
    return v;
}

// Parity <ZZ> after a pi/2 analysis rotation about the axis at angle phi on
// both qubits.  An ideal Bell state oscillates at 2 phi with unit contrast.
inline Eigen::VectorXd parity_curve(const Eigen::Matrix4cd& rho,
                                    const Eigen::VectorXd& analysis_phases) {
    Eigen::VectorXd out(analysis_phases.size());
    const Eigen::Matrix2cd id2 = Eigen::Matrix2cd::Identity();
    Eigen::Matrix2cd sx, sy;
    sx << 0, 1, 1, 0;
    sy << 0, -imag_unit, imag_unit, 0;
    Eigen::Matrix4cd zz = Eigen::Matrix4cd::Zero();
    zz.diagonal() << 1, -1, -1, 1;
    for (int i = 0; i < analysis_phases.size(); ++i) {
        const double phi = analysis_phases(i);
        const Eigen::Matrix2cd axis = std::cos(phi) * sx + std::sin(phi) * sy;
        const Eigen::Matrix2cd r =
            std::cos(pi / 4.0) * id2 - imag_unit * std::sin(pi / 4.0) * axis;
        Eigen::Matrix4cd r2 = Eigen::Matrix4cd::Zero();
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int c = 0; c < 2; ++c)
                    for (int d = 0; d < 2; ++d)
                        r2(a * 2 + c, b * 2 + d) = r(a, b) * r(c, d);
        out(i) = std::real((r2 * rho * r2.adjoint() * zz).trace());
    }
    return out;
}

// Amplitude of the 2*phi Fourier component of a parity curve sampled on a
// uniform grid covering [0, pi); equals 2|rho_{00,11}| for gate-type states.
inline double parity_contrast(const Eigen::VectorXd& phases, const Eigen::VectorXd& parity) {
    cplx acc(0.0);
    for (int i = 0; i < phases.size(); ++i)
        acc += parity(i) * std::exp(cplx(0.0, -2.0 * phases(i)));
    return 2.0 * std::abs(acc) / static_cast<double>(phases.size());
}

}  // namespace ms2d
