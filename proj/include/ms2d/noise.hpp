#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ms2d/dynamics.hpp"

// Open-system gate simulation and the error sources it models: laser
// dephasing (collective sigma_z on the driven qubits at rate 1/tau_s),
// motional dephasing (per-mode number operator at rate 1/tau_m), heating
// (thermal raise/lower jump pair at the measured quanta/s), and shot-to-shot
// intensity fluctuation handled analytically as (pi^2/4) sigma^2.
//
// The propagator integrates d rho/dt = -i[H(t), rho] + sum_c D[L_c] rho with
// fixed-step RK4 in the interaction picture; the Hilbert space is 2 qubits
// times a truncated Fock space for a chosen subset of modes.

namespace ms2d {

struct NoiseModel {
    double laser_dephasing_time = 4e-3;    // tau_s, s
    double motional_dephasing_time = 3e-3;  // tau_m, s
    Eigen::VectorXd heating_rates;          // quanta/s per mode (spectrum order)
    double intensity_sigma = 0.01;          // relative shot-to-shot Rabi spread
    Eigen::VectorXd nbar;                   // initial thermal occupation per mode
    // Independent per-qubit dephasing by default; the collective variant
    // (common optical path for both addressed beams) sits behind this flag.
    bool collective_laser_dephasing = false;

    void validate(int n_modes) const {
        if (!(laser_dephasing_time > 0.0) || !(motional_dephasing_time > 0.0))
            throw ValidationError("dephasing times must be positive");
        if (intensity_sigma < 0.0) throw ValidationError("intensity sigma must be nonnegative");
        if (heating_rates.size() != n_modes || nbar.size() != n_modes)
            throw ValidationError("heating_rates and nbar need one entry per mode");
        if (heating_rates.minCoeff() < 0.0 || nbar.minCoeff() < 0.0)
            throw ValidationError("heating rates and nbar must be nonnegative");
    }

    static NoiseModel off(int n_modes) {
        NoiseModel n;
        n.laser_dephasing_time = 1e12;
        n.motional_dephasing_time = 1e12;
        n.intensity_sigma = 0.0;
        n.heating_rates = Eigen::VectorXd::Zero(n_modes);
        n.nbar = Eigen::VectorXd::Zero(n_modes);
        return n;
    }
};

struct SolverOptions {
    int phonon_cutoff = 6;                  // Fock states 0..cutoff per mode
    std::vector<int> active_modes;          // empty: pick the two nearest-detuned
    int max_hilbert_dim = 40000;
    double leak_warn = 1e-4;
    double leak_error = 1e-2;
    double step_safety = 50.0;              // steps per fastest period
    bool disable_laser_dephasing = false;
    bool disable_motional_dephasing = false;
    bool disable_heating = false;
};

struct OpenSystemResult {
    Eigen::Matrix4cd rho;        // phonon-traced two-qubit state, |q_i q_j> basis
    double fidelity = 0.0;       // overlap with exp(i theta_t XX)|00>
    double theta_target = 0.0;
    double max_leakage = 0.0;    // top-Fock population across active modes
    double trace_error = 0.0;
    std::vector<std::string> warnings;
};

inline std::vector<int> choose_active_modes(const ModeSpectrum& spec, double mu, int count = 2) {
    std::vector<int> order(spec.n_modes());
    for (int k = 0; k < spec.n_modes(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return std::abs(mu - spec.frequencies(a)) < std::abs(mu - spec.frequencies(b));
    });
    order.resize(std::min<std::size_t>(count, order.size()));
    std::sort(order.begin(), order.end());
    return order;
}

namespace detail {

using SparseC = Eigen::SparseMatrix<cplx>;

// Basis index: ((q0 * 2 + q1) * F + n_1) * F + n_2 ... for active modes in order.
struct HilbertLayout {
    int fock = 0;       // states per mode
    int n_modes = 0;
    int dim = 0;

    int mode_stride(int mode_slot) const {
        int s = 1;
        for (int m = n_modes - 1; m > mode_slot; --m) s *= fock;
        return s;
    }
};

// Sparse single-qubit-times-mode coupling operators sigma_axis (x|y) on qubit
// slot a times (a_k + a_k^dag) or i(a_k - a_k^dag) on mode slot m.
inline SparseC coupling_operator(const HilbertLayout& lay, int qubit_slot, bool sigma_y,
                                 int mode_slot, bool quadrature_p) {
    std::vector<Eigen::Triplet<cplx>> trip;
    const int qbit = qubit_slot == 0 ? 2 : 1;  // bit mask within the qubit index
    const int stride = lay.mode_stride(mode_slot);
    const int mode_dim = lay.dim / 4;
    for (int q = 0; q < 4; ++q) {
        const int qflip = q ^ qbit;
        // sigma_x: 1; sigma_y: +-i depending on direction (|1><0| gets +i).
        const bool to_one = (qflip & qbit) != 0;
        const cplx spin = sigma_y ? (to_one ? imag_unit : -imag_unit) : cplx(1.0);
        for (int rest = 0; rest < mode_dim; ++rest) {
            const int n = (rest / stride) % lay.fock;
            const int base_row = qflip * mode_dim;
            const int col = q * mode_dim + rest;
            if (n + 1 < lay.fock) {
                // a^dag |n> = sqrt(n+1)|n+1>
                const double amp = std::sqrt(n + 1.0);
                const cplx val = quadrature_p ? imag_unit * -1.0 * amp : cplx(amp);
                // p = i(a - a^dag): a^dag coefficient is -i
                trip.emplace_back(base_row + rest + stride, col, spin * val);
            }
            if (n > 0) {
                const double amp = std::sqrt(static_cast<double>(n));
                const cplx val = quadrature_p ? imag_unit * amp : cplx(amp);
                trip.emplace_back(base_row + rest - stride, col, spin * val);
            }
        }
    }
    SparseC op(lay.dim, lay.dim);
    op.setFromTriplets(trip.begin(), trip.end());
    return op;
}

inline SparseC lowering_operator(const HilbertLayout& lay, int mode_slot) {
    std::vector<Eigen::Triplet<cplx>> trip;
    const int stride = lay.mode_stride(mode_slot);
    const int mode_dim = lay.dim / 4;
    for (int q = 0; q < 4; ++q) {
        for (int rest = 0; rest < mode_dim; ++rest) {
            const int n = (rest / stride) % lay.fock;
            if (n > 0)
                trip.emplace_back(q * mode_dim + rest - stride, q * mode_dim + rest,
                                  cplx(std::sqrt(static_cast<double>(n))));
        }
    }
    SparseC op(lay.dim, lay.dim);
    op.setFromTriplets(trip.begin(), trip.end());
    return op;
}

}  // namespace detail

// Fixed-step RK4 Lindblad propagator over 2 qubits and a set of truncated
// modes.  Usable directly for small bespoke systems (tests build single-qubit
// dephasing checks from it); simulate_open_system drives it from a pulse
// sequence.
class LindbladPropagator {
  public:
    LindbladPropagator(detail::HilbertLayout layout) : lay_(layout) {
        diagonal_rates_ = Eigen::MatrixXcd::Zero(lay_.dim, lay_.dim);
    }

    const detail::HilbertLayout& layout() const { return lay_; }

    // D[L] for a diagonal jump operator folds into an elementwise rate mask.
    void add_diagonal_jump(const Eigen::VectorXd& diag) {
        for (int r = 0; r < lay_.dim; ++r)
            for (int c = 0; c < lay_.dim; ++c)
                diagonal_rates_(r, c) +=
                    diag(r) * diag(c) - 0.5 * (diag(r) * diag(r) + diag(c) * diag(c));
    }

    void add_jump(const detail::SparseC& op, double rate) {
        jumps_.push_back({op, detail::SparseC(op.adjoint()), rate});
        const detail::SparseC prod = (op.adjoint() * op).pruned();
        for (int k = 0; k < prod.outerSize(); ++k)
            for (detail::SparseC::InnerIterator it(prod, k); it; ++it)
                if (it.row() == it.col())
                    for (int c = 0; c < lay_.dim; ++c) {
                        diagonal_rates_(it.row(), c) -= 0.5 * rate * it.value().real();
                        diagonal_rates_(c, it.row()) -= 0.5 * rate * it.value().real();
                    }
    }

    // Hamiltonian terms: H(t) = sum_m coeff_m(t) * op_m with real coefficients.
    void add_hamiltonian_term(const detail::SparseC& op) { h_ops_.push_back(op); }

    template <typename CoeffFn>
    void evolve(Eigen::MatrixXcd& rho, double t0, double t1, double dt_max,
                CoeffFn&& coeffs) const {
        const double span = t1 - t0;
        if (span <= 0.0) return;
        const int steps = std::max(1, static_cast<int>(std::ceil(span / dt_max)));
        const double dt = span / steps;
        Eigen::MatrixXcd k1(lay_.dim, lay_.dim), k2(lay_.dim, lay_.dim),
            k3(lay_.dim, lay_.dim), k4(lay_.dim, lay_.dim), tmp(lay_.dim, lay_.dim);
        std::vector<double> c(h_ops_.size());
        for (int s = 0; s < steps; ++s) {
            const double t = t0 + s * dt;
            rhs(rho, t, coeffs, c, k1);
            tmp = rho + 0.5 * dt * k1;
            rhs(tmp, t + 0.5 * dt, coeffs, c, k2);
            tmp = rho + 0.5 * dt * k2;
            rhs(tmp, t + 0.5 * dt, coeffs, c, k3);
            tmp = rho + dt * k3;
            rhs(tmp, t + dt, coeffs, c, k4);
            rho += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }

  private:
    struct Jump {
        detail::SparseC op, op_dag;
        double rate;
    };

    template <typename CoeffFn>
    void rhs(const Eigen::MatrixXcd& rho, double t, CoeffFn&& coeffs, std::vector<double>& c,
             Eigen::MatrixXcd& out) const {
        coeffs(t, c);
        Eigen::MatrixXcd hrho = Eigen::MatrixXcd::Zero(lay_.dim, lay_.dim);
        for (std::size_t m = 0; m < h_ops_.size(); ++m)
            if (c[m] != 0.0) hrho.noalias() += c[m] * (h_ops_[m] * rho);
        // -i[H, rho] with rho Hermitian: -i(H rho - (H rho)^dag).
        out = -imag_unit * (hrho - hrho.adjoint());
        out += diagonal_rates_.cwiseProduct(rho);
        for (const auto& j : jumps_) {
            const Eigen::MatrixXcd lr = j.op * rho;
            out.noalias() += j.rate * (lr * j.op_dag);
        }
        out = 0.5 * (out + out.adjoint()).eval();
    }

    detail::HilbertLayout lay_;
    Eigen::MatrixXcd diagonal_rates_;
    std::vector<Jump> jumps_;
    std::vector<detail::SparseC> h_ops_;
};

inline double intensity_error(double sigma) {
    if (sigma < 0.0) throw ValidationError("sigma must be nonnegative");
    return pi * pi / 4.0 * sigma * sigma;
}

inline OpenSystemResult simulate_open_system(const PulseSequence& seq,
                                             const ModeSpectrum& spec, const NoiseModel& noise,
                                             const SolverOptions& opt = {}) {
    detail::check_sequence(seq, spec);
    noise.validate(spec.n_modes());
    if (opt.phonon_cutoff < 3) throw ValidationError("phonon cutoff must be at least 3");

    std::vector<int> active = opt.active_modes.empty()
                                  ? choose_active_modes(spec, seq.detuning)
                                  : opt.active_modes;
    for (int k : active)
        if (k < 0 || k >= spec.n_modes()) throw ValidationError("active mode out of range");

    detail::HilbertLayout lay;
    lay.fock = opt.phonon_cutoff + 1;
    lay.n_modes = static_cast<int>(active.size());
    lay.dim = 4;
    for (int m = 0; m < lay.n_modes; ++m) lay.dim *= lay.fock;
    if (lay.dim > opt.max_hilbert_dim)
        throw ValidationError("truncated Hilbert dimension " + std::to_string(lay.dim) +
                              " exceeds the configured bound");

    LindbladPropagator prop(lay);

    // Hamiltonian structure: per (pair slot, mode slot, {x,y} x {q,p}).
    struct TermMeta {
        int qubit_slot, mode_slot;
        bool sigma_y, quad_p;
    };
    std::vector<TermMeta> metas;
    for (int a = 0; a < 2; ++a)
        for (int m = 0; m < lay.n_modes; ++m)
            for (bool sy : {false, true})
                for (bool qp : {false, true}) {
                    prop.add_hamiltonian_term(detail::coupling_operator(lay, a, sy, m, qp));
                    metas.push_back({a, m, sy, qp});
                }

    // Dephasing channels are diagonal.
    if (!opt.disable_laser_dephasing) {
        const double amp = std::sqrt(0.5 / noise.laser_dephasing_time);
        auto qubit_z = [&](int slot) {
            Eigen::VectorXd d(lay.dim);
            const int mode_dim = lay.dim / 4;
            for (int q = 0; q < 4; ++q) {
                const int bit = slot == 0 ? (q >> 1) & 1 : q & 1;
                for (int rest = 0; rest < mode_dim; ++rest)
                    d(q * mode_dim + rest) = bit ? -1.0 : 1.0;
            }
            return d;
        };
        if (noise.collective_laser_dephasing) {
            prop.add_diagonal_jump(amp * (qubit_z(0) + qubit_z(1)));
        } else {
            prop.add_diagonal_jump(amp * qubit_z(0));
            prop.add_diagonal_jump(amp * qubit_z(1));
        }
    }
    if (!opt.disable_motional_dephasing) {
        const double amp = std::sqrt(2.0 / noise.motional_dephasing_time);
        for (int m = 0; m < lay.n_modes; ++m) {
            Eigen::VectorXd d(lay.dim);
            const int stride = lay.mode_stride(m);
            for (int i = 0; i < lay.dim; ++i)
                d(i) = amp * (((i % (lay.dim / 4)) / stride) % lay.fock);
            prop.add_diagonal_jump(d);
        }
    }
    if (!opt.disable_heating) {
        for (int m = 0; m < lay.n_modes; ++m) {
            const double rate = noise.heating_rates(active[m]);
            if (rate <= 0.0) continue;
            const auto a_op = detail::lowering_operator(lay, m);
            prop.add_jump(a_op, rate);
            prop.add_jump(detail::SparseC(a_op.adjoint()), rate);
        }
    }

    // Initial state: |00><00| x thermal modes.
    Eigen::VectorXd mode_diag = Eigen::VectorXd::Ones(lay.dim / 4);
    for (int m = 0; m < lay.n_modes; ++m) {
        const double nb = noise.nbar(active[m]);
        Eigen::VectorXd pn(lay.fock);
        for (int n = 0; n < lay.fock; ++n)
            pn(n) = std::pow(nb / (nb + 1.0), n) / (nb + 1.0);
        pn /= pn.sum();
        const int stride = lay.mode_stride(m);
        for (int i = 0; i < lay.dim / 4; ++i) mode_diag(i) *= pn((i / stride) % lay.fock);
    }
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(lay.dim, lay.dim);
    for (int i = 0; i < lay.dim / 4; ++i) rho(i, i) = mode_diag(i);  // q = 00 block first

    // Step size: resolve the fastest detuning, the strongest coupling, and
    // segment boundaries.
    double max_delta = 0.0, max_coupling = 0.0;
    for (int m = 0; m < lay.n_modes; ++m)
        max_delta = std::max(max_delta, std::abs(seq.detuning - spec.frequencies(active[m])));
    for (const auto& s : seq.segments)
        for (int m = 0; m < lay.n_modes; ++m)
            max_coupling =
                std::max(max_coupling, spec.lamb_dicke(active[m]) * s.rabi_rate * 0.5);
    const double dt_max = 1.0 / (opt.step_safety * std::max({max_delta, max_coupling, 1e3}));

    // Integrate piecewise between drive boundaries; within a piece the active
    // segments are fixed, so Runge-Kutta stages see a smooth H(t).
    std::vector<double> cuts{0.0, seq.total_time};
    for (const auto& s : seq.segments) {
        cuts.push_back(s.start_time);
        cuts.push_back(s.end_time());
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(),
                           [](double x, double y) { return y - x < 1e-16; }),
               cuts.end());
    struct OscTerm {
        std::size_t index;  // Hamiltonian term
        double envelope, delta, motional_phase;
        bool quad_p;
    };
    for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
        const double mid = 0.5 * (cuts[p] + cuts[p + 1]);
        std::vector<OscTerm> terms;
        for (const auto& s : seq.segments) {
            if (!(s.start_time <= mid && mid < s.end_time()) || s.rabi_rate == 0.0) continue;
            const int slot = s.target_ion == seq.pair[0] ? 0 : 1;
            for (std::size_t m = 0; m < metas.size(); ++m) {
                const auto& meta = metas[m];
                if (meta.qubit_slot != slot) continue;
                const double spin =
                    meta.sigma_y ? std::sin(s.spin_phase) : std::cos(s.spin_phase);
                if (spin == 0.0) continue;
                const int k = active[meta.mode_slot];
                terms.push_back({m,
                                 0.5 * spec.lamb_dicke(k) * spec.mode_matrix(s.target_ion, k) *
                                     s.rabi_rate * spin,
                                 seq.detuning - spec.frequencies(k), s.motional_phase,
                                 meta.quad_p});
            }
        }
        auto coeffs = [&terms](double t, std::vector<double>& c) {
            std::fill(c.begin(), c.end(), 0.0);
            for (const auto& term : terms) {
                const double phase = term.delta * t + term.motional_phase;
                c[term.index] +=
                    term.envelope * (term.quad_p ? std::sin(phase) : std::cos(phase));
            }
        };
        prop.evolve(rho, cuts[p], cuts[p + 1], dt_max, coeffs);
    }

    OpenSystemResult res;
    res.trace_error = std::abs(rho.trace().real() - 1.0) + std::abs(rho.trace().imag());

    // Truncation leakage: population of the top Fock layer of any mode.
    const int mode_dim = lay.dim / 4;
    for (int m = 0; m < lay.n_modes; ++m) {
        const int stride = lay.mode_stride(m);
        double pop = 0.0;
        for (int q = 0; q < 4; ++q)
            for (int rest = 0; rest < mode_dim; ++rest)
                if ((rest / stride) % lay.fock == lay.fock - 1)
                    pop += rho(q * mode_dim + rest, q * mode_dim + rest).real();
        res.max_leakage = std::max(res.max_leakage, pop);
    }
    if (res.max_leakage > opt.leak_error)
        throw TruncationError("top Fock-state population " + std::to_string(res.max_leakage) +
                              " exceeds the truncation error threshold");
    if (res.max_leakage > opt.leak_warn)
        res.warnings.push_back("truncation leakage " + std::to_string(res.max_leakage));

    // Phonon trace.
    res.rho.setZero();
    for (int qr = 0; qr < 4; ++qr)
        for (int qc = 0; qc < 4; ++qc)
            for (int rest = 0; rest < mode_dim; ++rest)
                res.rho(qr, qc) += rho(qr * mode_dim + rest, qc * mode_dim + rest);

    // Fold the modes outside the truncated simulation into the two-qubit
    // state: their phase contributions and (thermal-averaged) residual
    // displacements act diagonally in the sigma_x branch basis.  Exact for
    // the coherent dynamics at zero spin phase; with qubit dephasing on, the
    // non-commuting interplay with the folded drive is neglected.
    const auto w = detail::walk_summary(seq, spec);
    const int branches[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    Eigen::Matrix4cd kernel;
    for (int si = 0; si < 4; ++si) {
        for (int sj = 0; sj < 4; ++sj) {
            const int p = branches[si][0] * branches[si][1];
            const int pp = branches[sj][0] * branches[sj][1];
            cplx factor(1.0, 0.0);
            for (int k = 0; k < spec.n_modes(); ++k) {
                if (std::find(active.begin(), active.end(), k) != active.end()) continue;
                factor *= std::exp(imag_unit * w.theta_modes(k) * double(p - pp));
                const cplx as =
                    double(branches[si][0]) * w.alpha(0, k) +
                    double(branches[si][1]) * w.alpha(1, k);
                const cplx asp =
                    double(branches[sj][0]) * w.alpha(0, k) +
                    double(branches[sj][1]) * w.alpha(1, k);
                factor *= std::exp(imag_unit * std::imag(as * std::conj(asp)) -
                                   0.5 * (2.0 * noise.nbar(k) + 1.0) * std::norm(as - asp));
            }
            kernel(si, sj) = factor;
        }
    }
    Eigen::Matrix4cd had;  // (H x H) maps the computational to the branch basis
    had << 1, 1, 1, 1, 1, -1, 1, -1, 1, 1, -1, -1, 1, -1, -1, 1;
    had *= 0.5;
    res.rho = had * kernel.cwiseProduct(had * res.rho * had) * had;

    const double theta = w.theta();
    res.theta_target = theta < 0.0 ? -pi / 4.0 : pi / 4.0;
    const Eigen::Vector4cd target = ideal_bell_state(res.theta_target);
    res.fidelity = std::real((target.adjoint() * res.rho * target)(0, 0));
    return res;
}

struct ErrorBudget {
    std::map<std::string, double> contributions;
    double total = 0.0;
};

// One solver run per channel in isolation plus one combined run; intensity
// enters analytically.  Heating of strongly heated modes outside the active
// set is picked up by extra single-mode runs and added on (weak-coupling
// additivity).
inline ErrorBudget error_budget(const PulseSequence& seq, const ModeSpectrum& spec,
                                const NoiseModel& noise, const SolverOptions& opt = {}) {
    SolverOptions base = opt;
    if (base.active_modes.empty()) base.active_modes = choose_active_modes(spec, seq.detuning);

    auto run = [&](bool laser, bool motional, bool heating) {
        SolverOptions o = base;
        o.disable_laser_dephasing = !laser;
        o.disable_motional_dephasing = !motional;
        o.disable_heating = !heating;
        return simulate_open_system(seq, spec, noise, o);
    };
    const double f_ideal = run(false, false, false).fidelity;

    // Far-mode heating add-ons.
    double far_heating = 0.0;
    for (int k = 0; k < spec.n_modes(); ++k) {
        if (std::find(base.active_modes.begin(), base.active_modes.end(), k) !=
            base.active_modes.end())
            continue;
        if (noise.heating_rates(k) <= 0.0) continue;
        SolverOptions o = base;
        o.active_modes = {k};
        o.disable_laser_dephasing = true;
        o.disable_motional_dephasing = true;
        o.disable_heating = false;
        const double f0 = [&] {
            SolverOptions oo = o;
            oo.disable_heating = true;
            return simulate_open_system(seq, spec, noise, oo).fidelity;
        }();
        far_heating += std::max(0.0, f0 - simulate_open_system(seq, spec, noise, o).fidelity);
    }

    ErrorBudget budget;
    budget.contributions["laser_dephasing"] =
        std::max(0.0, f_ideal - run(true, false, false).fidelity);
    budget.contributions["motional_dephasing"] =
        std::max(0.0, f_ideal - run(false, true, false).fidelity);
    budget.contributions["heating"] =
        std::max(0.0, f_ideal - run(false, false, true).fidelity) + far_heating;
    budget.contributions["intensity"] = intensity_error(noise.intensity_sigma);
    budget.total = std::max(0.0, f_ideal - run(true, true, true).fidelity) + far_heating +
                   budget.contributions["intensity"];
    return budget;
}

// Mean phonon number from the red/blue sideband excitation ratio.
inline double nbar_from_sidebands(double p_red, double p_blue) {
    if (p_red < 0.0 || p_blue <= 0.0 || p_red > p_blue || p_blue > 1.0)
        throw ValidationError("need 0 <= p_red <= p_blue <= 1 with p_blue > 0");
    const double r = p_red / p_blue;
    if (r >= 1.0 - 1e-9)
        throw ValidationError("sideband ratio at or above 1: not a thermal state");
    return r / (1.0 - r);
}

enum class DecayKind { exponential, gaussian };

struct DecayFit {
    double tau = 0.0;
    double tau_stderr = 0.0;
    double amplitude = 0.0;
};

// Least-squares fit of contrast * exp(-t/tau) or contrast * exp(-(t/tau)^2).
inline DecayFit fit_decay(const Eigen::VectorXd& times, const Eigen::VectorXd& values,
                          DecayKind kind) {
    const int n = static_cast<int>(times.size());
    if (n < 4) throw FitError("need at least 4 points");
    if (values.size() != n) throw ValidationError("mismatched input lengths");
    for (int i = 0; i < n; ++i)
        if (values(i) < 0.0 || values(i) > 1.0)
            throw ValidationError("values must lie in [0, 1]");

    // Log-linear seed: log v = log c - (t/tau)^pow.
    const double pow_t = kind == DecayKind::exponential ? 1.0 : 2.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int used = 0;
    for (int i = 0; i < n; ++i) {
        if (values(i) <= 1e-12) continue;
        const double x = std::pow(times(i), pow_t);
        const double y = std::log(values(i));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++used;
    }
    if (used < 3) throw FitError("not enough positive values to fit a decay");
    const double denom = used * sxx - sx * sx;
    if (denom == 0.0) throw FitError("degenerate time grid");
    const double slope = (used * sxy - sx * sy) / denom;
    // Require a decay over the sampled window well above numerical noise.
    if (slope * std::pow(times.maxCoeff(), pow_t) > -1e-9)
        throw FitError("data do not decay");
    double tau = std::pow(-1.0 / slope, 1.0 / pow_t);
    double amp = std::exp((sy - slope * sx) / used);

    // Gauss-Newton refinement on the nonlinear residuals.
    for (int it = 0; it < 200; ++it) {
        Eigen::MatrixXd jac(n, 2);
        Eigen::VectorXd resid(n);
        for (int i = 0; i < n; ++i) {
            const double u = std::pow(times(i) / tau, pow_t);
            const double model = amp * std::exp(-u);
            resid(i) = values(i) - model;
            jac(i, 0) = std::exp(-u);                        // d/d amp
            jac(i, 1) = model * pow_t * u / tau;             // d/d tau
        }
        const Eigen::Vector2d step =
            (jac.transpose() * jac).ldlt().solve(jac.transpose() * resid);
        amp += step(0);
        tau += step(1);
        if (!(tau > 0.0)) throw FitError("decay fit diverged");
        if (step.cwiseAbs().maxCoeff() < 1e-14 * std::max(1.0, tau)) break;
    }

    // Standard error from the Jacobian at the optimum.
    Eigen::MatrixXd jac(n, 2);
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = std::pow(times(i) / tau, pow_t);
        const double model = amp * std::exp(-u);
        const double r = values(i) - model;
        ss += r * r;
        jac(i, 0) = std::exp(-u);
        jac(i, 1) = model * pow_t * u / tau;
    }
    const double dof = std::max(1, n - 2);
    const Eigen::Matrix2d cov = (jac.transpose() * jac).inverse() * (ss / dof);

    DecayFit fit;
    fit.tau = tau;
    fit.amplitude = amp;
    fit.tau_stderr = std::sqrt(std::max(0.0, cov(1, 1)));
    return fit;
}

}  // namespace ms2d
