#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "ms2d/pulses.hpp"

// Amplitude-modulated gate sequences for large crystals: piecewise-constant
// Rabi rates minimizing the quadratic closure cost plus a quartic robustness
// term, under the constraint that the accumulated two-qubit phase is +-pi/4.
//
//   cost(O) = O^T M O + (O^T g O)^2,      O^T K O = +-pi/4
//
// M collects per-segment displacement integrals weighted by (2 nbar_k + 1)
// per mode plus the detuning-derivative displacement terms; K is the phase
// quadratic form; g is the detuning derivative of K (both derivative terms
// normalized by the gate time to stay commensurate).  The quadratic part is
// solved exactly by a generalized eigenvalue problem, then the full quartic
// is refined by projected descent on the constraint quadric.

namespace ms2d {

enum class ModulationStyle { simultaneous, alternating };

struct OptimizeOptions {
    double robustness_weight = 1.0;
    double min_segment_duration = 0.5e-6;    // s
    double simultaneous_gap_fraction = 0.5;  // fraction of the slot spent waiting
    int refine_iterations = 400;
    double derivative_step = two_pi * 1.0;   // rad/s step for d/dmu assembly
};

namespace detail {

// Time layout of one modulation slot.
struct SlotLayout {
    double drive = 0.0;  // drive window within the slot
    double slot = 0.0;   // slot pitch
};

inline SlotLayout slot_layout(ModulationStyle style, double total_time, int n_seg,
                              double gap_fraction) {
    SlotLayout l;
    l.slot = total_time / n_seg;
    l.drive = style == ModulationStyle::simultaneous ? l.slot * (1.0 - gap_fraction) : l.slot;
    return l;
}

// Unit-amplitude displacement coefficients u[a](s, k): displacement of mode k
// by pair ion a when segment s is driven at unit Rabi rate (zero when ion a
// is idle in that segment).
inline std::array<Eigen::MatrixXcd, 2> assemble_u(const ModeSpectrum& spec,
                                                  const std::array<int, 2>& pair,
                                                  ModulationStyle style, double mu, int n_seg,
                                                  const SlotLayout& lay) {
    const int n_modes = spec.n_modes();
    std::array<Eigen::MatrixXcd, 2> u{Eigen::MatrixXcd::Zero(n_seg, n_modes),
                                      Eigen::MatrixXcd::Zero(n_seg, n_modes)};
    for (int s = 0; s < n_seg; ++s) {
        const double t0 = s * lay.slot;
        for (int a = 0; a < 2; ++a) {
            if (style == ModulationStyle::alternating && (s % 2) != a) continue;
            for (int k = 0; k < n_modes; ++k) {
                const double delta = mu - spec.frequencies(k);
                const cplx c =
                    spec.lamb_dicke(k) * spec.mode_matrix(pair[a], k) / (2.0 * imag_unit);
                u[a](s, k) = c * std::exp(cplx(0.0, -delta * t0)) * loop_e(delta, lay.drive);
            }
        }
    }
    return u;
}

inline Eigen::MatrixXd displacement_cost(const std::array<Eigen::MatrixXcd, 2>& u,
                                         const Eigen::VectorXd& nbar) {
    const int n_seg = static_cast<int>(u[0].rows());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_seg, n_seg);
    for (int k = 0; k < u[0].cols(); ++k) {
        const double w = 2.0 * nbar(k) + 1.0;
        for (int a = 0; a < 2; ++a) {
            const Eigen::VectorXcd d = u[a].col(k);
            m.noalias() += w * (d.conjugate() * d.transpose()).real();
        }
    }
    return m;
}

inline Eigen::MatrixXd phase_form(const ModeSpectrum& spec, const std::array<int, 2>& pair,
                                  ModulationStyle style, double mu, const SlotLayout& lay,
                                  const std::array<Eigen::MatrixXcd, 2>& u) {
    const int n_seg = static_cast<int>(u[0].rows());
    Eigen::MatrixXd k_out = Eigen::MatrixXd::Zero(n_seg, n_seg);
    for (int k = 0; k < spec.n_modes(); ++k) {
        for (int s = 0; s < n_seg; ++s) {
            for (int sp = s + 1; sp < n_seg; ++sp) {
                const double v = -std::imag(u[0](s, k) * std::conj(u[1](sp, k)) +
                                            u[1](s, k) * std::conj(u[0](sp, k)));
                k_out(s, sp) += 0.5 * v;
                k_out(sp, s) += 0.5 * v;
            }
        }
        if (style == ModulationStyle::simultaneous) {
            const double delta = mu - spec.frequencies(k);
            const double gim = std::imag(loop_g(delta, lay.drive));
            const double re_c0c1 = spec.lamb_dicke(k) * spec.lamb_dicke(k) *
                                   spec.mode_matrix(pair[0], k) * spec.mode_matrix(pair[1], k) /
                                   4.0;
            for (int s = 0; s < n_seg; ++s) k_out(s, s) += -2.0 * re_c0c1 * gim;
        }
    }
    return k_out;
}

// Parameter reduction: time-reversal symmetric amplitude vector, and for the
// alternating style the same sequence applied to both ions (adjacent segments
// share one value).  Columns of P map free values onto segments.
inline Eigen::MatrixXd reduction_matrix(ModulationStyle style, int n_seg) {
    if (style == ModulationStyle::simultaneous) {
        const int nf = (n_seg + 1) / 2;
        Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n_seg, nf);
        for (int s = 0; s < n_seg; ++s) p(s, std::min(s, n_seg - 1 - s)) = 1.0;
        return p;
    }
    const int half = n_seg / 2, nf = n_seg / 4;
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n_seg, nf);
    for (int s = 0; s < n_seg; ++s) {
        const int pair_idx = s / 2;
        p(s, std::min(pair_idx, half - 1 - pair_idx)) = 1.0;
    }
    return p;
}

}  // namespace detail

struct OptimizeResult {
    PulseSequence sequence;
    double cost = 0.0;  // quadratic + quartic cost at the optimum
    double coherent_infidelity = 0.0;
    double theta = 0.0;
    Eigen::VectorXd amplitudes;  // signed per-segment Rabi rates, rad/s
};

inline OptimizeResult optimize_amplitudes(const ModeSpectrum& spec, std::array<int, 2> pair,
                                          double total_time, int n_seg, ModulationStyle style,
                                          double mu, const Eigen::VectorXd& nbar,
                                          const OptimizeOptions& opt = {}) {
    if (n_seg < 1) throw ValidationError("n_seg must be positive");
    if (style == ModulationStyle::alternating && n_seg % 4 != 0)
        throw ValidationError("alternating style needs n_seg divisible by 4");
    if (nbar.size() != spec.n_modes())
        throw ValidationError("nbar must have one entry per mode");
    const auto lay =
        detail::slot_layout(style, total_time, n_seg, opt.simultaneous_gap_fraction);
    if (lay.drive < opt.min_segment_duration)
        throw ValidationError("segment duration below the minimum drive time");

    const double dmu = opt.derivative_step;
    const auto u0 = detail::assemble_u(spec, pair, style, mu, n_seg, lay);
    const Eigen::MatrixXd m_disp = detail::displacement_cost(u0, nbar);
    const Eigen::MatrixXd k_form = detail::phase_form(spec, pair, style, mu, lay, u0);
    Eigen::MatrixXd m_rob = Eigen::MatrixXd::Zero(n_seg, n_seg);
    Eigen::MatrixXd k_deriv = Eigen::MatrixXd::Zero(n_seg, n_seg);
    if (opt.robustness_weight > 0.0) {
        const auto up = detail::assemble_u(spec, pair, style, mu + dmu, n_seg, lay);
        const auto um = detail::assemble_u(spec, pair, style, mu - dmu, n_seg, lay);
        const std::array<Eigen::MatrixXcd, 2> du{(up[0] - um[0]) / (2.0 * dmu),
                                                 (up[1] - um[1]) / (2.0 * dmu)};
        m_rob = detail::displacement_cost(du, nbar);
        k_deriv = (detail::phase_form(spec, pair, style, mu + dmu, lay, up) -
                   detail::phase_form(spec, pair, style, mu - dmu, lay, um)) /
                  (2.0 * dmu);
    }

    const Eigen::MatrixXd p = detail::reduction_matrix(style, n_seg);
    const double t2 = total_time * total_time;
    const double w = opt.robustness_weight;
    const Eigen::MatrixXd m_full = p.transpose() * (m_disp + (w / t2) * m_rob) * p;
    const Eigen::MatrixXd k_red = p.transpose() * k_form * p;
    const Eigen::MatrixXd g_red = std::sqrt(w) / total_time * (p.transpose() * k_deriv * p);
    const int nf = static_cast<int>(p.cols());

    // Quadratic seed: extremal generalized eigenvector of K v = lambda (M + eps) v,
    // which solves min O^T M O subject to the phase constraint exactly.
    const double eps = 1e-14 * m_full.trace() / nf +
                       1e-18 * k_red.cwiseAbs().maxCoeff() + 1e-300;
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(
        k_red, m_full + eps * Eigen::MatrixXd::Identity(nf, nf));
    if (ges.info() != Eigen::Success) throw OptimizationError("generalized eigensolver failed");
    int best = 0;
    for (int i = 1; i < nf; ++i)
        if (std::abs(ges.eigenvalues()(i)) > std::abs(ges.eigenvalues()(best))) best = i;
    Eigen::VectorXd v = ges.eigenvectors().col(best);
    double phase = v.dot(k_red * v);
    if (std::abs(phase) < 1e-280)
        throw OptimizationError("no achievable two-qubit phase for this configuration");
    const double target = phase > 0.0 ? pi / 4.0 : -pi / 4.0;
    v *= std::sqrt(std::abs(target) / std::abs(phase));

    auto cost_of = [&](const Eigen::VectorXd& x) {
        const double quart = x.dot(g_red * x);
        return x.dot(m_full * x) + quart * quart;
    };

    // Projected descent on the quadric O^T K O = target, rescaling back onto
    // the constraint after every step.
    double cost = cost_of(v);
    if (w > 0.0) {
        double step = 0.5;
        for (int it = 0; it < opt.refine_iterations; ++it) {
            const double quart = v.dot(g_red * v);
            Eigen::VectorXd grad = 2.0 * (m_full * v) + 4.0 * quart * (g_red * v);
            Eigen::VectorXd normal = 2.0 * (k_red * v);
            grad -= grad.dot(normal) / normal.squaredNorm() * normal;
            const double gn = grad.norm();
            if (gn * v.norm() < 1e-16 * std::max(cost, 1e-30)) break;
            bool improved = false;
            for (int ls = 0; ls < 50; ++ls) {
                Eigen::VectorXd cand = v - (step * v.norm() / gn) * grad;
                const double ph = cand.dot(k_red * cand);
                if (ph != 0.0 && (ph > 0.0) == (target > 0.0)) {
                    cand *= std::sqrt(std::abs(target) / std::abs(ph));
                    const double c = cost_of(cand);
                    if (c < cost * (1.0 - 1e-14)) {
                        v = cand;
                        cost = c;
                        improved = true;
                        step = std::min(step * 1.6, 4.0);
                        break;
                    }
                }
                step *= 0.5;
            }
            if (!improved) break;
        }
    }
    cost = cost_of(v);

    // Canonical global sign: largest component positive.
    int imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;

    const Eigen::VectorXd amplitudes = p * v;

    PulseSequence seq;
    seq.pair = pair;
    seq.detuning = mu;
    seq.style = style == ModulationStyle::simultaneous ? SequenceStyle::optimized_simultaneous
                                                       : SequenceStyle::optimized_alternating;
    seq.gap = lay.slot - lay.drive;
    for (int s = 0; s < n_seg; ++s) {
        const double rate = amplitudes(s);
        const double t0 = s * lay.slot;
        if (style == ModulationStyle::simultaneous) {
            for (int ion : pair)
                seq.segments.push_back(
                    {ion, t0, lay.drive, std::abs(rate), rate < 0.0 ? pi : 0.0, 0.0});
        } else {
            seq.segments.push_back(
                {pair[s % 2], t0, lay.drive, std::abs(rate), rate < 0.0 ? pi : 0.0, 0.0});
        }
    }
    seq.sort_segments();
    seq.total_time = seq.segments.back().end_time();

    // Enforce |Theta| = pi/4 on the built artifact to 1e-9 via one exact
    // rescale (guards the reduced-form bookkeeping).
    seq = scale_to_phase(seq, spec, pi / 4.0);

    OptimizeResult res;
    res.sequence = seq;
    res.cost = cost;
    res.theta = two_qubit_phase(seq, spec);
    res.coherent_infidelity = 1.0 - coherent_fidelity(seq, spec, nbar);
    res.amplitudes = amplitudes;
    return res;
}

}  // namespace ms2d
