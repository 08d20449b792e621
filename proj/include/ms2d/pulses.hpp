#pragma once

#include <cmath>
#include <map>
#include <string>

#include "ms2d/dynamics.hpp"

// Gate pulse-sequence construction: the two-segment phase-modulated gates for
// pairs sharing a row or column of the crystal, and the eight-segment
// alternating sequence for diagonal pairs that addresses one ion at a time.
// Design operations return unit-amplitude sequences; scale_to_phase sets the
// accumulated two-qubit phase to +-pi/4 afterwards.

namespace ms2d {

enum class TwoSegmentRule { lr, ud };

namespace detail {

inline void require_mode_count(const ModeSpectrum& spec, int needed) {
    if (spec.n_modes() < needed)
        throw DesignError("gate rule needs at least " + std::to_string(needed) +
                          " transverse modes");
}

inline void require_absent(const ModeSpectrum& spec, int ion, int mode, double tol = 1e-6) {
    const double coeff = spec.mode_matrix(ion, mode);
    if (std::abs(coeff) >= tol)
        throw DesignError("ion " + std::to_string(ion) + " participates in mode " +
                          std::to_string(mode + 1) + " with coefficient " +
                          std::to_string(coeff) + "; the rule requires < 1e-6");
}

}  // namespace detail

// Two equal simultaneous-drive segments.  The detuning and segment time close
// the two working modes after every segment; the motional-phase step
// dphi = pi - (mu - w_1) dT between the segments closes the COM mode.
//   lr: mu = (w2 + w3)/2, t = 4 pi/(w2 - w3), mode 4 must not couple the pair.
//   ud: mu = 2 w4 - w3,   t = 2 pi/(w3 - w4), mode 2 must not couple the pair.
inline PulseSequence design_two_segment(const ModeSpectrum& spec, std::array<int, 2> pair,
                                        TwoSegmentRule rule) {
    detail::require_mode_count(spec, rule == TwoSegmentRule::lr ? 3 : 4);
    const double w1 = spec.frequencies(0);
    double mu = 0.0, t_seg = 0.0;
    if (rule == TwoSegmentRule::lr) {
        const double w2 = spec.frequencies(1), w3 = spec.frequencies(2);
        mu = 0.5 * (w2 + w3);
        t_seg = 4.0 * pi / (w2 - w3);
        if (spec.n_modes() > 3) {
            detail::require_absent(spec, pair[0], 3);
            detail::require_absent(spec, pair[1], 3);
        }
    } else {
        const double w3 = spec.frequencies(2), w4 = spec.frequencies(3);
        mu = 2.0 * w4 - w3;
        t_seg = 2.0 * pi / (w3 - w4);
        detail::require_absent(spec, pair[0], 1);
        detail::require_absent(spec, pair[1], 1);
    }
    const double dphi = pi - (mu - w1) * t_seg;

    PulseSequence seq;
    seq.pair = pair;
    seq.detuning = mu;
    seq.gap = 0.0;
    seq.style = SequenceStyle::two_segment;
    for (int window = 0; window < 2; ++window)
        for (int ion : pair)
            seq.segments.push_back({ion, window * t_seg, t_seg, 1.0, window * dphi, 0.0});
    seq.sort_segments();
    seq.total_time = 2.0 * t_seg;
    seq.validate();
    return seq;
}

// Eight segments alternating between the two target ions, with gap dt between
// windows; mu = (w2 + w4)/2 and t = 4 pi/(w2 - w4) close modes 2 and 4 every
// segment.  The four-phase pattern
//   [0, pi - (mu-w3) dT, pi - (mu-w1) 2dT, -(mu-w3) dT - (mu-w1) 2dT]
// with dT = 2 (t + dt) is applied identically to each ion's four segments and
// closes modes 1 and 3 pairwise.
inline PulseSequence design_alternating_diagonal(const ModeSpectrum& spec,
                                                 std::array<int, 2> pair, double gap) {
    detail::require_mode_count(spec, 4);
    if (gap < 0.0) throw DesignError("segment gap must be nonnegative");
    const double w1 = spec.frequencies(0), w2 = spec.frequencies(1);
    const double w3 = spec.frequencies(2), w4 = spec.frequencies(3);
    // Each pair ion must be absent from one of the single-ion modes 2, 4.
    const bool first_misses_2 = std::abs(spec.mode_matrix(pair[0], 1)) < 1e-6;
    if (first_misses_2) {
        detail::require_absent(spec, pair[0], 1);
        detail::require_absent(spec, pair[1], 3);
    } else {
        detail::require_absent(spec, pair[0], 3);
        detail::require_absent(spec, pair[1], 1);
    }

    const double mu = 0.5 * (w2 + w4);
    const double t_seg = 4.0 * pi / (w2 - w4);
    const double big_dt = 2.0 * (t_seg + gap);
    const double phases[4] = {0.0, pi - (mu - w3) * big_dt, pi - (mu - w1) * 2.0 * big_dt,
                              -(mu - w3) * big_dt - (mu - w1) * 2.0 * big_dt};

    PulseSequence seq;
    seq.pair = pair;
    seq.detuning = mu;
    seq.gap = gap;
    seq.style = SequenceStyle::alternating;
    for (int s = 0; s < 8; ++s)
        seq.segments.push_back(
            {pair[s % 2], s * (t_seg + gap), t_seg, 1.0, phases[s / 2], 0.0});
    seq.total_time = 8.0 * t_seg + 7.0 * gap;
    seq.validate();
    return seq;
}

// Multiply every Rabi rate by sqrt(|target| / |Theta0|); the accumulated
// phase is quadratic in the overall amplitude, so the result hits the target
// magnitude exactly (sign is fixed by the sequence itself).
inline PulseSequence scale_to_phase(const PulseSequence& seq, const ModeSpectrum& spec,
                                    double target = pi / 4.0) {
    const double theta0 = two_qubit_phase(seq, spec);
    if (theta0 == 0.0) throw DesignError("sequence accumulates no two-qubit phase to scale");
    const double factor = std::sqrt(std::abs(target) / std::abs(theta0));
    PulseSequence out = seq;
    for (auto& s : out.segments) s.rabi_rate *= factor;
    return out;
}

// Advance each segment's spin phase by the Stark phase its target ion
// accumulated while not driven (frames drift apart between windows; they are
// re-locked during drive).  One shift value per addressed ion, rad/s.
inline PulseSequence stark_frame_offsets(const PulseSequence& seq,
                                         const std::map<int, double>& stark_shifts) {
    for (int ion : seq.addressed_ions())
        if (!stark_shifts.count(ion))
            throw ValidationError("missing Stark shift for addressed ion " +
                                  std::to_string(ion));
    PulseSequence out = seq;
    std::map<int, double> last_end;  // per-ion end of the previous window
    std::map<int, double> accumulated;
    for (auto& s : out.segments) {
        const double idle_since = last_end.count(s.target_ion) ? last_end[s.target_ion] : 0.0;
        accumulated[s.target_ion] +=
            stark_shifts.at(s.target_ion) * (s.start_time - idle_since);
        s.spin_phase += accumulated[s.target_ion];
        last_end[s.target_ion] = s.end_time();
    }
    return out;
}

}  // namespace ms2d
