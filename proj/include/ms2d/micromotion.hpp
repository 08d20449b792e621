#pragma once

#include <cmath>
#include <map>

#include "ms2d/sequence.hpp"

// Excess-micromotion effects on addressed Raman drives.  An ion displaced a
// distance x from the RF null oscillates with amplitude A = q x / 2; averaged
// over an RF period the Gaussian addressing beam of waist R then drives it at
// the reduced relative Rabi rate
//   r(A) = (1/2pi) Int_0^2pi exp(-2 (A cos th / R)^2) dth
//        = exp(-A^2/R^2) I0(A^2/R^2).

namespace ms2d {

struct MicromotionContext {
    double displacement = 0.0;  // x, meters from the RF null
    double mathieu_q = 0.12;
    double beam_waist = 1.5e-6;  // R, meters (1/e^2 intensity radius)

    double amplitude() const { return 0.5 * mathieu_q * displacement; }
};

inline double micromotion_amplitude(double x, double q) {
    if (q < 0.0 || q > 0.9) throw ValidationError("mathieu q must lie in [0, 0.9]");
    return 0.5 * q * x;
}

namespace detail {

// exp(-x) I0(x), stable for large arguments.
inline double scaled_bessel_i0(double x) {
    if (x > 600.0) {
        // I0(x) ~ e^x/sqrt(2 pi x) (1 + 1/(8x) + 9/(128 x^2) + 75/(1024 x^3))
        const double ix = 1.0 / x;
        return (1.0 + 0.125 * ix + (9.0 / 128.0) * ix * ix + (75.0 / 1024.0) * ix * ix * ix) /
               std::sqrt(2.0 * pi * x);
    }
    return std::exp(-x) * std::cyl_bessel_i(0.0, x);
}

}  // namespace detail

// Relative Rabi rate r(A) in closed Bessel form; equal to the RF-period
// average of the Gaussian beam profile.
inline double rabi_reduction(double amplitude, double waist) {
    if (!(waist > 0.0)) throw ValidationError("beam waist must be positive");
    if (amplitude < 0.0) throw ValidationError("micromotion amplitude must be nonnegative");
    const double x = amplitude * amplitude / (waist * waist);
    return detail::scaled_bessel_i0(x);
}

// Divide each segment's Rabi rate by r(A_ion) so that the effective rates
// (and hence the two-qubit phase) match the micromotion-free design.  Phases
// and timings are untouched; intensity-only compensation.
inline PulseSequence recalibrate_intensity(const PulseSequence& seq,
                                           const std::map<int, double>& per_ion_amplitude,
                                           double waist, double min_reduction = 0.05) {
    for (int ion : seq.addressed_ions())
        if (!per_ion_amplitude.count(ion))
            throw ValidationError("missing micromotion amplitude for addressed ion " +
                                  std::to_string(ion));
    std::map<int, double> factor;
    for (const auto& [ion, amp] : per_ion_amplitude) {
        const double r = rabi_reduction(amp, waist);
        if (r < min_reduction)
            throw ValidationError("micromotion amplitude of ion " + std::to_string(ion) +
                                  " reduces the Rabi rate below the compensation floor");
        factor[ion] = 1.0 / r;
    }
    PulseSequence out = seq;
    for (auto& s : out.segments) s.rabi_rate *= factor.at(s.target_ion);
    return out;
}

}  // namespace ms2d
