#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "ms2d/constants.hpp"
#include "ms2d/errors.hpp"

namespace ms2d {

// One piecewise-constant drive window on a single ion.  Simultaneous
// two-ion driving is represented by two segments sharing the same window.
struct Segment {
    int target_ion = 0;
    double start_time = 0.0;      // s
    double duration = 0.0;        // s
    double rabi_rate = 0.0;       // rad/s, >= 0 (sign flips live in motional_phase)
    double motional_phase = 0.0;  // rad
    double spin_phase = 0.0;      // rad

    double end_time() const { return start_time + duration; }
};

enum class SequenceStyle {
    two_segment,            // simultaneous pair drive, two windows
    alternating,            // one ion at a time
    optimized_simultaneous,
    optimized_alternating,
};

struct PulseSequence {
    std::vector<Segment> segments;  // sorted by (start_time, target_ion)
    double detuning = 0.0;          // mu, rad/s
    double gap = 0.0;               // Delta t between addressed windows, s
    double total_time = 0.0;        // s, equals last segment end
    std::array<int, 2> pair = {0, 1};
    SequenceStyle style = SequenceStyle::two_segment;

    double max_rabi_rate() const {
        double m = 0.0;
        for (const auto& s : segments) m = std::max(m, s.rabi_rate);
        return m;
    }

    std::vector<int> addressed_ions() const {
        std::vector<int> ions;
        for (const auto& s : segments)
            if (std::find(ions.begin(), ions.end(), s.target_ion) == ions.end())
                ions.push_back(s.target_ion);
        return ions;
    }

    void sort_segments() {
        std::stable_sort(segments.begin(), segments.end(), [](const Segment& a, const Segment& b) {
            if (a.start_time != b.start_time) return a.start_time < b.start_time;
            return a.target_ion < b.target_ion;
        });
    }

    // Structural invariants: positive durations, nonnegative amplitudes,
    // pair-only targets, per-ion non-overlap, total time consistency.  For
    // alternating styles, consecutive windows must alternate the target ion
    // and be separated by exactly the stored gap.
    void validate() const {
        if (segments.empty()) throw ValidationError("sequence has no segments");
        if (pair[0] == pair[1]) throw ValidationError("pair must be two distinct ions");
        double last_end = 0.0;
        double last_end_per_ion[2] = {-1.0, -1.0};
        for (const auto& s : segments) {
            if (!(s.duration > 0.0)) throw ValidationError("segment duration must be positive");
            if (s.rabi_rate < 0.0) throw ValidationError("segment rabi rate must be nonnegative");
            const int slot = s.target_ion == pair[0] ? 0 : s.target_ion == pair[1] ? 1 : -1;
            if (slot < 0) throw ValidationError("segment targets an ion outside the pair");
            if (s.start_time < last_end_per_ion[slot] - 1e-15)
                throw ValidationError("segments overlap on one ion");
            last_end_per_ion[slot] = s.end_time();
            last_end = std::max(last_end, s.end_time());
        }
        if (std::abs(total_time - last_end) > 1e-12 * std::max(1e-12, last_end))
            throw ValidationError("total_time does not equal the last segment end");
        if (style == SequenceStyle::alternating || style == SequenceStyle::optimized_alternating) {
            for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
                if (segments[i].target_ion == segments[i + 1].target_ion)
                    throw ValidationError("alternating sequence repeats a target ion");
                const double sep = segments[i + 1].start_time - segments[i].end_time();
                if (std::abs(sep - gap) > 1e-12 * std::max(1.0e-9, total_time))
                    throw ValidationError("alternating sequence gap mismatch");
            }
        }
    }
};

}  // namespace ms2d
