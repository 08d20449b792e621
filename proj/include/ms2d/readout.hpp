#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ms2d/constants.hpp"
#include "ms2d/errors.hpp"

// Detection-error correction for multi-ion fluorescence readout: confusion
// matrices over the 2^N computational basis states, multinomial maximum
// likelihood recovery of the underlying populations, and Monte Carlo error
// bars.  Basis ordering is little-endian over the ion labels: bit i of the
// basis index is the state of ion i.

namespace ms2d {

struct ConfusionMatrix {
    Eigen::MatrixXd matrix;  // column-stochastic: column = prepared state
    int n_ions = 0;
    int calibration_shots = 0;

    int dim() const { return 1 << n_ions; }

    void validate() const {
        if (matrix.rows() != dim() || matrix.cols() != dim())
            throw ValidationError("confusion matrix has the wrong shape");
        if (matrix.minCoeff() < 0.0)
            throw ValidationError("confusion matrix entries must be nonnegative");
        for (int c = 0; c < matrix.cols(); ++c)
            if (std::abs(matrix.col(c).sum() - 1.0) > 1e-9)
                throw ValidationError("confusion matrix column " + std::to_string(c) +
                                      " does not sum to 1");
    }
};

struct PopulationEstimate {
    Eigen::VectorXd probabilities;
    Eigen::VectorXd std_errors;
    std::int64_t shots = 0;
    double log_likelihood = 0.0;
};

struct ReadoutErrorModel {
    double per_ion_flip = 0.0;
    double neighbor_crosstalk = 0.0;
    std::vector<std::pair<int, int>> adjacency;  // pairs of ion indices
};

inline std::string basis_bitstring(int state, int n_ions) {
    std::string s(n_ions, '0');
    for (int i = 0; i < n_ions; ++i)
        if (state & (1 << i)) s[i] = '1';
    return s;
}

// Synthetic confusion matrix: independent symmetric per-ion flips composed
// with an extra dark->bright probability for ions whose prepared neighbors
// are bright.
inline ConfusionMatrix build_confusion(int n_ions, const ReadoutErrorModel& model) {
    if (n_ions < 1 || n_ions > 12) throw ValidationError("n_ions must lie in [1, 12]");
    if (model.per_ion_flip < 0.0 || model.per_ion_flip >= 0.5 ||
        model.neighbor_crosstalk < 0.0 || model.neighbor_crosstalk >= 0.5)
        throw ValidationError("flip and crosstalk probabilities must lie in [0, 0.5)");
    for (const auto& [a, b] : model.adjacency)
        if (a < 0 || a >= n_ions || b < 0 || b >= n_ions || a == b)
            throw ValidationError("bad adjacency pair");
    const int dim = 1 << n_ions;
    ConfusionMatrix cm;
    cm.n_ions = n_ions;
    cm.matrix.resize(dim, dim);
    for (int prepared = 0; prepared < dim; ++prepared) {
        // Bright probability per ion given the prepared state.
        std::vector<double> p_bright(n_ions);
        for (int i = 0; i < n_ions; ++i) {
            const bool bright = prepared & (1 << i);
            bool bright_neighbor = false;
            for (const auto& [a, b] : model.adjacency) {
                if (a == i && (prepared & (1 << b))) bright_neighbor = true;
                if (b == i && (prepared & (1 << a))) bright_neighbor = true;
            }
            double p = bright ? 1.0 - model.per_ion_flip : model.per_ion_flip;
            if (!bright && bright_neighbor)
                p += (1.0 - model.per_ion_flip) * model.neighbor_crosstalk;
            p_bright[i] = p;
        }
        for (int observed = 0; observed < dim; ++observed) {
            double prob = 1.0;
            for (int i = 0; i < n_ions; ++i) {
                const bool seen = observed & (1 << i);
                prob *= seen ? p_bright[i] : 1.0 - p_bright[i];
            }
            cm.matrix(observed, prepared) = prob;
        }
    }
    cm.validate();
    return cm;
}

// Calibration-count version: columns are normalized empirical distributions.
inline ConfusionMatrix build_confusion_from_counts(int n_ions,
                                                   const Eigen::MatrixXd& raw_counts) {
    const int dim = 1 << n_ions;
    if (raw_counts.rows() != dim || raw_counts.cols() != dim)
        throw ValidationError("calibration counts must be 2^N x 2^N");
    if (raw_counts.minCoeff() < 0.0)
        throw ValidationError("calibration counts must be nonnegative");
    ConfusionMatrix cm;
    cm.n_ions = n_ions;
    cm.matrix.resize(dim, dim);
    double min_shots = 1e300;
    for (int c = 0; c < dim; ++c) {
        const double total = raw_counts.col(c).sum();
        if (total <= 0.0)
            throw ValidationError("calibration column " + std::to_string(c) + " has no counts");
        cm.matrix.col(c) = raw_counts.col(c) / total;
        min_shots = std::min(min_shots, total);
    }
    cm.calibration_shots = static_cast<int>(min_shots);
    cm.validate();
    return cm;
}

// Maximum-likelihood populations: maximize sum_i f_i log((M p)_i) over the
// probability simplex.  Expectation-maximization fixed point (monotone in the
// likelihood), then a projected-Newton polish on the active set.
inline PopulationEstimate mle_recover(const Eigen::VectorXd& frequencies,
                                      const ConfusionMatrix& cm) {
    cm.validate();
    const int dim = cm.dim();
    if (frequencies.size() != dim) throw ValidationError("frequency vector has wrong length");
    if (frequencies.minCoeff() < 0.0) throw ValidationError("counts must be nonnegative");
    const double total = frequencies.sum();
    if (!(total > 0.0)) throw ValidationError("no counts");

    // Feasibility: every observed outcome needs at least one prepared state
    // that can produce it.
    for (int i = 0; i < dim; ++i)
        if (frequencies(i) > 0.0 && cm.matrix.row(i).maxCoeff() <= 0.0)
            throw ValidationError("observed outcome " + std::to_string(i) +
                                  " has zero probability under every preparation");

    const Eigen::MatrixXd& m = cm.matrix;
    auto log_likelihood = [&](const Eigen::VectorXd& p) {
        const Eigen::VectorXd q = m * p;
        double ll = 0.0;
        for (int i = 0; i < dim; ++i)
            if (frequencies(i) > 0.0) ll += frequencies(i) * std::log(std::max(q(i), 1e-300));
        return ll;
    };

    Eigen::VectorXd p = Eigen::VectorXd::Constant(dim, 1.0 / dim);
    double ll = log_likelihood(p);
    for (int it = 0; it < 20000; ++it) {
        const Eigen::VectorXd q = m * p;
        Eigen::VectorXd ratio(dim);
        for (int i = 0; i < dim; ++i)
            ratio(i) = q(i) > 0.0 ? frequencies(i) / q(i) : 0.0;
        p = p.cwiseProduct(m.transpose() * ratio) / total;
        p = p.cwiseMax(0.0);
        p /= p.sum();
        const double ll_new = log_likelihood(p);
        if (it > 10 && std::abs(ll_new - ll) < 1e-12 * (std::abs(ll) + 1.0)) {
            ll = ll_new;
            break;
        }
        ll = ll_new;
    }

    // Active-set Newton polish: optimize over components above threshold with
    // the simplex equality, keeping steps that improve the likelihood.
    for (int polish = 0; polish < 40; ++polish) {
        std::vector<int> active;
        for (int j = 0; j < dim; ++j)
            if (p(j) > 1e-12) active.push_back(j);
        const int na = static_cast<int>(active.size());
        if (na < 2) break;
        const Eigen::VectorXd q = m * p;
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(na);
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(na, na);
        for (int i = 0; i < dim; ++i) {
            if (frequencies(i) <= 0.0) continue;
            const double qi = std::max(q(i), 1e-300);
            const double w = frequencies(i) / qi;
            for (int a = 0; a < na; ++a) {
                grad(a) += w * m(i, active[a]);
                for (int b = 0; b < na; ++b)
                    hess(a, b) -= w / qi * m(i, active[a]) * m(i, active[b]);
            }
        }
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(na + 1, na + 1);
        kkt.topLeftCorner(na, na) = -hess;
        kkt.topRightCorner(na, 1).setOnes();
        kkt.bottomLeftCorner(1, na).setOnes();
        Eigen::VectorXd rhs(na + 1);
        rhs.head(na) = grad;
        rhs(na) = 0.0;
        const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
        Eigen::VectorXd dp = Eigen::VectorXd::Zero(dim);
        for (int a = 0; a < na; ++a) dp(active[a]) = sol(a);
        double scale = 1.0;
        bool improved = false;
        for (int ls = 0; ls < 30 && !improved; ++ls) {
            Eigen::VectorXd cand = p + scale * dp;
            cand = cand.cwiseMax(0.0);
            const double s = cand.sum();
            if (s > 0.0) {
                cand /= s;
                const double cll = log_likelihood(cand);
                if (cll > ll + 1e-14 * std::abs(ll)) {
                    p = cand;
                    ll = cll;
                    improved = true;
                }
            }
            scale *= 0.5;
        }
        if (!improved) break;
    }

    PopulationEstimate est;
    est.probabilities = p;
    est.std_errors = Eigen::VectorXd::Zero(dim);
    est.shots = static_cast<std::int64_t>(std::llround(total));
    est.log_likelihood = ll;
    return est;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline Eigen::VectorXd sample_multinomial(const Eigen::VectorXd& prob, std::int64_t total,
                                          std::mt19937_64& rng) {
    const int dim = static_cast<int>(prob.size());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(dim);
    double remaining_prob = 1.0;
    std::int64_t remaining = total;
    for (int i = 0; i < dim - 1 && remaining > 0; ++i) {
        const double pcond = std::clamp(prob(i) / remaining_prob, 0.0, 1.0);
        std::binomial_distribution<std::int64_t> bin(remaining, pcond);
        const std::int64_t c = bin(rng);
        counts(i) = static_cast<double>(c);
        remaining -= c;
        remaining_prob -= prob(i);
        if (remaining_prob <= 0.0) break;
    }
    counts(dim - 1) = static_cast<double>(remaining);
    return counts;
}

}  // namespace detail

// Monte Carlo standard errors of the recovered populations: resample counts
// from Mp, re-run the MLE, take per-component standard deviations.  Sample
// seeds derive from the master seed through a splittable counter.
inline Eigen::VectorXd monte_carlo_errors(const PopulationEstimate& estimate,
                                          const ConfusionMatrix& cm, std::int64_t shots,
                                          int n_samples, std::uint64_t seed) {
    if (n_samples < 100) throw ValidationError("need at least 100 Monte Carlo samples");
    const int dim = cm.dim();
    const Eigen::VectorXd forward = cm.matrix * estimate.probabilities;
    Eigen::MatrixXd samples(dim, n_samples);
    for (int s = 0; s < n_samples; ++s) {
        std::mt19937_64 rng(detail::splitmix64(seed ^ (0x9e3779b97f4a7c15ull * (s + 1))));
        const Eigen::VectorXd counts = detail::sample_multinomial(forward, shots, rng);
        samples.col(s) = mle_recover(counts, cm).probabilities;
    }
    Eigen::VectorXd mean = samples.rowwise().mean();
    Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
    for (int s = 0; s < n_samples; ++s) {
        const Eigen::VectorXd d = samples.col(s) - mean;
        var += d.cwiseProduct(d);
    }
    var /= (n_samples - 1);
    return var.cwiseSqrt();
}

// Crosstalk infidelity of a single-qubit pi pulse: [(pi/2)(Omega_n/Omega_t)]^2.
inline double crosstalk_infidelity(double omega_target, double omega_neighbor) {
    if (!(omega_target > 0.0)) throw ValidationError("target Rabi rate must be positive");
    const double ratio = omega_neighbor / omega_target;
    return (pi / 2.0) * (pi / 2.0) * ratio * ratio;
}

struct GateErrorFit {
    double error_per_gate = 0.0;
    double error_stderr = 0.0;
    double intercept = 0.0;
    double intercept_stderr = 0.0;
};

// Weighted linear fit F(N) = F0 - eps N over odd gate counts.
inline GateErrorFit fit_gate_error(const std::vector<int>& gate_counts,
                                   const std::vector<double>& fidelities,
                                   const std::vector<double>& std_devs = {}) {
    const int n = static_cast<int>(gate_counts.size());
    if (n < 3) throw FitError("need at least 3 points to fit the gate error");
    if (static_cast<int>(fidelities.size()) != n ||
        (!std_devs.empty() && static_cast<int>(std_devs.size()) != n))
        throw ValidationError("mismatched fit input lengths");
    for (int i = 0; i < n; ++i) {
        if (gate_counts[i] % 2 == 0) throw ValidationError("gate counts must be odd");
        if (i > 0 && gate_counts[i] <= gate_counts[i - 1])
            throw ValidationError("gate counts must increase");
    }
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n), w(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = -static_cast<double>(gate_counts[i]);
        y(i) = fidelities[i];
        w(i) = std_devs.empty() ? 1.0 : 1.0 / (std_devs[i] * std_devs[i]);
    }
    const Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
    const Eigen::VectorXd beta = xtwx.ldlt().solve(x.transpose() * (w.asDiagonal() * y));
    Eigen::MatrixXd cov = xtwx.inverse();
    if (std_devs.empty()) {
        // Scale by the residual variance when no per-point errors are given.
        const double dof = std::max(1, n - 2);
        const double s2 = (y - x * beta).squaredNorm() / dof;
        cov *= s2;
    }
    GateErrorFit fit;
    fit.intercept = beta(0);
    fit.error_per_gate = beta(1);
    fit.intercept_stderr = std::sqrt(std::max(0.0, cov(0, 0)));
    fit.error_stderr = std::sqrt(std::max(0.0, cov(1, 1)));
    return fit;
}

}  // namespace ms2d
