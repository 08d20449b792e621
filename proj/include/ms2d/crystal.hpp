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

// Equilibrium structure and transverse (drumhead) normal modes of a 2D ion
// crystal in an anisotropic harmonic trap.  The crystal plane is xz; the
// transverse direction is y.

namespace ms2d {

// Row-major so that data() is laid out per ion as (x, y, z) triplets,
// matching the 3N gradient/Hessian indexing.
using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct TrapConfig {
    double omega_x = mhz_to_angular(0.803);  // rad/s
    double omega_y = mhz_to_angular(2.284);
    double omega_z = mhz_to_angular(0.553);
    double ion_mass = yb171_mass;            // kg
    double ion_charge = elementary_charge;   // C
    double rf_frequency = mhz_to_angular(37.0);  // informational
    double mathieu_q = 0.12;

    static TrapConfig from_mhz(double fx, double fy, double fz) {
        TrapConfig t;
        t.omega_x = mhz_to_angular(fx);
        t.omega_y = mhz_to_angular(fy);
        t.omega_z = mhz_to_angular(fz);
        return t;
    }

    // Coulomb coupling constant k_e q^2.
    double coulomb_coupling() const { return coulomb_constant * ion_charge * ion_charge; }

    // Length scale (k_e q^2 / (m w_z^2))^(1/3) of the weak-axis confinement.
    double length_scale() const {
        return std::cbrt(coulomb_coupling() / (ion_mass * omega_z * omega_z));
    }

    // Throws on hard violations; returns human-readable warnings otherwise.
    std::vector<std::string> validate() const {
        if (!(omega_x > 0.0) || !(omega_y > 0.0) || !(omega_z > 0.0))
            throw ValidationError("trap frequencies must be positive");
        if (!(ion_mass > 0.0)) throw ValidationError("ion mass must be positive");
        if (ion_charge == 0.0) throw ValidationError("ion charge must be nonzero");
        if (mathieu_q < 0.0 || mathieu_q > 0.9)
            throw ValidationError("mathieu q must lie in [0, 0.9]");
        std::vector<std::string> warnings;
        if (!(omega_y > omega_x) || !(omega_y > omega_z))
            warnings.push_back(
                "omega_y is not the largest trap frequency; the crystal may not "
                "form in the xz plane");
        return warnings;
    }
};

// Ion labels for the four-ion crystal, following the camera-image convention:
// z is horizontal (left/right), x vertical (up/down).
struct LrudLabels {
    int left, right, up, down;
};

struct IonCrystal {
    Positions positions;  // meters
    TrapConfig trap;
    double potential_energy = 0.0;  // joules

    int n_ions() const { return static_cast<int>(positions.rows()); }

    // L = min z, R = max z, remaining two sorted by x: D = min x, U = max x.
    LrudLabels lrud() const {
        if (n_ions() != 4) throw ValidationError("L/R/U/D labels require a 4-ion crystal");
        std::vector<int> idx{0, 1, 2, 3};
        std::sort(idx.begin(), idx.end(),
                  [&](int a, int b) { return positions(a, 2) < positions(b, 2); });
        const int left = idx.front();
        const int right = idx.back();
        const int a = idx[1], b = idx[2];
        const int down = positions(a, 0) < positions(b, 0) ? a : b;
        const int up = down == a ? b : a;
        return {left, right, up, down};
    }

    int label_to_index(const std::string& label) const {
        if (label == "L") return lrud().left;
        if (label == "R") return lrud().right;
        if (label == "U") return lrud().up;
        if (label == "D") return lrud().down;
        throw ValidationError("unknown ion label '" + label + "'");
    }
};

struct ModeSpectrum {
    Eigen::VectorXd frequencies;   // rad/s, sorted descending; [0] is the COM mode
    Eigen::MatrixXd mode_matrix;   // b(j, k): ion j participation in mode k
    Eigen::VectorXd lamb_dicke;    // eta_k at the default counter-propagating Delta k
    std::string direction = "y";
    double ion_mass = yb171_mass;

    int n_modes() const { return static_cast<int>(frequencies.size()); }
};

namespace detail {

inline double potential_energy(const TrapConfig& trap,
                               const Positions& r) {
    const double m = trap.ion_mass;
    double v = 0.0;
    for (int i = 0; i < r.rows(); ++i) {
        v += 0.5 * m *
             (trap.omega_x * trap.omega_x * r(i, 0) * r(i, 0) +
              trap.omega_y * trap.omega_y * r(i, 1) * r(i, 1) +
              trap.omega_z * trap.omega_z * r(i, 2) * r(i, 2));
    }
    const double kq2 = trap.coulomb_coupling();
    for (int i = 0; i < r.rows(); ++i)
        for (int j = i + 1; j < r.rows(); ++j)
            v += kq2 / (r.row(i) - r.row(j)).norm();
    return v;
}

inline Eigen::VectorXd potential_gradient(const TrapConfig& trap,
                                          const Positions& r) {
    const int n = static_cast<int>(r.rows());
    const double m = trap.ion_mass;
    Eigen::VectorXd g(3 * n);
    for (int i = 0; i < n; ++i) {
        g(3 * i + 0) = m * trap.omega_x * trap.omega_x * r(i, 0);
        g(3 * i + 1) = m * trap.omega_y * trap.omega_y * r(i, 1);
        g(3 * i + 2) = m * trap.omega_z * trap.omega_z * r(i, 2);
    }
    const double kq2 = trap.coulomb_coupling();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const Eigen::Vector3d d = r.row(i) - r.row(j);
            const double rr = d.norm();
            g.segment<3>(3 * i) -= kq2 * d / (rr * rr * rr);
        }
    }
    return g;
}

inline Eigen::MatrixXd potential_hessian(const TrapConfig& trap,
                                         const Positions& r) {
    const int n = static_cast<int>(r.rows());
    const double m = trap.ion_mass;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3 * n, 3 * n);
    for (int i = 0; i < n; ++i) {
        h(3 * i + 0, 3 * i + 0) = m * trap.omega_x * trap.omega_x;
        h(3 * i + 1, 3 * i + 1) = m * trap.omega_y * trap.omega_y;
        h(3 * i + 2, 3 * i + 2) = m * trap.omega_z * trap.omega_z;
    }
    const double kq2 = trap.coulomb_coupling();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const Eigen::Vector3d d = r.row(i) - r.row(j);
            const double rr = d.norm();
            const Eigen::Matrix3d blk =
                kq2 * (3.0 * d * d.transpose() / std::pow(rr, 5) -
                       Eigen::Matrix3d::Identity() / (rr * rr * rr));
            h.block<3, 3>(3 * i, 3 * i) += blk;
            h.block<3, 3>(3 * i, 3 * j) -= blk;
        }
    }
    return h;
}

// Deterministic planar lattice seed: N lowest-trap-energy sites of a square
// lattice in xz, jittered in-plane to break symmetry.
inline Positions initial_lattice(const TrapConfig& trap,
                                                                int n_ions,
                                                                std::uint64_t seed) {
    const double ell = trap.length_scale();
    const int half = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_ions)))) + 2;
    struct Site {
        double energy;
        int ix, iz;
    };
    std::vector<Site> sites;
    for (int ix = -half; ix <= half; ++ix)
        for (int iz = -half; iz <= half; ++iz)
            sites.push_back({trap.omega_x * trap.omega_x * ix * ix +
                                 trap.omega_z * trap.omega_z * iz * iz,
                             ix, iz});
    std::sort(sites.begin(), sites.end(), [](const Site& a, const Site& b) {
        if (a.energy != b.energy) return a.energy < b.energy;
        if (a.ix != b.ix) return a.ix < b.ix;
        return a.iz < b.iz;
    });
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> jitter(0.0, 0.01 * ell);
    Positions r(n_ions, 3);
    for (int i = 0; i < n_ions; ++i) {
        r(i, 0) = sites[i].ix * ell + jitter(rng);
        r(i, 1) = 0.0;
        r(i, 2) = sites[i].iz * ell + jitter(rng);
    }
    return r;
}

}  // namespace detail

struct EquilibriumOptions {
    int max_gradient_iters = 5000;
    int max_newton_iters = 200;
    int max_saddle_escapes = 8;
    double energy_tol = 1e-12;  // relative energy change per Newton step
};

// Minimize the trap + Coulomb potential over all 3N coordinates starting from
// the given configuration.  Gradient descent with backtracking brings the
// state into the Newton basin; damped Newton iterations finish to machine
// precision.  Saddle points are escaped along the most negative Hessian
// eigenvector.
inline IonCrystal solve_equilibrium_from(const TrapConfig& trap,
                                         Positions r,
                                         std::uint64_t seed = 0,
                                         const EquilibriumOptions& opt = {}) {
    trap.validate();
    const int n = static_cast<int>(r.rows());
    if (n < 1) throw ValidationError("need at least one ion");
    using Map = Eigen::Map<Eigen::VectorXd>;

    const double force_scale = trap.ion_mass * trap.omega_z * trap.omega_z * trap.length_scale();
    const double grad_goal = 1e-10 * force_scale;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);

    double v = detail::potential_energy(trap, r);

    // Phase 1: gradient descent with Armijo backtracking.
    for (int it = 0; it < opt.max_gradient_iters; ++it) {
        const Eigen::VectorXd g = detail::potential_gradient(trap, r);
        const double gn = g.norm();
        if (gn < 1e-3 * force_scale) break;
        double step = 0.1 * trap.length_scale() / gn;
        Positions rt = r;
        for (int ls = 0; ls < 60; ++ls) {
            Map(rt.data(), 3 * n) = Map(r.data(), 3 * n) - step * g;
            const double vt = detail::potential_energy(trap, rt);
            if (vt < v - 1e-4 * step * gn * gn) {
                r = rt;
                v = vt;
                break;
            }
            step *= 0.5;
        }
    }

    // Phase 2: damped Newton, with saddle escapes.  Near the minimum the
    // energy change drops below double resolution before the gradient does,
    // so the line search falls back to accepting steps that shrink |g|.
    for (int escape = 0; escape <= opt.max_saddle_escapes; ++escape) {
        for (int it = 0; it < opt.max_newton_iters; ++it) {
            const Eigen::VectorXd g = detail::potential_gradient(trap, r);
            if (g.lpNorm<Eigen::Infinity>() < grad_goal) break;
            Eigen::MatrixXd h = detail::potential_hessian(trap, r);
            Eigen::VectorXd dx;
            double damping = 0.0;
            for (int tries = 0; tries < 30; ++tries) {
                Eigen::LDLT<Eigen::MatrixXd> ldlt(
                    h + damping * Eigen::MatrixXd::Identity(3 * n, 3 * n));
                dx = ldlt.solve(-g);
                if (ldlt.info() == Eigen::Success && dx.dot(g) < 0.0) break;
                damping = damping == 0.0 ? 1e-6 * h.norm() : damping * 10.0;
            }
            double alpha = 1.0;
            Positions rt = r;
            bool accepted = false;
            for (int ls = 0; ls < 60; ++ls) {
                Map(rt.data(), 3 * n) = Map(r.data(), 3 * n) + alpha * dx;
                const double vt = detail::potential_energy(trap, rt);
                if (vt < v) {
                    r = rt;
                    v = vt;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted) {
                Map(rt.data(), 3 * n) = Map(r.data(), 3 * n) + dx;
                if (detail::potential_gradient(trap, rt).norm() < g.norm()) {
                    r = rt;
                    v = detail::potential_energy(trap, r);
                } else {
                    break;  // numerical floor reached
                }
            }
        }
        // Local-minimum check on the full 3N Hessian.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(detail::potential_hessian(trap, r));
        const double scale = trap.ion_mass * trap.omega_z * trap.omega_z;
        if (es.eigenvalues().minCoeff() > -1e-9 * scale) {
            IonCrystal crystal{r, trap, v};
            const double gmax =
                detail::potential_gradient(trap, r).lpNorm<Eigen::Infinity>();
            if (gmax > 1e-9 * force_scale)
                throw ConvergenceError("equilibrium solver did not reach gradient tolerance",
                                       gmax);
            return crystal;
        }
        if (escape == opt.max_saddle_escapes)
            throw ConvergenceError(
                "equilibrium solver stuck at a saddle point",
                detail::potential_gradient(trap, r).lpNorm<Eigen::Infinity>());
        // Kick along the unstable direction, seeded sign and magnitude.
        std::uniform_real_distribution<double> mag(0.02, 0.05);
        const Eigen::VectorXd dir = es.eigenvectors().col(0);
        Map(r.data(), 3 * n) += (rng() % 2 ? 1.0 : -1.0) * mag(rng) * trap.length_scale() * dir;
        v = detail::potential_energy(trap, r);
    }
    throw ConvergenceError("equilibrium solver failed", 0.0);
}

inline IonCrystal solve_equilibrium(const TrapConfig& trap, int n_ions,
                                    std::uint64_t seed = 1,
                                    const EquilibriumOptions& opt = {}) {
    if (n_ions < 1) throw ValidationError("need at least one ion");
    if (n_ions == 1) {
        Positions r = Positions::Zero(1, 3);
        trap.validate();
        return IonCrystal{r, trap, 0.0};
    }
    return solve_equilibrium_from(trap, detail::initial_lattice(trap, n_ions, seed), seed, opt);
}

// Transverse (out-of-plane) normal modes of a planar crystal.  The y-block of
// the Hessian decouples at a planar equilibrium:
//   A(j,j) = w_y^2 - sum_l k q^2/(m rho_jl^3),   A(j,l) = k q^2/(m rho_jl^3).
// Row sums equal w_y^2, so the COM mode sits exactly at the trap frequency.
inline ModeSpectrum transverse_modes(const IonCrystal& crystal) {
    const int n = crystal.n_ions();
    const TrapConfig& trap = crystal.trap;
    const double planar_tol = 1e-6 * trap.length_scale();
    for (int i = 0; i < n; ++i)
        if (std::abs(crystal.positions(i, 1)) > planar_tol)
            throw ValidationError("crystal is not planar in xz; transverse modes undefined");

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    const double kq2m = trap.coulomb_coupling() / trap.ion_mass;
    for (int i = 0; i < n; ++i) {
        a(i, i) = trap.omega_y * trap.omega_y;
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double rho = (crystal.positions.row(i) - crystal.positions.row(j)).norm();
            const double c = kq2m / (rho * rho * rho);
            a(i, i) -= c;
            a(i, j) = c;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success) throw Error("transverse mode eigensolver failed");

    const double w2_scale = trap.omega_y * trap.omega_y;
    Eigen::VectorXd w2 = es.eigenvalues();
    if (w2.minCoeff() < -1e-12 * w2_scale)
        throw InstabilityError(
            "planar crystal is transversely unstable (negative drumhead eigenvalue)");

    // Sort descending.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int p, int q) { return w2(p) > w2(q); });

    ModeSpectrum spec;
    spec.frequencies.resize(n);
    spec.mode_matrix.resize(n, n);
    spec.ion_mass = trap.ion_mass;
    for (int k = 0; k < n; ++k) {
        spec.frequencies(k) = std::sqrt(std::max(0.0, w2(order[k])));
        spec.mode_matrix.col(k) = es.eigenvectors().col(order[k]);
    }

    // Deterministic basis within (near-)degenerate groups: Gram-Schmidt of the
    // canonical axes projected onto the subspace, ordered by first supported
    // component.
    int k = 0;
    while (k < n) {
        int k2 = k + 1;
        while (k2 < n &&
               std::abs(spec.frequencies(k2) - spec.frequencies(k)) < 1e-9 * spec.frequencies(k))
            ++k2;
        if (k2 - k > 1) {
            const Eigen::MatrixXd sub = spec.mode_matrix.middleCols(k, k2 - k);
            const Eigen::MatrixXd proj = sub * sub.transpose();
            Eigen::MatrixXd basis(n, k2 - k);
            int found = 0;
            for (int axis = 0; axis < n && found < k2 - k; ++axis) {
                Eigen::VectorXd cand = proj.col(axis);
                for (int b = 0; b < found; ++b) cand -= basis.col(b).dot(cand) * basis.col(b);
                if (cand.norm() > 1e-8) basis.col(found++) = cand.normalized();
            }
            if (found == k2 - k) spec.mode_matrix.middleCols(k, k2 - k) = basis;
        }
        k = k2;
    }

    // Sign convention: first component of magnitude above tolerance is positive.
    for (int c = 0; c < n; ++c) {
        for (int i = 0; i < n; ++i) {
            if (std::abs(spec.mode_matrix(i, c)) > 1e-8) {
                if (spec.mode_matrix(i, c) < 0.0) spec.mode_matrix.col(c) *= -1.0;
                break;
            }
        }
    }

    spec.lamb_dicke.resize(n);
    for (int c = 0; c < n; ++c)
        spec.lamb_dicke(c) =
            default_delta_k * std::sqrt(hbar / (2.0 * trap.ion_mass * spec.frequencies(c)));
    return spec;
}

// eta_k = delta_k * sqrt(hbar / (2 m w_k)) for an arbitrary wavevector difference.
inline Eigen::VectorXd lamb_dicke(const ModeSpectrum& spectrum, double delta_k) {
    if (delta_k < 0.0) throw ValidationError("delta_k must be nonnegative");
    Eigen::VectorXd eta(spectrum.n_modes());
    for (int k = 0; k < spectrum.n_modes(); ++k)
        eta(k) = delta_k * std::sqrt(hbar / (2.0 * spectrum.ion_mass * spectrum.frequencies(k)));
    return eta;
}

}  // namespace ms2d
