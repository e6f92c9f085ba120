// Stable and unstable manifolds of invariant curves: linear fundamental
// domains z(s, theta) = x(theta) + s Psi(theta), their globalization under the
// map, and their intersections with codimension-2 coordinate slices.
//
// Both sides share one code path. For the stable side the "inverse" map is
// P^{-1}, lambda = Lambda_s and the parameter shift is nu; the unstable side
// uses P, lambda = 1 / Lambda_u and -nu. In both cases
//   inverse(z(s, theta)) ~ z(s / lambda, theta - shift).

#ifndef RECOLL_MANIFOLDS_HPP
#define RECOLL_MANIFOLDS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "recoll/flow.hpp"
#include "recoll/invcurves.hpp"
#include "recoll/parallel.hpp"
#include "recoll/porbits.hpp"

namespace recoll {

class BundleQualityError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct FundamentalDomain {
    int sigma = -1;
    ManifoldSide side = ManifoldSide::stable;
    /// +1 or -1: which half of the manifold (s > 0 or s < 0).
    int branch = 1;
    double h = 0.0;
    /// Lambda_s (stable) or 1 / Lambda_u (unstable); always in (0, 1).
    double lambda = 0.0;
    /// Rotation number of the curve.
    double nu = 0.0;
    Eigen::MatrixXd curve;
    Eigen::MatrixXd bundle;
    int n_s = 0;
    int n_theta = 0;
    double epsilon = 0.0;
    /// Largest invariance error over the mesh.
    double invariance_error = 0.0;
    /// Largest error of the forward map taking the s = h / lambda edge to s = h.
    double edge_error = 0.0;

    double s_min() const { return h; }
    double s_max() const { return h / lambda; }
    double shift() const { return side == ManifoldSide::stable ? nu : -nu; }
    Direction inverse_direction() const {
        return side == ManifoldSide::stable ? Direction::backward : Direction::forward;
    }
    Direction forward_direction() const {
        return side == ManifoldSide::stable ? Direction::forward : Direction::backward;
    }

    /// Geometric spacing, so that the mesh is uniform in log s; both edges included.
    double s_at(int i) const {
        const double f = n_s > 1 ? double(i) / (n_s - 1) : 0.0;
        return branch * h * std::pow(1.0 / lambda, f);
    }
    double theta_at(int j) const { return fourier::kTwoPi * j / std::max(n_theta, 1); }

    Eigen::VectorXd point(double s, double theta) const {
        return fourier::evaluate(curve, theta) + s * fourier::evaluate(bundle, theta);
    }
    Eigen::VectorXd d_ds(double theta) const { return fourier::evaluate(bundle, theta); }
    Eigen::VectorXd d_dtheta(double s, double theta) const {
        return fourier::evaluate(curve, theta, 1) + s * fourier::evaluate(bundle, theta, 1);
    }
    bool contains(double s) const {
        const double a = branch * s;
        return a >= s_min() * (1.0 - 1e-12) && a <= s_max() * (1.0 + 1e-12);
    }
};

struct DomainOptions {
    int n_s = 100;
    int n_theta = 100;
    double epsilon = 1e-7;
    double h0 = 1e-3;
    double h_min = 1e-10;
};

namespace detail {

/// Max over theta of |inverse(z(s, theta)) - z(s / lambda, theta - shift)| at one s.
template <int Dim>
double domain_row_error(const Flow<Dim>& flow, const FundamentalDomain& d, double s) {
    std::vector<double> err(static_cast<std::size_t>(d.n_theta), 0.0);
    parallel_for(err.size(), [&](std::size_t j) {
        const double th = d.theta_at(static_cast<int>(j));
        const auto r = flow.map(StateVec<Dim>(d.point(s, th)), 1, d.inverse_direction());
        err[j] = r.escaped ? std::numeric_limits<double>::infinity()
                           : (r.state.packed() - StateVec<Dim>(d.point(s / d.lambda, th - d.shift()))).norm();
    });
    return *std::max_element(err.begin(), err.end());
}

template <int Dim>
void finish_domain(const Flow<Dim>& flow, FundamentalDomain& d, const DomainOptions& opt) {
    if (!(d.lambda > 0.0 && d.lambda < 1.0)) throw BundleQualityError("domain contraction factor must lie in (0, 1)");
    for (d.h = opt.h0;; d.h *= 0.5) {
        if (d.h < opt.h_min) throw BundleQualityError("seed displacement fell below h_min without meeting epsilon");
        if (detail::domain_row_error(flow, d, d.s_at(d.n_s - 1)) < opt.epsilon) break;
    }
    d.invariance_error = 0.0;
    for (int i = 0; i < d.n_s; ++i)
        d.invariance_error = std::max(d.invariance_error, detail::domain_row_error(flow, d, d.s_at(i)));
    if (!(d.invariance_error < opt.epsilon))
        throw BundleQualityError("fundamental domain fails the invariance check on its mesh");

    std::vector<double> err(static_cast<std::size_t>(d.n_theta), 0.0);
    parallel_for(err.size(), [&](std::size_t j) {
        const double th = d.theta_at(static_cast<int>(j));
        const auto r = flow.map(StateVec<Dim>(d.point(d.branch * d.s_max(), th)), 1, d.forward_direction());
        err[j] = r.escaped ? std::numeric_limits<double>::infinity()
                           : (r.state.packed() - StateVec<Dim>(d.point(d.branch * d.s_min(), th + d.shift()))).norm();
    });
    d.edge_error = *std::max_element(err.begin(), err.end());
}

}  // namespace detail

/// Fundamental domain of one branch of the stable or unstable manifold of a
/// curve. h is halved from h0 until every mesh point passes the invariance
/// check at epsilon.
template <int Dim>
FundamentalDomain build_fundamental_domain(const Flow<Dim>& flow, const InvariantCurve& c, ManifoldSide side,
                                           int branch = 1, const DomainOptions& opt = {}) {
    if (!c.stability) throw BundleQualityError("curve has no stability data");
    if (branch != 1 && branch != -1) throw std::invalid_argument("branch must be +1 or -1");
    FundamentalDomain d;
    d.sigma = c.sigma;
    d.side = side;
    d.branch = branch;
    d.nu = c.nu;
    d.curve = c.coeffs;
    d.bundle = side == ManifoldSide::stable ? c.stability->bundle_s : c.stability->bundle_u;
    d.lambda = side == ManifoldSide::stable ? c.stability->lambda_s : 1.0 / c.stability->lambda_u;
    d.n_s = opt.n_s;
    d.n_theta = opt.n_theta;
    d.epsilon = opt.epsilon;
    detail::finish_domain(flow, d, opt);
    return d;
}

/// The fixed point's own in-plane manifold written as a domain: the curve is
/// the constant z*, the bundle the in-plane eigenvector, and there is a single
/// theta. sigma is -1.
template <int Dim>
FundamentalDomain degenerate_domain(const Flow<Dim>& flow, const FixedPointOrbit& orbit, ManifoldSide side,
                                    int branch = 1, DomainOptions opt = {}) {
    const auto cls = classify(orbit);
    int idx = -1;
    for (const auto& p : cls.pairs)
        if (p.type == PairType::hyperbolic && p.subspace == "polarization") {
            const bool first_out = std::abs(p.first) > 1.0;
            const bool want_out = side == ManifoldSide::unstable;
            idx = first_out == want_out ? p.first_index : p.second_index;
        }
    if (idx < 0) throw BundleQualityError("fixed point has no hyperbolic pair in the polarization plane");
    FundamentalDomain d;
    d.sigma = -1;
    d.side = side;
    d.branch = branch;
    d.nu = 0.0;
    d.curve = orbit.z_star;
    Eigen::VectorXd v = orbit.eigenvectors.col(idx).real();
    v.normalize();
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0) v = -v;
    d.bundle = v;
    const double l = orbit.eigenvalues[idx].real();
    d.lambda = side == ManifoldSide::stable ? std::abs(l) : 1.0 / std::abs(l);
    if (l < 0.0) throw BundleQualityError("reflecting hyperbolic pair is not supported for degenerate domains");
    d.n_s = opt.n_s;
    d.n_theta = 1;
    opt.n_theta = 1;
    d.epsilon = opt.epsilon;
    detail::finish_domain(flow, d, opt);
    return d;
}

// ---------------------------------------------------------------------------
// Globalization

struct ManifoldSample {
    int sigma = -1;
    int branch = 1;
    /// Number of applications of the inverse map.
    int k = 0;
    int i = 0;
    int j = 0;
    double s = 0.0;
    double theta = 0.0;
    Eigen::VectorXd state;
};

struct GlobalizeStats {
    long emitted = 0;
    long escaped = 0;
    long failed = 0;
    std::vector<std::string> log;
};

/// Streams inverse-map images k = 1..n_iter of every mesh seed to `sink`, in
/// seed-major order regardless of the thread count. An escaping or failing
/// orbit stops on its own; the others continue.
template <int Dim>
GlobalizeStats globalize(const Flow<Dim>& flow, const FundamentalDomain& d, int n_iter,
                         const std::function<void(const ManifoldSample&)>& sink, std::size_t chunk = 256) {
    GlobalizeStats stats;
    const std::size_t n_seeds = static_cast<std::size_t>(d.n_s) * static_cast<std::size_t>(d.n_theta);
    struct Orbit {
        std::vector<StateVec<Dim>> states;
        bool escaped = false;
        std::string error;
    };
    for (std::size_t start = 0; start < n_seeds; start += chunk) {
        const std::size_t n = std::min(chunk, n_seeds - start);
        std::vector<Orbit> orbits(n);
        parallel_for(n, [&](std::size_t q) {
            const int seed = static_cast<int>(start + q);
            const int i = seed / d.n_theta, j = seed % d.n_theta;
            StateVec<Dim> z = d.point(d.s_at(i), d.theta_at(j));
            auto& o = orbits[q];
            o.states.reserve(static_cast<std::size_t>(n_iter));
            try {
                for (int k = 1; k <= n_iter; ++k) {
                    const auto r = flow.map(z, 1, d.inverse_direction());
                    if (r.escaped) {
                        o.escaped = true;
                        return;
                    }
                    z = r.state.packed();
                    o.states.push_back(z);
                }
            } catch (const IntegrationError& ex) {
                o.error = ex.what();
            }
        });
        for (std::size_t q = 0; q < n; ++q) {
            const int seed = static_cast<int>(start + q);
            ManifoldSample smp;
            smp.sigma = d.sigma;
            smp.branch = d.branch;
            smp.i = seed / d.n_theta;
            smp.j = seed % d.n_theta;
            smp.s = d.s_at(smp.i);
            smp.theta = d.theta_at(smp.j);
            for (std::size_t k = 0; k < orbits[q].states.size(); ++k) {
                smp.k = static_cast<int>(k) + 1;
                smp.state = orbits[q].states[k];
                sink(smp);
                ++stats.emitted;
            }
            if (orbits[q].escaped) ++stats.escaped;
            if (!orbits[q].error.empty()) {
                ++stats.failed;
                stats.log.push_back("seed (" + std::to_string(smp.i) + "," + std::to_string(smp.j) +
                                    "): " + orbits[q].error);
            }
        }
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Slice intersections

struct SliceSpec {
    /// Phase-space coordinates required to vanish; -1 selects p_x for the second.
    int axis1 = 1;
    int axis2 = -1;
};

struct SliceIntersection {
    int sigma = -1;
    int branch = 1;
    ManifoldSide side = ManifoldSide::stable;
    int m = 0;
    double s_star = 0.0;
    double theta_star = 0.0;
    Eigen::VectorXd point;
    std::array<double, 2> residuals{};
};

struct IntersectOptions {
    double coarse_tol = 1e-2;
    int n_iter = 100;
    double tol = 1e-10;
    int max_newton = 25;
    double dedup = 1e-6;
};

struct IntersectionReport {
    std::vector<SliceIntersection> points;
    long samples = 0;
    long candidates = 0;
    long newton_failures = 0;
    long outside_domain = 0;
    long duplicates = 0;
    long escaped = 0;
};

/// Newton in (s, theta) on the two slice conditions for inverse^m(z(s, theta)),
/// with derivatives from the propagated tangent map. Returns false when it
/// does not reach tol.
template <int Dim>
bool refine_slice_point(const Flow<Dim>& flow, const FundamentalDomain& d, const SliceSpec& slice, int m,
                        double s0, double theta0, const IntersectOptions& opt, SliceIntersection& out) {
    const int a1 = slice.axis1, a2 = slice.axis2 < 0 ? Dim : slice.axis2;
    double s = s0, th = theta0;
    for (int it = 0; it <= opt.max_newton; ++it) {
        const auto r = flow.map(StateVec<Dim>(d.point(s, th)), m, d.inverse_direction(), true);
        if (r.escaped) return false;
        const StateVec<Dim> z = r.state.packed();
        const Eigen::Vector2d G(z[a1], z[a2]);
        if (!G.allFinite()) return false;
        if (G.cwiseAbs().maxCoeff() < opt.tol) {
            out.sigma = d.sigma;
            out.branch = d.branch;
            out.side = d.side;
            out.m = m;
            out.s_star = s;
            out.theta_star = fourier::wrap_angle(th);
            out.point = z;
            out.residuals = {std::abs(G[0]), std::abs(G[1])};
            return true;
        }
        Eigen::Matrix<double, 2 * Dim, 2> T;
        T.col(0) = d.d_ds(th);
        T.col(1) = d.d_dtheta(s, th);
        Eigen::Matrix2d J;
        const StateMat<Dim>& D = *r.tangent;
        J.row(0) = D.row(a1) * T;
        J.row(1) = D.row(a2) * T;
        Eigen::JacobiSVD<Eigen::Matrix2d> svd(J, Eigen::ComputeFullU | Eigen::ComputeFullV);
        svd.setThreshold(1e-12);
        const Eigen::Vector2d step = svd.solve(-G);
        if (!step.allFinite()) return false;
        s += step[0];
        th += step[1];
        if (std::abs(s) > 10.0 * d.s_max()) return false;
    }
    return false;
}

/// Steps 3 and 4 of the slice scheme: stream globalized samples, keep those
/// within coarse_tol of the slice, refine each by Newton, then keep the roots
/// inside the fundamental domain, deduplicated in (s, theta, m).
template <int Dim>
IntersectionReport intersect_slice(const Flow<Dim>& flow, const std::vector<FundamentalDomain>& domains,
                                   const SliceSpec& slice = {}, const IntersectOptions& opt = {}) {
    const int a1 = slice.axis1, a2 = slice.axis2 < 0 ? Dim : slice.axis2;
    if (a1 < 0 || a1 >= 2 * Dim || a2 < 0 || a2 >= 2 * Dim || a1 == a2)
        throw std::invalid_argument("slice axes out of range");
    IntersectionReport rep;
    for (const auto& d : domains) {
        std::vector<ManifoldSample> cand;
        const auto gs = globalize(flow, d, opt.n_iter, [&](const ManifoldSample& smp) {
            if (std::abs(smp.state[a1]) < opt.coarse_tol && std::abs(smp.state[a2]) < opt.coarse_tol)
                cand.push_back(smp);
        });
        rep.samples += gs.emitted;
        rep.escaped += gs.escaped;
        rep.candidates += static_cast<long>(cand.size());

        std::vector<SliceIntersection> roots(cand.size());
        std::vector<char> ok(cand.size(), 0);
        parallel_for(cand.size(), [&](std::size_t q) {
            try {
                ok[q] = refine_slice_point(flow, d, slice, cand[q].k, cand[q].s, cand[q].theta, opt, roots[q]) ? 1 : 0;
            } catch (const IntegrationError&) {
                ok[q] = 0;
            }
        });

        std::vector<SliceIntersection> kept;
        for (std::size_t q = 0; q < cand.size(); ++q) {
            if (!ok[q]) {
                ++rep.newton_failures;
                continue;
            }
            if (!d.contains(roots[q].s_star)) {
                ++rep.outside_domain;
                continue;
            }
            bool dup = false;
            for (const auto& k : kept) {
                const double dth = std::abs(std::remainder(k.theta_star - roots[q].theta_star, fourier::kTwoPi));
                const double ds = k.s_star - roots[q].s_star, dm = k.m - roots[q].m;
                if (std::sqrt(ds * ds + dth * dth + dm * dm) < opt.dedup) {
                    dup = true;
                    break;
                }
            }
            if (dup) {
                ++rep.duplicates;
                continue;
            }
            kept.push_back(roots[q]);
        }
        rep.points.insert(rep.points.end(), kept.begin(), kept.end());
    }
    std::stable_sort(rep.points.begin(), rep.points.end(), [](const SliceIntersection& a, const SliceIntersection& b) {
        if (a.sigma != b.sigma) return a.sigma < b.sigma;
        if (a.m != b.m) return a.m < b.m;
        if (a.theta_star != b.theta_star) return a.theta_star < b.theta_star;
        return a.s_star < b.s_star;
    });
    return rep;
}

}  // namespace recoll

#endif  // RECOLL_MANIFOLDS_HPP
