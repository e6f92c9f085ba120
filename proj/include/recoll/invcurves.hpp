// Invariant curves of the stroboscopic map around a fixed point whose
// transverse pair is elliptic. A curve is a truncated Fourier series
//
//   x(theta) = a_0 + sum_{k=1..M} a_k cos(k theta) + b_k sin(k theta)
//
// solving P(x(theta)) = x(theta + nu). Coefficients are held as an N x (2M+1)
// matrix with columns [a_0, a_1..a_M, b_1..b_M]; the flat unknown vector is
// that matrix stacked column by column.

#ifndef RECOLL_INVCURVES_HPP
#define RECOLL_INVCURVES_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "recoll/flow.hpp"
#include "recoll/linalg.hpp"
#include "recoll/parallel.hpp"
#include "recoll/porbits.hpp"

namespace recoll {

class ResonanceError : public ConvergenceError {
  public:
    using ConvergenceError::ConvergenceError;
};

class InconsistentSystemError : public ConvergenceError {
  public:
    using ConvergenceError::ConvergenceError;
};

class DegeneracyError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace fourier {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// [1, cos t .. cos Mt, sin t .. sin Mt] or its first/second derivative in t.
inline Eigen::VectorXd basis(double theta, int M, int derivative = 0) {
    if (derivative < 0 || derivative > 2) throw std::invalid_argument("basis derivative order must be 0, 1 or 2");
    Eigen::VectorXd b(2 * M + 1);
    b[0] = derivative == 0 ? 1.0 : 0.0;
    for (int k = 1; k <= M; ++k) {
        const double c = std::cos(k * theta), s = std::sin(k * theta);
        if (derivative == 0) {
            b[k] = c;
            b[M + k] = s;
        } else if (derivative == 1) {
            b[k] = -k * s;
            b[M + k] = k * c;
        } else {
            b[k] = -double(k) * k * c;
            b[M + k] = -double(k) * k * s;
        }
    }
    return b;
}

/// Uniform mesh of refine * (2M + 1) angles on [0, 2 pi).
inline std::vector<double> mesh(int M, int refine = 1) {
    const int n = refine * (2 * M + 1);
    std::vector<double> t(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) t[static_cast<std::size_t>(j)] = kTwoPi * j / n;
    return t;
}

/// (2M+1) x n matrix whose columns are basis(theta_j).
inline Eigen::MatrixXd synthesis(const std::vector<double>& theta, int M) {
    Eigen::MatrixXd S(2 * M + 1, static_cast<Eigen::Index>(theta.size()));
    for (std::size_t j = 0; j < theta.size(); ++j) S.col(static_cast<Eigen::Index>(j)) = basis(theta[j], M);
    return S;
}

/// Discrete transform from values on the 2M+1 point mesh to coefficients.
inline Eigen::MatrixXd analysis(int M) {
    const int n = 2 * M + 1;
    const auto theta = mesh(M);
    Eigen::MatrixXd A(n, n);
    for (int j = 0; j < n; ++j) {
        A(0, j) = 1.0 / n;
        for (int k = 1; k <= M; ++k) {
            A(k, j) = 2.0 * std::cos(k * theta[j]) / n;
            A(M + k, j) = 2.0 * std::sin(k * theta[j]) / n;
        }
    }
    return A;
}

/// Matrix R with coeffs(f(. + nu)) = R coeffs(f).
inline Eigen::MatrixXd rotation(int M, double nu) {
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(2 * M + 1, 2 * M + 1);
    R(0, 0) = 1.0;
    for (int k = 1; k <= M; ++k) {
        const double c = std::cos(k * nu), s = std::sin(k * nu);
        R(k, k) = c;
        R(k, M + k) = s;
        R(M + k, k) = -s;
        R(M + k, M + k) = c;
    }
    return R;
}

inline Eigen::VectorXd evaluate(const Eigen::MatrixXd& coeffs, double theta, int derivative = 0) {
    return coeffs * basis(theta, static_cast<int>(coeffs.cols() - 1) / 2, derivative);
}

/// Zero-pads or truncates a coefficient matrix to order M.
inline Eigen::MatrixXd resize(const Eigen::MatrixXd& coeffs, int M) {
    const int M0 = static_cast<int>(coeffs.cols() - 1) / 2;
    const int keep = std::min(M0, M);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(coeffs.rows(), 2 * M + 1);
    out.col(0) = coeffs.col(0);
    for (int k = 1; k <= keep; ++k) {
        out.col(k) = coeffs.col(k);
        out.col(M + k) = coeffs.col(M0 + k);
    }
    return out;
}

inline double wrap_angle(double a) {
    a = std::fmod(a, kTwoPi);
    return a < 0.0 ? a + kTwoPi : a;
}

}  // namespace fourier

struct CurveStability {
    double lambda_s = 0.0;
    double lambda_u = 0.0;
    std::array<std::complex<double>, 2> unit_eigs{};
    /// Fourier coefficients of the stable/unstable bundles, same layout as the curve.
    Eigen::MatrixXd bundle_s;
    Eigen::MatrixXd bundle_u;
    /// Eigenpairs that passed the smoothness filter.
    int smooth_count = 0;

    double product_error() const { return std::abs(lambda_s * lambda_u - 1.0); }
};

struct InvariantCurve {
    int sigma = -1;
    double nu = 0.0;
    Eigen::MatrixXd coeffs;
    /// The fixed point the family surrounds.
    Eigen::VectorXd center;
    double dist = 0.0;
    /// Largest per-point invariance error on the solve mesh and on a 4x mesh.
    double residual = std::numeric_limits<double>::infinity();
    double refined_residual = std::numeric_limits<double>::infinity();
    double phase_residual = 0.0;
    double redundant_residual = 0.0;
    int iterations = 0;
    std::optional<CurveStability> stability;

    int order() const { return static_cast<int>(coeffs.cols() - 1) / 2; }
    int dim() const { return static_cast<int>(coeffs.rows()); }

    Eigen::VectorXd operator()(double theta) const { return fourier::evaluate(coeffs, theta); }
    Eigen::VectorXd derivative(double theta, int n = 1) const { return fourier::evaluate(coeffs, theta, n); }
    Eigen::VectorXd a(int k) const { return coeffs.col(k); }
    Eigen::VectorXd b(int k) const { return coeffs.col(order() + k); }

    /// |a_M| + |b_M|.
    double tail() const { return order() == 0 ? 0.0 : a(order()).norm() + b(order()).norm(); }

    Eigen::VectorXd flat() const { return Eigen::Map<const Eigen::VectorXd>(coeffs.data(), coeffs.size()); }

    InvariantCurve with_order(int M) const {
        InvariantCurve c = *this;
        c.coeffs = fourier::resize(coeffs, M);
        c.stability.reset();
        return c;
    }

    /// The fixed point seen as a degenerate curve.
    static InvariantCurve constant(const Eigen::VectorXd& z, int M, double nu) {
        InvariantCurve c;
        c.coeffs = Eigen::MatrixXd::Zero(z.size(), 2 * M + 1);
        c.coeffs.col(0) = z;
        c.center = z;
        c.nu = nu;
        c.residual = c.refined_residual = 0.0;
        return c;
    }
};

/// Distance between two coefficient sets after padding to a common order.
inline double coefficient_distance(const Eigen::MatrixXd& c1, const Eigen::MatrixXd& c2) {
    const int M = std::max(static_cast<int>(c1.cols() - 1) / 2, static_cast<int>(c2.cols() - 1) / 2);
    return (fourier::resize(c1, M) - fourier::resize(c2, M)).norm();
}

// ---------------------------------------------------------------------------
// Geometry on a curve

/// Parameter of the point of the curve closest to y: dense sampling, then
/// Newton on (x(t) - y) . x'(t) = 0.
inline double project_to_curve(const InvariantCurve& c, const Eigen::VectorXd& y, int samples = 0) {
    const int M = c.order();
    if (samples <= 0) samples = 8 * (2 * M + 1);
    double best_t = 0.0, best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < samples; ++j) {
        const double t = fourier::kTwoPi * j / samples;
        const double d2 = (c(t) - y).squaredNorm();
        if (d2 < best) {
            best = d2;
            best_t = t;
        }
    }
    double t = best_t;
    const double h = fourier::kTwoPi / samples;
    for (int it = 0; it < 30; ++it) {
        const Eigen::VectorXd r = c(t) - y, d1 = c.derivative(t, 1), d2 = c.derivative(t, 2);
        const double g = r.dot(d1), gp = d1.squaredNorm() + r.dot(d2);
        if (!(gp > 0.0)) break;
        const double step = std::clamp(-g / gp, -h, h);
        t += step;
        if (std::abs(step) < 1e-15) break;
    }
    return fourier::wrap_angle(t);
}

/// min over theta of |x(theta) - z|.
inline double distance_to_point(const InvariantCurve& c, const Eigen::VectorXd& z) {
    return (c(project_to_curve(c, z, 32 * (2 * c.order() + 1))) - z).norm();
}

/// Symmetric Hausdorff distance between two curves, sampled on n points each.
inline double hausdorff_distance(const InvariantCurve& c1, const InvariantCurve& c2, int n = 256) {
    double h = 0.0;
    for (int j = 0; j < n; ++j) {
        const double t = fourier::kTwoPi * j / n;
        const Eigen::VectorXd p1 = c1(t), p2 = c2(t);
        h = std::max(h, (c2(project_to_curve(c2, p1)) - p1).norm());
        h = std::max(h, (c1(project_to_curve(c1, p2)) - p2).norm());
    }
    return h;
}

inline double phase_condition(const InvariantCurve& c, const Eigen::VectorXd& e) {
    return e.dot(c(0.0) - c.center);
}

/// Smallest |nu - 2 pi p / q| over q <= qmax; the matching q is written out.
inline double resonance_gap(double nu, int qmax, int* q_out = nullptr, int* p_out = nullptr) {
    nu = fourier::wrap_angle(nu);
    double best = std::numeric_limits<double>::infinity();
    for (int q = 1; q <= qmax; ++q)
        for (int p = 0; p <= q; ++p) {
            const double g = std::abs(nu - fourier::kTwoPi * p / q);
            if (g < best) {
                best = g;
                if (q_out) *q_out = q;
                if (p_out) *p_out = p;
            }
        }
    return best;
}

// ---------------------------------------------------------------------------
// Invariance equation

struct ResidualReport {
    /// Stacked P(x(theta_j)) - x(theta_j + nu), point by point.
    Eigen::VectorXd values;
    /// Largest per-point Euclidean error.
    double max_norm = 0.0;
    bool valid = true;
    int escaped_points = 0;
};

template <int Dim>
ResidualReport invariance_residual(const Flow<Dim>& flow, const InvariantCurve& c, int refine = 1) {
    constexpr int N = 2 * Dim;
    if (c.dim() != N) throw ConfigError("curve dimension does not match the flow");
    if (!c.coeffs.allFinite()) throw std::invalid_argument("curve coefficients are not finite");
    const auto theta = fourier::mesh(c.order(), refine);
    const std::size_t n = theta.size();
    ResidualReport rep;
    rep.values.resize(static_cast<Eigen::Index>(n * N));
    std::vector<char> escaped(n, 0);
    parallel_for(n, [&](std::size_t j) {
        const StateVec<Dim> x = c(theta[j]);
        const auto r = flow.map(x, 1);
        if (r.escaped) {
            escaped[j] = 1;
            rep.values.segment(static_cast<Eigen::Index>(j * N), N).setConstant(
                std::numeric_limits<double>::infinity());
            return;
        }
        rep.values.segment(static_cast<Eigen::Index>(j * N), N) = r.state.packed() - c(theta[j] + c.nu);
    });
    for (std::size_t j = 0; j < n; ++j) {
        if (escaped[j]) {
            ++rep.escaped_points;
            rep.valid = false;
            continue;
        }
        rep.max_norm = std::max(rep.max_norm, rep.values.segment(static_cast<Eigen::Index>(j * N), N).norm());
    }
    if (!rep.valid) rep.max_norm = std::numeric_limits<double>::infinity();
    return rep;
}

template <int Dim>
ResidualReport invariance_residual(const SystemConfig& cfg, const IntegratorSettings& settings,
                                   const InvariantCurve& c, int refine = 1) {
    return invariance_residual<Dim>(Flow<Dim>(cfg, settings), c, refine);
}

// ---------------------------------------------------------------------------
// Newton solve

enum class ConstraintKind {
    /// |a_1|^2 + |b_1|^2 = delta^2, for the first curve off the fixed point.
    amplitude,
    /// |alpha - alpha_ref|^2 = delta^2, for continuation.
    distance,
    /// nu held at a target value.
    frequency,
};

struct CurveConstraint {
    ConstraintKind kind = ConstraintKind::amplitude;
    double delta = 1e-2;
    Eigen::MatrixXd reference;
    double nu = 0.0;

    static CurveConstraint amplitude(double delta) { return {ConstraintKind::amplitude, delta, {}, 0.0}; }
    static CurveConstraint distance(const InvariantCurve& ref, double delta) {
        return {ConstraintKind::distance, delta, ref.coeffs, 0.0};
    }
    static CurveConstraint frequency(double nu) { return {ConstraintKind::frequency, 0.0, {}, nu}; }
};

struct CurveSolveOptions {
    int max_iter = 12;
    /// Consecutive iterations without halving the residual before giving up.
    int max_stalls = 2;
    /// Max-abs of the stacked zero function at which Newton stops.
    double tol = 1e-11;
    /// A residual below this that no longer halves is accepted as converged.
    double floor = 5e-10;
    double redundant_tol = 1e-6;
    /// Phase-space axis fixing the curve origin; -1 selects p_x.
    int phase_axis = -1;
    double resonance_tol = 1e-6;
    int resonance_qmax = 12;
};

template <int Dim>
InvariantCurve solve_curve(const Flow<Dim>& flow, const InvariantCurve& guess, const CurveConstraint& con,
                           const CurveSolveOptions& opt = {}) {
    constexpr int N = 2 * Dim;
    if (guess.dim() != N || guess.center.size() != N) throw ConfigError("curve dimension does not match the flow");
    const int M = guess.order();
    if (M < 1) throw std::invalid_argument("curve order must be at least 1");
    const int K = 2 * M + 1, na = N * K;
    const int e = opt.phase_axis < 0 ? Dim : opt.phase_axis;
    if (e >= N) throw std::invalid_argument("phase axis out of range");

    const auto theta = fourier::mesh(M);
    const Eigen::MatrixXd S = fourier::synthesis(theta, M);
    Eigen::VectorXd ref;
    if (con.kind == ConstraintKind::distance) {
        if (con.reference.rows() != N) throw std::invalid_argument("reference curve dimension mismatch");
        const Eigen::MatrixXd r = fourier::resize(con.reference, M);
        ref = Eigen::Map<const Eigen::VectorXd>(r.data(), r.size());
    }

    Eigen::VectorXd alpha = guess.flat();
    double nu = guess.nu;
    std::vector<StateVec<Dim>> img(static_cast<std::size_t>(K));
    std::vector<StateMat<Dim>> tan(static_cast<std::size_t>(K));
    Eigen::VectorXd F(na + 2);
    Eigen::MatrixXd J(na + 2, na + 1);
    double prev = std::numeric_limits<double>::infinity();
    double first = 0.0;
    int stalls = 0;

    for (int it = 0;; ++it) {
        const Eigen::Map<const Eigen::MatrixXd> C(alpha.data(), N, K);
        parallel_for(static_cast<std::size_t>(K), [&](std::size_t j) {
            const StateVec<Dim> x = C * S.col(static_cast<Eigen::Index>(j));
            const auto r = flow.map(x, 1, Direction::forward, true);
            if (r.escaped) throw ConvergenceError("curve mesh point escaped during the period map", alpha);
            img[j] = r.state.packed();
            tan[j] = *r.tangent;
        });

        J.setZero();
        for (int j = 0; j < K; ++j) {
            const Eigen::VectorXd bs = fourier::basis(theta[static_cast<std::size_t>(j)] + nu, M);
            const Eigen::VectorXd dbs = fourier::basis(theta[static_cast<std::size_t>(j)] + nu, M, 1);
            F.segment(j * N, N) = img[static_cast<std::size_t>(j)] - C * bs;
            for (int c = 0; c < K; ++c) {
                auto blk = J.block(j * N, c * N, N, N);
                blk = S(c, j) * tan[static_cast<std::size_t>(j)];
                blk.diagonal().array() -= bs[c];
            }
            J.block(j * N, na, N, 1) = -(C * dbs);
        }
        F[na] = C.row(e).head(M + 1).sum() - guess.center[e];
        for (int c = 0; c <= M; ++c) J(na, c * N + e) = 1.0;
        switch (con.kind) {
            case ConstraintKind::amplitude: {
                const Eigen::VectorXd a1 = C.col(1), b1 = C.col(M + 1);
                F[na + 1] = a1.squaredNorm() + b1.squaredNorm() - con.delta * con.delta;
                J.block(na + 1, N, 1, N) = 2.0 * a1.transpose();
                J.block(na + 1, (M + 1) * N, 1, N) = 2.0 * b1.transpose();
                break;
            }
            case ConstraintKind::distance: {
                const Eigen::VectorXd d = alpha - ref;
                F[na + 1] = d.squaredNorm() - con.delta * con.delta;
                J.block(na + 1, 0, 1, na) = 2.0 * d.transpose();
                break;
            }
            case ConstraintKind::frequency:
                F[na + 1] = nu - con.nu;
                J(na + 1, na) = 1.0;
                break;
        }

        const double res = F.cwiseAbs().maxCoeff();
        if (!std::isfinite(res)) throw ConvergenceError("curve Newton produced a non-finite residual", alpha);
        if (it == 0) first = res;
        const auto sol = solve_full_pivot(J, -F);
        const bool converged = res < opt.tol || (res < opt.floor && res > 0.5 * prev);
        if (converged) {
            const double redundant = sol.redundant.cwiseAbs().maxCoeff();
            if (redundant > opt.redundant_tol)
                throw InconsistentSystemError("redundant equation does not reduce to 0 = 0 (" +
                                                  std::to_string(redundant) + ")",
                                              alpha);
            InvariantCurve out = guess;
            out.coeffs = C;
            out.nu = fourier::wrap_angle(nu);
            out.iterations = it;
            out.redundant_residual = redundant;
            out.phase_residual = std::abs(F[na]);
            out.residual = 0.0;
            for (int j = 0; j < K; ++j) out.residual = std::max(out.residual, F.segment(j * N, N).norm());
            out.stability.reset();
            out.refined_residual = std::numeric_limits<double>::infinity();
            out.dist = distance_to_point(out, out.center);
            int q = 0, p = 0;
            if (resonance_gap(out.nu, opt.resonance_qmax, &q, &p) < opt.resonance_tol)
                throw ResonanceError("rotation number within resonance tolerance of 2pi*" + std::to_string(p) + "/" +
                                         std::to_string(q),
                                     alpha);
            return out;
        }
        if (it >= opt.max_iter)
            throw ConvergenceError("curve Newton did not converge in " + std::to_string(opt.max_iter) +
                                       " iterations (residual " + std::to_string(res) + ")",
                                   alpha);
        if (it > 0 && res > 1e3 * std::max(first, 1e-12))
            throw ConvergenceError("curve Newton diverged", alpha);
        stalls = it > 1 && res > 0.5 * prev ? stalls + 1 : 0;
        if (stalls >= opt.max_stalls)
            throw ConvergenceError("curve Newton stalled at residual " + std::to_string(res), alpha);
        alpha += sol.x.head(na);
        nu += sol.x[na];
        prev = res;
    }
}

struct AdaptiveOrderOptions {
    int max_order = 256;
    /// |a_M| + |b_M| above this doubles M.
    double tail_tol = 1e-10;
    /// Invariance error on the refined mesh above this doubles M.
    double refined_tol = 1e-9;
    int refine = 4;
};

/// solve_curve, doubling M until the tail and the refined-mesh residual are small.
template <int Dim>
InvariantCurve solve_curve_adaptive(const Flow<Dim>& flow, InvariantCurve guess, const CurveConstraint& con,
                                    const CurveSolveOptions& opt = {}, const AdaptiveOrderOptions& ad = {}) {
    for (;;) {
        InvariantCurve c = solve_curve(flow, guess, con, opt);
        c.refined_residual = invariance_residual(flow, c, ad.refine).max_norm;
        if (c.tail() <= ad.tail_tol && c.refined_residual <= ad.refined_tol) return c;
        const int M = 2 * c.order();
        if (M > ad.max_order)
            {
            char msg[96];
            std::snprintf(msg, sizeof msg, "Fourier order cap reached (tail %.2e, refined residual %.2e)", c.tail(),
                          c.refined_residual);
            throw ConvergenceError(msg);
        }
        guess = c.with_order(M);
    }
}

// ---------------------------------------------------------------------------
// Stability

struct StabilityOptions {
    double unit_tol = 1e-4;
    /// Fraction of eigenvector energy allowed in modes above M/2.
    double smooth_tol = 1e-6;
    /// |Im| / |lambda| below this counts as real.
    double real_tol = 1e-6;
};

namespace detail {

inline double fourier_tail_fraction(const Eigen::VectorXcd& v, int N, int M) {
    double total = 0.0, high = 0.0;
    for (int c = 0; c < 2 * M + 1; ++c) {
        const double e = v.segment(c * N, N).squaredNorm();
        total += e;
        const int k = c <= M ? c : c - M;
        if (2 * k > M) high += e;
    }
    return total > 0.0 ? high / total : 1.0;
}

inline Eigen::MatrixXd real_bundle(const Eigen::VectorXcd& v, int N, int M) {
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    const std::complex<double> ph = std::conj(v[imax]) / std::abs(v[imax]);
    const Eigen::VectorXd r = (v * ph).real();
    Eigen::MatrixXd B = Eigen::Map<const Eigen::MatrixXd>(r.data(), N, 2 * M + 1);
    const double n0 = fourier::evaluate(B, 0.0).norm();
    B /= n0 > 0.0 ? n0 : B.norm();
    return B;
}

inline void align_bundle(Eigen::MatrixXd& B, const Eigen::MatrixXd* previous) {
    if (previous && previous->rows() == B.rows()) {
        const int M = std::max(static_cast<int>(B.cols() - 1) / 2, static_cast<int>(previous->cols() - 1) / 2);
        if ((fourier::resize(B, M).array() * fourier::resize(*previous, M).array()).sum() < 0.0) B = -B;
        return;
    }
    const Eigen::VectorXd v0 = fourier::evaluate(B, 0.0);
    Eigen::Index i = 0;
    v0.cwiseAbs().maxCoeff(&i);
    if (v0[i] < 0.0) B = -B;
}

}  // namespace detail

/// Linear operator on bundle coefficients whose eigenpairs solve
/// DP(x(theta)) Psi(theta) = Lambda Psi(theta + nu).
template <int Dim>
Eigen::MatrixXd stability_operator(const Flow<Dim>& flow, const InvariantCurve& c) {
    constexpr int N = 2 * Dim;
    const int M = c.order(), K = 2 * M + 1;
    const auto theta = fourier::mesh(M);
    const Eigen::MatrixXd S = fourier::synthesis(theta, M);
    const Eigen::MatrixXd G = fourier::rotation(M, -c.nu) * fourier::analysis(M);
    std::vector<StateMat<Dim>> tan(static_cast<std::size_t>(K));
    parallel_for(static_cast<std::size_t>(K), [&](std::size_t j) {
        const auto r = flow.map(StateVec<Dim>(c(theta[j])), 1, Direction::forward, true);
        if (r.escaped) throw DegeneracyError("curve point escaped while building the stability operator");
        tan[j] = *r.tangent;
    });
    // T(j, c') = S(c', j) DP_j, then L = (G kron I) T.
    Eigen::MatrixXd T(N * K, N * K);
    for (int j = 0; j < K; ++j)
        for (int cc = 0; cc < K; ++cc) T.block(j * N, cc * N, N, N) = S(cc, j) * tan[static_cast<std::size_t>(j)];
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(N * K, N * K);
    for (int r = 0; r < K; ++r)
        for (int j = 0; j < K; ++j) {
            const double g = G(r, j);
            if (g != 0.0) L.middleRows(r * N, N).noalias() += g * T.middleRows(j * N, N);
        }
    return L;
}

template <int Dim>
CurveStability curve_stability(const Flow<Dim>& flow, const InvariantCurve& c, const StabilityOptions& opt = {},
                               const CurveStability* previous = nullptr) {
    constexpr int N = 2 * Dim;
    const int M = c.order();
    const Eigen::MatrixXd L = stability_operator(flow, c);
    Eigen::EigenSolver<Eigen::MatrixXd> es(L);
    if (es.info() != Eigen::Success) throw DegeneracyError("stability eigensolver failed");
    const Eigen::VectorXcd vals = es.eigenvalues();
    const Eigen::MatrixXcd vecs = es.eigenvectors();

    CurveStability out;
    std::vector<int> unit;
    int iu = -1, is = -1;
    double tu = std::numeric_limits<double>::infinity(), ts = tu;
    for (int i = 0; i < vals.size(); ++i) {
        const double tail = detail::fourier_tail_fraction(vecs.col(i), N, M);
        if (tail > opt.smooth_tol) continue;
        ++out.smooth_count;
        const std::complex<double> l = vals[i];
        if (std::abs(l - 1.0) < opt.unit_tol) {
            unit.push_back(i);
            continue;
        }
        if (std::abs(l.imag()) > opt.real_tol * std::abs(l)) continue;
        if (std::abs(l) > 1.0 + opt.unit_tol && tail < tu) {
            tu = tail;
            iu = i;
        } else if (std::abs(l) < 1.0 - opt.unit_tol && tail < ts) {
            ts = tail;
            is = i;
        }
    }
    if (unit.size() != 2)
        throw DegeneracyError("expected exactly two unit eigenvalues, found " + std::to_string(unit.size()));
    if (iu < 0 || is < 0) throw DegeneracyError("no smooth real eigenvalue pair off the unit circle");
    out.unit_eigs = {vals[unit[0]], vals[unit[1]]};
    out.lambda_u = vals[iu].real();
    out.lambda_s = vals[is].real();
    out.bundle_u = detail::real_bundle(vecs.col(iu), N, M);
    out.bundle_s = detail::real_bundle(vecs.col(is), N, M);
    detail::align_bundle(out.bundle_u, previous ? &previous->bundle_u : nullptr);
    detail::align_bundle(out.bundle_s, previous ? &previous->bundle_s : nullptr);
    return out;
}

/// Angle between two bundles' coefficient vectors.
inline double bundle_angle(const Eigen::MatrixXd& b1, const Eigen::MatrixXd& b2) {
    const int M = std::max(static_cast<int>(b1.cols() - 1) / 2, static_cast<int>(b2.cols() - 1) / 2);
    const Eigen::MatrixXd x = fourier::resize(b1, M), y = fourier::resize(b2, M);
    const double c = (x.array() * y.array()).sum() / (x.norm() * y.norm());
    return std::acos(std::clamp(c, -1.0, 1.0));
}

// ---------------------------------------------------------------------------
// Rotation number by weighted Birkhoff averaging

/// Iterates P from points of the curve, projecting each image back onto the
/// curve and restarting from the projection; returns the smoothly weighted
/// mean of the parameter advance.
template <int Dim>
double birkhoff_rotation_number(const Flow<Dim>& flow, const InvariantCurve& c, int iterates = 10000) {
    if (iterates < 2) throw std::invalid_argument("need at least two iterates");
    double theta = 0.0, num = 0.0, den = 0.0;
    for (int n = 0; n < iterates; ++n) {
        const auto r = flow.map(StateVec<Dim>(c(theta)), 1);
        if (r.escaped) throw ConvergenceError("orbit on the curve escaped");
        const double next = project_to_curve(c, r.state.packed());
        const double adv = fourier::wrap_angle(next - theta);
        const double t = (n + 0.5) / iterates;
        const double w = std::exp(-1.0 / (t * (1.0 - t)));
        num += w * adv;
        den += w;
        theta = next;
    }
    return num / den;
}

// ---------------------------------------------------------------------------
// Continuation

struct ContinuationOptions {
    double delta = 1e-2;
    double delta_min = 1e-6;
    double delta_max = 0.1;
    /// A success in at most this many Newton iterations counts as easy.
    int easy_iterations = 4;
    /// Easy successes in a row before delta doubles.
    int easy_streak = 3;
    int initial_order = 16;
    /// Accepted deviation of the first curve's nu from the elliptic angle.
    double first_nu_window = 0.5;
    /// Amplitude |a_1| of the first curve; 0 uses delta.
    double first_amplitude = 0.0;
    bool compute_stability = true;
    CurveSolveOptions solve;
    AdaptiveOrderOptions adapt;
    StabilityOptions stability;
    /// Called after each accepted curve.
    std::function<void(const InvariantCurve&)> on_curve;
};

struct ContinuationState {
    double delta = 0.0;
    std::vector<InvariantCurve> family;
    int predictor_order = 1;
    std::string termination;
    int newton_failures = 0;
    std::vector<std::string> log;
};

struct EllipticPair {
    double nu0 = 0.0;
    Eigen::VectorXcd vector;
};

/// The transverse elliptic pair of a fixed point: e^{i nu0}, nu0 in (0, pi).
inline EllipticPair elliptic_pair(const FixedPointOrbit& orbit, double tol = 1e-6) {
    for (int i = 0; i < orbit.eigenvalues.size(); ++i) {
        const std::complex<double> l = orbit.eigenvalues[i];
        if (std::abs(std::abs(l) - 1.0) < tol && l.imag() > tol) return {std::arg(l), orbit.eigenvectors.col(i)};
    }
    throw ConfigError("fixed point '" + orbit.label + "' has no elliptic pair");
}

/// First curve off the fixed point under |a_1|^2 + |b_1|^2 = delta^2. The
/// eigenvector seeds (a_1, b_1) = delta (Re v, Im v); if that does not
/// converge to a rotation near the elliptic angle the swapped seed is used.
template <int Dim>
InvariantCurve first_curve(const Flow<Dim>& flow, const FixedPointOrbit& orbit, double delta,
                           const ContinuationOptions& opt = {}) {
    const auto pair = elliptic_pair(orbit);
    Eigen::VectorXcd v = pair.vector;
    v /= std::sqrt(v.real().squaredNorm() + v.imag().squaredNorm());
    const Eigen::VectorXd re = v.real(), im = v.imag();
    const int M = opt.initial_order;
    std::string why;
    for (int swap = 0; swap < 2; ++swap) {
        InvariantCurve g = InvariantCurve::constant(orbit.z_star, M, pair.nu0);
        g.coeffs.col(1) = delta * (swap ? im : re);
        g.coeffs.col(M + 1) = delta * (swap ? re : im);
        try {
            InvariantCurve c = solve_curve_adaptive(flow, g, CurveConstraint::amplitude(delta), opt.solve, opt.adapt);
            const double dnu = std::abs(std::remainder(c.nu - pair.nu0, fourier::kTwoPi));
            if (dnu < opt.first_nu_window) return c;
            why = "rotation number " + std::to_string(c.nu) + " far from the elliptic angle";
        } catch (const std::runtime_error& ex) {
            why = ex.what();
        }
    }
    throw ConvergenceError("first invariant curve failed for both seed orientations: " + why);
}

template <int Dim>
ContinuationState continue_family(const Flow<Dim>& flow, const FixedPointOrbit& orbit, int n_curves,
                                  const ContinuationOptions& opt = {}) {
    if (orbit.d != Dim) throw ConfigError("orbit dimension does not match the flow");
    if (n_curves < 1) throw std::invalid_argument("n_curves must be positive");
    const auto pair = elliptic_pair(orbit);

    ContinuationState st;
    st.delta = opt.delta;
    auto accept = [&](InvariantCurve c) {
        if (opt.compute_stability) {
            const CurveStability* prev =
                st.family.empty() || !st.family.back().stability ? nullptr : &*st.family.back().stability;
            c.stability = curve_stability(flow, c, opt.stability, prev);
        }
        st.family.push_back(std::move(c));
        if (opt.on_curve) opt.on_curve(st.family.back());
    };

    double amp = opt.first_amplitude > 0.0 ? opt.first_amplitude : opt.delta;
    for (;;) {
        try {
            accept(first_curve(flow, orbit, amp, opt));
            break;
        } catch (const std::runtime_error& ex) {
            ++st.newton_failures;
            st.log.push_back("first curve at amplitude " + std::to_string(amp) + ": " + ex.what());
            amp *= 0.5;
            if (amp < opt.delta_min) {
                st.termination = "step underflow before the first curve";
                return st;
            }
        }
    }

    const InvariantCurve origin = InvariantCurve::constant(orbit.z_star, opt.initial_order, pair.nu0);
    int easy = 0;
    while (static_cast<int>(st.family.size()) < n_curves) {
        const InvariantCurve& c1 = st.family.back();
        const InvariantCurve& c0 = st.family.size() > 1 ? st.family[st.family.size() - 2] : origin;
        const int M = std::max(c1.order(), c0.order());
        const Eigen::MatrixXd A1 = fourier::resize(c1.coeffs, M), A0 = fourier::resize(c0.coeffs, M);
        const double span = (A1 - A0).norm();
        InvariantCurve guess = c1.with_order(M);
        guess.coeffs = A1 + (st.delta / span) * (A1 - A0);
        guess.nu = c1.nu + (st.delta / span) * std::remainder(c1.nu - c0.nu, fourier::kTwoPi);
        try {
            InvariantCurve c = solve_curve_adaptive(flow, guess, CurveConstraint::distance(c1, st.delta), opt.solve,
                                                    opt.adapt);
            const int Mc = std::max(c.order(), M);
            const double forward =
                ((fourier::resize(c.coeffs, Mc) - fourier::resize(A1, Mc)).array() *
                 (fourier::resize(A1, Mc) - fourier::resize(A0, Mc)).array())
                    .sum();
            if (!(forward > 0.0)) throw ConvergenceError("continuation step turned back");
            accept(std::move(c));
            const int iters = st.family.back().iterations;
            easy = iters <= opt.easy_iterations ? easy + 1 : 0;
            if (easy >= opt.easy_streak) {
                st.delta = std::min(2.0 * st.delta, opt.delta_max);
                easy = 0;
            }
        } catch (const std::runtime_error& ex) {
            ++st.newton_failures;
            st.log.push_back("curve " + std::to_string(st.family.size()) + " at delta " + std::to_string(st.delta) +
                             ": " + ex.what());
            easy = 0;
            st.delta *= 0.5;
            if (st.delta < opt.delta_min) {
                st.termination = "family end: step below delta_min after repeated Newton failures";
                break;
            }
        }
    }
    if (st.termination.empty()) st.termination = "requested number of curves reached";

    std::vector<std::size_t> order(st.family.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return st.family[a].dist < st.family[b].dist; });
    std::vector<InvariantCurve> sorted;
    sorted.reserve(order.size());
    for (std::size_t i : order) sorted.push_back(std::move(st.family[i]));
    st.family = std::move(sorted);
    for (std::size_t i = 0; i < st.family.size(); ++i) st.family[i].sigma = static_cast<int>(i);
    return st;
}

}  // namespace recoll

#endif  // RECOLL_INVCURVES_HPP
