// Fixed points of the stroboscopic map (period-T orbits), their monodromy
// spectra, and one-dimensional stable/unstable manifolds in d = 1.

#ifndef RECOLL_PORBITS_HPP
#define RECOLL_PORBITS_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "recoll/flow.hpp"
#include "recoll/parallel.hpp"

namespace recoll {

class ConvergenceError : public std::runtime_error {
  public:
    ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate = {})
        : std::runtime_error(what), last_(std::move(last_iterate)) {}
    const Eigen::VectorXd& last_iterate() const { return last_; }

  private:
    Eigen::VectorXd last_;
};

struct FixedPointOrbit {
    int d = 1;
    std::string label;
    Eigen::VectorXd z_star;
    Eigen::MatrixXd monodromy;
    Eigen::VectorXcd eigenvalues;
    Eigen::MatrixXcd eigenvectors;
    double residual = 0.0;
    int iterations = 0;
    /// Number of directions dropped from the Newton solve (DP - I singular).
    int kernel_dim = 0;
    /// Free-text provenance of the spectrum, e.g. how angular pairs were obtained.
    std::string note;

    bool degenerate() const { return kernel_dim > 0; }
};

struct FixedPointOptions {
    int max_iter = 50;
    double tol = 1e-11;
    /// Singular values of DP - I below this (relative to the largest) are
    /// treated as a kernel and excluded from the Newton step.
    double kernel_tol = 1e-7;
    double max_step = 2.0;
};

/// Eigen-decomposition of a real monodromy matrix, sorted by decreasing modulus.
inline void attach_spectrum(FixedPointOrbit& orbit) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(orbit.monodromy);
    Eigen::VectorXcd vals = es.eigenvalues();
    Eigen::MatrixXcd vecs = es.eigenvectors();
    std::vector<int> idx(vals.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        const double ma = std::abs(vals[a]), mb = std::abs(vals[b]);
        if (std::abs(ma - mb) > 1e-12 * std::max(ma, mb)) return ma > mb;
        return vals[a].imag() > vals[b].imag();
    });
    orbit.eigenvalues.resize(vals.size());
    orbit.eigenvectors.resize(vecs.rows(), vecs.cols());
    for (int k = 0; k < static_cast<int>(idx.size()); ++k) {
        orbit.eigenvalues[k] = vals[idx[k]];
        orbit.eigenvectors.col(k) = vecs.col(idx[k]);
    }
}

template <int Dim>
FixedPointOrbit find_fixed_point(const SystemConfig& cfg, const IntegratorSettings& settings,
                                 const PhaseState<Dim>& guess, std::string label = {},
                                 const FixedPointOptions& opt = {}) {
    constexpr int N = 2 * Dim;
    const Flow<Dim> flow(cfg, settings);
    StateVec<Dim> z = guess.packed();

    auto evaluate = [&](const StateVec<Dim>& at) {
        auto r = flow.map(at, 1, Direction::forward, true);
        if (r.escaped)
            throw ConvergenceError("fixed-point iterate escaped during the period map",
                                   Eigen::VectorXd(at));
        return r;
    };

    auto r = evaluate(z);
    StateVec<Dim> F = r.state.packed() - z;
    double res = F.norm();
    int kernel = 0;
    int it = 0;
    for (; it < opt.max_iter && res >= opt.tol; ++it) {
        const StateMat<Dim> A = *r.tangent - StateMat<Dim>::Identity();
        Eigen::JacobiSVD<Eigen::Matrix<double, N, N>> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const auto& sv = svd.singularValues();
        kernel = 0;
        Eigen::Matrix<double, N, 1> coef = svd.matrixU().transpose() * F;
        for (int k = 0; k < N; ++k) {
            if (sv[k] <= opt.kernel_tol * sv[0]) {
                coef[k] = 0.0;
                ++kernel;
            } else {
                coef[k] /= sv[k];
            }
        }
        StateVec<Dim> dz = -(svd.matrixV() * coef);
        if (const double n = dz.norm(); n > opt.max_step) dz *= opt.max_step / n;

        // Backtrack while the residual grows.
        double lambda = 1.0;
        for (int b = 0;; ++b) {
            const StateVec<Dim> trial = z + lambda * dz;
            std::optional<MapResult<Dim>> rt;
            try {
                rt = evaluate(trial);
            } catch (const ConvergenceError&) {
                if (b >= 8) throw;
                lambda *= 0.5;
                continue;
            }
            const StateVec<Dim> Ft = rt->state.packed() - trial;
            if (Ft.norm() < res || b >= 8) {
                z = trial;
                r = *rt;
                F = Ft;
                res = Ft.norm();
                break;
            }
            lambda *= 0.5;
        }
        if (!std::isfinite(res)) throw ConvergenceError("fixed-point Newton produced non-finite residual", z);
    }
    if (res >= opt.tol && res > 1e-9)
        throw ConvergenceError("fixed-point Newton did not converge in " + std::to_string(opt.max_iter) +
                                   " iterations (residual " + std::to_string(res) + ")",
                               Eigen::VectorXd(z));

    // Report degeneracy at the converged point even when no Newton step was taken.
    {
        const StateMat<Dim> A = *r.tangent - StateMat<Dim>::Identity();
        Eigen::JacobiSVD<Eigen::Matrix<double, N, N>> svd(A);
        const auto& sv = svd.singularValues();
        kernel = 0;
        for (int k = 0; k < N; ++k)
            if (sv[k] <= opt.kernel_tol * std::max(sv[0], 1e-300)) ++kernel;
    }

    FixedPointOrbit orbit;
    orbit.d = Dim;
    orbit.label = std::move(label);
    orbit.z_star = z;
    orbit.monodromy = *r.tangent;
    orbit.residual = res;
    orbit.iterations = it;
    orbit.kernel_dim = kernel;
    attach_spectrum(orbit);
    return orbit;
}

/// Runtime-dimension entry point; dispatches on the length of `guess`.
inline FixedPointOrbit find_fixed_point(const SystemConfig& cfg, const IntegratorSettings& settings,
                                        const Eigen::VectorXd& guess, std::string label = {},
                                        const FixedPointOptions& opt = {}) {
    if (guess.size() != 2 * cfg.d)
        throw ConfigError("guess has " + std::to_string(guess.size()) + " components, expected " +
                          std::to_string(2 * cfg.d));
    switch (cfg.d) {
        case 1: return find_fixed_point<1>(cfg, settings, PhaseState<1>::from_packed(guess), std::move(label), opt);
        case 2: return find_fixed_point<2>(cfg, settings, PhaseState<2>::from_packed(guess), std::move(label), opt);
        case 3: return find_fixed_point<3>(cfg, settings, PhaseState<3>::from_packed(guess), std::move(label), opt);
        default: throw ConfigError("unsupported dimension");
    }
}

// ---------------------------------------------------------------------------
// Classification

enum class PairType { hyperbolic, elliptic, parabolic, complex_unstable };

inline const char* to_string(PairType t) {
    switch (t) {
        case PairType::hyperbolic: return "hyperbolic";
        case PairType::elliptic: return "elliptic";
        case PairType::parabolic: return "parabolic";
        case PairType::complex_unstable: return "complex-unstable";
    }
    return "?";
}

struct EigenPair {
    std::complex<double> first, second;
    int first_index = -1, second_index = -1;
    PairType type = PairType::hyperbolic;
    /// Which phase-space subspace carries the pair's eigenvectors:
    /// "polarization" (x, p_x), "transverse", or "mixed".
    std::string subspace;
};

struct Classification {
    std::vector<EigenPair> pairs;
    /// Tags joined with " x ", e.g. "hyperbolic x elliptic".
    std::string orbit_class;
    bool symplectic_pairs = true;
};

struct ClassifyOptions {
    double tol_parab = 1e-6;
    double tol_unit = 1e-6;
    double tol_real = 1e-9;
};

namespace detail {

inline std::string eigen_subspace(const Eigen::VectorXcd& v, int d) {
    if (v.size() == 0) return "unknown";
    double along = std::norm(v[0]) + std::norm(v[d]);
    const double total = v.squaredNorm();
    if (d == 1 || total == 0.0) return "polarization";
    const double frac = along / total;
    if (frac > 0.99) return "polarization";
    if (frac < 0.01) return "transverse";
    return "mixed";
}

}  // namespace detail

inline Classification classify(const FixedPointOrbit& orbit, const ClassifyOptions& opt = {}) {
    Classification out;
    const int n = static_cast<int>(orbit.eigenvalues.size());
    std::vector<bool> used(n, false);
    for (int i = 0; i < n; ++i) {
        if (used[i]) continue;
        used[i] = true;
        int best = -1;
        double best_err = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            if (used[j]) continue;
            const double err = std::abs(orbit.eigenvalues[i] * orbit.eigenvalues[j] - 1.0);
            if (err < best_err) {
                best_err = err;
                best = j;
            }
        }
        EigenPair pair;
        pair.first = orbit.eigenvalues[i];
        pair.first_index = i;
        if (best >= 0) {
            used[best] = true;
            pair.second = orbit.eigenvalues[best];
            pair.second_index = best;
            if (best_err > 1e-6) out.symplectic_pairs = false;
        } else {
            pair.second = std::complex<double>(std::numeric_limits<double>::quiet_NaN(), 0.0);
            out.symplectic_pairs = false;
        }
        const auto l1 = pair.first, l2 = pair.second;
        const bool near_one = std::abs(l1 - 1.0) < std::sqrt(opt.tol_parab) && std::abs(l2 - 1.0) < std::sqrt(opt.tol_parab);
        const bool mean_one = std::abs(0.5 * (l1 + l2) - 1.0) < opt.tol_parab;
        const bool real = std::abs(l1.imag()) <= opt.tol_real * std::abs(l1) && std::abs(l2.imag()) <= opt.tol_real * std::abs(l2);
        if (near_one && mean_one) {
            pair.type = PairType::parabolic;
        } else if (real) {
            pair.type = PairType::hyperbolic;
        } else if (std::abs(std::abs(l1) - 1.0) < opt.tol_unit && std::abs(std::abs(l2) - 1.0) < opt.tol_unit) {
            pair.type = PairType::elliptic;
        } else {
            pair.type = PairType::complex_unstable;
        }
        if (orbit.eigenvectors.cols() == n) {
            Eigen::VectorXcd v = orbit.eigenvectors.col(i);
            if (pair.second_index >= 0) v += orbit.eigenvectors.col(pair.second_index);
            pair.subspace = detail::eigen_subspace(v, orbit.d);
        }
        out.pairs.push_back(pair);
    }
    // Polarization-plane pairs first, then the rest in spectral order.
    std::stable_sort(out.pairs.begin(), out.pairs.end(), [](const EigenPair& a, const EigenPair& b) {
        auto rank = [](const EigenPair& p) {
            if (p.type == PairType::parabolic) return 2;
            return p.subspace == "polarization" ? 0 : 1;
        };
        return rank(a) < rank(b);
    });
    for (std::size_t k = 0; k < out.pairs.size(); ++k) {
        if (k) out.orbit_class += " x ";
        out.orbit_class += to_string(out.pairs[k].type);
    }
    return out;
}

/// Lifts a d = 2 fixed point lying in the (x, y) plane to d = 3, the way the
/// polar (x, rho, theta) description sees it. For off-axis orbits the d = 3
/// Cartesian monodromy is integrated directly; its rotational symmetry about
/// the polarization axis yields the angular unit pair. For on-axis orbits
/// (rho = 0) the transverse block appears twice in Cartesian coordinates; the
/// polar description keeps one copy as the rho pair and replaces the other by
/// the unit pair of the cyclic angle, whose momentum p_theta is conserved.
inline FixedPointOrbit embed_in_three_dimensions(const SystemConfig& cfg2, const IntegratorSettings& settings,
                                                 const FixedPointOrbit& planar) {
    if (planar.d != 2) throw ConfigError("embedding expects a d = 2 orbit");
    SystemConfig cfg3 = cfg2;
    cfg3.d = 3;
    StateVec<3> z = StateVec<3>::Zero();
    z[0] = planar.z_star[0];
    z[1] = planar.z_star[1];
    z[3] = planar.z_star[2];
    z[4] = planar.z_star[3];
    const Flow<3> flow(cfg3, settings);
    const auto r = flow.map(z, 1, Direction::forward, true);
    if (r.escaped) throw ConvergenceError("embedded orbit escaped", Eigen::VectorXd(z));

    FixedPointOrbit out;
    out.d = 3;
    out.label = planar.label;
    out.z_star = z;
    out.monodromy = *r.tangent;
    out.residual = (r.state.packed() - z).norm();
    const bool on_axis = std::hypot(z[1], z[2]) < kMinPolarRadius && std::hypot(z[4], z[5]) < kMinPolarRadius;
    if (!on_axis) {
        attach_spectrum(out);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.monodromy - Eigen::MatrixXd::Identity(6, 6));
        const auto& sv = svd.singularValues();
        for (int k = 0; k < sv.size(); ++k)
            if (sv[k] <= 1e-7 * sv[0]) ++out.kernel_dim;
        out.note = "cartesian d=3 monodromy; angular pair from rotational symmetry";
        return out;
    }
    // Cartesian ordering (x, y, z, px, py, pz): the (z, pz) block duplicates (y, py).
    // Build the polar-frame monodromy (x, rho, theta, px, prho, ptheta): the rho
    // block is the transverse block, theta/p_theta evolve by the identity.
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(6, 6);
    const Eigen::MatrixXd& C = out.monodromy;
    const int cart[4] = {0, 1, 3, 4};   // x, y, px, py in d=3 Cartesian
    const int polar[4] = {0, 1, 3, 4};  // x, rho, px, prho in polar
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) M(polar[i], polar[j]) = C(cart[i], cart[j]);
    M(2, 2) = 1.0;
    M(5, 5) = 1.0;
    out.monodromy = M;
    out.z_star = z;  // unchanged; rho = theta = 0 on the axis
    out.kernel_dim = 2;
    out.note = "on-axis orbit; polar frame, unit angular pair from p_theta conservation";
    attach_spectrum(out);
    return out;
}

// ---------------------------------------------------------------------------
// Recurrence scan: local minima of |P(z) - z| on a two-parameter family of
// initial conditions. Used to produce Newton guesses.

struct RecurrenceCandidate {
    Eigen::VectorXd z;
    double recurrence = 0.0;
};

template <int Dim>
std::vector<RecurrenceCandidate> recurrence_minima(const SystemConfig& cfg, const IntegratorSettings& settings,
                                                   const StateVec<Dim>& base, int axis1, double lo1, double hi1,
                                                   int n1, int axis2, double lo2, double hi2, int n2,
                                                   double threshold) {
    const Flow<Dim> flow(cfg, settings);
    std::vector<double> rec(static_cast<std::size_t>(n1) * n2, std::numeric_limits<double>::infinity());
    auto point = [&](int i, int j) {
        StateVec<Dim> z = base;
        z[axis1] = lo1 + (hi1 - lo1) * i / (n1 - 1);
        z[axis2] = lo2 + (hi2 - lo2) * j / (n2 - 1);
        return z;
    };
    parallel_for(rec.size(), [&](std::size_t k) {
        const int i = static_cast<int>(k % n1), j = static_cast<int>(k / n1);
        const auto z = point(i, j);
        try {
            const auto r = flow.map(z, 1);
            if (!r.escaped) rec[k] = (r.state.packed() - z).norm();
        } catch (const IntegrationError&) {
        }
    });
    std::vector<RecurrenceCandidate> out;
    for (int j = 1; j + 1 < n2; ++j)
        for (int i = 1; i + 1 < n1; ++i) {
            const double v = rec[static_cast<std::size_t>(j) * n1 + i];
            if (!(v < threshold)) continue;
            bool minimum = true;
            for (int dj = -1; dj <= 1 && minimum; ++dj)
                for (int di = -1; di <= 1; ++di)
                    if ((di || dj) && rec[static_cast<std::size_t>(j + dj) * n1 + i + di] < v) {
                        minimum = false;
                        break;
                    }
            if (minimum) out.push_back({point(i, j), v});
        }
    std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.recurrence < b.recurrence; });
    return out;
}

// ---------------------------------------------------------------------------
// One-dimensional invariant manifolds of saddle fixed points (d = 1).

enum class ManifoldSide { stable, unstable };

inline const char* to_string(ManifoldSide s) { return s == ManifoldSide::stable ? "stable" : "unstable"; }

struct ManifoldGrowthOptions {
    /// Offset of the first seed from the fixed point along the eigenvector.
    double h = 1e-6;
    double max_spacing = 0.05;
    double max_angle = 0.3;
    /// Pre-image spacing below which no further refinement is attempted.
    double min_spacing = 1e-12;
    int seed_points = 16;
    std::size_t max_points = 400000;
    int max_segments = 400;
};

struct ManifoldBranch1D {
    ManifoldSide orientation = ManifoldSide::unstable;
    int sign = 1;
    std::vector<Eigen::Vector2d> points;
    std::vector<double> arclength;
    /// Eigenvalue driving the growth (|value| > 1 in the growth direction).
    double multiplier = 0.0;
    bool escaped = false;
    int segments = 0;
};

namespace detail {

inline Eigen::Vector2d catmull_rom(const std::vector<Eigen::Vector2d>& p, std::size_t i, double u) {
    const auto& p1 = p[i];
    const auto& p2 = p[i + 1];
    const Eigen::Vector2d p0 = i > 0 ? p[i - 1] : 2.0 * p1 - p2;
    const Eigen::Vector2d p3 = i + 2 < p.size() ? p[i + 2] : 2.0 * p2 - p1;
    const double u2 = u * u, u3 = u2 * u;
    return 0.5 * ((2.0 * p1) + (-p0 + p2) * u + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2 +
                  (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u3);
}

inline double turn_angle(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    const Eigen::Vector2d u = b - a, v = c - b;
    const double nu = u.norm(), nv = v.norm();
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return std::acos(std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0));
}

}  // namespace detail

/// Grows one branch of W^s or W^u of a saddle fixed point of the d = 1 map.
/// A fundamental segment [h, mu h] along the eigenvector is mapped repeatedly
/// (P for the unstable side, P^-1 for the stable side). Between consecutive
/// images that are too far apart or turn too sharply, a point is inserted in
/// the pre-image segment by cubic interpolation and mapped once.
inline ManifoldBranch1D grow_manifold_1d(const SystemConfig& cfg, const IntegratorSettings& settings,
                                         const FixedPointOrbit& orbit, ManifoldSide side, int sign,
                                         double arclength_budget, const ManifoldGrowthOptions& opt = {}) {
    if (orbit.d != 1 || cfg.d != 1) throw ConfigError("1D manifold growth requires d = 1");
    if (sign != 1 && sign != -1) throw std::invalid_argument("branch sign must be +1 or -1");
    const auto cls = classify(orbit);
    if (cls.pairs.empty() || cls.pairs[0].type != PairType::hyperbolic)
        throw ConfigError("manifold growth requires a hyperbolic fixed point");

    // Eigenvalues are sorted by decreasing modulus: index 0 unstable, 1 stable.
    const int idx = side == ManifoldSide::unstable ? 0 : 1;
    const double lambda = orbit.eigenvalues[idx].real();
    Eigen::Vector2d v = orbit.eigenvectors.col(idx).real().normalized();
    if (v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0)) v = -v;
    v *= sign;
    const Direction dir = side == ManifoldSide::unstable ? Direction::forward : Direction::backward;
    const double mu_one = side == ManifoldSide::unstable ? lambda : 1.0 / lambda;
    // Orientation-reversing saddles swap branches every iterate: use P^2.
    const int steps = mu_one < 0.0 ? 2 : 1;
    const double mu = steps == 2 ? mu_one * mu_one : mu_one;

    const Flow<1> flow(cfg, settings);
    const Eigen::Vector2d zs = orbit.z_star.head<2>();

    ManifoldBranch1D br;
    br.orientation = side;
    br.sign = sign;
    br.multiplier = mu;

    std::vector<Eigen::Vector2d> seg;
    for (int k = 0; k <= opt.seed_points; ++k) {
        const double s = opt.h * std::pow(mu, static_cast<double>(k) / opt.seed_points);
        seg.push_back(zs + s * v);
    }
    br.points = seg;

    auto image = [&](const Eigen::Vector2d& p, bool& escaped) {
        const auto r = flow.map(p, steps, dir, false);
        escaped = r.escaped;
        return Eigen::Vector2d(r.state.packed());
    };

    double length = 0.0;
    for (std::size_t k = 1; k < br.points.size(); ++k) length += (br.points[k] - br.points[k - 1]).norm();

    for (int s = 0; s < opt.max_segments && length < arclength_budget && !br.escaped; ++s) {
        std::vector<Eigen::Vector2d> pre = seg;
        std::vector<Eigen::Vector2d> img(pre.size());
        std::vector<char> esc(pre.size(), 0);
        parallel_for(pre.size(), [&](std::size_t k) {
            bool e = false;
            img[k] = image(pre[k], e);
            esc[k] = e;
        });
        // Parameter of each pre-image point in the original segment indexing.
        std::vector<double> param(pre.size());
        std::iota(param.begin(), param.end(), 0.0);
        const std::vector<Eigen::Vector2d> pre_ref = pre;

        std::size_t i = 0;
        while (i + 1 < img.size()) {
            if (esc[i] || esc[i + 1]) {
                ++i;
                continue;
            }
            const bool far = (img[i + 1] - img[i]).norm() > opt.max_spacing;
            const bool bent = (i > 0 && !esc[i - 1] && detail::turn_angle(img[i - 1], img[i], img[i + 1]) > opt.max_angle) ||
                              (i + 2 < img.size() && !esc[i + 2] &&
                               detail::turn_angle(img[i], img[i + 1], img[i + 2]) > opt.max_angle);
            if ((far || bent) && (pre[i + 1] - pre[i]).norm() > opt.min_spacing &&
                br.points.size() + img.size() < opt.max_points) {
                const double u = 0.5 * (param[i] + param[i + 1]);
                const std::size_t base = std::min<std::size_t>(static_cast<std::size_t>(u), pre_ref.size() - 2);
                const Eigen::Vector2d p = detail::catmull_rom(pre_ref, base, u - static_cast<double>(base));
                bool e = false;
                const Eigen::Vector2d q = image(p, e);
                pre.insert(pre.begin() + static_cast<long>(i) + 1, p);
                img.insert(img.begin() + static_cast<long>(i) + 1, q);
                esc.insert(esc.begin() + static_cast<long>(i) + 1, static_cast<char>(e));
                param.insert(param.begin() + static_cast<long>(i) + 1, u);
                continue;
            }
            ++i;
        }
        // Truncate at the first escaped image.
        std::size_t keep = img.size();
        for (std::size_t k = 0; k < img.size(); ++k)
            if (esc[k]) {
                keep = k;
                br.escaped = true;
                break;
            }
        img.resize(keep);
        if (img.size() < 2) break;
        for (std::size_t k = 1; k < img.size(); ++k) {
            length += (img[k] - br.points.back()).norm();
            br.points.push_back(img[k]);
        }
        seg = img;
        ++br.segments;
        if (br.points.size() >= opt.max_points) break;
    }

    br.arclength.assign(br.points.size(), 0.0);
    for (std::size_t k = 1; k < br.points.size(); ++k)
        br.arclength[k] = br.arclength[k - 1] + (br.points[k] - br.points[k - 1]).norm();
    if (br.arclength.back() > arclength_budget) {
        std::size_t k = 0;
        while (k < br.arclength.size() && br.arclength[k] <= arclength_budget) ++k;
        br.points.resize(std::max<std::size_t>(k, 2));
        br.arclength.resize(br.points.size());
    }
    return br;
}

/// Distance from p to the polyline.
inline double distance_to_polyline(const std::vector<Eigen::Vector2d>& line, const Eigen::Vector2d& p) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < line.size(); ++k) {
        const Eigen::Vector2d a = line[k], b = line[k + 1];
        const Eigen::Vector2d ab = b - a;
        const double len2 = ab.squaredNorm();
        const double u = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, (a + u * ab - p).norm());
    }
    if (line.size() == 1) best = (line[0] - p).norm();
    return best;
}

/// Points where the polyline crosses p_x = 0, linearly interpolated.
inline std::vector<Eigen::Vector2d> axis_crossings(const std::vector<Eigen::Vector2d>& line) {
    std::vector<Eigen::Vector2d> out;
    for (std::size_t k = 0; k + 1 < line.size(); ++k) {
        const double a = line[k][1], b = line[k + 1][1];
        if ((a < 0.0) != (b < 0.0) && a != b) {
            const double u = a / (a - b);
            out.push_back(line[k] + u * (line[k + 1] - line[k]));
        }
    }
    return out;
}

}  // namespace recoll

#endif  // RECOLL_PORBITS_HPP
