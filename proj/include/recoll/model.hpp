// Soft-Coulomb electron driven by a linearly polarized CW laser field.
//
//   H(q, p, t) = p^2/2 - 1/sqrt(q^2 + a^2) + q_x E0 cos(omega t)
//
// in atomic units, for configuration-space dimension d = 1, 2 or 3.
// Phase-space vectors are packed as z = (q_1..q_d, p_1..p_d).

#ifndef RECOLL_MODEL_HPP
#define RECOLL_MODEL_HPP

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace recoll {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class SingularityError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Field amplitude for a 3e14 W/cm^2 peak intensity (I / 3.50944758e16 W/cm^2,
/// square-rooted). Quoted in the literature as 0.0925 a.u.
inline constexpr double kDefaultE0 = 0.09245730866947958;
/// 780 nm photon energy in a.u.
inline constexpr double kDefaultOmega = 0.0584;
inline constexpr double kDefaultSoftening = 1.0;

struct SystemConfig {
    double e0 = kDefaultE0;
    double omega = kDefaultOmega;
    double a = kDefaultSoftening;
    int d = 1;
    bool coulomb_enabled = true;

    /// Laser period T = 2 pi / omega.
    double period() const { return 2.0 * std::numbers::pi / omega; }

    void validate() const {
        if (!(e0 > 0.0) || !std::isfinite(e0))
            throw ConfigError("e0 must be positive and finite");
        if (!(omega > 0.0) || !std::isfinite(omega))
            throw ConfigError("omega must be positive and finite");
        if (!(a > 0.0) || !std::isfinite(a))
            throw ConfigError("softening parameter a must be positive and finite");
        if (d < 1 || d > 3)
            throw ConfigError("dimension d must be 1, 2 or 3 (got " + std::to_string(d) + ")");
    }

    static SystemConfig with_dimension(int dim) {
        SystemConfig c;
        c.d = dim;
        return c;
    }
};

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;
template <int Dim>
using StateVec = Eigen::Matrix<double, 2 * Dim, 1>;
template <int Dim>
using StateMat = Eigen::Matrix<double, 2 * Dim, 2 * Dim>;

template <int Dim>
struct PhaseState {
    static_assert(Dim >= 1 && Dim <= 3);

    Vec<Dim> q = Vec<Dim>::Zero();
    Vec<Dim> p = Vec<Dim>::Zero();
    double t = 0.0;

    StateVec<Dim> packed() const {
        StateVec<Dim> z;
        z << q, p;
        return z;
    }

    static PhaseState from_packed(const StateVec<Dim>& z, double time = 0.0) {
        PhaseState s;
        s.q = z.template head<Dim>();
        s.p = z.template tail<Dim>();
        s.t = time;
        return s;
    }
};

template <int Dim>
inline void require_dimension(const SystemConfig& cfg) {
    if (cfg.d != Dim)
        throw ConfigError("dimension mismatch: config has d=" + std::to_string(cfg.d) +
                          " but state has d=" + std::to_string(Dim));
}

inline double field(const SystemConfig& cfg, double t) { return cfg.e0 * std::cos(cfg.omega * t); }

template <int Dim>
double hamiltonian(const SystemConfig& cfg, const PhaseState<Dim>& s) {
    require_dimension<Dim>(cfg);
    double h = 0.5 * s.p.squaredNorm() + s.q[0] * field(cfg, s.t);
    if (cfg.coulomb_enabled) h -= 1.0 / std::sqrt(s.q.squaredNorm() + cfg.a * cfg.a);
    return h;
}

/// Hamilton's equations. No dimension check: this is the integrator's inner loop.
template <int Dim>
StateVec<Dim> vector_field(const SystemConfig& cfg, double t, const StateVec<Dim>& z) {
    StateVec<Dim> dz;
    const auto q = z.template head<Dim>();
    dz.template head<Dim>() = z.template tail<Dim>();
    if (cfg.coulomb_enabled) {
        const double s = q.squaredNorm() + cfg.a * cfg.a;
        const double inv = 1.0 / (s * std::sqrt(s));
        dz.template tail<Dim>() = -inv * q;
    } else {
        dz.template tail<Dim>().setZero();
    }
    dz[Dim] -= field(cfg, t);
    return dz;
}

template <int Dim>
PhaseState<Dim> vector_field(const SystemConfig& cfg, const PhaseState<Dim>& s) {
    require_dimension<Dim>(cfg);
    return PhaseState<Dim>::from_packed(vector_field<Dim>(cfg, s.t, s.packed()), 1.0);
}

/// Jacobian A = d(vector_field)/dz.
template <int Dim>
StateMat<Dim> field_jacobian(const SystemConfig& cfg, const StateVec<Dim>& z) {
    StateMat<Dim> A = StateMat<Dim>::Zero();
    A.template topRightCorner<Dim, Dim>().setIdentity();
    if (cfg.coulomb_enabled) {
        const auto q = z.template head<Dim>();
        const double s = q.squaredNorm() + cfg.a * cfg.a;
        const double inv3 = 1.0 / (s * std::sqrt(s));
        const double inv5 = inv3 / s;
        A.template bottomLeftCorner<Dim, Dim>() =
            -inv3 * Eigen::Matrix<double, Dim, Dim>::Identity() + 3.0 * inv5 * q * q.transpose();
    }
    return A;
}

/// Right-hand side of the variational system: (dz/dt, dJ/dt = A(z, t) J).
template <int Dim>
std::pair<StateVec<Dim>, StateMat<Dim>> variational_field(const SystemConfig& cfg, double t,
                                                          const StateVec<Dim>& z,
                                                          const StateMat<Dim>& J) {
    if (!J.allFinite()) throw std::invalid_argument("tangent matrix has non-finite entries");
    return {vector_field<Dim>(cfg, t, z), field_jacobian<Dim>(cfg, z) * J};
}

// ---------------------------------------------------------------------------
// d = 3 in cylindrical coordinates about the polarization axis.

struct PolarState3D {
    double x = 0.0, rho = 0.0, theta = 0.0;
    double px = 0.0, prho = 0.0, ptheta = 0.0;
    double t = 0.0;
};

inline constexpr double kMinPolarRadius = 1e-12;

inline double hamiltonian(const SystemConfig& cfg, const PolarState3D& s) {
    require_dimension<3>(cfg);
    if (s.rho < kMinPolarRadius && s.ptheta != 0.0)
        throw SingularityError("polar state at rho=0 with nonzero p_theta");
    double h = 0.5 * (s.px * s.px + s.prho * s.prho) + s.x * field(cfg, s.t);
    if (s.ptheta != 0.0) h += 0.5 * s.ptheta * s.ptheta / (s.rho * s.rho);
    if (cfg.coulomb_enabled) h -= 1.0 / std::sqrt(s.x * s.x + s.rho * s.rho + cfg.a * cfg.a);
    return h;
}

/// Time derivative of a polar state; the returned t field is 1.
inline PolarState3D vector_field(const SystemConfig& cfg, const PolarState3D& s) {
    if (s.rho < kMinPolarRadius && s.ptheta != 0.0)
        throw SingularityError("centrifugal singularity: rho below 1e-12 with nonzero p_theta");
    PolarState3D d;
    d.x = s.px;
    d.rho = s.prho;
    d.theta = s.ptheta == 0.0 ? 0.0 : s.ptheta / (s.rho * s.rho);
    d.px = -field(cfg, s.t);
    d.prho = s.ptheta == 0.0 ? 0.0 : s.ptheta * s.ptheta / (s.rho * s.rho * s.rho);
    if (cfg.coulomb_enabled) {
        const double r2 = s.x * s.x + s.rho * s.rho + cfg.a * cfg.a;
        const double inv3 = 1.0 / (r2 * std::sqrt(r2));
        d.px -= s.x * inv3;
        d.prho -= s.rho * inv3;
    }
    d.ptheta = 0.0;
    d.t = 1.0;
    return d;
}

inline PolarState3D to_polar(const PhaseState<3>& s) {
    PolarState3D r;
    const double y = s.q[1], z = s.q[2], py = s.p[1], pz = s.p[2];
    r.x = s.q[0];
    r.px = s.p[0];
    r.rho = std::hypot(y, z);
    r.theta = std::atan2(z, y);
    r.ptheta = y * pz - z * py;
    r.prho = r.rho > 0.0 ? (y * py + z * pz) / r.rho : std::hypot(py, pz);
    r.t = s.t;
    return r;
}

inline PhaseState<3> to_cartesian(const PolarState3D& s) {
    PhaseState<3> r;
    const double c = std::cos(s.theta), sn = std::sin(s.theta);
    r.q << s.x, s.rho * c, s.rho * sn;
    const double ptan = s.rho > 0.0 ? s.ptheta / s.rho : 0.0;
    r.p << s.px, s.prho * c - ptan * sn, s.prho * sn + ptan * c;
    r.t = s.t;
    return r;
}

/// Angular momentum about the polarization axis, y p_z - z p_y.
inline double angular_momentum_x(const StateVec<3>& z) { return z[1] * z[5] - z[2] * z[4]; }

}  // namespace recoll

#endif  // RECOLL_MODEL_HPP
