// Time integration of the model and of its variational equations, and the
// stroboscopic (period) map built on top of it.

#ifndef RECOLL_FLOW_HPP
#define RECOLL_FLOW_HPP

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/numeric/odeint/stepper/controlled_runge_kutta.hpp>
#include <boost/numeric/odeint/stepper/generation.hpp>
#include <boost/numeric/odeint/stepper/runge_kutta_fehlberg78.hpp>

#include "recoll/model.hpp"

namespace recoll {

struct IntegratorSettings {
    double abs_tol = 1e-12;
    double rel_tol = 1e-12;
    /// Largest allowed step in a.u. of time; 0 selects T/32.
    double max_step = 0.0;
    int method_order = 8;
    double escape_radius = 1000.0;
    /// Steps smaller than this are treated as underflow.
    double min_step = 1e-11;
    long max_steps = 50'000'000;

    void validate() const {
        auto tol_ok = [](double v) { return v > 0.0 && v <= 1e-3; };
        if (!tol_ok(abs_tol) || !tol_ok(rel_tol))
            throw ConfigError("integrator tolerances must lie in (0, 1e-3]");
        if (max_step < 0.0) throw ConfigError("max_step must be non-negative");
        if (method_order != 8)
            throw ConfigError("only the order-8 Runge-Kutta-Fehlberg scheme is available");
        if (!(escape_radius > 0.0)) throw ConfigError("escape radius must be positive");
        if (!(min_step > 0.0)) throw ConfigError("min_step must be positive");
    }
};

class IntegrationError : public std::runtime_error {
  public:
    IntegrationError(const std::string& what, std::vector<double> last_state, double last_time)
        : std::runtime_error(what), last_state_(std::move(last_state)), last_time_(last_time) {}
    const std::vector<double>& last_state() const { return last_state_; }
    double last_time() const { return last_time_; }

  private:
    std::vector<double> last_state_;
    double last_time_;
};

enum class Direction { forward, backward };

template <int Dim>
struct MapResult {
    PhaseState<Dim> state;
    std::optional<StateMat<Dim>> tangent;
    bool escaped = false;
    double escape_radius = 0.0;
    /// Time at which |q| first exceeded the escape radius (if escaped).
    double escape_time = 0.0;
    /// Whole periods completed before stopping (stroboscopic maps only).
    int periods = 0;
};

namespace detail {

template <std::size_t K>
using Array = std::array<double, K>;

template <std::size_t K>
struct Outcome {
    bool escaped = false;
    double t = 0.0;
};

/// Adaptive order-8 integration of y from t0 to t1 (t1 < t0 allowed).
/// `dt` carries the step-size guess in and out. `stop(y, t)` is polled after
/// every accepted step; returning true ends integration early.
template <std::size_t K, class Rhs, class Stop, class Observer>
Outcome<K> run(Rhs&& rhs, Array<K>& y, double t0, double t1, const IntegratorSettings& settings,
               double default_max_step, double& dt, Stop&& stop, Observer&& observe) {
    namespace odeint = boost::numeric::odeint;
    using Stepper = odeint::runge_kutta_fehlberg78<Array<K>>;
    auto controlled = odeint::make_controlled(settings.abs_tol, settings.rel_tol, Stepper());

    Outcome<K> out;
    out.t = t0;
    if (t1 == t0) return out;
    const double dir = t1 > t0 ? 1.0 : -1.0;
    const double hmax = settings.max_step > 0.0 ? settings.max_step : default_max_step;
    const double span_eps = 1e-13 * std::max(1.0, std::abs(t1));
    if (!(std::abs(dt) > 0.0)) dt = 1e-2;
    dt = dir * std::min(std::abs(dt), hmax);

    double t = t0;
    long steps = 0;
    Array<K> last_good = y;
    while (dir * (t1 - t) > span_eps) {
        if (++steps > settings.max_steps)
            throw IntegrationError("step budget exhausted",
                                   std::vector<double>(last_good.begin(), last_good.end()), t);
        const double remaining = t1 - t;
        const bool clipped = std::abs(dt) > std::abs(remaining);
        double step = clipped ? remaining : dt;
        const double saved = dt;
        const auto res = controlled.try_step(rhs, y, t, step);
        if (res == odeint::success) {
            bool finite = true;
            for (double v : y) finite = finite && std::isfinite(v);
            if (!finite)
                throw IntegrationError("non-finite state",
                                       std::vector<double>(last_good.begin(), last_good.end()), t);
            last_good = y;
            dt = clipped ? saved : dir * std::min(std::abs(step), hmax);
            observe(t, y);
            if (stop(y, t)) {
                out.escaped = true;
                out.t = t;
                return out;
            }
        } else {
            dt = step;
            if (std::abs(dt) < settings.min_step)
                throw IntegrationError("step size underflow",
                                       std::vector<double>(last_good.begin(), last_good.end()), t);
        }
    }
    out.t = t1;
    return out;
}

}  // namespace detail

/// Integrator for a fixed configuration. Cheap to copy; every call is pure.
template <int Dim>
class Flow {
  public:
    static constexpr int N = 2 * Dim;
    static constexpr std::size_t kPlain = N;
    static constexpr std::size_t kTangent = N + N * N;
    using Sampler = std::function<void(double, const StateVec<Dim>&)>;

    Flow(const SystemConfig& cfg, const IntegratorSettings& settings) : cfg_(cfg), settings_(settings) {
        cfg_.validate();
        settings_.validate();
        require_dimension<Dim>(cfg_);
    }

    const SystemConfig& config() const { return cfg_; }
    const IntegratorSettings& settings() const { return settings_; }
    double period() const { return cfg_.period(); }

    /// Flow from t0 to t1 (either direction). Stops early if |q| exceeds the
    /// escape radius. With a tangent, J starts at the identity.
    MapResult<Dim> propagate(const StateVec<Dim>& z0, double t0, double t1, bool with_tangent,
                             const Sampler& sample = {}) const {
        double dt = initial_step();
        if (with_tangent) {
            detail::Array<kTangent> y{};
            pack(z0, StateMat<Dim>::Identity(), y);
            auto o = detail::run<kTangent>(tangent_rhs(), y, t0, t1, settings_, default_max_step(), dt,
                                           escape_check<kTangent>(), observer<kTangent>(sample));
            return finish(y, o, true);
        }
        detail::Array<kPlain> y{};
        for (int i = 0; i < N; ++i) y[i] = z0[i];
        auto o = detail::run<kPlain>(plain_rhs(), y, t0, t1, settings_, default_max_step(), dt,
                                     escape_check<kPlain>(), observer<kPlain>(sample));
        return finish(y, o, false);
    }

    /// n-fold stroboscopic map from the t = 0 section. Backward maps integrate
    /// the flow in negative time rather than inverting the tangent map.
    /// Every period restarts the clock at 0 (the field is T-periodic), so the
    /// drive phase does not lose digits as k*T grows, and from a fresh step
    /// guess, so map(z, m + n) is bitwise map(map(z, m), n).
    MapResult<Dim> map(const StateVec<Dim>& z, int n = 1, Direction dir = Direction::forward,
                       bool with_tangent = false) const {
        if (n < 0) throw std::invalid_argument("iteration count must be non-negative");
        const double T = period();
        const double sgn = dir == Direction::forward ? 1.0 : -1.0;
        MapResult<Dim> result;
        result.state = PhaseState<Dim>::from_packed(z, 0.0);
        result.escape_radius = settings_.escape_radius;
        if (with_tangent) result.tangent = StateMat<Dim>::Identity();
        if (n == 0) return result;

        if (with_tangent) {
            detail::Array<kTangent> y{};
            pack(z, StateMat<Dim>::Identity(), y);
            for (int k = 0; k < n; ++k) {
                double dt = initial_step();
                auto o = detail::run<kTangent>(tangent_rhs(), y, 0.0, sgn * T, settings_,
                                               default_max_step(), dt, escape_check<kTangent>(),
                                               observer<kTangent>({}));
                if (o.escaped) {
                    auto r = finish(y, o, true);
                    r.state.t += sgn * k * T;
                    r.escape_time += sgn * k * T;
                    r.periods = k;
                    return r;
                }
            }
            auto r = finish(y, {}, true);
            r.state.t = 0.0;
            r.periods = n;
            return r;
        }
        detail::Array<kPlain> y{};
        for (int i = 0; i < N; ++i) y[i] = z[i];
        for (int k = 0; k < n; ++k) {
            double dt = initial_step();
            auto o = detail::run<kPlain>(plain_rhs(), y, 0.0, sgn * T, settings_,
                                         default_max_step(), dt, escape_check<kPlain>(), observer<kPlain>({}));
            if (o.escaped) {
                auto r = finish(y, o, false);
                r.state.t += sgn * k * T;
                r.escape_time += sgn * k * T;
                r.periods = k;
                return r;
            }
        }
        auto r = finish(y, {}, false);
        r.state.t = 0.0;
        r.periods = n;
        return r;
    }

  private:
    double default_max_step() const { return period() / 32.0; }
    double initial_step() const { return 1e-2; }

    auto plain_rhs() const {
        return [this](const detail::Array<kPlain>& y, detail::Array<kPlain>& dy, double t) {
            const Eigen::Map<const StateVec<Dim>> z(y.data());
            Eigen::Map<StateVec<Dim>>(dy.data()) = vector_field<Dim>(cfg_, t, z);
        };
    }

    auto tangent_rhs() const {
        return [this](const detail::Array<kTangent>& y, detail::Array<kTangent>& dy, double t) {
            const Eigen::Map<const StateVec<Dim>> z(y.data());
            const Eigen::Map<const StateMat<Dim>> J(y.data() + N);
            Eigen::Map<StateVec<Dim>>(dy.data()) = vector_field<Dim>(cfg_, t, z);
            Eigen::Map<StateMat<Dim>>(dy.data() + N).noalias() = field_jacobian<Dim>(cfg_, z) * J;
        };
    }

    template <std::size_t K>
    auto escape_check() const {
        const double r2 = settings_.escape_radius * settings_.escape_radius;
        return [r2](const detail::Array<K>& y, double) {
            double q2 = 0.0;
            for (int i = 0; i < Dim; ++i) q2 += y[i] * y[i];
            return q2 > r2;
        };
    }

    template <std::size_t K>
    static auto observer(const Sampler& sample) {
        return [&sample](double t, const detail::Array<K>& y) {
            if (sample) sample(t, Eigen::Map<const StateVec<Dim>>(y.data()));
        };
    }

    static void pack(const StateVec<Dim>& z, const StateMat<Dim>& J, detail::Array<kTangent>& y) {
        Eigen::Map<StateVec<Dim>>(y.data()) = z;
        Eigen::Map<StateMat<Dim>>(y.data() + N) = J;
    }

    template <std::size_t K>
    MapResult<Dim> finish(const detail::Array<K>& y, const detail::Outcome<K>& o, bool with_tangent) const {
        MapResult<Dim> r;
        r.state = PhaseState<Dim>::from_packed(Eigen::Map<const StateVec<Dim>>(y.data()), o.t);
        if (with_tangent) r.tangent = Eigen::Map<const StateMat<Dim>>(y.data() + N);
        r.escaped = o.escaped;
        r.escape_radius = settings_.escape_radius;
        r.escape_time = o.escaped ? o.t : 0.0;
        return r;
    }

    SystemConfig cfg_;
    IntegratorSettings settings_;
};

/// Flow image of s0 at t_final >= s0.t.
template <int Dim>
MapResult<Dim> integrate(const SystemConfig& cfg, const IntegratorSettings& settings, const PhaseState<Dim>& s0,
                         double t_final, bool with_tangent,
                         const typename Flow<Dim>::Sampler& sample = {}) {
    if (t_final < s0.t) throw std::invalid_argument("integrate requires t_final >= s0.t");
    return Flow<Dim>(cfg, settings).propagate(s0.packed(), s0.t, t_final, with_tangent, sample);
}

template <int Dim>
MapResult<Dim> stroboscopic_map(const SystemConfig& cfg, const IntegratorSettings& settings,
                                const PhaseState<Dim>& z, int n, Direction dir = Direction::forward,
                                bool with_tangent = false) {
    const double T = cfg.period();
    const double phase = std::remainder(z.t, T);
    if (std::abs(phase) > 1e-9 * std::max(1.0, std::abs(z.t)))
        throw std::invalid_argument("stroboscopic map requires z.t = 0 mod T");
    return Flow<Dim>(cfg, settings).map(z.packed(), n, dir, with_tangent);
}

/// Exact solution with the Coulomb term removed: a uniform drift plus the
/// quiver motion along the polarization axis.
template <int Dim>
PhaseState<Dim> free_solution(const SystemConfig& cfg, const PhaseState<Dim>& s0, double t) {
    const double w = cfg.omega, E = cfg.e0, t0 = s0.t;
    PhaseState<Dim> s = s0;
    const double drift_x = s0.p[0] + (E / w) * std::sin(w * t0);
    s.q = s0.q + s0.p * (t - t0);
    s.q[0] = s0.q[0] + drift_x * (t - t0) + (E / (w * w)) * (std::cos(w * t) - std::cos(w * t0));
    s.p[0] = s0.p[0] - (E / w) * (std::sin(w * t) - std::sin(w * t0));
    s.t = t;
    return s;
}

}  // namespace recoll

#endif  // RECOLL_FLOW_HPP
