#include <doctest.h>

#include "recoll/invcurves.hpp"
#include "recoll/io.hpp"

using namespace recoll;

namespace {

const SystemConfig kCfg = SystemConfig::with_dimension(2);
const IntegratorSettings kSt;

const Flow<2>& flow() {
    static const Flow<2> f(kCfg, kSt);
    return f;
}

const FixedPointOrbit& o2() {
    static const FixedPointOrbit o =
        find_fixed_point(kCfg, kSt, find_guess(load_orbit_guesses(), "O2", 2).z, "O2");
    return o;
}

double nu0() { return elliptic_pair(o2()).nu0; }

ContinuationOptions small_steps() {
    ContinuationOptions opt;
    opt.delta = 3e-3;
    opt.delta_max = 3e-3;
    opt.first_amplitude = 2e-3;
    return opt;
}

const ContinuationState& short_family() {
    static const ContinuationState st = continue_family<2>(flow(), o2(), 6, small_steps());
    return st;
}

}  // namespace

TEST_CASE("Fourier transforms") {
    const int M = 5;
    const auto S = fourier::synthesis(fourier::mesh(M), M);
    const auto A = fourier::analysis(M);
    CHECK((S * A.transpose() - Eigen::MatrixXd::Identity(2 * M + 1, 2 * M + 1)).norm() < 1e-13);

    Eigen::MatrixXd c = Eigen::MatrixXd::Random(3, 2 * M + 1);
    const double nu = 0.83, th = 1.9;
    const Eigen::MatrixXd shifted = c * fourier::rotation(M, nu).transpose();
    CHECK((fourier::evaluate(shifted, th) - fourier::evaluate(c, th + nu)).norm() < 1e-13);

    const double h = 1e-5;
    const Eigen::VectorXd fd = (fourier::evaluate(c, th + h) - fourier::evaluate(c, th - h)) / (2 * h);
    CHECK((fd - fourier::evaluate(c, th, 1)).norm() < 1e-8);
    const Eigen::VectorXd fd2 =
        (fourier::evaluate(c, th + h, 1) - fourier::evaluate(c, th - h, 1)) / (2 * h);
    CHECK((fd2 - fourier::evaluate(c, th, 2)).norm() < 1e-7);

    const auto up = fourier::resize(c, 9);
    CHECK((fourier::evaluate(up, th) - fourier::evaluate(c, th)).norm() < 1e-14);
    CHECK(fourier::mesh(M, 4).size() == 4u * 11u);
    CHECK(fourier::wrap_angle(-0.5) == doctest::Approx(fourier::kTwoPi - 0.5));
}

TEST_CASE("resonance distance") {
    int q = 0, p = 0;
    const double gap = resonance_gap(fourier::kTwoPi * 2.0 / 7.0 + 3e-7, 12, &q, &p);
    CHECK(gap == doctest::Approx(3e-7).epsilon(1e-6));
    CHECK(q == 7);
    CHECK(p == 2);
    CHECK(resonance_gap(1.0, 12) > 1e-3);
}

TEST_CASE("the fixed point is a degenerate invariant curve") {
    for (double nu : {0.3, nu0()}) {
        const auto c = InvariantCurve::constant(o2().z_star, 4, nu);
        const auto r = invariance_residual(flow(), c);
        CHECK(r.valid);
        CHECK(r.values.size() == 9 * 4);
        CHECK(r.max_norm < 1e-9);
        CHECK(phase_condition(c, Eigen::Vector4d(0, 0, 1, 0)) == 0.0);
    }
}

TEST_CASE("first curve off the elliptic fixed point") {
    const auto opt = small_steps();
    const auto c = first_curve(flow(), o2(), 2e-3, opt);
    CHECK(c.residual < 1e-9);
    CHECK(c.refined_residual < 1e-9);
    CHECK(invariance_residual(flow(), c, 4).max_norm < 1e-9);
    CHECK(std::abs(c.a(1).squaredNorm() + c.b(1).squaredNorm() - 4e-6) < 1e-10);
    CHECK(std::abs(c.nu - nu0()) < 1e-3);
    CHECK(c.nu > 0.0);
    CHECK(std::abs(phase_condition(c, Eigen::Vector4d(0, 0, 1, 0))) < 1e-12);
    CHECK(c.tail() < 1e-9);

    SUBCASE("residual responds linearly to a coefficient perturbation") {
        InvariantCurve p = c;
        const int M = c.order(), k = 2, comp = 1;
        p.coeffs(comp, k) += 1e-4;
        const double got = invariance_residual(flow(), p).max_norm;
        double predicted = 0.0;
        for (double th : fourier::mesh(M)) {
            Eigen::Vector4d dx = Eigen::Vector4d::Zero(), dxs = Eigen::Vector4d::Zero();
            dx[comp] = 1e-4 * std::cos(k * th);
            dxs[comp] = 1e-4 * std::cos(k * (th + c.nu));
            const auto r = flow().map(StateVec<2>(c(th)), 1, Direction::forward, true);
            predicted = std::max(predicted, (*r.tangent * dx - dxs).cwiseAbs().maxCoeff());
        }
        CHECK(got > predicted / 3.0);
        CHECK(got < predicted * 3.0);
    }

    SUBCASE("another phase axis gives the same geometric curve") {
        CurveSolveOptions so;
        so.phase_axis = 3;
        auto g = [&](double t) { return c(t)[3] - c.center[3]; };
        double lo = 0.0, hi = 0.0;
        for (int j = 1; j <= 64; ++j) {
            hi = fourier::kTwoPi * j / 64;
            if (g(lo) * g(hi) <= 0.0) break;
            lo = hi;
        }
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            (g(lo) * g(mid) <= 0.0 ? hi : lo) = mid;
        }
        InvariantCurve shifted = c;
        shifted.coeffs = c.coeffs * fourier::rotation(c.order(), lo).transpose();
        const auto c2 = solve_curve(flow(), shifted, CurveConstraint::amplitude(2e-3), so);
        CHECK(std::abs(phase_condition(c2, Eigen::Vector4d(0, 0, 0, 1))) < 1e-12);
        CHECK(hausdorff_distance(c, c2) < 1e-8);
        CHECK(std::abs(c2.nu - c.nu) < 1e-10);
    }

    SUBCASE("stability near the fixed point") {
        const auto s = curve_stability(flow(), c);
        const double lu = std::abs(o2().eigenvalues[0]);
        CHECK(std::abs(s.lambda_u - lu) < 1e-2 * lu);
        CHECK(std::abs(s.lambda_s * s.lambda_u - 1.0) < 1e-6);
        CHECK(s.product_error() < 1e-6);
        for (const auto& e : s.unit_eigs) CHECK(std::abs(e - 1.0) < 1e-4);
        CHECK(fourier::evaluate(s.bundle_u, 0.0).norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(fourier::evaluate(s.bundle_s, 0.0).norm() == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("Birkhoff rotation number of the restarted orbit") {
        const double nb = birkhoff_rotation_number(flow(), c, 3000);
        CHECK(std::abs(std::remainder(nb - c.nu, fourier::kTwoPi)) < 1e-6);
    }
}

TEST_CASE("continuation along the family") {
    const auto& st = short_family();
    REQUIRE(st.family.size() == 6);
    CHECK(st.termination == "requested number of curves reached");
    for (std::size_t k = 0; k < st.family.size(); ++k) {
        const auto& c = st.family[k];
        CHECK(c.sigma == static_cast<int>(k));
        CHECK(c.refined_residual < 1e-9);
        CHECK(c.iterations <= 10);
        REQUIRE(c.stability);
        CHECK(c.stability->lambda_u >= 1.0);
        CHECK(c.stability->lambda_u <= 25.0);
        CHECK(c.stability->product_error() < 1e-6);
        if (k == 0) continue;
        const auto& prev = st.family[k - 1];
        CHECK(c.dist > prev.dist);
        CHECK(c.nu < prev.nu);
        const int M = std::max(c.order(), prev.order());
        const double step = coefficient_distance(fourier::resize(c.coeffs, M), fourier::resize(prev.coeffs, M));
        CHECK(step == doctest::Approx(3e-3).epsilon(1e-6));
        CHECK(bundle_angle(c.stability->bundle_u, prev.stability->bundle_u) < 0.2);
    }
}

TEST_CASE("family members do not intersect in the (x, px, py) projection") {
    const auto& f = short_family().family;
    auto project = [](const InvariantCurve& c, int n) {
        std::vector<Eigen::Vector3d> p;
        for (int j = 0; j < n; ++j) {
            const auto z = c(fourier::kTwoPi * j / n);
            p.emplace_back(z[0], z[2], z[3]);
        }
        return p;
    };
    for (std::size_t i = 0; i + 2 < f.size(); ++i) {
        const auto a = project(f[i], 1024), b = project(f[i + 2], 1024);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : a)
            for (const auto& q : b) best = std::min(best, (p - q).norm());
        CHECK(best > 1e-6);
    }
}

TEST_CASE("continuation refuses a fixed point without an elliptic pair") {
    const auto o1 = find_fixed_point(kCfg, kSt, find_guess(load_orbit_guesses(), "O1", 2).z, "O1");
    CHECK_THROWS_AS(continue_family<2>(flow(), o1, 3), ConfigError);
}

TEST_CASE("constraints") {
    const auto& c = short_family().family[1];
    const auto a = CurveConstraint::amplitude(0.01);
    CHECK(a.kind == ConstraintKind::amplitude);
    const auto d = CurveConstraint::distance(c, 0.01);
    CHECK(d.kind == ConstraintKind::distance);
    CHECK(d.reference.size() == c.coeffs.size());
    const auto f = CurveConstraint::frequency(1.2);
    CHECK(f.kind == ConstraintKind::frequency);
    CHECK(f.nu == 1.2);
}

TEST_CASE("fixed rotation number solve reproduces a family member") {
    const auto& c = short_family().family[3];
    const auto r = solve_curve(flow(), c, CurveConstraint::frequency(c.nu));
    CHECK(std::abs(r.nu - c.nu) < 1e-12);
    CHECK(hausdorff_distance(r, c) < 1e-8);
}

TEST_CASE("curve geometry helpers") {
    const auto& c = short_family().family[2];
    CHECK(distance_to_point(c, c(0.7)) < 1e-12);
    const double d = distance_to_point(c, o2().z_star);
    CHECK(d == doctest::Approx(c.dist).epsilon(1e-6));
    CHECK(hausdorff_distance(c, c) < 1e-15);
}
