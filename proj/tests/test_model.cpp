#include <doctest.h>

#include <random>

#include "recoll/model.hpp"
#include "recoll/io.hpp"

using namespace recoll;

namespace {

template <int Dim>
StateVec<Dim> random_state(std::mt19937_64& rng, double qs = 3.0, double ps = 0.5) {
    std::uniform_real_distribution<double> uq(-qs, qs), up(-ps, ps);
    StateVec<Dim> z;
    for (int i = 0; i < Dim; ++i) {
        z[i] = uq(rng);
        z[Dim + i] = up(rng);
    }
    return z;
}

}  // namespace

TEST_CASE("energy at the origin is -1 in d = 1 and d = 2") {
    SystemConfig c1;
    CHECK(hamiltonian<1>(c1, PhaseState<1>{}) == doctest::Approx(-1.0).epsilon(1e-15));
    auto c2 = SystemConfig::with_dimension(2);
    PhaseState<2> s;
    s.t = 37.5;
    CHECK(hamiltonian<2>(c2, s) == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("energy near the outer orbit matches a 40-digit evaluation") {
    // mpmath, 40 digits, with the default field amplitude as stored in double precision.
    const double reference = 2.470594096160221407;
    PhaseState<1> s;
    s.q[0] = 27.12;
    CHECK(std::abs(hamiltonian<1>(SystemConfig{}, s) - reference) < 1e-13);
}

TEST_CASE("Coulomb term switch removes only the soft-core potential") {
    SystemConfig c;
    c.coulomb_enabled = false;
    PhaseState<1> s;
    s.q[0] = 2.0;
    s.p[0] = 0.3;
    CHECK(hamiltonian<1>(c, s) == doctest::Approx(0.045 + 2.0 * c.e0));
}

TEST_CASE("dimension mismatch is a configuration error") {
    SystemConfig c;  // d = 1
    CHECK_THROWS_AS(hamiltonian<2>(c, PhaseState<2>{}), ConfigError);
    CHECK_THROWS_AS(vector_field<2>(c, PhaseState<2>{}), ConfigError);
}

TEST_CASE("configuration validation and period") {
    SystemConfig c;
    CHECK(c.period() * c.omega == doctest::Approx(2.0 * std::numbers::pi).epsilon(1e-15));
    c.e0 = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.a = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.d = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("force at the origin is the field alone") {
    const auto dz = vector_field<1>(SystemConfig{}, PhaseState<1>{});
    CHECK(dz.q[0] == 0.0);
    CHECK(dz.p[0] == doctest::Approx(-kDefaultE0).epsilon(1e-15));
}

TEST_CASE("free transverse motion is a uniform drift") {
    auto c = SystemConfig::with_dimension(2);
    c.coulomb_enabled = false;
    std::mt19937_64 rng(7);
    for (int k = 0; k < 20; ++k) {
        const auto z = random_state<2>(rng);
        const auto dz = vector_field<2>(c, 0.7 * k, z);
        CHECK(dz[1] == z[3]);
        CHECK(dz[3] == 0.0);
    }
}

TEST_CASE("vector field is the symplectic gradient of the energy") {
    std::mt19937_64 rng(11);
    auto check = [&]<int Dim>() {
        const auto c = SystemConfig::with_dimension(Dim);
        for (int trial = 0; trial < 20; ++trial) {
            const StateVec<Dim> z = random_state<Dim>(rng);
            const double t = 13.0 * trial;
            const auto f = vector_field<Dim>(c, t, z);
            for (int i = 0; i < 2 * Dim; ++i) {
                const double h = 1e-6 * std::max(1.0, std::abs(z[i]));
                StateVec<Dim> zp = z, zm = z;
                zp[i] += h;
                zm[i] -= h;
                const double dH = (hamiltonian<Dim>(c, PhaseState<Dim>::from_packed(zp, t)) -
                                   hamiltonian<Dim>(c, PhaseState<Dim>::from_packed(zm, t))) /
                                  (2 * h);
                // dq/dt = dH/dp, dp/dt = -dH/dq
                const double expect = i < Dim ? -f[Dim + i] : f[i - Dim];
                CHECK(std::abs(dH - expect) <= 1e-8 * std::max(1.0, std::abs(expect)));
            }
        }
    };
    check.operator()<1>();
    check.operator()<2>();
    check.operator()<3>();
}

TEST_CASE("variational field matches finite differences of the vector field") {
    std::mt19937_64 rng(5);
    const auto c = SystemConfig::with_dimension(2);
    for (int trial = 0; trial < 10; ++trial) {
        const StateVec<2> z = random_state<2>(rng);
        const auto [dz, dJ] = variational_field<2>(c, 3.0, z, StateMat<2>::Identity());
        for (int j = 0; j < 4; ++j) {
            StateVec<2> zp = z, zm = z;
            zp[j] += 1e-6;
            zm[j] -= 1e-6;
            const StateVec<2> col = (vector_field<2>(c, 3.0, zp) - vector_field<2>(c, 3.0, zm)) / 2e-6;
            CHECK((col - dJ.col(j)).norm() <= 1e-6 * std::max(1.0, col.norm()));
        }
        CHECK((dz - vector_field<2>(c, 3.0, z)).norm() == 0.0);
    }
    StateMat<2> bad = StateMat<2>::Identity();
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(variational_field<2>(c, 0.0, StateVec<2>::Zero(), bad), std::invalid_argument);
}

TEST_CASE("free system Jacobian is constant") {
    SystemConfig c;
    c.coulomb_enabled = false;
    StateVec<1> z(3.0, 0.2);
    const auto A = field_jacobian<1>(c, z);
    CHECK(A(0, 0) == 0.0);
    CHECK(A(0, 1) == 1.0);
    CHECK(A(1, 0) == 0.0);
    CHECK(A(1, 1) == 0.0);
}

TEST_CASE("transverse subspace is invariant under the vector field") {
    const auto c = SystemConfig::with_dimension(2);
    StateVec<2> z(1.3, 0.0, -0.4, 0.0);
    const auto f = vector_field<2>(c, 5.0, z);
    CHECK(f[1] == 0.0);
    CHECK(f[3] == 0.0);
}

TEST_CASE("polar form: angular momentum is constant and the axis is singular") {
    const auto c = SystemConfig::with_dimension(3);
    PolarState3D s{1.0, 0.5, 0.3, 0.1, -0.2, 0.4, 2.0};
    CHECK(vector_field(c, s).ptheta == 0.0);
    PolarState3D axis{1.0, 0.0, 0.0, 0.1, 0.0, 0.4, 0.0};
    CHECK_THROWS_AS(vector_field(c, axis), SingularityError);
    CHECK_THROWS_AS(hamiltonian(c, axis), SingularityError);
    axis.ptheta = 0.0;
    CHECK_NOTHROW(vector_field(c, axis));
}

TEST_CASE("polar and Cartesian forms agree") {
    const auto c = SystemConfig::with_dimension(3);
    std::mt19937_64 rng(3);
    for (int k = 0; k < 10; ++k) {
        const StateVec<3> z = random_state<3>(rng);
        const auto s = PhaseState<3>::from_packed(z, 4.0);
        const auto ps = to_polar(s);
        CHECK(hamiltonian(c, ps) == doctest::Approx(hamiltonian<3>(c, s)).epsilon(1e-12));
        CHECK(ps.ptheta == doctest::Approx(angular_momentum_x(z)).epsilon(1e-14));
        const auto back = to_cartesian(ps);
        CHECK((back.packed() - z).norm() < 1e-12);
    }
}

TEST_CASE("key-value configuration file") {
    std::istringstream in("# laser\ne0 = 0.1\nomega: 0.06\n a = 0.8 \nd = 2\ncoulomb_enabled = false\n");
    const auto c = parse_config(in);
    CHECK(c.e0 == 0.1);
    CHECK(c.omega == 0.06);
    CHECK(c.a == 0.8);
    CHECK(c.d == 2);
    CHECK_FALSE(c.coulomb_enabled);
    std::istringstream unknown("charge = 2\n");
    CHECK_THROWS_AS(parse_config(unknown), ConfigError);
    std::istringstream bad("e0 = fast\n");
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    std::istringstream neg("omega = -1\n");
    CHECK_THROWS_AS(parse_config(neg), ConfigError);
}
