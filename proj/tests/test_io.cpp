#include <doctest.h>

#include <sstream>

#include "recoll/io.hpp"

using namespace recoll;

TEST_CASE("configuration round-trips through JSON") {
    SystemConfig c = SystemConfig::with_dimension(3);
    c.e0 = 0.05;
    c.coulomb_enabled = false;
    const auto j = to_json(c);
    CHECK(j.at("T").get<double>() == doctest::Approx(c.period()));
    const auto r = config_from_json(j);
    CHECK(r.e0 == 0.05);
    CHECK(r.d == 3);
    CHECK_FALSE(r.coulomb_enabled);
    CHECK(r.omega == c.omega);

    IntegratorSettings s;
    s.abs_tol = 1e-10;
    s.max_step = 2.5;
    const auto rs = settings_from_json(to_json(s));
    CHECK(rs.abs_tol == 1e-10);
    CHECK(rs.max_step == 2.5);
    CHECK(rs.rel_tol == s.rel_tol);
}

TEST_CASE("vectors, matrices and complex numbers") {
    Eigen::VectorXd v(3);
    v << 1.0, -2.5, 1e-300;
    CHECK(vector_from_json(to_json(v)) == v);
    Eigen::MatrixXd m(2, 3);
    m << 1, 2, 3, 4, 5, 6;
    const auto jm = matrix_to_json(m);
    REQUIRE(jm.size() == 6);  // flat, row-major
    CHECK(jm[2] == 3.0);
    CHECK(jm[3] == 4.0);
    CHECK(matrix_from_json(jm, 2, 3) == m);
    CHECK_THROWS(matrix_from_json(jm, 2, 2));
    const auto jz = to_json(std::complex<double>(1.5, -0.25));
    CHECK(jz[0] == 1.5);
    CHECK(jz[1] == -0.25);
}

TEST_CASE("orbit records keep the spectrum") {
    const auto g = find_guess(load_orbit_guesses(), "O2", 1);
    const auto o = find_fixed_point(SystemConfig::with_dimension(1), IntegratorSettings{}, g.z, "O2");
    const auto j = to_json(o);
    CHECK(j.at("label") == "O2");
    CHECK(j.at("d") == 1);
    CHECK(j.contains("classification"));
    const auto r = orbit_from_json(json::parse(j.dump()));
    CHECK(r.z_star == o.z_star);
    CHECK((r.monodromy - o.monodromy).norm() == 0.0);
    CHECK(std::abs(r.eigenvalues[0] - o.eigenvalues[0]) < 1e-12);
    CHECK(r.residual == o.residual);
}

TEST_CASE("orbit guesses") {
    const auto gs = load_orbit_guesses();
    CHECK(gs.size() >= 7);
    for (const auto& g : gs) CHECK(g.z.size() == 2 * g.d);
    CHECK(find_guess(gs, "O", 2).z[3] != 0.0);
    CHECK_THROWS_AS(find_guess(gs, "O", 1), ConfigError);
    CHECK_THROWS(load_orbit_guesses("/nonexistent/guesses.json"));
}

TEST_CASE("curve coefficient tables") {
    Eigen::MatrixXd c = Eigen::MatrixXd::Random(4, 7);
    c.col(0) << 1, 2, 3, 4;
    const auto rows = coefficient_rows(c);
    CHECK(rows.size() == 4);
    CHECK(rows[0].size() == 8);
    CHECK(rows[0][4] == 0.0);
    CHECK(rows[2][1] == c(1, 2));
    CHECK(rows[2][5] == c(1, 5));
    CHECK(coefficients_from_rows(rows) == c);
    CHECK_THROWS(coefficients_from_rows(json::array()));

    InvariantCurve k = InvariantCurve::constant(Eigen::Vector4d(1, 2, 3, 4), 3, 0.7);
    k.coeffs = c;
    k.sigma = 5;
    k.dist = 0.01;
    CurveStability s;
    s.lambda_s = 0.1;
    s.lambda_u = 10.0;
    s.unit_eigs = {std::complex<double>(1.0, 1e-9), std::complex<double>(1.0, -1e-9)};
    s.bundle_s = c * 2.0;
    s.bundle_u = c * 3.0;
    k.stability = s;
    const auto r = curve_from_json(json::parse(to_json(k).dump()));
    CHECK(r.sigma == 5);
    CHECK(r.nu == 0.7);
    CHECK(r.coeffs == c);
    CHECK(r.center == k.center);
    REQUIRE(r.stability);
    CHECK(r.stability->lambda_u == 10.0);
    CHECK(r.stability->unit_eigs[1].imag() == -1e-9);
    CHECK(r.stability->bundle_u == s.bundle_u);

    const auto dir = std::filesystem::temp_directory_path() / "recoll_test_family";
    std::filesystem::create_directories(dir);
    for (int sg : {2, 0, 1}) {
        k.sigma = sg;
        std::ofstream(dir / ("curve_" + std::to_string(sg) + ".json")) << to_json(k).dump();
    }
    std::ofstream(dir / "family.json") << "{}";
    const auto fam = load_family(dir.string());
    REQUIRE(fam.size() == 3);
    CHECK(fam[0].sigma == 0);
    CHECK(fam[2].sigma == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("intersection tables carry 17 significant digits") {
    SliceIntersection p;
    p.sigma = 3;
    p.m = 7;
    p.s_star = 1.0 / 3.0;
    p.theta_star = 2.0 / 3.0;
    p.point = Eigen::Vector4d(-2.4, 1e-17, 0.1, std::sqrt(2.0));
    p.residuals = {1e-12, 2e-13};
    std::stringstream ss;
    write_intersections_csv(ss, {p});
    std::string header;
    std::getline(ss, header);
    CHECK(header == kIntersectionHeader);
    ss.seekg(0);
    const auto r = read_intersections_csv(ss);
    REQUIRE(r.size() == 1);
    CHECK(r[0].s_star == p.s_star);
    CHECK(r[0].point == p.point);
    CHECK(r[0].m == 7);
    CHECK(r[0].residuals[1] == 2e-13);
    CHECK(format_g17(0.1) == "0.10000000000000001");

    std::stringstream bad("sigma,m\n1,2\n");
    CHECK_THROWS(read_intersections_csv(bad));
    SliceIntersection q = p;
    q.point = Eigen::Vector2d(1, 2);
    std::stringstream out;
    CHECK_THROWS(write_intersections_csv(out, {q}));
}

TEST_CASE("manifold branch tables") {
    ManifoldBranch1D br;
    br.points = {Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(1.5, -0.25)};
    br.arclength = {0.0, std::hypot(0.5, 0.25)};
    std::stringstream ss;
    write_branch_csv(ss, br);
    const auto pts = read_branch_csv(ss);
    REQUIRE(pts.size() == 2);
    CHECK(pts[1] == br.points[1]);
    std::stringstream bad("a,b\n");
    CHECK_THROWS(read_branch_csv(bad));
    CHECK(split("a,,b", ',') == std::vector<std::string>{"a", "", "b"});
}
