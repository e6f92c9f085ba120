// JSON records for configurations, orbits and curves; the key-value config
// file; orbit guess and reference-value files.

#ifndef RECOLL_IO_HPP
#define RECOLL_IO_HPP

#include <algorithm>
#include <cstdio>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "recoll/flow.hpp"
#include "recoll/invcurves.hpp"
#include "recoll/manifolds.hpp"
#include "recoll/model.hpp"
#include "recoll/porbits.hpp"

#ifndef RECOLL_DATA_DIR
#define RECOLL_DATA_DIR "data"
#endif

namespace recoll {

using json = nlohmann::json;

inline std::string data_path(const std::string& name) {
    if (const char* env = std::getenv("RECOLL_DATA_DIR")) return std::string(env) + "/" + name;
    return std::string(RECOLL_DATA_DIR) + "/" + name;
}

inline json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    return json::parse(f, nullptr, true, true);
}

// ---------------------------------------------------------------------------
// Config

inline json to_json(const SystemConfig& c) {
    return {{"e0", c.e0}, {"omega", c.omega}, {"a", c.a}, {"d", c.d}, {"coulomb_enabled", c.coulomb_enabled},
            {"T", c.period()}};
}

inline SystemConfig config_from_json(const json& j) {
    SystemConfig c;
    c.e0 = j.value("e0", c.e0);
    c.omega = j.value("omega", c.omega);
    c.a = j.value("a", c.a);
    c.d = j.value("d", c.d);
    c.coulomb_enabled = j.value("coulomb_enabled", c.coulomb_enabled);
    c.validate();
    return c;
}

inline bool parse_bool(std::string v) {
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("not a boolean: '" + v + "'");
}

/// Applies "key = value" lines (keys e0, omega, a, d, coulomb_enabled; '#'
/// starts a comment) on top of `base`.
inline SystemConfig parse_config(std::istream& in, SystemConfig base = {}) {
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find_first_of("=:");
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
        try {
            if (key == "e0") base.e0 = std::stod(val);
            else if (key == "omega") base.omega = std::stod(val);
            else if (key == "a") base.a = std::stod(val);
            else if (key == "d") base.d = std::stoi(val);
            else if (key == "coulomb_enabled") base.coulomb_enabled = parse_bool(val);
            else throw ConfigError("unknown key '" + key + "'");
        } catch (const std::logic_error&) {
            throw ConfigError("config line " + std::to_string(lineno) + ": bad value for '" + key + "'");
        }
    }
    base.validate();
    return base;
}

inline SystemConfig load_config(const std::string& path, SystemConfig base = {}) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    return parse_config(f, base);
}

inline json to_json(const IntegratorSettings& s) {
    return {{"abs_tol", s.abs_tol},   {"rel_tol", s.rel_tol},   {"max_step", s.max_step},
            {"method_order", s.method_order}, {"escape_radius", s.escape_radius}, {"min_step", s.min_step},
            {"max_steps", s.max_steps}};
}

inline IntegratorSettings settings_from_json(const json& j) {
    IntegratorSettings s;
    s.abs_tol = j.value("abs_tol", s.abs_tol);
    s.rel_tol = j.value("rel_tol", s.rel_tol);
    s.max_step = j.value("max_step", s.max_step);
    s.method_order = j.value("method_order", s.method_order);
    s.escape_radius = j.value("escape_radius", s.escape_radius);
    s.min_step = j.value("min_step", s.min_step);
    s.max_steps = j.value("max_steps", s.max_steps);
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Vectors and matrices

inline json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vector_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Row-major flattening.
inline json matrix_to_json(const Eigen::MatrixXd& m) {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index k = 0; k < m.cols(); ++k) v.push_back(m(i, k));
    return v;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols) {
    const auto v = j.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != rows * cols) throw std::runtime_error("matrix size mismatch in JSON");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = v[static_cast<std::size_t>(i * cols + k)];
    return m;
}

inline json to_json(const std::complex<double>& z) { return {z.real(), z.imag()}; }

// ---------------------------------------------------------------------------
// Orbits

inline json to_json(const FixedPointOrbit& o) {
    json eig = json::array(), vecs = json::array();
    for (Eigen::Index i = 0; i < o.eigenvalues.size(); ++i) {
        eig.push_back(to_json(o.eigenvalues[i]));
        json v = json::array();
        for (Eigen::Index k = 0; k < o.eigenvectors.rows(); ++k) v.push_back(to_json(o.eigenvectors(k, i)));
        vecs.push_back(v);
    }
    const auto cls = classify(o);
    json pairs = json::array();
    for (const auto& p : cls.pairs)
        pairs.push_back({{"type", to_string(p.type)}, {"subspace", p.subspace}, {"first", to_json(p.first)},
                         {"second", to_json(p.second)}});
    return {{"label", o.label},
            {"d", o.d},
            {"z_star", to_json(o.z_star)},
            {"monodromy", matrix_to_json(o.monodromy)},
            {"eigenvalues", eig},
            {"eigenvectors", vecs},
            {"residual", o.residual},
            {"iterations", o.iterations},
            {"kernel_dim", o.kernel_dim},
            {"note", o.note},
            {"classification", {{"orbit_class", cls.orbit_class}, {"pairs", pairs}}}};
}

inline FixedPointOrbit orbit_from_json(const json& j) {
    FixedPointOrbit o;
    o.label = j.value("label", "");
    o.d = j.at("d").get<int>();
    o.z_star = vector_from_json(j.at("z_star"));
    const Eigen::Index n = 2 * o.d;
    o.monodromy = matrix_from_json(j.at("monodromy"), n, n);
    o.residual = j.value("residual", 0.0);
    o.iterations = j.value("iterations", 0);
    o.kernel_dim = j.value("kernel_dim", 0);
    o.note = j.value("note", "");
    attach_spectrum(o);
    return o;
}

struct OrbitGuess {
    std::string label;
    int d = 1;
    Eigen::VectorXd z;
    std::string note;
};

inline std::vector<OrbitGuess> load_orbit_guesses(const std::string& path = data_path("orbit_guesses.json")) {
    const json j = read_json_file(path);
    std::vector<OrbitGuess> out;
    for (const auto& e : j.at("orbits"))
        out.push_back({e.at("label").get<std::string>(), e.at("d").get<int>(), vector_from_json(e.at("z")),
                       e.value("note", "")});
    return out;
}

inline OrbitGuess find_guess(const std::vector<OrbitGuess>& guesses, const std::string& label, int d) {
    for (const auto& g : guesses)
        if (g.label == label && g.d == d) return g;
    throw ConfigError("no guess for orbit '" + label + "' in d=" + std::to_string(d));
}

// ---------------------------------------------------------------------------
// Curves

/// Row k holds a_k then b_k (b_0 = 0).
inline json coefficient_rows(const Eigen::MatrixXd& c) {
    const int M = static_cast<int>(c.cols() - 1) / 2;
    const Eigen::Index N = c.rows();
    json rows = json::array();
    for (int k = 0; k <= M; ++k) {
        std::vector<double> r(static_cast<std::size_t>(2 * N), 0.0);
        for (Eigen::Index i = 0; i < N; ++i) {
            r[static_cast<std::size_t>(i)] = c(i, k);
            if (k > 0) r[static_cast<std::size_t>(N + i)] = c(i, M + k);
        }
        rows.push_back(r);
    }
    return rows;
}

inline Eigen::MatrixXd coefficients_from_rows(const json& rows) {
    const int M = static_cast<int>(rows.size()) - 1;
    if (M < 0) throw std::runtime_error("empty coefficient table");
    const auto r0 = rows[0].get<std::vector<double>>();
    const Eigen::Index N = static_cast<Eigen::Index>(r0.size() / 2);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(N, 2 * M + 1);
    for (int k = 0; k <= M; ++k) {
        const auto r = rows[static_cast<std::size_t>(k)].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(r.size()) != 2 * N) throw std::runtime_error("ragged coefficient table");
        for (Eigen::Index i = 0; i < N; ++i) {
            c(i, k) = r[static_cast<std::size_t>(i)];
            if (k > 0) c(i, M + k) = r[static_cast<std::size_t>(N + i)];
        }
    }
    return c;
}

inline json to_json(const InvariantCurve& c) {
    json j = {{"sigma", c.sigma},
              {"nu", c.nu},
              {"M", c.order()},
              {"N", c.dim()},
              {"coeffs", coefficient_rows(c.coeffs)},
              {"center", to_json(c.center)},
              {"dist", c.dist},
              {"residual", c.residual},
              {"refined_residual", c.refined_residual},
              {"phase_residual", c.phase_residual},
              {"redundant_residual", c.redundant_residual},
              {"iterations", c.iterations}};
    if (c.stability) {
        const auto& s = *c.stability;
        j["lambda_s"] = s.lambda_s;
        j["lambda_u"] = s.lambda_u;
        j["unit_eigs"] = {to_json(s.unit_eigs[0]), to_json(s.unit_eigs[1])};
        j["bundle_s"] = coefficient_rows(s.bundle_s);
        j["bundle_u"] = coefficient_rows(s.bundle_u);
    }
    return j;
}

inline InvariantCurve curve_from_json(const json& j) {
    InvariantCurve c;
    c.sigma = j.value("sigma", -1);
    c.nu = j.at("nu").get<double>();
    c.coeffs = coefficients_from_rows(j.at("coeffs"));
    c.center = vector_from_json(j.at("center"));
    c.dist = j.value("dist", 0.0);
    c.residual = j.value("residual", 0.0);
    c.refined_residual = j.value("refined_residual", 0.0);
    c.phase_residual = j.value("phase_residual", 0.0);
    c.redundant_residual = j.value("redundant_residual", 0.0);
    c.iterations = j.value("iterations", 0);
    if (j.contains("lambda_s")) {
        CurveStability s;
        s.lambda_s = j.at("lambda_s").get<double>();
        s.lambda_u = j.at("lambda_u").get<double>();
        for (int k = 0; k < 2; ++k)
            s.unit_eigs[static_cast<std::size_t>(k)] = {j.at("unit_eigs")[k][0].get<double>(),
                                                        j.at("unit_eigs")[k][1].get<double>()};
        s.bundle_s = coefficients_from_rows(j.at("bundle_s"));
        s.bundle_u = coefficients_from_rows(j.at("bundle_u"));
        c.stability = s;
    }
    return c;
}

/// Curves stored one JSON document per file, curve_<sigma>.json, in `dir`.
inline std::vector<InvariantCurve> load_family(const std::string& dir) {
    std::vector<InvariantCurve> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name.rfind("curve_", 0) == 0 && e.path().extension() == ".json")
            out.push_back(curve_from_json(read_json_file(e.path().string())));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.sigma < b.sigma; });
    return out;
}


// ---------------------------------------------------------------------------
// CSV tables

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline constexpr const char* kIntersectionHeader = "sigma,m,s_star,theta_star,x,y,px,py,res1,res2";

/// One row per intersection, 17 significant digits. Requires d = 2 points.
inline void write_intersections_csv(std::ostream& out, const std::vector<SliceIntersection>& pts) {
    out << kIntersectionHeader << '\n';
    for (const auto& p : pts) {
        if (p.point.size() != 4) throw std::invalid_argument("intersection CSV needs planar (d = 2) points");
        out << p.sigma << ',' << p.m << ',' << format_g17(p.s_star) << ',' << format_g17(p.theta_star);
        for (int k = 0; k < 4; ++k) out << ',' << format_g17(p.point[k]);
        out << ',' << format_g17(p.residuals[0]) << ',' << format_g17(p.residuals[1]) << '\n';
    }
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline std::vector<SliceIntersection> read_intersections_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kIntersectionHeader)
        throw std::runtime_error("intersection CSV header must be '" + std::string(kIntersectionHeader) + "'");
    std::vector<SliceIntersection> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 10) throw std::runtime_error("intersection CSV row has " + std::to_string(f.size()) + " fields");
        SliceIntersection p;
        p.sigma = std::stoi(f[0]);
        p.m = std::stoi(f[1]);
        p.s_star = std::stod(f[2]);
        p.theta_star = std::stod(f[3]);
        p.point.resize(4);
        for (int k = 0; k < 4; ++k) p.point[k] = std::stod(f[static_cast<std::size_t>(4 + k)]);
        p.residuals = {std::stod(f[8]), std::stod(f[9])};
        out.push_back(std::move(p));
    }
    return out;
}

/// Columns s, x, px (s is arclength from the fixed point).
inline void write_branch_csv(std::ostream& out, const ManifoldBranch1D& br) {
    out << "s,x,px\n";
    for (std::size_t k = 0; k < br.points.size(); ++k)
        out << format_g17(br.arclength[k]) << ',' << format_g17(br.points[k][0]) << ',' << format_g17(br.points[k][1])
            << '\n';
}

inline std::vector<Eigen::Vector2d> read_branch_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "s,x,px") throw std::runtime_error("manifold CSV header must be 's,x,px'");
    std::vector<Eigen::Vector2d> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 3) throw std::runtime_error("manifold CSV row must have 3 fields");
        out.emplace_back(std::stod(f[1]), std::stod(f[2]));
    }
    return out;
}

}  // namespace recoll

#endif  // RECOLL_IO_HPP
