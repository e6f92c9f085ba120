// recoll: command-line driver for orbits, invariant curves, manifolds and
// distance atlases. Every command writes a manifest next to its first output.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>

#include "artifacts.hpp"
#include "recoll/atlas.hpp"
#include "recoll/io.hpp"
#include "recoll/manifolds.hpp"

namespace {

using namespace recoll;
using namespace recoll::cli;

class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::string config_file;
    std::optional<double> e0, omega, a;
    std::optional<int> d;
    bool no_coulomb = false;
    double abs_tol = 1e-12, rel_tol = 1e-12;
    double escape_radius = 1000.0;
    std::optional<int> threads;
    bool quiet = false;
};

Globals G;
std::vector<std::string> g_argv;
std::unique_ptr<Run> g_run;

void say(const std::string& msg) {
    if (!G.quiet) std::cerr << msg << '\n';
}

SystemConfig make_config(int default_d) {
    SystemConfig c;
    c.d = default_d;
    if (!G.config_file.empty()) c = load_config(G.config_file, c);
    if (G.e0) c.e0 = *G.e0;
    if (G.omega) c.omega = *G.omega;
    if (G.a) c.a = *G.a;
    if (G.d) c.d = *G.d;
    if (G.no_coulomb) c.coulomb_enabled = false;
    c.validate();
    return c;
}

IntegratorSettings make_settings() {
    IntegratorSettings s;
    s.abs_tol = G.abs_tol;
    s.rel_tol = G.rel_tol;
    s.escape_radius = G.escape_radius;
    s.validate();
    return s;
}

Run& start_run(const std::string& command, const SystemConfig& cfg, const IntegratorSettings& st) {
    g_run = std::make_unique<Run>(command, g_argv, cfg, st);
    if (!G.config_file.empty()) g_run->add_input(G.config_file);
    return *g_run;
}

void finish_run() {
    if (!g_run) return;
    const auto m = g_run->write_manifest();
    if (!m.empty()) say("manifest: " + m);
}

ManifoldSide parse_side(const std::string& s) {
    if (s == "stable") return ManifoldSide::stable;
    if (s == "unstable") return ManifoldSide::unstable;
    throw UsageError("side must be 'stable' or 'unstable'");
}

/// "lo:hi:n"
GridAxis parse_axis(const std::string& name, const std::string& text) {
    const auto f = split(text, ':');
    if (f.size() != 3) throw UsageError("axis '" + name + "' must be given as lo:hi:n");
    try {
        return {name, std::stod(f[0]), std::stod(f[1]), std::stoi(f[2])};
    } catch (const std::logic_error&) {
        throw UsageError("cannot parse axis '" + name + "' from '" + text + "'");
    }
}

/// "100T" (periods) or a plain time in a.u.
double parse_horizon(const std::string& text, double T) {
    try {
        if (!text.empty() && (text.back() == 'T' || text.back() == 't'))
            return std::stod(text.substr(0, text.size() - 1)) * T;
        return std::stod(text);
    } catch (const std::logic_error&) {
        throw UsageError("cannot parse horizon '" + text + "'");
    }
}

void write_json(const std::string& path, const json& j) {
    std::ofstream f(path);
    f << j.dump(2) << '\n';
    if (!f) throw std::runtime_error("cannot write " + path);
}

void emit_json(const std::string& out, const json& j, const std::string& fallback_name = {}) {
    if (out.empty() && fallback_name.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    write_json(g_run->output(out.empty() ? fallback_name : out), j);
}

// ---------------------------------------------------------------------------
// Orbits

FixedPointOrbit locate(const SystemConfig& cfg, const IntegratorSettings& st, const std::string& guess_file,
                       const std::string& label) {
    const auto guess = find_guess(load_orbit_guesses(guess_file), label, cfg.d);
    return find_fixed_point(cfg, st, guess.z, label);
}

struct PorbitFind {
    std::string guess_file = data_path("orbit_guesses.json");
    std::string label;
    std::string out;
};

void porbit_find(const PorbitFind& o) {
    const auto cfg = make_config(1);
    const auto st = make_settings();
    auto& run = start_run("porbit find", cfg, st);
    run.add_input(o.guess_file);
    const auto orbit = locate(cfg, st, o.guess_file, o.label);
    json j = to_json(orbit);
    j["config"] = to_json(cfg);
    if (o.out.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    write_json(run.output(o.out), j);
}

struct PorbitManifold {
    std::string guess_file = data_path("orbit_guesses.json");
    std::string label = "O2";
    std::string side = "stable";
    int sign = 1;
    double arclength = 100.0;
    double max_spacing = 0.05;
    std::string out = "manifold.csv";
};

ManifoldBranch1D grow_branch(const SystemConfig& cfg, const IntegratorSettings& st, const FixedPointOrbit& orbit,
                             ManifoldSide side, int sign, double arclength, double max_spacing) {
    ManifoldGrowthOptions mo;
    mo.max_spacing = max_spacing;
    return grow_manifold_1d(cfg, st, orbit, side, sign, arclength, mo);
}

void porbit_manifold(const PorbitManifold& o) {
    const auto cfg = make_config(1);
    if (cfg.d != 1) throw UsageError("1D manifold growth needs d = 1");
    const auto st = make_settings();
    auto& run = start_run("porbit manifold", cfg, st);
    run.add_input(o.guess_file);
    const auto orbit = locate(cfg, st, o.guess_file, o.label);
    const auto br = grow_branch(cfg, st, orbit, parse_side(o.side), o.sign, o.arclength, o.max_spacing);
    const auto path = run.output(o.out);
    std::ofstream f(path);
    write_branch_csv(f, br);
    run.note("points", br.points.size());
    run.note("escaped", br.escaped);
    run.note("multiplier", br.multiplier);
    say(std::to_string(br.points.size()) + " points written to " + path);
}

struct PorbitSearch {
    std::string axis1 = "x:-5:5:41";
    std::string axis2 = "px:-1:1:41";
    double threshold = 0.5;
    int max_candidates = 20;
    std::string out;
};

void porbit_search(const PorbitSearch& o) {
    const auto cfg = make_config(1);
    const auto st = make_settings();
    auto& run = start_run("porbit search", cfg, st);
    const auto ax1 = split(o.axis1, ':');
    const auto ax2 = split(o.axis2, ':');
    if (ax1.empty() || ax2.empty()) throw UsageError("axes must be name:lo:hi:n");
    const auto a1 = parse_axis(ax1[0], o.axis1.substr(ax1[0].size() + 1));
    const auto a2 = parse_axis(ax2[0], o.axis2.substr(ax2[0].size() + 1));
    const int i1 = coordinate_index(a1.name, cfg.d), i2 = coordinate_index(a2.name, cfg.d);
    std::vector<RecurrenceCandidate> cands;
    auto search = [&]<int Dim>() {
        cands = recurrence_minima<Dim>(cfg, st, StateVec<Dim>::Zero(), i1, a1.lo, a1.hi, a1.n, i2, a2.lo, a2.hi,
                                       a2.n, o.threshold);
    };
    switch (cfg.d) {
        case 1: search.template operator()<1>(); break;
        case 2: search.template operator()<2>(); break;
        default: search.template operator()<3>(); break;
    }
    json found = json::array();
    std::vector<Eigen::VectorXd> seen;
    int tried = 0;
    for (const auto& c : cands) {
        if (tried++ >= o.max_candidates) break;
        try {
            const auto orbit = find_fixed_point(cfg, st, c.z, "candidate");
            bool dup = false;
            for (const auto& z : seen) dup = dup || (z - orbit.z_star).norm() < 1e-6;
            if (dup) continue;
            seen.push_back(orbit.z_star);
            json j = to_json(orbit);
            j["guess"] = to_json(c.z);
            j["recurrence"] = c.recurrence;
            found.push_back(j);
        } catch (const std::runtime_error&) {
        }
    }
    const json doc = {{"candidates", cands.size()}, {"orbits", found}};
    emit_json(o.out, doc);
}

// ---------------------------------------------------------------------------
// Curves

struct CurvesContinue {
    std::string guess_file = data_path("orbit_guesses.json");
    std::string label = "O2";
    int n = 100;
    double delta = 1e-2;
    double delta_max = 0.1;
    double first_amplitude = 0.0;
    int max_order = 256;
    bool no_stability = false;
    std::string out_dir = "curves";
};

ContinuationOptions continuation_options(const CurvesContinue& o) {
    ContinuationOptions co;
    co.delta = o.delta;
    co.delta_max = o.delta_max;
    co.first_amplitude = o.first_amplitude;
    co.adapt.max_order = o.max_order;
    co.compute_stability = !o.no_stability;
    co.on_curve = [](const InvariantCurve& c) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "curve: nu %.9f dist %.5f M %d residual %.1e", c.nu, c.dist, c.order(),
                      c.refined_residual);
        say(buf);
    };
    return co;
}

json family_summary(const ContinuationState& st) {
    json rows = json::array();
    for (const auto& c : st.family) {
        json r = {{"sigma", c.sigma}, {"nu", c.nu}, {"dist", c.dist}, {"M", c.order()},
                  {"residual", c.residual}, {"refined_residual", c.refined_residual}};
        if (c.stability) {
            r["lambda_s"] = c.stability->lambda_s;
            r["lambda_u"] = c.stability->lambda_u;
        }
        rows.push_back(r);
    }
    return {{"termination", st.termination}, {"final_delta", st.delta}, {"newton_failures", st.newton_failures},
            {"log", st.log}, {"curves", rows}};
}

/// Writes orbit.json, curve_<sigma>.json and family.json into `dir`.
void write_family(Run& run, const std::string& dir, const FixedPointOrbit& orbit, const ContinuationState& st) {
    auto put = [&](const std::string& name, const json& j) {
        const std::string p = (fs::path(dir) / name).string();
        write_json(p, j);
        run.add_output(p);
    };
    put("orbit.json", to_json(orbit));
    for (const auto& c : st.family) {
        char name[32];
        std::snprintf(name, sizeof name, "curve_%03d.json", c.sigma);
        put(name, to_json(c));
    }
    put("family.json", family_summary(st));
}

ContinuationState run_continuation(const SystemConfig& cfg, const IntegratorSettings& st,
                                   const FixedPointOrbit& orbit, const CurvesContinue& o) {
    const Flow<2> flow(cfg, st);
    return continue_family<2>(flow, orbit, o.n, continuation_options(o));
}

void curves_continue(const CurvesContinue& o) {
    const auto cfg = make_config(2);
    if (cfg.d != 2) throw UsageError("invariant-curve families are computed in d = 2");
    const auto st = make_settings();
    auto& run = start_run("curves continue", cfg, st);
    run.add_input(o.guess_file);
    const auto orbit = locate(cfg, st, o.guess_file, o.label);
    const auto fam = run_continuation(cfg, st, orbit, o);
    const auto dir = run.output_dir(o.out_dir);
    write_family(run, dir, orbit, fam);
    run.note("curves", fam.family.size());
    run.note("termination", fam.termination);
    say(std::to_string(fam.family.size()) + " curves in " + dir + " (" + fam.termination + ")");
}

struct Family {
    FixedPointOrbit orbit;
    std::vector<InvariantCurve> curves;
};

Family load_family_dir(Run& run, const std::string& dir) {
    const std::string op = (fs::path(dir) / "orbit.json").string();
    Family f;
    f.orbit = orbit_from_json(read_json_file(op));
    run.add_input(op);
    f.curves = load_family(dir);
    for (const auto& c : f.curves) {
        char name[32];
        std::snprintf(name, sizeof name, "curve_%03d.json", c.sigma);
        run.add_input((fs::path(dir) / name).string());
    }
    if (f.curves.empty()) throw ConfigError("no curves in " + dir);
    return f;
}

const InvariantCurve& curve_by_sigma(const Family& f, int sigma) {
    for (const auto& c : f.curves)
        if (c.sigma == sigma) return c;
    throw ConfigError("no curve with sigma " + std::to_string(sigma));
}

struct CurvesStability {
    std::string family = "curves";
    int sigma = 0;
    int birkhoff = 0;
    std::string out;
};

void curves_stability(const CurvesStability& o) {
    const auto cfg = make_config(2);
    const auto st = make_settings();
    auto& run = start_run("curves stability", cfg, st);
    const auto fam = load_family_dir(run, o.family);
    const auto& c = curve_by_sigma(fam, o.sigma);
    const Flow<2> flow(cfg, st);
    const auto s = curve_stability(flow, c);
    json j = {{"sigma", c.sigma},
              {"nu", c.nu},
              {"lambda_s", s.lambda_s},
              {"lambda_u", s.lambda_u},
              {"product_error", s.product_error()},
              {"unit_eigs", {to_json(s.unit_eigs[0]), to_json(s.unit_eigs[1])}},
              {"smooth_eigenvalues", s.smooth_count}};
    if (c.stability) j["stored_lambda_u"] = c.stability->lambda_u;
    if (o.birkhoff > 0) {
        const double nb = birkhoff_rotation_number(flow, c, o.birkhoff);
        j["birkhoff_nu"] = nb;
        j["birkhoff_error"] = std::abs(std::remainder(nb - c.nu, fourier::kTwoPi));
    }
    emit_json(o.out, j);
}

// ---------------------------------------------------------------------------
// Manifolds

struct DomainSelection {
    std::string family = "curves";
    int sigma = -2;  // -2: all curves
    int every = 1;
    std::string side = "stable";
    int n_s = 100;
    int n_theta = 100;
    double epsilon = 1e-7;
    bool degenerate = false;
};

std::vector<FundamentalDomain> build_domains(const Flow<2>& flow, const Family& fam, const DomainSelection& sel) {
    const auto side = parse_side(sel.side);
    DomainOptions dopt;
    dopt.n_s = sel.n_s;
    dopt.n_theta = sel.n_theta;
    dopt.epsilon = sel.epsilon;
    std::vector<FundamentalDomain> out;
    if (sel.degenerate)
        for (int b : {1, -1}) out.push_back(degenerate_domain(flow, fam.orbit, side, b, dopt));
    for (std::size_t k = 0; k < fam.curves.size(); ++k) {
        const auto& c = fam.curves[k];
        if (sel.sigma >= -1 ? c.sigma != sel.sigma : k % static_cast<std::size_t>(std::max(sel.every, 1)) != 0)
            continue;
        for (int b : {1, -1}) out.push_back(build_fundamental_domain(flow, c, side, b, dopt));
    }
    return out;
}

json domain_summary(const FundamentalDomain& d) {
    return {{"sigma", d.sigma},       {"side", to_string(d.side)}, {"branch", d.branch},
            {"h", d.h},               {"lambda", d.lambda},       {"nu", d.nu},
            {"s_min", d.s_min()},     {"s_max", d.s_max()},       {"n_s", d.n_s},
            {"n_theta", d.n_theta},   {"epsilon", d.epsilon},     {"invariance_error", d.invariance_error},
            {"edge_error", d.edge_error}};
}

struct ManifoldDomain {
    DomainSelection sel;
    std::string out;
};

void manifold_domain(const ManifoldDomain& o) {
    const auto cfg = make_config(2);
    const auto st = make_settings();
    auto& run = start_run("manifold domain", cfg, st);
    const auto fam = load_family_dir(run, o.sel.family);
    const Flow<2> flow(cfg, st);
    json arr = json::array();
    for (const auto& d : build_domains(flow, fam, o.sel)) arr.push_back(domain_summary(d));
    emit_json(o.out, {{"domains", arr}});
}

struct ManifoldIntersect {
    DomainSelection sel;
    std::string slice = "y,px";
    int n_iter = 100;
    double coarse_tol = 1e-2;
    std::string out = "intersections.csv";
};

IntersectionReport run_intersections(const Flow<2>& flow, const Family& fam, const ManifoldIntersect& o,
                                     std::vector<FundamentalDomain>* domains_out = nullptr) {
    const auto ax = split(o.slice, ',');
    if (ax.size() != 2) throw UsageError("slice must name two coordinates, e.g. y,px");
    SliceSpec slice{coordinate_index(ax[0], 2), coordinate_index(ax[1], 2)};
    IntersectOptions io;
    io.n_iter = o.n_iter;
    io.coarse_tol = o.coarse_tol;
    auto domains = build_domains(flow, fam, o.sel);
    say(std::to_string(domains.size()) + " fundamental domains built");
    auto rep = intersect_slice(flow, domains, slice, io);
    if (domains_out) *domains_out = std::move(domains);
    return rep;
}

json intersection_stats(const IntersectionReport& r) {
    return {{"points", r.points.size()},        {"samples", r.samples},
            {"candidates", r.candidates},       {"newton_failures", r.newton_failures},
            {"outside_domain", r.outside_domain}, {"duplicates", r.duplicates},
            {"escaped", r.escaped}};
}

void manifold_intersect(const ManifoldIntersect& o) {
    const auto cfg = make_config(2);
    const auto st = make_settings();
    auto& run = start_run("manifold intersect", cfg, st);
    const auto fam = load_family_dir(run, o.sel.family);
    const Flow<2> flow(cfg, st);
    const auto rep = run_intersections(flow, fam, o);
    const auto path = run.output(o.out);
    std::ofstream f(path);
    write_intersections_csv(f, rep.points);
    run.note("intersections", intersection_stats(rep));
    say(std::to_string(rep.points.size()) + " intersections written to " + path);
}

// ---------------------------------------------------------------------------
// Atlas

struct AtlasScan {
    std::string plane = "x,px";
    std::map<std::string, std::string> coords;
    std::string horizon = "100T";
    std::string out = "grid.bin";
    bool csv = false;
};

GridSpec make_grid_spec(const SystemConfig& cfg, const AtlasScan& o) {
    const auto ax = split(o.plane, ',');
    if (ax.size() != 2) throw UsageError("plane must name two coordinates, e.g. x,px");
    GridSpec spec;
    spec.d = cfg.d;
    for (int k = 0; k < 2; ++k) {
        const auto it = o.coords.find(ax[static_cast<std::size_t>(k)]);
        if (it == o.coords.end() || it->second.empty())
            throw UsageError("plane axis '" + ax[static_cast<std::size_t>(k)] + "' needs a lo:hi:n range");
        (k == 0 ? spec.axis1 : spec.axis2) = parse_axis(it->first, it->second);
    }
    for (const auto& [name, text] : o.coords) {
        if (text.empty() || name == ax[0] || name == ax[1]) continue;
        try {
            spec.fixed[name] = std::stod(text);
        } catch (const std::logic_error&) {
            throw UsageError("fixed coordinate '" + name + "' must be a number");
        }
    }
    spec.horizon = parse_horizon(o.horizon, cfg.period());
    spec.escape_radius = G.escape_radius;
    spec.validate();
    return spec;
}

/// Smallest d in which every named coordinate exists.
int dimension_for(const std::vector<std::string>& names) {
    int d = 1;
    for (const auto& n : names) {
        if (n == "y" || n == "py") d = std::max(d, 2);
        if (n == "z" || n == "pz") d = std::max(d, 3);
    }
    return d;
}

DistanceGrid run_scan(const SystemConfig& cfg, const IntegratorSettings& st, const GridSpec& spec) {
    say("scanning " + std::to_string(spec.cells()) + " cells on " + std::to_string(thread_budget()) + " threads");
    return scan(cfg, st, spec);
}

void atlas_scan(const AtlasScan& o) {
    std::vector<std::string> names;
    for (const auto& [k, v] : o.coords)
        if (!v.empty()) names.push_back(k);
    for (const auto& n : split(o.plane, ',')) names.push_back(n);
    const auto cfg = make_config(dimension_for(names));
    const auto st = make_settings();
    auto& run = start_run("atlas scan", cfg, st);
    const auto spec = make_grid_spec(cfg, o);
    const auto g = run_scan(cfg, st, spec);
    const auto path = run.output(o.out);
    write_grid(path, g);
    run.add_output(path + ".meta.json");
    if (o.csv) {
        const auto cp = run.output(fs::path(path).replace_extension(".csv").string());
        write_grid_csv(cp, g);
    }
    run.note("status_counts", g.status_counts());
}

struct AtlasOverlay {
    std::string grid;
    std::vector<std::string> orbits, manifolds, intersections;
    std::string out = "overlay.json";
};

std::vector<OverlayAsset> overlay_inputs(Run& run, const DistanceGrid& g, const AtlasOverlay& o) {
    const std::array<std::string, 2> plane{g.spec.axis1.name, g.spec.axis2.name};
    std::vector<OverlayAsset> assets;
    for (const auto& p : o.orbits) {
        run.add_input(p);
        const auto orb = orbit_from_json(read_json_file(p));
        Eigen::VectorXd z = Eigen::VectorXd::Zero(2 * g.spec.d);
        for (int i = 0; i < orb.d && i < g.spec.d; ++i) {
            z[i] = orb.z_star[i];
            z[g.spec.d + i] = orb.z_star[orb.d + i];
        }
        assets.push_back(project_states("marker", orb.label, {z}, plane, g.spec.d));
    }
    for (const auto& p : o.manifolds) {
        run.add_input(p);
        std::ifstream f(p);
        OverlayAsset a{"polyline", fs::path(p).stem().string(), {"x", "px"}, {}};
        for (const auto& q : read_branch_csv(f)) a.points.push_back({q[0], q[1]});
        assets.push_back(std::move(a));
    }
    for (const auto& p : o.intersections) {
        run.add_input(p);
        std::ifstream f(p);
        std::vector<Eigen::VectorXd> states;
        for (const auto& s : read_intersections_csv(f)) states.push_back(s.point);
        if (g.spec.d != 2) throw ConfigError("intersection points are planar; the grid is not");
        assets.push_back(project_states("points", fs::path(p).stem().string(), states, plane, 2));
    }
    return assets;
}

void atlas_overlay(const AtlasOverlay& o) {
    const auto cfg = make_config(1);
    const auto st = make_settings();
    auto& run = start_run("atlas overlay", cfg, st);
    run.add_input(o.grid);
    const auto g = read_grid(o.grid);
    const auto doc = overlay_assets(g, overlay_inputs(run, g, o));
    write_json(run.output(o.out), doc);
}

// ---------------------------------------------------------------------------
// Canned pipelines

struct Repro {
    std::string id;
    bool full = false;
    std::string out_dir;
};

json compare_values(const std::vector<double>& got, const std::vector<double>& ref, int sig) {
    json rows = json::array();
    bool all = true;
    for (std::size_t k = 0; k < ref.size(); ++k) {
        const double g = k < got.size() ? got[k] : std::numeric_limits<double>::quiet_NaN();
        const double rel = std::abs(g - ref[k]) / std::abs(ref[k]);
        const bool ok = rel < 0.5 * std::pow(10.0, 1 - sig);
        all = all && ok;
        rows.push_back({{"reference", ref[k]}, {"computed", g}, {"relative_error", rel}, {"match", ok}});
    }
    return {{"values", rows}, {"match", all}};
}

/// Real eigenvalues sorted by decreasing |.|, or the arguments of the unit-modulus pair.
std::vector<double> real_eigs(const Eigen::VectorXcd& e) {
    std::vector<double> v;
    for (const auto& z : e)
        if (std::abs(z.imag()) < 1e-9) v.push_back(z.real());
    std::sort(v.begin(), v.end(), [](double a, double b) { return std::abs(a) > std::abs(b); });
    return v;
}

/// Eigenvalues of one classified pair, larger modulus first.
std::vector<double> pair_values(const Classification& c, const std::string& subspace) {
    for (const auto& p : c.pairs)
        if (p.subspace == subspace && p.type != PairType::parabolic) {
            if (p.type == PairType::elliptic) return {std::abs(std::arg(p.first))};
            double a = p.first.real(), b = p.second.real();
            if (std::abs(a) < std::abs(b)) std::swap(a, b);
            return {a, b};
        }
    return {};
}

json repro_table1(Run& run) {
    const auto st = make_settings();
    const auto ref = read_json_file(data_path("reference_values.json"));
    run.add_input(data_path("reference_values.json"));
    const auto guesses = data_path("orbit_guesses.json");
    run.add_input(guesses);
    json out = {{"reference", ref.at("note")}};
    bool all = true;
    for (const std::string label : {"O1", "O1pm", "O2"}) {
        auto cfg1 = make_config(1);
        cfg1.d = 1;
        const auto o1 = locate(cfg1, st, guesses, label);
        auto cfg2 = cfg1;
        cfg2.d = 2;
        const auto o2 = locate(cfg2, st, guesses, label);
        const auto cls = classify(o2);
        const auto& r = ref.at("orbits").at(label);
        json row = {{"z_star", to_json(o2.z_star)}, {"residual", o2.residual}, {"class", cls.orbit_class}};
        row["in_plane"] = compare_values(real_eigs(o1.eigenvalues), r.at("in_plane").get<std::vector<double>>(), 3);
        if (r.contains("transverse"))
            row["transverse"] =
                compare_values(pair_values(cls, "transverse"), r.at("transverse").get<std::vector<double>>(), 3);
        if (r.contains("transverse_angle"))
            row["transverse_angle"] =
                compare_values(pair_values(cls, "transverse"), {r.at("transverse_angle").get<double>()}, 3);
        for (const auto& k : {"in_plane", "transverse", "transverse_angle"})
            if (row.contains(k)) all = all && row[k]["match"].get<bool>();
        out["orbits"][label] = row;
    }
    out["match"] = all;
    return out;
}

json repro_table2(Run& run) {
    const auto st = make_settings();
    const auto ref = read_json_file(data_path("reference_values.json"));
    run.add_input(data_path("reference_values.json"));
    const auto guesses = data_path("orbit_guesses.json");
    run.add_input(guesses);
    auto cfg = make_config(2);
    cfg.d = 2;
    const auto o = locate(cfg, st, guesses, "O");
    json out = {{"reference", ref.at("note")}, {"z_star", to_json(o.z_star)}, {"residual", o.residual}};
    out["in_plane"] = compare_values(real_eigs(o.eigenvalues), ref.at("orbits").at("O").at("in_plane"), 3);
    out["match"] = out["in_plane"]["match"];
    return out;
}

CurvesContinue repro_curve_settings(bool full) {
    CurvesContinue cc;
    cc.n = full ? 400 : 200;
    cc.delta = full ? 1e-3 : 2e-3;
    cc.delta_max = 2e-3;
    cc.first_amplitude = 2e-3;
    cc.max_order = full ? 256 : 128;
    return cc;
}

Family repro_family(Run& run, const std::string& dir, bool full) {
    auto cfg = make_config(2);
    cfg.d = 2;
    const auto st = make_settings();
    const auto guesses = data_path("orbit_guesses.json");
    run.add_input(guesses);
    const auto orbit = locate(cfg, st, guesses, "O2");
    const auto fam = run_continuation(cfg, st, orbit, repro_curve_settings(full));
    const auto fdir = (fs::path(dir) / "curves").string();
    fs::create_directories(fdir);
    write_family(run, fdir, orbit, fam);
    return {orbit, fam.family};
}

void repro(const Repro& o) {
    const bool full = o.full;
    const auto base = make_config(1);
    const auto st = make_settings();
    auto& run = start_run("repro " + o.id, base, st);
    const auto dir = run.output_dir(o.out_dir.empty() ? "repro_" + o.id : o.out_dir);
    auto file = [&](const std::string& name) {
        const auto p = (fs::path(dir) / name).string();
        run.add_output(p);
        return p;
    };
    const std::string guesses = data_path("orbit_guesses.json");

    if (o.id == "table1" || o.id == "table2") {
        const auto j = o.id == "table1" ? repro_table1(run) : repro_table2(run);
        write_json(file(o.id + ".json"), j);
        std::cout << j.dump(2) << '\n';
        return;
    }
    if (o.id == "fig2c") {
        auto cfg = base;
        cfg.d = 1;
        GridSpec spec;
        spec.d = 1;
        const int n = full ? 1000 : 100;
        spec.axis1 = {"x", -60.0, 60.0, n};
        spec.axis2 = {"px", -1.0, 1.0, n};
        spec.horizon = 100.0 * cfg.period();
        spec.escape_radius = G.escape_radius;
        const auto g = run_scan(cfg, st, spec);
        const auto gp = file("grid.bin");
        write_grid(gp, g);
        run.add_output(gp + ".meta.json");
        std::vector<OverlayAsset> assets;
        for (const std::string label : {"O1", "O2"}) {
            const auto orb = locate(cfg, st, guesses, label);
            write_json(file("orbit_" + label + ".json"), to_json(orb));
            assets.push_back(project_states("marker", label, {orb.z_star}, {"x", "px"}, 1));
            for (const auto side : {ManifoldSide::stable, ManifoldSide::unstable})
                for (int sign : {1, -1}) {
                    const auto br = grow_branch(cfg, st, orb, side, sign, full ? 600.0 : 150.0, full ? 0.05 : 0.2);
                    const std::string name = "manifold_" + label + "_" + to_string(side) + (sign > 0 ? "_p" : "_m");
                    std::ofstream f(file(name + ".csv"));
                    write_branch_csv(f, br);
                    OverlayAsset a{"polyline", name, {"x", "px"}, {}};
                    for (const auto& q : br.points) a.points.push_back({q[0], q[1]});
                    assets.push_back(std::move(a));
                }
        }
        write_json(file("overlay.json"), overlay_assets(g, assets));
        return;
    }
    if (o.id == "fig5") {
        const auto fam = repro_family(run, dir, full);
        std::ofstream f(file("fig5.csv"));
        f << "sigma,dist,nu,lambda_s,lambda_u,M,refined_residual\n";
        for (const auto& c : fam.curves)
            f << c.sigma << ',' << format_g17(c.dist) << ',' << format_g17(c.nu) << ','
              << format_g17(c.stability ? c.stability->lambda_s : NAN) << ','
              << format_g17(c.stability ? c.stability->lambda_u : NAN) << ',' << c.order() << ','
              << format_g17(c.refined_residual) << '\n';
        return;
    }
    if (o.id == "fig3" || o.id == "fig6") {
        auto cfg = base;
        cfg.d = 2;
        const Flow<2> flow(cfg, st);
        const auto fam = repro_family(run, dir, full);
        DomainSelection sel;
        sel.every = full ? 1 : std::max<int>(1, static_cast<int>(fam.curves.size()) / 8);
        sel.n_s = full ? 100 : 8;
        sel.n_theta = full ? 100 : 32;
        if (o.id == "fig6") {
            std::ofstream f(file("fig6_samples.csv"));
            f << "side,sigma,branch,k,s,theta,x,px,py\n";
            for (const std::string side : {"stable", "unstable"}) {
                sel.side = side;
                for (const auto& d : build_domains(flow, fam, sel))
                    globalize(flow, d, full ? 100 : 12, [&](const ManifoldSample& s) {
                        f << side << ',' << s.sigma << ',' << s.branch << ',' << s.k << ',' << format_g17(s.s) << ','
                          << format_g17(s.theta) << ',' << format_g17(s.state[0]) << ',' << format_g17(s.state[2])
                          << ',' << format_g17(s.state[3]) << '\n';
                    });
            }
            std::ofstream c(file("fig6_curves.csv"));
            c << "sigma,theta,x,px,py\n";
            for (const auto& cv : fam.curves)
                for (int j = 0; j < 128; ++j) {
                    const double th = fourier::kTwoPi * j / 128;
                    const auto z = cv(th);
                    c << cv.sigma << ',' << format_g17(th) << ',' << format_g17(z[0]) << ',' << format_g17(z[2]) << ','
                      << format_g17(z[3]) << '\n';
                }
            return;
        }
        ManifoldIntersect mi;
        mi.sel = sel;
        mi.sel.degenerate = true;
        mi.n_iter = full ? 100 : 12;
        const auto rep = run_intersections(flow, fam, mi);
        {
            std::ofstream f(file("intersections.csv"));
            write_intersections_csv(f, rep.points);
        }
        run.note("intersections", intersection_stats(rep));
        GridSpec spec;
        spec.d = 2;
        const int n = full ? 1000 : 100;
        spec.axis1 = full ? GridAxis{"x", -30.0, 30.0, n} : GridAxis{"x", -4.0, 4.0, n};
        spec.axis2 = full ? GridAxis{"py", -1.0, 1.0, n} : GridAxis{"py", -0.3, 0.3, n};
        spec.fixed = {{"y", 0.0}, {"px", 0.0}};
        spec.horizon = 100.0 * cfg.period();
        spec.escape_radius = G.escape_radius;
        const auto g = run_scan(cfg, st, spec);
        const auto gp = file("grid.bin");
        write_grid(gp, g);
        run.add_output(gp + ".meta.json");
        std::vector<Eigen::VectorXd> pts;
        for (const auto& p : rep.points) pts.push_back(p.point);
        std::vector<OverlayAsset> assets{project_states("points", "stable manifold of the family", pts, {"x", "py"}, 2),
                                         project_states("marker", "O2", {fam.orbit.z_star}, {"x", "py"}, 2)};
        write_json(file("overlay.json"), overlay_assets(g, assets));
        return;
    }
    throw UsageError("unknown figure id '" + o.id + "'");
}

// ---------------------------------------------------------------------------
// Replay

int dispatch(const std::vector<std::string>& args);

int replay(const std::string& manifest_path) {
    const auto m = read_json_file(manifest_path);
    const auto argv = m.at("argv").get<std::vector<std::string>>();
    say("replaying: " + m.at("command").get<std::string>());
    const int rc = dispatch(argv);
    if (rc != 0) return rc;
    const auto& old = m.at("outputs");
    const auto& fresh = g_run ? g_run->outputs() : std::vector<std::string>{};
    json report = json::array();
    bool same = old.size() == fresh.size();
    for (std::size_t k = 0; k < old.size() && k < fresh.size(); ++k) {
        const std::string h = sha256_file(fresh[k]);
        const bool eq = h == old[k].at("sha256").get<std::string>();
        same = same && eq;
        report.push_back({{"original", old[k].at("path")}, {"replayed", fresh[k]}, {"identical", eq}});
    }
    std::cout << json({{"identical", same}, {"outputs", report}}).dump(2) << '\n';
    return same ? 0 : 1;
}

// ---------------------------------------------------------------------------
// Command line

void error_json(const std::string& kind, const std::string& msg) {
    std::cerr << json({{"error", kind}, {"message", msg}}).dump() << '\n';
}

int dispatch(const std::vector<std::string>& args) {
    G = Globals{};
    g_run.reset();
    g_argv = args;

    CLI::App app{"Periodic orbits, invariant curves, manifolds and recollision atlases of a driven soft-Coulomb atom",
                 "recoll"};
    app.set_version_flag("--version", RECOLL_VERSION);
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", G.config_file, "key = value file (e0, omega, a, d, coulomb_enabled)")
        ->check(CLI::ExistingFile);
    app.add_option("--e0", G.e0, "field amplitude, a.u. (default 0.0924573, i.e. 3e14 W/cm^2)");
    app.add_option("--omega", G.omega, "laser frequency, a.u. (default 0.0584)");
    app.add_option("--a", G.a, "softening parameter (default 1)");
    app.add_option("--d", G.d, "spatial dimension 1..3 (default depends on the command)")->check(CLI::Range(1, 3));
    app.add_flag("--no-coulomb", G.no_coulomb, "drop the Coulomb term (free-drift oracle)");
    app.add_option("--abs-tol", G.abs_tol, "integrator absolute tolerance")->capture_default_str();
    app.add_option("--rel-tol", G.rel_tol, "integrator relative tolerance")->capture_default_str();
    app.add_option("--escape-radius", G.escape_radius, "escape radius, a.u.")->capture_default_str();
    app.add_option("--threads", G.threads, "worker threads (overrides RECOLL_THREADS)")->check(CLI::PositiveNumber);
    app.add_flag("-q,--quiet", G.quiet, "no progress messages on stderr");

    std::function<void()> action;

    auto* porbit = app.add_subcommand("porbit", "periodic orbits of the stroboscopic map");
    porbit->require_subcommand(1);
    PorbitFind pf;
    auto* pfind = porbit->add_subcommand("find", "Newton for a fixed point from the guess file; prints a JSON record");
    pfind->add_option("--guess-file", pf.guess_file, "orbit guesses")->capture_default_str();
    pfind->add_option("--label", pf.label, "orbit label (O1, O1pm, O2, O)")->required();
    pfind->add_option("--out", pf.out, "output JSON (stdout when omitted)");
    pfind->callback([&] { action = [&] { porbit_find(pf); }; });

    PorbitManifold pm;
    auto* pman = porbit->add_subcommand("manifold", "grow a 1D stable/unstable manifold branch (d = 1); CSV s,x,px");
    pman->add_option("--guess-file", pm.guess_file, "orbit guesses")->capture_default_str();
    pman->add_option("--label", pm.label, "orbit label")->capture_default_str();
    pman->add_option("--side", pm.side, "stable or unstable")->capture_default_str();
    pman->add_option("--sign", pm.sign, "branch +1 or -1")->capture_default_str()->check(CLI::IsMember({1, -1}));
    pman->add_option("--arclength", pm.arclength, "arclength budget, a.u.")->capture_default_str();
    pman->add_option("--max-spacing", pm.max_spacing, "largest gap between consecutive points")->capture_default_str();
    pman->add_option("--out", pm.out, "output CSV")->capture_default_str();
    pman->callback([&] { action = [&] { porbit_manifold(pm); }; });

    PorbitSearch ps;
    auto* psearch = porbit->add_subcommand("search", "grid search for minima of |P(z) - z| followed by Newton");
    psearch->add_option("--axis1", ps.axis1, "name:lo:hi:n")->capture_default_str();
    psearch->add_option("--axis2", ps.axis2, "name:lo:hi:n")->capture_default_str();
    psearch->add_option("--threshold", ps.threshold, "largest |P(z) - z| kept as a candidate")->capture_default_str();
    psearch->add_option("--max-candidates", ps.max_candidates, "Newton attempts")->capture_default_str();
    psearch->add_option("--out", ps.out, "output JSON (stdout when omitted)");
    psearch->callback([&] { action = [&] { porbit_search(ps); }; });

    auto* curves = app.add_subcommand("curves", "invariant curves around an elliptic-transverse fixed point (d = 2)");
    curves->require_subcommand(1);
    CurvesContinue cc;
    auto* ccont = curves->add_subcommand("continue", "continue the family; one JSON document per curve");
    ccont->add_option("--guess-file", cc.guess_file, "orbit guesses")->capture_default_str();
    ccont->add_option("--label", cc.label, "fixed point label")->capture_default_str();
    ccont->add_option("--n", cc.n, "largest number of curves")->capture_default_str();
    ccont->add_option("--delta", cc.delta, "initial step in coefficient space")->capture_default_str();
    ccont->add_option("--delta-max", cc.delta_max, "step ceiling")->capture_default_str();
    ccont->add_option("--first-amplitude", cc.first_amplitude, "amplitude of the first curve (0: delta)")
        ->capture_default_str();
    ccont->add_option("--max-order", cc.max_order, "Fourier order cap")->capture_default_str();
    ccont->add_flag("--no-stability", cc.no_stability, "skip the stability eigenproblem");
    ccont->add_option("--out-dir", cc.out_dir, "output directory (versioned if it exists)")->capture_default_str();
    ccont->callback([&] { action = [&] { curves_continue(cc); }; });

    CurvesStability cs;
    auto* cstab = curves->add_subcommand("stability", "recompute the stability data of one stored curve");
    cstab->add_option("--family", cs.family, "family directory")->capture_default_str();
    cstab->add_option("--sigma", cs.sigma, "curve index")->required();
    cstab->add_option("--birkhoff", cs.birkhoff, "iterates for the Birkhoff rotation-number check (0: skip)")
        ->capture_default_str();
    cstab->add_option("--out", cs.out, "output JSON (stdout when omitted)");
    cstab->callback([&] { action = [&] { curves_stability(cs); }; });

    auto add_selection = [](CLI::App* c, DomainSelection& s) {
        c->add_option("--family", s.family, "family directory")->capture_default_str();
        c->add_option("--sigma", s.sigma, "single curve index (default: all)");
        c->add_option("--every", s.every, "use every k-th curve")->capture_default_str();
        c->add_option("--side", s.side, "stable or unstable")->capture_default_str();
        c->add_option("--n-s", s.n_s, "seeds along s")->capture_default_str();
        c->add_option("--n-theta", s.n_theta, "seeds along theta")->capture_default_str();
        c->add_option("--epsilon", s.epsilon, "domain invariance threshold")->capture_default_str();
        c->add_flag("--degenerate", s.degenerate, "include the fixed point's own in-plane manifold (sigma -1)");
    };
    auto* manifold = app.add_subcommand("manifold", "stable/unstable manifolds of the curve family (d = 2)");
    manifold->require_subcommand(1);
    ManifoldDomain md;
    auto* mdom = manifold->add_subcommand("domain", "build fundamental domains and report h, lambda and errors");
    add_selection(mdom, md.sel);
    mdom->add_option("--out", md.out, "output JSON (stdout when omitted)");
    mdom->callback([&] { action = [&] { manifold_domain(md); }; });

    ManifoldIntersect mi;
    auto* mint = manifold->add_subcommand("intersect", "intersections of the globalized manifold with a slice; CSV");
    add_selection(mint, mi.sel);
    mint->add_option("--slice", mi.slice, "two coordinates set to zero")->capture_default_str();
    mint->add_option("--n-iter", mi.n_iter, "map iterations per seed")->capture_default_str();
    mint->add_option("--coarse-tol", mi.coarse_tol, "candidate distance to the slice")->capture_default_str();
    mint->add_option("--out", mi.out, "output CSV")->capture_default_str();
    mint->callback([&] { action = [&] { manifold_intersect(mi); }; });

    auto* atlas = app.add_subcommand("atlas", "distance maps over planes of initial conditions");
    atlas->require_subcommand(1);
    AtlasScan as;
    auto* ascan = atlas->add_subcommand("scan", "integrate a grid of initial conditions to the horizon");
    ascan->add_option("--plane", as.plane, "the two grid coordinates")->capture_default_str();
    for (const char* c : {"x", "y", "z", "px", "py", "pz"})
        ascan->add_option(std::string("--") + c, as.coords[c], "lo:hi:n for a plane axis, a number otherwise");
    ascan->add_option("--horizon", as.horizon, "integration time, e.g. 100T or 5000")->capture_default_str();
    ascan->add_option("--out", as.out, "binary grid (.meta.json written alongside)")->capture_default_str();
    ascan->add_flag("--csv", as.csv, "also export CSV");
    ascan->callback([&] { action = [&] { atlas_scan(as); }; });

    AtlasOverlay ao;
    auto* aover = atlas->add_subcommand("overlay", "bundle a grid with orbits, manifolds and intersection points");
    aover->add_option("--grid", ao.grid, "binary grid")->required()->check(CLI::ExistingFile);
    aover->add_option("--orbit", ao.orbits, "orbit JSON records")->check(CLI::ExistingFile);
    aover->add_option("--manifold", ao.manifolds, "1D manifold CSVs (x,px plane)")->check(CLI::ExistingFile);
    aover->add_option("--intersections", ao.intersections, "intersection CSVs")->check(CLI::ExistingFile);
    aover->add_option("--out", ao.out, "output JSON")->capture_default_str();
    aover->callback([&] { action = [&] { atlas_overlay(ao); }; });

    Repro rp;
    auto* rep = app.add_subcommand("repro", "canned pipelines at CI scale (or figure scale with --full)");
    rep->add_option("id", rp.id, "fig2c, fig3, fig5, fig6, table1 or table2")
        ->required()
        ->check(CLI::IsMember({"fig2c", "fig3", "fig5", "fig6", "table1", "table2"}));
    rep->add_flag("--full", rp.full, "figure-scale grids and sample counts");
    rep->add_option("--out-dir", rp.out_dir, "output directory (default repro_<id>, versioned)");
    rep->callback([&] { action = [&] { repro(rp); }; });

    std::string manifest;
    int replay_rc = 0;
    auto* rpl = app.add_subcommand("replay", "re-run a manifest and compare output hashes");
    rpl->add_option("manifest", manifest, "manifest JSON")->required()->check(CLI::ExistingFile);
    rpl->callback([&] { action = [&] { replay_rc = replay(manifest); }; });

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (G.threads) setenv(kThreadEnvVar, std::to_string(*G.threads).c_str(), 1);
    if (!action) return 2;
    action();
    finish_run();
    return replay_rc;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return dispatch(args);
    } catch (const UsageError& e) {
        error_json("usage", e.what());
        return 2;
    } catch (const ConfigError& e) {
        error_json("configuration", e.what());
        return 2;
    } catch (const ConvergenceError& e) {
        error_json("convergence", e.what());
    } catch (const IntegrationError& e) {
        error_json("integration", e.what());
    } catch (const BundleQualityError& e) {
        error_json("bundle_quality", e.what());
    } catch (const DegeneracyError& e) {
        error_json("degeneracy", e.what());
    } catch (const std::exception& e) {
        error_json("failure", e.what());
    }
    return 1;
}
