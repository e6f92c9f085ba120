// Distance atlases: grids of initial conditions at t0 integrated to a fixed
// horizon, storing log10 of the final distance to the core.

#ifndef RECOLL_ATLAS_HPP
#define RECOLL_ATLAS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "recoll/flow.hpp"
#include "recoll/parallel.hpp"

namespace recoll {

/// Index of a named phase-space coordinate ("x", "y", "z", "px", "py", "pz") in dimension d.
inline int coordinate_index(const std::string& name, int d) {
    static const std::array<const char*, 3> q = {"x", "y", "z"};
    static const std::array<const char*, 3> p = {"px", "py", "pz"};
    for (int i = 0; i < d; ++i) {
        if (name == q[static_cast<std::size_t>(i)]) return i;
        if (name == p[static_cast<std::size_t>(i)]) return d + i;
    }
    throw ConfigError("coordinate '" + name + "' does not exist in dimension " + std::to_string(d));
}

inline std::string coordinate_name(int index, int d) {
    static const std::array<const char*, 6> n = {"x", "y", "z", "px", "py", "pz"};
    if (index < 0 || index >= 2 * d) throw ConfigError("coordinate index out of range");
    return index < d ? n[static_cast<std::size_t>(index)] : n[static_cast<std::size_t>(3 + index - d)];
}

struct GridAxis {
    std::string name;
    double lo = 0.0;
    double hi = 0.0;
    int n = 2;

    double at(int i) const { return lo + (hi - lo) * i / (n - 1); }
};

struct GridSpec {
    int d = 1;
    GridAxis axis1;
    GridAxis axis2;
    /// Values of the remaining phase coordinates; missing ones are zero.
    std::map<std::string, double> fixed;
    double t0 = 0.0;
    double horizon = 0.0;
    double escape_radius = 1000.0;
    /// log10 distances are floored here.
    double floor = -2.0;

    void validate() const {
        if (d < 1 || d > 3) throw ConfigError("grid dimension must be 1, 2 or 3");
        for (const auto* a : {&axis1, &axis2}) {
            if (a->n < 2) throw ConfigError("grid axis '" + a->name + "' needs at least 2 samples");
            if (!std::isfinite(a->lo) || !std::isfinite(a->hi)) throw ConfigError("grid axis range must be finite");
            coordinate_index(a->name, d);
        }
        if (axis1.name == axis2.name) throw ConfigError("grid axes must differ");
        for (const auto& [k, v] : fixed) {
            const int i = coordinate_index(k, d);
            if (i == coordinate_index(axis1.name, d) || i == coordinate_index(axis2.name, d))
                throw ConfigError("fixed coordinate '" + k + "' is also a grid axis");
            if (!std::isfinite(v)) throw ConfigError("fixed coordinate values must be finite");
        }
        if (!std::isfinite(horizon) || horizon == t0) throw ConfigError("horizon must be finite and differ from t0");
        if (!(escape_radius > 0.0)) throw ConfigError("escape radius must be positive");
    }

    std::size_t cells() const { return static_cast<std::size_t>(axis1.n) * static_cast<std::size_t>(axis2.n); }

    /// Initial phase-space point of cell (i1, i2).
    Eigen::VectorXd initial_state(int i1, int i2) const {
        Eigen::VectorXd z = Eigen::VectorXd::Zero(2 * d);
        for (const auto& [k, v] : fixed) z[coordinate_index(k, d)] = v;
        z[coordinate_index(axis1.name, d)] = axis1.at(i1);
        z[coordinate_index(axis2.name, d)] = axis2.at(i2);
        return z;
    }
};

inline nlohmann::json to_json(const GridAxis& a) { return {{"name", a.name}, {"lo", a.lo}, {"hi", a.hi}, {"n", a.n}}; }

inline GridAxis axis_from_json(const nlohmann::json& j) {
    return {j.at("name").get<std::string>(), j.at("lo").get<double>(), j.at("hi").get<double>(), j.at("n").get<int>()};
}

inline nlohmann::json to_json(const GridSpec& s) {
    nlohmann::json fixed = nlohmann::json::object();
    for (const auto& [k, v] : s.fixed) fixed[k] = v;
    return {{"d", s.d},
            {"axis1", to_json(s.axis1)},
            {"axis2", to_json(s.axis2)},
            {"fixed", fixed},
            {"t0", s.t0},
            {"horizon", s.horizon},
            {"escape_radius", s.escape_radius},
            {"floor", s.floor},
            {"layout", "row-major, rows along axis2"}};
}

inline GridSpec grid_spec_from_json(const nlohmann::json& j) {
    GridSpec s;
    s.d = j.at("d").get<int>();
    s.axis1 = axis_from_json(j.at("axis1"));
    s.axis2 = axis_from_json(j.at("axis2"));
    for (const auto& [k, v] : j.at("fixed").items()) s.fixed[k] = v.get<double>();
    s.t0 = j.at("t0").get<double>();
    s.horizon = j.at("horizon").get<double>();
    s.escape_radius = j.at("escape_radius").get<double>();
    s.floor = j.value("floor", -2.0);
    return s;
}

enum class CellStatus : std::uint8_t { completed = 0, escaped_early = 1, failed = 2 };

inline const char* to_string(CellStatus s) {
    switch (s) {
        case CellStatus::completed: return "completed";
        case CellStatus::escaped_early: return "escaped-early";
        case CellStatus::failed: return "failed";
    }
    return "?";
}

struct DistanceGrid {
    GridSpec spec;
    /// Row-major, rows along axis2: values[i2 * n1 + i1].
    std::vector<double> values;
    std::vector<CellStatus> status;
    /// Escape time for escaped-early cells, NaN otherwise.
    std::vector<double> escape_time;

    std::size_t index(int i1, int i2) const {
        return static_cast<std::size_t>(i2) * static_cast<std::size_t>(spec.axis1.n) + static_cast<std::size_t>(i1);
    }
    double value(int i1, int i2) const { return values[index(i1, i2)]; }

    std::map<std::string, long> status_counts() const {
        std::map<std::string, long> c{{"completed", 0}, {"escaped-early", 0}, {"failed", 0}};
        for (auto s : status) ++c[to_string(s)];
        return c;
    }

    /// Cell containing the point (u1, u2) of the grid plane, by nearest sample.
    std::optional<std::array<int, 2>> cell_of(double u1, double u2) const {
        const auto& a = spec.axis1;
        const auto& b = spec.axis2;
        const double f1 = (u1 - a.lo) / (a.hi - a.lo) * (a.n - 1), f2 = (u2 - b.lo) / (b.hi - b.lo) * (b.n - 1);
        const long i1 = std::lround(f1), i2 = std::lround(f2);
        if (i1 < 0 || i1 >= a.n || i2 < 0 || i2 >= b.n) return std::nullopt;
        return std::array<int, 2>{static_cast<int>(i1), static_cast<int>(i2)};
    }
};

/// Final distance of one trajectory: integrated until the horizon or escape,
/// then continued with the field-only solution.
template <int Dim>
void scan_cell(const Flow<Dim>& flow, const GridSpec& spec, const StateVec<Dim>& z0, double& value,
               CellStatus& status, double& escape_time) {
    escape_time = std::numeric_limits<double>::quiet_NaN();
    try {
        const auto r = flow.propagate(z0, spec.t0, spec.horizon, false);
        PhaseState<Dim> end = r.state;
        status = CellStatus::completed;
        if (r.escaped) {
            status = CellStatus::escaped_early;
            escape_time = r.escape_time;
            end = free_solution<Dim>(flow.config(), r.state, spec.horizon);
        }
        const double dist = end.q.norm();
        value = std::max(std::log10(dist), spec.floor);
        if (!std::isfinite(value)) throw IntegrationError("non-finite distance", {}, spec.horizon);
    } catch (const IntegrationError&) {
        status = CellStatus::failed;
        value = std::numeric_limits<double>::quiet_NaN();
    }
}

template <int Dim>
DistanceGrid scan(const SystemConfig& cfg, IntegratorSettings settings, const GridSpec& spec,
                  unsigned threads = thread_budget()) {
    spec.validate();
    if (spec.d != cfg.d) throw ConfigError("grid dimension does not match the configuration");
    settings.escape_radius = spec.escape_radius;
    const Flow<Dim> flow(cfg, settings);
    DistanceGrid g;
    g.spec = spec;
    const std::size_t n = spec.cells();
    g.values.assign(n, 0.0);
    g.status.assign(n, CellStatus::failed);
    g.escape_time.assign(n, std::numeric_limits<double>::quiet_NaN());
    const int n1 = spec.axis1.n;
    parallel_for(
        n,
        [&](std::size_t c) {
            const int i1 = static_cast<int>(c % static_cast<std::size_t>(n1));
            const int i2 = static_cast<int>(c / static_cast<std::size_t>(n1));
            const StateVec<Dim> z0 = spec.initial_state(i1, i2);
            scan_cell<Dim>(flow, spec, z0, g.values[c], g.status[c], g.escape_time[c]);
        },
        threads);
    return g;
}

inline DistanceGrid scan(const SystemConfig& cfg, const IntegratorSettings& settings, const GridSpec& spec,
                         unsigned threads = thread_budget()) {
    switch (cfg.d) {
        case 1: return scan<1>(cfg, settings, spec, threads);
        case 2: return scan<2>(cfg, settings, spec, threads);
        case 3: return scan<3>(cfg, settings, spec, threads);
        default: throw ConfigError("unsupported dimension");
    }
}

// ---------------------------------------------------------------------------
// Grid diagnostics

/// Largest |difference| between a cell and its 4-neighbours, in log10 units.
/// NaN where the cell or all neighbours failed.
inline std::vector<double> local_variation(const DistanceGrid& g) {
    const int n1 = g.spec.axis1.n, n2 = g.spec.axis2.n;
    std::vector<double> out(g.values.size(), std::numeric_limits<double>::quiet_NaN());
    for (int i2 = 0; i2 < n2; ++i2)
        for (int i1 = 0; i1 < n1; ++i1) {
            const double v = g.value(i1, i2);
            if (!std::isfinite(v)) continue;
            double m = -1.0;
            const int nb[4][2] = {{i1 - 1, i2}, {i1 + 1, i2}, {i1, i2 - 1}, {i1, i2 + 1}};
            for (const auto& q : nb) {
                if (q[0] < 0 || q[0] >= n1 || q[1] < 0 || q[1] >= n2) continue;
                const double w = g.value(q[0], q[1]);
                if (std::isfinite(w)) m = std::max(m, std::abs(w - v));
            }
            if (m >= 0.0) out[g.index(i1, i2)] = m;
        }
    return out;
}

/// Value above which the top fraction q of finite entries lies.
inline double upper_quantile_threshold(std::vector<double> v, double q) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t k = static_cast<std::size_t>(std::floor((1.0 - q) * static_cast<double>(v.size() - 1)));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
}

/// Cells connected (4-neighbourhood) to the cell nearest (u1, u2) whose final
/// distance is below `radius`.
inline std::vector<char> bounded_component(const DistanceGrid& g, double u1, double u2, double radius = 10.0) {
    std::vector<char> in(g.values.size(), 0);
    const auto start = g.cell_of(u1, u2);
    if (!start) return in;
    const double thr = std::log10(radius);
    auto bounded = [&](int i1, int i2) {
        const double v = g.value(i1, i2);
        return std::isfinite(v) && v < thr;
    };
    if (!bounded((*start)[0], (*start)[1])) return in;
    std::vector<std::array<int, 2>> stack{*start};
    in[g.index((*start)[0], (*start)[1])] = 1;
    while (!stack.empty()) {
        const auto c = stack.back();
        stack.pop_back();
        const int nb[4][2] = {{c[0] - 1, c[1]}, {c[0] + 1, c[1]}, {c[0], c[1] - 1}, {c[0], c[1] + 1}};
        for (const auto& q : nb) {
            if (q[0] < 0 || q[0] >= g.spec.axis1.n || q[1] < 0 || q[1] >= g.spec.axis2.n) continue;
            const std::size_t k = g.index(q[0], q[1]);
            if (in[k] || !bounded(q[0], q[1])) continue;
            in[k] = 1;
            stack.push_back({q[0], q[1]});
        }
    }
    return in;
}

// ---------------------------------------------------------------------------
// Overlays

struct OverlayAsset {
    /// "polyline", "points" or "marker".
    std::string kind;
    std::string label;
    /// Plane the points live in, e.g. {"x", "px"}.
    std::array<std::string, 2> plane;
    std::vector<std::array<double, 2>> points;
};

/// Projects full phase-space states onto a coordinate plane.
inline OverlayAsset project_states(std::string kind, std::string label, const std::vector<Eigen::VectorXd>& states,
                                   const std::array<std::string, 2>& plane, int d) {
    OverlayAsset a{std::move(kind), std::move(label), plane, {}};
    const int i = coordinate_index(plane[0], d), j = coordinate_index(plane[1], d);
    for (const auto& z : states) {
        if (z.size() != 2 * d) throw ConfigError("state dimension does not match the overlay plane");
        a.points.push_back({z[i], z[j]});
    }
    return a;
}

/// One figure-input document holding the grid and its overlays.
inline nlohmann::json overlay_assets(const DistanceGrid& g, const std::vector<OverlayAsset>& assets) {
    nlohmann::json doc;
    doc["grid"] = {{"spec", to_json(g.spec)}, {"values", g.values}, {"status_counts", g.status_counts()}};
    doc["assets"] = nlohmann::json::array();
    for (const auto& a : assets) {
        if (a.plane[0] != g.spec.axis1.name || a.plane[1] != g.spec.axis2.name)
            throw ConfigError("overlay '" + a.label + "' lives in plane (" + a.plane[0] + "," + a.plane[1] +
                              ") but the grid plane is (" + g.spec.axis1.name + "," + g.spec.axis2.name + ")");
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& p : a.points) pts.push_back({p[0], p[1]});
        doc["assets"].push_back({{"kind", a.kind}, {"label", a.label}, {"plane", {a.plane[0], a.plane[1]}}, {"points", pts}});
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Persistence: "DGRD" binary, companion .meta.json, CSV

inline constexpr std::uint32_t kGridFormatVersion = 1;

inline void write_grid(const std::string& path, const DistanceGrid& g) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    const std::string spec = to_json(g.spec).dump();
    const std::uint32_t version = kGridFormatVersion, len = static_cast<std::uint32_t>(spec.size());
    f.write("DGRD", 4);
    f.write(reinterpret_cast<const char*>(&version), sizeof version);
    f.write(reinterpret_cast<const char*>(&len), sizeof len);
    f.write(spec.data(), static_cast<std::streamsize>(spec.size()));
    f.write(reinterpret_cast<const char*>(g.values.data()), static_cast<std::streamsize>(g.values.size() * sizeof(double)));
    if (!f) throw std::runtime_error("write failed for " + path);

    nlohmann::json meta;
    meta["status_counts"] = g.status_counts();
    std::vector<int> codes(g.status.size());
    std::transform(g.status.begin(), g.status.end(), codes.begin(), [](CellStatus s) { return int(s); });
    meta["status"] = codes;
    meta["status_legend"] = {"completed", "escaped-early", "failed"};
    nlohmann::json et = nlohmann::json::array();
    for (double t : g.escape_time) et.push_back(std::isfinite(t) ? nlohmann::json(t) : nlohmann::json(nullptr));
    meta["escape_time"] = et;
    std::ofstream m(path + ".meta.json");
    if (!m) throw std::runtime_error("cannot open " + path + ".meta.json for writing");
    m << meta.dump(1) << '\n';
}

inline DistanceGrid read_grid(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    char magic[4];
    std::uint32_t version = 0, len = 0;
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "DGRD", 4) != 0) throw std::runtime_error(path + " is not a DGRD grid file");
    f.read(reinterpret_cast<char*>(&version), sizeof version);
    if (version != kGridFormatVersion) throw std::runtime_error("unsupported DGRD version " + std::to_string(version));
    f.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string spec(len, '\0');
    f.read(spec.data(), len);
    DistanceGrid g;
    g.spec = grid_spec_from_json(nlohmann::json::parse(spec));
    g.values.resize(g.spec.cells());
    f.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(g.values.size() * sizeof(double)));
    if (!f) throw std::runtime_error("truncated DGRD file " + path);
    g.status.assign(g.values.size(), CellStatus::completed);
    g.escape_time.assign(g.values.size(), std::numeric_limits<double>::quiet_NaN());
    std::ifstream m(path + ".meta.json");
    if (m) {
        const auto meta = nlohmann::json::parse(m);
        if (meta.contains("status")) {
            const auto codes = meta["status"].get<std::vector<int>>();
            for (std::size_t i = 0; i < std::min(codes.size(), g.status.size()); ++i)
                g.status[i] = static_cast<CellStatus>(codes[i]);
        }
        if (meta.contains("escape_time"))
            for (std::size_t i = 0; i < std::min(meta["escape_time"].size(), g.escape_time.size()); ++i)
                if (!meta["escape_time"][i].is_null()) g.escape_time[i] = meta["escape_time"][i].get<double>();
    }
    return g;
}

inline void write_grid_csv(const std::string& path, const DistanceGrid& g) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f.precision(17);
    f << g.spec.axis1.name << ',' << g.spec.axis2.name << ",log10_distance,status\n";
    for (int i2 = 0; i2 < g.spec.axis2.n; ++i2)
        for (int i1 = 0; i1 < g.spec.axis1.n; ++i1) {
            const std::size_t k = g.index(i1, i2);
            f << g.spec.axis1.at(i1) << ',' << g.spec.axis2.at(i2) << ',' << g.values[k] << ','
              << to_string(g.status[k]) << '\n';
        }
}

}  // namespace recoll

#endif  // RECOLL_ATLAS_HPP
