#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "obsopt/expression.hpp"
#include "obsopt/ocp.hpp"

namespace obsopt {

/// Flat key-value scenario description. Unknown keys are rejected. Coefficient
/// and data entries are expressions in the spatial variables x, y.
struct ScenarioConfig {
    int nsub = 0;

    // operator coefficients (expression text); defaults give -Laplace
    std::string a11 = "1", a12 = "0", a21 = "0", a22 = "1";
    std::string b1 = "0", b2 = "0", c1 = "0", c2 = "0", d = "0";

    std::string y_a, y_b, y_d;         // required
    double alpha = 1.0;
    std::string g;                     // optional linear objective term
    std::string u_lo, u_hi;            // optional control box
    std::string u_ref = "0";
    std::string u_hat;                 // optional Slater candidate

    double gamma_start = 1.0;
    double gamma_end = 1e8;
    double factor = 10.0;
    double coupling = 1.0;
    bool prox_update = false;
    double u_step_tol = 1e-9;

    double kkt_tol = 1e-8;
    double residual_tol = 1e-6;
    double b_stat_tol = 1e-6;
    int b_directions = 500;

    unsigned seed = 42;
    bool vtk = false;
    std::string out_dir;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw InvalidData("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw InvalidData("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

inline long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long x = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw InvalidData("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

} // namespace detail

inline ScenarioConfig parse_config(std::istream& in) {
    ScenarioConfig cfg;
    bool have_nsub = false, have_ya = false, have_yb = false, have_yd = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidData("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (val.empty())
            throw InvalidData("config: empty value for key '" + key + "'");

        if (key == "nsub") { cfg.nsub = static_cast<int>(detail::parse_int(key, val)); have_nsub = true; }
        else if (key == "op.a11") cfg.a11 = val;
        else if (key == "op.a12") cfg.a12 = val;
        else if (key == "op.a21") cfg.a21 = val;
        else if (key == "op.a22") cfg.a22 = val;
        else if (key == "op.b1") cfg.b1 = val;
        else if (key == "op.b2") cfg.b2 = val;
        else if (key == "op.c1") cfg.c1 = val;
        else if (key == "op.c2") cfg.c2 = val;
        else if (key == "op.d") cfg.d = val;
        else if (key == "y_a") { cfg.y_a = val; have_ya = true; }
        else if (key == "y_b") { cfg.y_b = val; have_yb = true; }
        else if (key == "y_d") { cfg.y_d = val; have_yd = true; }
        else if (key == "alpha") cfg.alpha = detail::parse_double(key, val);
        else if (key == "g") cfg.g = val;
        else if (key == "u_box.lo") cfg.u_lo = val;
        else if (key == "u_box.hi") cfg.u_hi = val;
        else if (key == "u_ref") cfg.u_ref = val;
        else if (key == "u_hat") cfg.u_hat = val;
        else if (key == "schedule.gamma_start") cfg.gamma_start = detail::parse_double(key, val);
        else if (key == "schedule.gamma_end") cfg.gamma_end = detail::parse_double(key, val);
        else if (key == "schedule.factor") cfg.factor = detail::parse_double(key, val);
        else if (key == "schedule.coupling") cfg.coupling = detail::parse_double(key, val);
        else if (key == "schedule.prox_update") cfg.prox_update = detail::parse_bool(key, val);
        else if (key == "schedule.u_step_tol") cfg.u_step_tol = detail::parse_double(key, val);
        else if (key == "tol.kkt") cfg.kkt_tol = detail::parse_double(key, val);
        else if (key == "tol.residual") cfg.residual_tol = detail::parse_double(key, val);
        else if (key == "tol.b_stat") cfg.b_stat_tol = detail::parse_double(key, val);
        else if (key == "b_stat.directions")
            cfg.b_directions = static_cast<int>(detail::parse_int(key, val));
        else if (key == "seed") cfg.seed = static_cast<unsigned>(detail::parse_int(key, val));
        else if (key == "vtk") cfg.vtk = detail::parse_bool(key, val);
        else if (key == "out") cfg.out_dir = val;
        else throw InvalidData("config: unknown key '" + key + "'");
    }
    if (!have_nsub) throw InvalidData("config: missing required key 'nsub'");
    if (!have_ya || !have_yb || !have_yd)
        throw InvalidData("config: y_a, y_b, y_d are all required");
    if (cfg.nsub < 2) throw InvalidData("config: nsub must be at least 2");
    if (!(cfg.alpha > 0.0)) throw InvalidData("config: alpha must be positive");
    if (!(cfg.factor > 1.0)) throw InvalidData("config: schedule.factor must exceed 1");
    if (!(cfg.kkt_tol > 0.0) || !(cfg.residual_tol > 0.0) || !(cfg.b_stat_tol > 0.0))
        throw InvalidData("config: tolerances must be positive");
    if (cfg.u_lo.empty() != cfg.u_hi.empty())
        throw InvalidData("config: u_box.lo and u_box.hi must be given together");
    return cfg;
}

inline ScenarioConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidData("config: cannot open '" + path + "'");
    return parse_config(in);
}

inline Eigen::VectorXd eval_on_nodes(const Mesh& mesh, const std::string& text) {
    const Expression e = Expression::parse(text);
    Eigen::VectorXd v(mesh.n_nodes());
    for (int nid = 0; nid < mesh.n_nodes(); ++nid)
        v[nid] = e(mesh.nodes[nid].x(), mesh.nodes[nid].y());
    return v;
}

inline OCPProblem build_problem(const ScenarioConfig& cfg,
                                std::shared_ptr<const P1Space> space = nullptr) {
    if (!space) space = std::make_shared<P1Space>(cfg.nsub);
    const Mesh& mesh = space->mesh();

    OperatorSpec spec;
    auto coeff = [&](const std::string& text) {
        const Expression e = Expression::parse(text);
        Eigen::VectorXd v(mesh.n_nodes());
        bool constant = true;
        for (int nid = 0; nid < mesh.n_nodes(); ++nid) {
            v[nid] = e(mesh.nodes[nid].x(), mesh.nodes[nid].y());
            if (v[nid] != v[0]) constant = false;
        }
        return constant ? Coefficient(v[0]) : Coefficient(v);
    };
    spec.a[0][0] = coeff(cfg.a11); spec.a[0][1] = coeff(cfg.a12);
    spec.a[1][0] = coeff(cfg.a21); spec.a[1][1] = coeff(cfg.a22);
    spec.b = {coeff(cfg.b1), coeff(cfg.b2)};
    spec.c = {coeff(cfg.c1), coeff(cfg.c2)};
    spec.d = coeff(cfg.d);

    OCPProblem pb;
    pb.space = space;
    pb.op = assemble_operator(mesh, spec);
    pb.y_a = eval_on_nodes(mesh, cfg.y_a);
    pb.y_b = eval_on_nodes(mesh, cfg.y_b);
    pb.y_d = eval_on_nodes(mesh, cfg.y_d);
    pb.alpha = cfg.alpha;
    if (!cfg.g.empty()) pb.g = restrict_interior(mesh, eval_on_nodes(mesh, cfg.g));
    if (!cfg.u_lo.empty()) {
        BoxConstraints box;
        box.lo = restrict_interior(mesh, eval_on_nodes(mesh, cfg.u_lo));
        box.hi = restrict_interior(mesh, eval_on_nodes(mesh, cfg.u_hi));
        pb.u_box = box;
    }
    pb.u_ref = restrict_interior(mesh, eval_on_nodes(mesh, cfg.u_ref));
    pb.validate();
    return pb;
}

inline PathSchedule build_schedule(const ScenarioConfig& cfg) {
    PathSchedule s;
    s.gamma_start = cfg.gamma_start;
    s.gamma_end = cfg.gamma_end;
    s.factor = cfg.factor;
    s.gamma_a_coupling = cfg.coupling;
    s.prox_update = cfg.prox_update;
    s.u_step_tol = cfg.u_step_tol;
    return s;
}

} // namespace obsopt
