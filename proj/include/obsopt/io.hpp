#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "obsopt/ocp.hpp"
#include "obsopt/stationarity.hpp"

namespace obsopt {
namespace io {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline const char* tag_of(NodalKind k) {
    return k == NodalKind::Control ? "control" : "primal";
}
inline const char* tag_of(DualKind k) {
    return k == DualKind::NodalMeasure ? "measure" : "hm1";
}

/// Plain-text field format: header `nsub=<n> kind=<tag>`, then one
/// `index value` pair per line in full round-trip decimal. Nodal tags
/// (primal, control) index the full node set; dual tags (hm1, measure)
/// index the interior nodes.
inline void write_field(std::ostream& os, int nsub, const std::string& tag,
                        const Eigen::VectorXd& v) {
    os << "nsub=" << nsub << " kind=" << tag << "\n";
    for (int i = 0; i < v.size(); ++i) os << i << " " << fmt(v[i]) << "\n";
}

inline void write_field_file(const std::string& path, int nsub, const std::string& tag,
                             const Eigen::VectorXd& v) {
    std::ofstream os(path);
    if (!os) throw InvalidData("write_field: cannot open '" + path + "'");
    write_field(os, nsub, tag, v);
}

struct FieldFile {
    int nsub = 0;
    std::string tag;
    Eigen::VectorXd values;
};

inline FieldFile read_field(std::istream& is) {
    std::string header;
    if (!std::getline(is, header)) throw InvalidData("read_field: empty input");
    FieldFile f;
    {
        std::istringstream hs(header);
        std::string tok;
        while (hs >> tok) {
            if (tok.rfind("nsub=", 0) == 0) f.nsub = std::stoi(tok.substr(5));
            else if (tok.rfind("kind=", 0) == 0) f.tag = tok.substr(5);
            else throw InvalidData("read_field: bad header token '" + tok + "'");
        }
    }
    if (f.nsub < 2 || f.tag.empty())
        throw InvalidData("read_field: header must carry nsub and kind");
    const int n_nodes = (f.nsub + 1) * (f.nsub + 1);
    const int n_int = (f.nsub - 1) * (f.nsub - 1);
    const bool nodal = f.tag == "primal" || f.tag == "control";
    if (!nodal && f.tag != "hm1" && f.tag != "measure")
        throw InvalidData("read_field: unknown kind '" + f.tag + "'");
    f.values = Eigen::VectorXd::Zero(nodal ? n_nodes : n_int);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        long idx;
        double val;
        if (!(ls >> idx >> val))
            throw InvalidData("read_field: malformed line '" + line + "'");
        if (idx < 0 || idx >= f.values.size())
            throw InvalidData("read_field: index out of range in '" + line + "'");
        f.values[idx] = val;
    }
    return f;
}

inline FieldFile read_field_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidData("read_field: cannot open '" + path + "'");
    return read_field(is);
}

inline void write_path_csv(std::ostream& os, const PathHistory& hist) {
    os << "gamma,J,viol_l2,nu_l1,mu_hm1,rho,kkt_residual\n";
    for (const auto& d : hist.diagnostics)
        os << fmt(d.gamma) << "," << fmt(d.j_value) << "," << fmt(d.viol_l2) << ","
           << fmt(d.nu_l1) << "," << fmt(d.mu_hm1) << "," << fmt(d.rho) << ","
           << fmt(d.kkt_residual) << "\n";
}

/// Machine-readable key-value block followed by a human-readable table.
inline void write_report(std::ostream& os, const StationarityReport& rep) {
    for (const auto& [k, v] : rep.residuals) os << "residual." << k << " = " << fmt(v) << "\n";
    for (const auto& [k, v] : rep.tolerances) os << "tol." << k << " = " << fmt(v) << "\n";
    for (const auto& [k, v] : rep.verdicts) os << "verdict." << k << " = " << v << "\n";
    for (const auto& [k, v] : rep.worst_index) os << "worst." << k << " = " << v << "\n";
    auto dump_set = [&](const char* name, const std::vector<int>& s) {
        os << name << " =";
        for (int i : s) os << " " << i;
        os << "\n";
    };
    dump_set("set.omega_a", rep.omega_a);
    dump_set("set.omega_s", rep.omega_s);
    dump_set("set.omega_b", rep.omega_b);
    if (rep.sample_size) os << "b.sample_size = " << rep.sample_size << "\n";

    os << "\ncondition                     residual       tolerance      verdict\n";
    for (const auto& [k, v] : rep.verdicts) {
        char line[128];
        std::snprintf(line, sizeof(line), "%-28s  %-13.6g  %-13.6g  %s\n", k.c_str(),
                      rep.residuals.at(k), rep.tolerances.at(k), v.c_str());
        os << line;
    }
}

/// Legacy-ASCII VTK dump of a nodal field on the structured triangulation.
inline void write_vtk(const std::string& path, const Mesh& mesh, const Eigen::VectorXd& nodal,
                      const std::string& name) {
    std::ofstream os(path);
    if (!os) throw InvalidData("write_vtk: cannot open '" + path + "'");
    os << "# vtk DataFile Version 3.0\n" << name << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << mesh.n_nodes() << " double\n";
    for (const auto& p : mesh.nodes) os << fmt(p.x()) << " " << fmt(p.y()) << " 0\n";
    os << "CELLS " << mesh.triangles.size() << " " << 4 * mesh.triangles.size() << "\n";
    for (const auto& t : mesh.triangles) os << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
    os << "CELL_TYPES " << mesh.triangles.size() << "\n";
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) os << "5\n";
    os << "POINT_DATA " << mesh.n_nodes() << "\nSCALARS " << name << " double 1\n"
       << "LOOKUP_TABLE default\n";
    for (int i = 0; i < nodal.size(); ++i) os << fmt(nodal[i]) << "\n";
}

} // namespace io
} // namespace obsopt
